//! `nbcl reserve`: bootstrap predictive intervals per accident year.

use std::path::PathBuf;

use anyhow::Result;
use nbcl::chainladder::largest_remainder;
use nbcl::predictive::{
    bootstrap_with, required_draws, summarize, write_draws_csv, BootstrapOptions, DistributionSummary,
    IntervalSummary, ReserveDistribution,
};
use serde::Serialize;

use crate::fail::usage;
use crate::manifest::{with_manifest, Recorder};
use crate::table::{fixed, percent, rounded, Table};
use crate::{create_out_dir, read_triangle, FamilyArg, Global};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Triangle CSV of incremental counts.
    triangle: PathBuf,

    #[arg(long, value_enum, default_value = "nb")]
    family: FamilyArg,

    /// Bootstrap replicates.
    #[arg(short = 'B', long = "bootstrap", default_value_t = 1000)]
    b: usize,

    #[arg(long, env = "NBCL_SEED", default_value_t = 1)]
    seed: u64,

    /// Central interval level; repeat for several.
    #[arg(long = "level", default_values_t = [0.95])]
    levels: Vec<f64>,

    /// Use the maximum likelihood dispersion without the small-sample correction.
    #[arg(long)]
    no_correct: bool,

    /// Also write reserve.json, reserve.csv, draws.csv and manifest.json here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct ReserveRow {
    pub accident_year: String,
    pub point: f64,
    pub intervals: Vec<IntervalSummary>,
}

#[derive(Debug, Serialize)]
pub struct ReserveReport {
    pub input: String,
    pub family: &'static str,
    pub seed: u64,
    pub b_requested: usize,
    pub corrected: bool,
    pub kappa_used: Option<f64>,
    pub at_upper_bound: bool,
    pub summary: DistributionSummary,
    pub rows: Vec<ReserveRow>,
    pub total: ReserveRow,
}

fn check_levels(levels: &[f64], b: usize) -> Result<()> {
    for &level in levels {
        if !(level > 0.0 && level < 1.0) {
            return Err(usage(format!("--level must lie strictly between 0 and 1, got {level}")));
        }
        let required = required_draws(level);
        if b < required {
            return Err(nbcl::Error::TooFewDraws {
                available: b,
                required,
                level,
            }
            .into());
        }
    }
    Ok(())
}

pub fn run(args: Args, global: &Global) -> Result<()> {
    let mut rec = Recorder::start("reserve", Some(&args.triangle), global.threads);
    rec.seed(args.seed);
    rec.draws(args.b);
    check_levels(&args.levels, args.b)?;
    let t = read_triangle(&args.triangle, global)?;
    let opts = BootstrapOptions {
        b: args.b,
        seed: args.seed,
        model: args.family.model(),
        correct: !args.no_correct,
        ..BootstrapOptions::default()
    };
    let d = bootstrap_with(&t, &opts)?;
    let s = summarize(&d, &args.levels)?;
    let report = ReserveReport {
        input: args.triangle.display().to_string(),
        family: args.family.name(),
        seed: args.seed,
        b_requested: args.b,
        corrected: d.corrected,
        kappa_used: d.kappa_used,
        at_upper_bound: d.at_boundary,
        summary: DistributionSummary::new(&d, &s.total),
        rows: (1..=t.dim())
            .map(|ay| ReserveRow {
                accident_year: t.ay_label(ay),
                point: d.point_by_ay[ay - 1],
                intervals: s.by_ay[ay - 1].clone(),
            })
            .collect(),
        total: ReserveRow {
            accident_year: "Total".into(),
            point: d.point_total,
            intervals: s.total.clone(),
        },
    };

    if let Some(dir) = &args.out_dir {
        let dir = create_out_dir(dir)?;
        rec.write_json(&dir, "reserve.json", &report)?;
        rec.write_file(&dir, "reserve.csv", |w| write_rows_csv(&report, w))?;
        rec.write_file(&dir, "draws.csv", |w| Ok(write_draws_csv(&d, w)?))?;
        rec.write_manifest(&dir)?;
    }
    if global.json {
        let body = with_manifest(&report, &rec.finish())?;
        println!("{}", serde_json::to_string_pretty(&body)?);
    } else {
        print!("{}", render(&report, &d));
    }
    Ok(())
}

/// One row per accident year plus the total: `accident_year, point`, then
/// `lower_<level>, upper_<level>` per level, then `cv_percent`.
fn write_rows_csv<W: std::io::Write>(r: &ReserveReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["accident_year".to_string(), "point".to_string()];
    for i in &r.total.intervals {
        header.push(format!("lower_{}", i.level));
        header.push(format!("upper_{}", i.level));
    }
    header.push("cv_percent".into());
    w.write_record(&header)?;
    for row in r.rows.iter().chain(std::iter::once(&r.total)) {
        let mut rec = vec![row.accident_year.clone(), row.point.to_string()];
        for i in &row.intervals {
            rec.push(i.lower.to_string());
            rec.push(i.upper.to_string());
        }
        rec.push(row.intervals.first().map_or(f64::NAN, |i| i.cv_percent).to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn render(r: &ReserveReport, d: &ReserveDistribution) -> String {
    let mut header = vec!["Accident year".to_string(), "CL point estimate".to_string()];
    for i in &r.total.intervals {
        header.push(format!("{} PI lower", percent(i.level)));
        header.push(format!("{} PI upper", percent(i.level)));
    }
    header.push("CV (%)".into());
    let points: Vec<f64> = r.rows.iter().map(|row| row.point).collect();
    let points = largest_remainder(&points, r.total.point.round() as i64);
    let mut t = Table::new(header);
    let rows = r.rows.iter().zip(points.iter().map(|&p| p as f64));
    for (row, point) in rows.chain(std::iter::once((&r.total, r.total.point))) {
        let mut cells = vec![row.accident_year.clone(), rounded(point)];
        for i in &row.intervals {
            cells.push(rounded(i.lower));
            cells.push(rounded(i.upper));
        }
        cells.push(fixed(row.intervals.first().map_or(f64::NAN, |i| i.cv_percent), 1));
        t.row(cells);
    }
    let mut out = t.render();
    out.push('\n');
    out.push_str(&format!(
        "Model {}, B = {} ({} used, {} refits failed), seed {}\n",
        r.family, r.b_requested, d.b_effective, d.refit_failures, r.seed
    ));
    if let (Some(mle), Some(used)) = (d.kappa_mle, d.kappa_used) {
        let how = if d.corrected { "bias corrected" } else { "maximum likelihood" };
        out.push_str(&format!(
            "kappa: MLE {}, simulated with {} ({how})\n",
            fixed(mle, 3),
            fixed(used, 3)
        ));
    }
    if r.at_upper_bound {
        out.push_str("kappa estimate at the upper search bound; draws are effectively Poisson\n");
    }
    out
}
