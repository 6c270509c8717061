//! `nbcl diagnose`: residual and dispersion-profile exports.

use std::path::PathBuf;

use anyhow::Result;
use nbcl::diagnostics::{
    export_profile, pearson_residuals, residuals_by_factor, write_profile_csv, GroupSummary, Grouping,
};
use nbcl::dispersion::profile_kappa;
use nbcl::glm::{self, Family};
use serde::Serialize;

use crate::manifest::{with_manifest, Recorder};
use crate::table::{fixed, Table};
use crate::{create_out_dir, read_triangle, FamilyArg, Global};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Triangle CSV of incremental counts.
    triangle: PathBuf,

    /// Model whose residuals are reported; the profile is always negative binomial.
    #[arg(long, value_enum, default_value = "nb")]
    family: FamilyArg,

    /// Directory for residuals.csv, profile.csv, diagnose.json and manifest.json.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Serialize)]
struct DiagnoseReport {
    input: String,
    family: &'static str,
    kappa_mle: f64,
    ci95_lower: f64,
    ci95_upper: Option<f64>,
    n_residuals: usize,
    dispersion_ratio: f64,
    by_accident_year: Vec<GroupSummary>,
    by_development_year: Vec<GroupSummary>,
    by_calendar: Vec<GroupSummary>,
}

pub fn run(args: Args, global: &Global) -> Result<()> {
    let mut rec = Recorder::start("diagnose", Some(&args.triangle), global.threads);
    let t = read_triangle(&args.triangle, global)?;
    let data = t.to_long();
    let est = profile_kappa(&data)?;
    let (residuals, n_params) = match args.family {
        FamilyArg::Nb => (pearson_residuals(&est.fit, est.kappa_mle), est.n_params),
        FamilyArg::Poisson => {
            let f = glm::fit(&data, Family::Poisson)?;
            (pearson_residuals(&f, f64::INFINITY), f.n_params)
        }
        FamilyArg::Odp => {
            let f = glm::fit(&data, Family::QuasiPoisson)?;
            let phi = f.phi.unwrap_or(1.0);
            let mut rs = pearson_residuals(&f, f64::INFINITY);
            for r in &mut rs.residuals {
                r.pearson /= phi.sqrt();
            }
            (rs, f.n_params)
        }
    };
    let profile = export_profile(&est);
    let report = DiagnoseReport {
        input: args.triangle.display().to_string(),
        family: args.family.name(),
        kappa_mle: est.kappa_mle,
        ci95_lower: est.ci95.0,
        ci95_upper: est.ci95.1.is_finite().then_some(est.ci95.1),
        n_residuals: residuals.residuals.len(),
        dispersion_ratio: residuals.dispersion_ratio(n_params),
        by_accident_year: residuals_by_factor(&residuals, Grouping::AccidentYear),
        by_development_year: residuals_by_factor(&residuals, Grouping::DevelopmentYear),
        by_calendar: residuals_by_factor(&residuals, Grouping::Calendar),
    };

    let dir = create_out_dir(&args.out_dir)?;
    rec.write_file(&dir, "residuals.csv", |w| Ok(residuals.write_csv(w)?))?;
    rec.write_file(&dir, "profile.csv", |w| Ok(write_profile_csv(&profile, w)?))?;
    rec.write_json(&dir, "diagnose.json", &report)?;
    rec.write_manifest(&dir)?;

    if global.json {
        let body = with_manifest(&report, &rec.finish())?;
        println!("{}", serde_json::to_string_pretty(&body)?);
        return Ok(());
    }
    let upper = report.ci95_upper.map_or("inf".to_string(), |u| fixed(u, 3));
    println!(
        "kappa (MLE) {}   95% CI [{}, {}]",
        fixed(report.kappa_mle, 3),
        fixed(report.ci95_lower, 3),
        upper
    );
    println!(
        "{} Pearson residuals ({} model), sum of squares / (n - p) = {:.3}",
        report.n_residuals,
        report.family,
        report.dispersion_ratio
    );
    println!();
    let mut table = Table::new(["Development year", "n", "Q1", "Median", "Q3"]);
    for g in &report.by_development_year {
        table.row([
            g.level.to_string(),
            g.count.to_string(),
            fixed(g.q1, 3),
            fixed(g.median, 3),
            fixed(g.q3, 3),
        ]);
    }
    print!("{}", table.render());
    println!();
    println!("wrote residuals.csv, profile.csv, diagnose.json and manifest.json to {}", dir.display());
    Ok(())
}
