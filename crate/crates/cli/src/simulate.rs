//! `nbcl simulate`: coverage study on synthetic triangles.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::ValueEnum;
use nbcl::simulation::{
    default_config, run_study, write_records_csv, DgpConfig, MethodRecord, Scenario, StudyResult, VARYING_KAPPA,
};
use serde::Serialize;

use crate::fail::{usage, InputFile};
use crate::manifest::{with_manifest, Recorder};
use crate::{create_out_dir, Global};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    /// Negative binomial cells.
    Correct,
    /// Poisson cells.
    Poisson,
    /// Negative binomial cells with calendar-year inflation.
    Calendar,
    /// Dispersion varying by development year.
    VaryingKappa,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// JSON study configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,

    #[arg(long, value_enum)]
    scenario: Option<ScenarioArg>,

    /// True dispersion; repeat to run one study per value.
    #[arg(long = "kappa")]
    kappas: Vec<f64>,

    /// Synthetic triangles per study.
    #[arg(long)]
    nsim: Option<usize>,

    /// Bootstrap replicates per method and triangle.
    #[arg(short = 'B', long = "bootstrap")]
    b: Option<usize>,

    #[arg(long, env = "NBCL_SEED")]
    seed: Option<u64>,

    /// Calendar-year inflation rate for the calendar scenario.
    #[arg(long, default_value_t = 0.05)]
    inflation: f64,

    /// 200 triangles with 500 bootstrap replicates each, unless overridden.
    #[arg(long)]
    full_scale: bool,

    /// Write study.csv, study.json and manifest.json here instead of printing CSV.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct StudyReport<'a> {
    records: Vec<&'a MethodRecord>,
    studies: &'a [StudyResult],
}

fn base_config(args: &Args) -> Result<DgpConfig> {
    let Some(path) = &args.config else {
        return Ok(default_config());
    };
    let file = std::fs::File::open(path).map_err(|source| InputFile {
        path: path.clone(),
        source,
    })?;
    let config = serde_json::from_reader(std::io::BufReader::new(file))
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(config)
}

/// One configuration per requested dispersion.
fn configs(args: &Args) -> Result<Vec<DgpConfig>> {
    let mut base = base_config(args)?;
    if args.full_scale {
        base = base.full_scale();
    }
    if let Some(n) = args.nsim {
        base.n_sim = n;
    }
    if let Some(b) = args.b {
        base.b = b;
    }
    if let Some(seed) = args.seed {
        base.seed = seed;
    }
    match args.scenario {
        None => {}
        Some(ScenarioArg::Correct) => base.scenario = Scenario::Correct,
        Some(ScenarioArg::Poisson) => {
            base.scenario = Scenario::PoissonDgp;
            base.kappa_true = f64::INFINITY;
        }
        Some(ScenarioArg::Calendar) => {
            base.scenario = Scenario::CalendarInflation { rate: args.inflation }
        }
        Some(ScenarioArg::VaryingKappa) => {
            if base.dim != VARYING_KAPPA.len() {
                return Err(usage(format!(
                    "the varying-kappa scenario needs dimension {}; supply per-year kappas in --config",
                    VARYING_KAPPA.len()
                )));
            }
            base.scenario = Scenario::VaryingKappa {
                kappas: VARYING_KAPPA.to_vec(),
            };
        }
    }
    let kappa_matters = matches!(base.scenario, Scenario::Correct | Scenario::CalendarInflation { .. });
    if !args.kappas.is_empty() && !kappa_matters {
        return Err(usage("--kappa applies to the correct and calendar scenarios only"));
    }
    let out: Vec<DgpConfig> = if args.kappas.is_empty() {
        vec![base]
    } else {
        args.kappas
            .iter()
            .map(|&k| DgpConfig {
                kappa_true: k,
                ..base.clone()
            })
            .collect()
    };
    for c in &out {
        c.validate()?;
    }
    Ok(out)
}

pub fn run(args: Args, global: &Global) -> Result<()> {
    let mut rec = Recorder::start("simulate", args.config.as_deref(), global.threads);
    let configs = configs(&args)?;
    rec.seed(configs[0].seed);
    rec.draws(configs[0].b);
    let studies = configs.iter().map(run_study).collect::<nbcl::Result<Vec<_>>>()?;
    let records: Vec<MethodRecord> = studies.iter().flat_map(|s| s.records.iter().cloned()).collect();
    let report = StudyReport {
        records: records.iter().collect(),
        studies: &studies,
    };

    if let Some(dir) = &args.out_dir {
        let dir = create_out_dir(dir)?;
        rec.write_file(&dir, "study.csv", |w| Ok(write_records_csv(&records, w)?))?;
        rec.write_json(&dir, "study.json", &report)?;
        rec.write_manifest(&dir)?;
    }
    if global.json {
        let body = with_manifest(&report, &rec.finish())?;
        println!("{}", serde_json::to_string_pretty(&body)?);
    } else if args.out_dir.is_none() {
        write_records_csv(&records, std::io::stdout().lock())?;
    } else {
        print!("{}", summary(&records));
    }
    Ok(())
}

fn summary(records: &[MethodRecord]) -> String {
    let mut t = crate::table::Table::new(["Method", "kappa", "Bias", "RMSE", "Cov 75%", "Cov 95%", "Width 95%"]);
    for r in records {
        t.row([
            r.method.name().to_string(),
            crate::table::fixed(r.kappa_true, 1),
            crate::table::fixed(r.bias, 1),
            crate::table::fixed(r.rmse, 1),
            crate::table::fixed(r.cov75, 3),
            crate::table::fixed(r.cov95, 3),
            crate::table::fixed(r.width95, 1),
        ]);
    }
    t.render()
}
