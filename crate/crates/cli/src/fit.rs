//! `nbcl fit`: parameters, dispersion and model comparison.

use std::path::PathBuf;

use anyhow::Result;
use nbcl::chainladder::{chain_ladder, largest_remainder};
use nbcl::dispersion::{overdispersion_test, profile_kappa, selection_report, SelectionReport};
use nbcl::glm::{self, Family, ModelFit};
use serde::Serialize;

use crate::manifest::{with_manifest, Recorder};
use crate::table::{fixed, rounded, Table};
use crate::{create_out_dir, read_triangle, FamilyArg, Global};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Triangle CSV of incremental counts.
    triangle: PathBuf,

    #[arg(long, value_enum, default_value = "nb")]
    family: FamilyArg,

    /// Also write fit.json and manifest.json here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct KappaReport {
    pub mle: f64,
    pub adjusted: f64,
    pub ci95_lower: f64,
    /// Absent when the likelihood never drops far enough above the estimate.
    pub ci95_upper: Option<f64>,
    pub at_upper_bound: bool,
    pub at_lower_bound: bool,
}

#[derive(Debug, Serialize)]
pub struct AccidentYearRow {
    pub accident_year: String,
    /// Simplex accident-year effect, the log expected ultimate.
    pub alpha: f64,
    pub fitted_outstanding: f64,
    pub chain_ladder_outstanding: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct FitReport {
    pub input: String,
    pub family: &'static str,
    pub n_obs: usize,
    pub n_params: usize,
    pub converged: bool,
    pub iterations: usize,
    pub loglik: f64,
    pub aic: Option<f64>,
    pub bic: Option<f64>,
    pub accident_years: Vec<AccidentYearRow>,
    pub dev_weights: Vec<f64>,
    pub kappa: Option<KappaReport>,
    pub phi: Option<f64>,
    /// Poisson against negative binomial.
    pub selection: Option<SelectionReport>,
    pub condition_number: Option<f64>,
    pub future_total: f64,
    pub chain_ladder_total: Option<f64>,
    pub warnings: Vec<String>,
}

fn information_criteria(fit: &ModelFit, extra: usize) -> (f64, f64) {
    let k = (fit.n_params + extra) as f64;
    let aic = -2.0 * fit.loglik + 2.0 * k;
    let bic = -2.0 * fit.loglik + k * (fit.n_obs as f64).ln();
    (aic, bic)
}

pub fn run(args: Args, global: &Global) -> Result<()> {
    let mut rec = Recorder::start("fit", Some(&args.triangle), global.threads);
    let t = read_triangle(&args.triangle, global)?;
    let data = t.to_long();
    let cl = chain_ladder(&t).ok();
    let mut warnings = Vec::new();

    let (fit, kappa, selection, ic) = match args.family {
        FamilyArg::Nb => {
            let est = profile_kappa(&data)?;
            let pois = glm::fit(&data, Family::Poisson)?;
            let sel = selection_report(pois.loglik, est.loglik, est.n_obs, est.n_params);
            if est.at_boundary {
                warnings.push("kappa estimate at the upper search bound; the data look Poisson".to_string());
            }
            if est.at_lower_bound {
                warnings.push("kappa estimate at the lower search bound".to_string());
            }
            let kappa = KappaReport {
                mle: est.kappa_mle,
                adjusted: est.kappa_adj,
                ci95_lower: est.ci95.0,
                ci95_upper: est.ci95.1.is_finite().then_some(est.ci95.1),
                at_upper_bound: est.at_boundary,
                at_lower_bound: est.at_lower_bound,
            };
            let ic = information_criteria(&est.fit, 1);
            (est.fit, Some(kappa), Some(sel), Some(ic))
        }
        FamilyArg::Poisson => {
            let fit = glm::fit(&data, Family::Poisson)?;
            let sel = match overdispersion_test(&data) {
                Ok(s) => Some(s),
                Err(e) => {
                    warnings.push(format!("overdispersion test skipped: {e}"));
                    None
                }
            };
            let ic = information_criteria(&fit, 0);
            (fit, None, sel, Some(ic))
        }
        FamilyArg::Odp => (glm::fit(&data, Family::QuasiPoisson)?, None, None, None),
    };
    warnings.extend(fit.warnings.iter().cloned());

    let by_ay = fit.future_by_ay();
    let accident_years = (1..=t.dim())
        .map(|ay| AccidentYearRow {
            accident_year: t.ay_label(ay),
            alpha: fit.simplex_alpha[ay - 1],
            fitted_outstanding: by_ay[ay - 1],
            chain_ladder_outstanding: cl.as_ref().map(|c| c.reserves[ay - 1]),
        })
        .collect();
    let report = FitReport {
        input: args.triangle.display().to_string(),
        family: args.family.name(),
        n_obs: fit.n_obs,
        n_params: fit.n_params,
        converged: fit.converged,
        iterations: fit.iterations,
        loglik: fit.loglik,
        aic: ic.map(|x| x.0),
        bic: ic.map(|x| x.1),
        accident_years,
        dev_weights: fit.dev_weights.clone(),
        kappa,
        phi: fit.phi,
        selection,
        condition_number: fit.condition_number.is_finite().then_some(fit.condition_number),
        future_total: fit.future_total(),
        chain_ladder_total: cl.as_ref().map(|c| c.total_reserve),
        warnings,
    };

    if let Some(dir) = &args.out_dir {
        let dir = create_out_dir(dir)?;
        rec.write_json(&dir, "fit.json", &report)?;
        rec.write_manifest(&dir)?;
    }
    if global.json {
        let body = with_manifest(&report, &rec.finish())?;
        println!("{}", serde_json::to_string_pretty(&body)?);
    } else {
        print!("{}", render(&report));
    }
    Ok(())
}

fn family_label(name: &str) -> &'static str {
    match name {
        "nb" => "negative binomial",
        "poisson" => "Poisson",
        _ => "over-dispersed Poisson",
    }
}

fn p_value(p: f64) -> String {
    if p < f64::MIN_POSITIVE {
        "< 1e-300".into()
    } else {
        format!("{p:.3e}")
    }
}

fn render(r: &FitReport) -> String {
    let mut out = String::new();
    let mut line = |s: String| {
        out.push_str(&s);
        out.push('\n');
    };
    line(format!("Family            {}", family_label(r.family)));
    line(format!("Observed cells    {}", r.n_obs));
    line(format!("Mean parameters   {}", r.n_params));
    line(format!("Log-likelihood    {:.3}", r.loglik));
    if let (Some(aic), Some(bic)) = (r.aic, r.bic) {
        line(format!("AIC / BIC         {aic:.2} / {bic:.2}"));
    }
    if let Some(k) = &r.kappa {
        let upper = k.ci95_upper.map_or("inf".to_string(), |u| fixed(u, 3));
        line(format!(
            "kappa (MLE)       {}   95% CI [{}, {}]",
            fixed(k.mle, 3),
            fixed(k.ci95_lower, 3),
            upper
        ));
        line(format!("kappa (adjusted)  {}", fixed(k.adjusted, 3)));
    }
    if let Some(phi) = r.phi {
        line(format!("phi (Pearson)     {phi:.3}"));
    }
    if let Some(s) = &r.selection {
        line(format!(
            "LRT vs Poisson    Lambda = {:.2}, p = {}; AIC {:.2} vs {:.2}, BIC {:.2} vs {:.2}",
            s.lambda,
            p_value(s.p_value),
            s.aic_poisson, s.aic_nb, s.bic_poisson, s.bic_nb
        ));
    }
    if let Some(c) = r.condition_number {
        line(format!("Condition number  {c:.3e}"));
    }
    line(String::new());

    let fitted: Vec<f64> = r.accident_years.iter().map(|a| a.fitted_outstanding).collect();
    let fitted_int = largest_remainder(&fitted, r.future_total.round() as i64);
    let cl_int = r.chain_ladder_total.map(|total| {
        let v: Vec<f64> = r
            .accident_years
            .iter()
            .map(|a| a.chain_ladder_outstanding.unwrap_or(0.0))
            .collect();
        largest_remainder(&v, total.round() as i64)
    });
    let mut t = Table::new(["Accident year", "alpha", "Fitted outstanding", "CL outstanding"]);
    for (k, a) in r.accident_years.iter().enumerate() {
        t.row([
            a.accident_year.clone(),
            fixed(a.alpha, 4),
            rounded(fitted_int[k] as f64),
            cl_int.as_ref().map_or("-".into(), |c| rounded(c[k] as f64)),
        ]);
    }
    t.row([
        "Total".to_string(),
        String::new(),
        rounded(r.future_total),
        r.chain_ladder_total.map_or("-".into(), rounded),
    ]);
    line(t.render());

    let mut t = Table::new(["Development year", "Weight"]);
    for (j, w) in r.dev_weights.iter().enumerate() {
        t.row([j.to_string(), fixed(*w, 4)]);
    }
    line(t.render());

    if !r.warnings.is_empty() {
        line("Warnings".to_string());
        for w in &r.warnings {
            line(format!("  {w}"));
        }
    }
    out
}
