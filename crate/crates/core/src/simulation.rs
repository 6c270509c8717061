//! Coverage study on synthetic triangles.
//!
//! Each replicate draws a full square from a known model, hides the lower
//! triangle, and asks every method for a point estimate and bootstrap
//! intervals of the hidden total.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{FitOptions, ZeroLevelPolicy};
use crate::predictive::{bootstrap_base, central_interval, BaseModel, BootstrapModel, BootstrapOptions};
use crate::rng::{sample_nb, sample_poisson, substream};
use crate::triangle::RunOffTriangle;

/// Interval levels reported by a study.
pub const LEVELS: [f64; 2] = [0.75, 0.95];
/// Dispersion values of the standard study grid.
pub const KAPPA_GRID: [f64; 6] = [2.0, 3.0, 5.0, 10.0, 20.0, 50.0];
/// Development-year dispersions for [`Scenario::VaryingKappa`] at `I = 10`.
pub const VARYING_KAPPA: [f64; 10] = [20.0, 18.0, 15.0, 12.0, 10.0, 7.0, 5.0, 4.0, 3.0, 3.0];

const LEADING_WEIGHTS: [f64; 3] = [0.53, 0.24, 0.12];
const STREAM_GENERATE: u64 = 0;
const STREAM_BOOTSTRAP: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    /// Negative binomial cells with dispersion `kappa_true`.
    Correct,
    /// Poisson cells.
    PoissonDgp,
    /// Means scaled by `(1 + rate)^(i + j - 1)` along calendar diagonals.
    CalendarInflation { rate: f64 },
    /// Development year `j` drawn with dispersion `kappas[j]`.
    VaryingKappa { kappas: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    PoissonCl,
    OdpCl,
    NbMle,
    NbCorrected,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::PoissonCl, Method::OdpCl, Method::NbMle, Method::NbCorrected];

    pub fn name(self) -> &'static str {
        match self {
            Method::PoissonCl => "poisson_cl",
            Method::OdpCl => "odp_cl",
            Method::NbMle => "nb_mle",
            Method::NbCorrected => "nb_corrected",
        }
    }

    fn model(self) -> BootstrapModel {
        match self {
            Method::PoissonCl => BootstrapModel::Poisson,
            Method::OdpCl => BootstrapModel::Odp,
            Method::NbMle | Method::NbCorrected => BootstrapModel::NegBin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub dim: usize,
    /// Log expected ultimate per accident year.
    pub true_alpha: Vec<f64>,
    /// Share of the ultimate reported in each development year; sums to one.
    pub true_dev_weights: Vec<f64>,
    /// Infinite for Poisson cells; serialized as the string `"inf"`.
    #[serde(with = "extended_float")]
    pub kappa_true: f64,
    pub scenario: Scenario,
    pub n_sim: usize,
    pub b: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
}

/// JSON numbers, with infinities written as the strings `"inf"` and `"-inf"`.
mod extended_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        match *v {
            f64::INFINITY => s.serialize_str("inf"),
            f64::NEG_INFINITY => s.serialize_str("-inf"),
            v => s.serialize_f64(v),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" | "infinity" => Ok(f64::INFINITY),
                "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                _ => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {t:?}"))),
            },
        }
    }
}

/// Development weights `0.53, 0.24, 0.12` followed by a geometric decline
/// `0.12 r^k` with `r` chosen so that all `dim` weights sum to one.
///
/// # Panics
/// If `dim < 4`.
pub fn default_dev_weights(dim: usize) -> Vec<f64> {
    assert!(dim >= 4, "default weights need at least 4 development years");
    let last = LEADING_WEIGHTS[2];
    let rest = 1.0 - LEADING_WEIGHTS.iter().sum::<f64>();
    let tail = |r: f64| (1..=dim - 3).map(|k| last * r.powi(k as i32)).sum::<f64>();
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tail(mid) < rest {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let r = 0.5 * (lo + hi);
    let mut w: Vec<f64> = LEADING_WEIGHTS
        .iter()
        .copied()
        .chain((1..=dim - 3).map(|k| last * r.powi(k as i32)))
        .collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    w
}

/// `alpha_i = log(1000 + 500 (i - 1) / (dim - 1))`.
pub fn default_alpha(dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|i| (1000.0 + 500.0 * i as f64 / (dim - 1) as f64).ln())
        .collect()
}

/// Ten-year study at `kappa = 10` with 50 replicates and 200 bootstrap draws.
pub fn default_config() -> DgpConfig {
    DgpConfig {
        dim: 10,
        true_alpha: default_alpha(10),
        true_dev_weights: default_dev_weights(10),
        kappa_true: 10.0,
        scenario: Scenario::Correct,
        n_sim: 50,
        b: 200,
        seed: 2024,
        methods: Method::ALL.to_vec(),
    }
}

impl DgpConfig {
    /// 200 replicates with 500 bootstrap draws each.
    pub fn full_scale(mut self) -> Self {
        self.n_sim = 200;
        self.b = 500;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.dim < 2 {
            return fail(format!("dimension must be at least 2, got {}", self.dim));
        }
        if self.true_alpha.len() != self.dim || self.true_dev_weights.len() != self.dim {
            return fail(format!(
                "expected {} accident-year effects and weights, got {} and {}",
                self.dim,
                self.true_alpha.len(),
                self.true_dev_weights.len()
            ));
        }
        let s: f64 = self.true_dev_weights.iter().sum();
        if (s - 1.0).abs() > 1e-12 || self.true_dev_weights.iter().any(|&w| !(w > 0.0)) {
            return fail(format!("development weights must be positive and sum to 1, sum is {s}"));
        }
        if self.true_alpha.iter().any(|a| !a.is_finite()) {
            return fail("accident-year effects must be finite".into());
        }
        if !(self.kappa_true > 0.0) {
            return fail(format!("kappa must be positive, got {}", self.kappa_true));
        }
        if self.n_sim == 0 || self.b == 0 {
            return fail("n_sim and b must be at least 1".into());
        }
        if self.methods.is_empty() {
            return fail("no methods selected".into());
        }
        match &self.scenario {
            Scenario::CalendarInflation { rate } if !(*rate > -1.0 && rate.is_finite()) => {
                fail(format!("inflation rate must exceed -1, got {rate}"))
            }
            Scenario::VaryingKappa { kappas }
                if kappas.len() != self.dim || kappas.iter().any(|&k| !(k > 0.0)) =>
            {
                fail(format!("need {} positive development-year kappas", self.dim))
            }
            _ => Ok(()),
        }
    }

    /// Expected count of cell `(ay, dy)` before any scenario adjustment.
    pub fn mean(&self, ay: usize, dy: usize) -> f64 {
        self.true_alpha[ay - 1].exp() * self.true_dev_weights[dy]
    }
}

/// Draws replicate `index`: the observed triangle and the realised total of
/// the hidden cells.
pub fn generate(config: &DgpConfig, index: usize) -> Result<(RunOffTriangle, u64)> {
    let mut rng = substream(config.seed, &[STREAM_GENERATE, index as u64]);
    let dim = config.dim;
    let mut rows = vec![Vec::with_capacity(dim); dim];
    let mut outstanding = 0u64;
    for ay in 1..=dim {
        for dy in 0..dim {
            let mu = config.mean(ay, dy);
            let n = match &config.scenario {
                Scenario::Correct => sample_nb(mu, config.kappa_true, &mut rng),
                Scenario::PoissonDgp => sample_poisson(mu, &mut rng),
                Scenario::CalendarInflation { rate } => {
                    let mu = mu * (1.0 + rate).powi((ay + dy - 1) as i32);
                    sample_nb(mu, config.kappa_true, &mut rng)
                }
                Scenario::VaryingKappa { kappas } => sample_nb(mu, kappas[dy], &mut rng),
            };
            if ay + dy <= dim {
                rows[ay - 1].push(n);
            } else {
                outstanding += n;
            }
        }
    }
    Ok((RunOffTriangle::new(rows)?, outstanding))
}

/// Result of one method on one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MethodOutcome {
    pub point: f64,
    pub intervals: [(f64, f64); 2],
    pub kappa_hat: Option<f64>,
    pub at_boundary: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicateOutcome {
    pub index: usize,
    pub true_outstanding: u64,
    /// Same order as the configured methods; `None` when the method failed.
    pub methods: Vec<Option<MethodOutcome>>,
}

fn fit_options() -> FitOptions {
    FitOptions {
        zero_levels: ZeroLevelPolicy::Degenerate,
        condition_warning: f64::INFINITY,
        ..FitOptions::default()
    }
}

/// Runs every configured method on replicate `index`.
pub fn run_replicate(config: &DgpConfig, index: usize) -> Result<ReplicateOutcome> {
    let (t, true_outstanding) = generate(config, index)?;
    let data = t.to_long();
    let boot_seed: u64 = substream(config.seed, &[STREAM_BOOTSTRAP, index as u64]).random();
    let opts = fit_options();
    let mut nb_base: Option<Result<BaseModel>> = None;
    let methods = config
        .methods
        .iter()
        .map(|&m| {
            let base = match m.model() {
                BootstrapModel::NegBin => nb_base
                    .get_or_insert_with(|| BaseModel::fit(&data, BootstrapModel::NegBin, &opts))
                    .as_ref()
                    .ok()
                    .cloned(),
                model => BaseModel::fit(&data, model, &opts).ok(),
            }?;
            let d = bootstrap_base(
                &base,
                &BootstrapOptions {
                    b: config.b,
                    seed: boot_seed,
                    model: m.model(),
                    correct: m == Method::NbCorrected,
                    base_fit: opts.clone(),
                    refit: opts.clone(),
                },
            )
            .ok()?;
            let mut sorted: Vec<f64> = d.draws_total.iter().map(|&x| x as f64).collect();
            sorted.sort_by(f64::total_cmp);
            Some(MethodOutcome {
                point: base.fit.future_total(),
                intervals: LEVELS.map(|l| central_interval(&sorted, l)),
                kappa_hat: base.kappa_mle,
                at_boundary: base.at_boundary,
            })
        })
        .collect();
    Ok(ReplicateOutcome {
        index,
        true_outstanding,
        methods,
    })
}

/// Aggregate metrics of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRecord {
    pub method: Method,
    #[serde(with = "extended_float")]
    pub kappa_true: f64,
    /// Mean of `point - true outstanding`.
    pub bias: f64,
    pub rmse: f64,
    pub cov75: f64,
    pub cov95: f64,
    pub width75: f64,
    pub width95: f64,
    /// Mean profile estimate of `kappa`; negative binomial methods only.
    pub mean_kappa_hat: Option<f64>,
    /// Share of replicates whose profile peaked at the upper search bound.
    pub boundary_share: Option<f64>,
    pub completed: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyResult {
    pub config: DgpConfig,
    pub records: Vec<MethodRecord>,
    pub replicates: Vec<ReplicateOutcome>,
}

/// Aggregates replicate outcomes into per-method metrics.
pub fn aggregate(config: &DgpConfig, replicates: &[ReplicateOutcome]) -> Vec<MethodRecord> {
    config
        .methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let done: Vec<(f64, &MethodOutcome)> = replicates
                .iter()
                .filter_map(|r| r.methods[k].as_ref().map(|m| (r.true_outstanding as f64, m)))
                .collect();
            let n = done.len() as f64;
            let mean = |f: &dyn Fn(f64, &MethodOutcome) -> f64| {
                if done.is_empty() {
                    f64::NAN
                } else {
                    done.iter().map(|&(t, m)| f(t, m)).sum::<f64>() / n
                }
            };
            let covers = |i: usize| {
                mean(&|t, m: &MethodOutcome| {
                    let (lo, hi) = m.intervals[i];
                    f64::from(u8::from(lo <= t && t <= hi))
                })
            };
            let width = |i: usize| mean(&|_, m: &MethodOutcome| m.intervals[i].1 - m.intervals[i].0);
            let is_nb = method.model() == BootstrapModel::NegBin;
            MethodRecord {
                method,
                kappa_true: config.kappa_true,
                bias: mean(&|t, m| m.point - t),
                rmse: mean(&|t, m| (m.point - t).powi(2)).sqrt(),
                cov75: covers(0),
                cov95: covers(1),
                width75: width(0),
                width95: width(1),
                mean_kappa_hat: is_nb.then(|| mean(&|_, m| m.kappa_hat.unwrap_or(f64::NAN))),
                boundary_share: is_nb.then(|| mean(&|_, m| f64::from(u8::from(m.at_boundary)))),
                completed: done.len(),
                failures: replicates.len() - done.len(),
            }
        })
        .collect()
}

/// Runs `n_sim` replicates in parallel and aggregates them.
pub fn run_study(config: &DgpConfig) -> Result<StudyResult> {
    config.validate()?;
    let replicates = (0..config.n_sim)
        .into_par_iter()
        .map(|i| run_replicate(config, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(StudyResult {
        records: aggregate(config, &replicates),
        config: config.clone(),
        replicates,
    })
}

impl StudyResult {
    pub fn record(&self, method: Method) -> Option<&MethodRecord> {
        self.records.iter().find(|r| r.method == method)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_records_csv(&self.records, out)
    }
}

/// One row per record: `method, kappa_true, bias, rmse, cov75, cov95,
/// width75, width95, mean_kappa_hat, boundary_share, completed, failures`.
pub fn write_records_csv<W: Write>(records: &[MethodRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "method",
        "kappa_true",
        "bias",
        "rmse",
        "cov75",
        "cov95",
        "width75",
        "width95",
        "mean_kappa_hat",
        "boundary_share",
        "completed",
        "failures",
    ])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in records {
        w.write_record([
            r.method.name().to_string(),
            r.kappa_true.to_string(),
            r.bias.to_string(),
            r.rmse.to_string(),
            r.cov75.to_string(),
            r.cov95.to_string(),
            r.width75.to_string(),
            r.width95.to_string(),
            opt(r.mean_kappa_hat),
            opt(r.boundary_share),
            r.completed.to_string(),
            r.failures.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
