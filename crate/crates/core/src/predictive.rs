//! Predictive distribution of the outstanding claims.
//!
//! [`plugin_predict`] treats the fitted parameters as known. [`bootstrap`]
//! adds estimation error with a parametric bootstrap: simulate a synthetic
//! observed triangle from the fitted model, refit it, and simulate the future
//! cells from the refitted model.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chainladder;
use crate::dispersion::{self, bias_correct};
use crate::error::{Error, Result};
use crate::glm::{self, Family, FitOptions, ModelFit, ZeroLevelPolicy};
use crate::rng::{sample_nb, sample_odp, sample_poisson, substream};
use crate::triangle::{CellRecord, RunOffTriangle};

/// Fewest usable draws accepted by [`summarize`].
pub const MIN_DRAWS: usize = 100;
/// Largest tolerated share of failed refits.
pub const MAX_FAILURE_RATE: f64 = 0.2;

/// Plug-in law of one future cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FutureCell {
    pub ay: usize,
    pub dy: usize,
    pub mean: f64,
    pub variance: f64,
    /// Infinite for a Poisson cell.
    pub kappa: f64,
}

impl FutureCell {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        sample_nb(self.mean, self.kappa, rng)
    }
}

/// Negative binomial laws of the future cells given the fit's means and
/// dispersion `kappa`. Infinite `kappa` gives Poisson cells.
pub fn plugin_predict(fit: &ModelFit, kappa: f64) -> Vec<FutureCell> {
    fit.future_cells()
        .into_iter()
        .map(|(ay, dy)| {
            let mean = fit.mean(ay, dy);
            let variance = if kappa.is_finite() { mean + mean * mean / kappa } else { mean };
            FutureCell {
                ay,
                dy,
                mean,
                variance,
                kappa,
            }
        })
        .collect()
}

/// Sampling model behind a bootstrap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapModel {
    /// Negative binomial with profile-likelihood `kappa`.
    NegBin,
    Poisson,
    /// Quasi-Poisson fit with `round(phi * Poisson(mu / phi))` draws.
    Odp,
}

#[derive(Debug, Clone)]
pub struct BootstrapOptions {
    pub b: usize,
    pub seed: u64,
    pub model: BootstrapModel,
    /// Use `kappa * (n - p) / n` in place of the MLE, for the base fit and
    /// every refit. Negative binomial only.
    pub correct: bool,
    /// Options for the fit to the observed triangle.
    pub base_fit: FitOptions,
    /// Options for the refits to synthetic triangles.
    pub refit: FitOptions,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            b: 1000,
            seed: 0,
            model: BootstrapModel::NegBin,
            correct: true,
            base_fit: FitOptions::default(),
            refit: FitOptions {
                zero_levels: ZeroLevelPolicy::Degenerate,
                condition_warning: f64::INFINITY,
                ..FitOptions::default()
            },
        }
    }
}

/// Fitted model that seeds a bootstrap.
#[derive(Debug, Clone)]
pub struct BaseModel {
    pub model: BootstrapModel,
    pub fit: ModelFit,
    /// Profile MLE for the negative binomial model.
    pub kappa_mle: Option<f64>,
    pub at_boundary: bool,
    /// Pearson dispersion for the over-dispersed Poisson model.
    pub phi: Option<f64>,
}

impl BaseModel {
    pub fn fit(data: &[CellRecord], model: BootstrapModel, opts: &FitOptions) -> Result<Self> {
        Ok(match model {
            BootstrapModel::NegBin => {
                let k = dispersion::kappa_mle(data, opts)?;
                BaseModel {
                    model,
                    fit: k.fit,
                    kappa_mle: Some(k.kappa),
                    at_boundary: k.at_boundary,
                    phi: None,
                }
            }
            BootstrapModel::Poisson => BaseModel {
                model,
                fit: glm::fit_with(data, Family::Poisson, opts, None)?,
                kappa_mle: None,
                at_boundary: false,
                phi: None,
            },
            BootstrapModel::Odp => {
                let fit = glm::fit_with(data, Family::QuasiPoisson, opts, None)?;
                BaseModel {
                    model,
                    phi: fit.phi,
                    fit,
                    kappa_mle: None,
                    at_boundary: false,
                }
            }
        })
    }

    /// Dispersion used for sampling: `kappa` (possibly corrected) for the
    /// negative binomial, `phi` for ODP.
    fn dispersion(&self, correct: bool) -> Option<f64> {
        match self.model {
            BootstrapModel::NegBin => {
                let k = self.kappa_mle.expect("negative binomial base carries kappa");
                Some(if correct {
                    bias_correct(k, self.fit.n_obs, self.fit.n_params)
                } else {
                    k
                })
            }
            BootstrapModel::Poisson => None,
            BootstrapModel::Odp => self.phi,
        }
    }

    /// Expected outstanding count per accident year.
    pub fn point_by_ay(&self) -> Vec<f64> {
        self.fit.future_by_ay()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReserveDistribution {
    pub model: BootstrapModel,
    /// Total outstanding count per successful replicate, in replicate order.
    pub draws_total: Vec<u64>,
    /// `draws_by_ay[ay - 1][k]` is accident year `ay`'s share of `draws_total[k]`.
    pub draws_by_ay: Vec<Vec<u64>>,
    pub b_requested: usize,
    pub b_effective: usize,
    pub refit_failures: usize,
    pub kappa_mle: Option<f64>,
    /// Dispersion driving the synthetic triangles: `kappa` (NB) or `phi` (ODP).
    pub kappa_used: Option<f64>,
    pub corrected: bool,
    pub at_boundary: bool,
    /// Chain-ladder reserves per accident year, or the base model's fitted
    /// future means when chain-ladder is undefined.
    pub point_by_ay: Vec<f64>,
    pub point_total: f64,
    /// Base model's fitted future means per accident year.
    pub fitted_by_ay: Vec<f64>,
    pub seed: u64,
}

fn sample_cell<R: Rng + ?Sized>(model: BootstrapModel, mu: f64, dispersion: Option<f64>, rng: &mut R) -> u64 {
    match (model, dispersion) {
        (BootstrapModel::NegBin, Some(k)) => sample_nb(mu, k, rng),
        (BootstrapModel::Odp, Some(phi)) => sample_odp(mu, phi, rng),
        _ => sample_poisson(mu, rng),
    }
}

/// One replicate: per-accident-year outstanding draws.
fn replicate(base: &BaseModel, opts: &BootstrapOptions, index: usize) -> Result<Vec<u64>> {
    let mut rng = substream(opts.seed, &[index as u64]);
    let dispersion = base.dispersion(opts.correct);
    let synthetic: Vec<CellRecord> = base
        .fit
        .data
        .iter()
        .zip(&base.fit.fitted_mu)
        .map(|(r, &mu)| CellRecord {
            count: sample_cell(base.model, mu, dispersion, &mut rng),
            ..*r
        })
        .collect();
    let refit = BaseModel::fit(&synthetic, base.model, &opts.refit)?;
    let dispersion = refit.dispersion(opts.correct);
    let mut by_ay = vec![0u64; refit.fit.n_ay];
    for (ay, dy) in refit.fit.future_cells() {
        by_ay[ay - 1] += sample_cell(base.model, refit.fit.mean(ay, dy), dispersion, &mut rng);
    }
    Ok(by_ay)
}

/// Parametric bootstrap of the outstanding claims from an already fitted base
/// model. Replicate `k` draws from its own random stream, so the result does
/// not depend on the number of threads.
pub fn bootstrap_base(base: &BaseModel, opts: &BootstrapOptions) -> Result<ReserveDistribution> {
    if opts.b == 0 {
        return Err(Error::InvalidConfig("bootstrap needs at least one replicate".into()));
    }
    let results: Vec<Option<Vec<u64>>> = (0..opts.b)
        .into_par_iter()
        .map(|k| replicate(base, opts, k).ok())
        .collect();
    let refit_failures = results.iter().filter(|r| r.is_none()).count();
    if refit_failures as f64 > MAX_FAILURE_RATE * opts.b as f64 {
        return Err(Error::ExcessiveFailures {
            failures: refit_failures,
            requested: opts.b,
        });
    }
    let n_ay = base.fit.n_ay;
    let mut draws_by_ay = vec![Vec::with_capacity(opts.b - refit_failures); n_ay];
    let mut draws_total = Vec::with_capacity(opts.b - refit_failures);
    for by_ay in results.into_iter().flatten() {
        draws_total.push(by_ay.iter().sum());
        for (col, v) in draws_by_ay.iter_mut().zip(by_ay) {
            col.push(v);
        }
    }
    let fitted_by_ay = base.point_by_ay();
    Ok(ReserveDistribution {
        model: base.model,
        b_requested: opts.b,
        b_effective: draws_total.len(),
        draws_total,
        draws_by_ay,
        refit_failures,
        kappa_mle: base.kappa_mle,
        kappa_used: base.dispersion(opts.correct),
        corrected: opts.correct && base.model == BootstrapModel::NegBin,
        at_boundary: base.at_boundary,
        point_total: fitted_by_ay.iter().sum(),
        point_by_ay: fitted_by_ay.clone(),
        fitted_by_ay,
        seed: opts.seed,
    })
}

/// Fits the base model to `t` and bootstraps it. The point estimate is the
/// chain-ladder reserve.
pub fn bootstrap_with(t: &RunOffTriangle, opts: &BootstrapOptions) -> Result<ReserveDistribution> {
    let data = t.to_long();
    let base = BaseModel::fit(&data, opts.model, &opts.base_fit)
        .map_err(|e| Error::BaseFitFailed(Box::new(e)))?;
    let mut d = bootstrap_base(&base, opts)?;
    if let Ok(cl) = chainladder::chain_ladder(t) {
        d.point_by_ay = cl.reserves;
        d.point_total = cl.total_reserve;
    }
    Ok(d)
}

/// Negative binomial bootstrap with `b` replicates.
pub fn bootstrap(t: &RunOffTriangle, b: usize, correct: bool, seed: u64) -> Result<ReserveDistribution> {
    bootstrap_with(
        t,
        &BootstrapOptions {
            b,
            seed,
            correct,
            ..BootstrapOptions::default()
        },
    )
}

/// Type-7 quantile (linear interpolation between order statistics) of
/// ascending `sorted`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Central interval of probability `level` from ascending `sorted`.
pub fn central_interval(sorted: &[f64], level: f64) -> (f64, f64) {
    let tail = (1.0 - level) / 2.0;
    (quantile_sorted(sorted, tail), quantile_sorted(sorted, 1.0 - tail))
}

/// Coefficient of variation in percent; zero for constant draws.
pub fn cv_percent(draws: &[f64]) -> f64 {
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        0.0
    } else {
        var.sqrt() / mean * 100.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalSummary {
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
    pub point: f64,
    pub cv_percent: f64,
}

/// Draws needed for a `level` interval: [`MIN_DRAWS`], and enough that each
/// tail holds at least one draw.
pub fn required_draws(level: f64) -> usize {
    MIN_DRAWS.max((2.0 / (1.0 - level)).ceil() as usize)
}

/// Intervals of `draws` at each level, carrying `point`.
pub fn summarize_draws(draws: &[f64], point: f64, levels: &[f64]) -> Result<Vec<IntervalSummary>> {
    for &level in levels {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::InvalidConfig(format!("interval level {level} is not in (0, 1)")));
        }
        let required = required_draws(level);
        if draws.len() < required {
            return Err(Error::TooFewDraws {
                available: draws.len(),
                required,
                level,
            });
        }
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cv = cv_percent(&sorted);
    Ok(levels
        .iter()
        .map(|&level| {
            let (lower, upper) = central_interval(&sorted, level);
            IntervalSummary {
                level,
                lower,
                upper,
                point,
                cv_percent: cv,
            }
        })
        .collect())
}

/// Interval summaries per accident year and for the total.
#[derive(Debug, Clone, Serialize)]
pub struct ReserveSummary {
    /// `by_ay[ay - 1]` holds one summary per requested level.
    pub by_ay: Vec<Vec<IntervalSummary>>,
    pub total: Vec<IntervalSummary>,
}

pub fn summarize(d: &ReserveDistribution, levels: &[f64]) -> Result<ReserveSummary> {
    let as_f64 = |v: &[u64]| v.iter().map(|&x| x as f64).collect::<Vec<f64>>();
    let total = summarize_draws(&as_f64(&d.draws_total), d.point_total, levels)?;
    let by_ay = d
        .draws_by_ay
        .iter()
        .zip(&d.point_by_ay)
        .map(|(draws, &point)| summarize_draws(&as_f64(draws), point, levels))
        .collect::<Result<_>>()?;
    Ok(ReserveSummary { by_ay, total })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelBounds {
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Machine-readable summary of the total outstanding distribution.
/// Quantiles use linear interpolation between order statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub point: f64,
    pub levels: Vec<LevelBounds>,
    pub cv_percent: f64,
    pub b_effective: usize,
    pub refit_failures: usize,
    pub kappa_mle: Option<f64>,
    pub kappa_adj: Option<f64>,
}

impl DistributionSummary {
    pub fn new(d: &ReserveDistribution, total: &[IntervalSummary]) -> Self {
        Self {
            point: d.point_total,
            levels: total
                .iter()
                .map(|s| LevelBounds {
                    level: s.level,
                    lower: s.lower,
                    upper: s.upper,
                })
                .collect(),
            cv_percent: total.first().map_or(f64::NAN, |s| s.cv_percent),
            b_effective: d.b_effective,
            refit_failures: d.refit_failures,
            kappa_mle: d.kappa_mle,
            kappa_adj: match (d.model, d.kappa_mle) {
                (BootstrapModel::NegBin, Some(_)) if d.corrected => d.kappa_used,
                _ => None,
            },
        }
    }
}

/// Writes the total draws as a one-column CSV with header `total`.
pub fn write_draws_csv<W: Write>(d: &ReserveDistribution, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["total"])?;
    for v in &d.draws_total {
        w.write_record([v.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
