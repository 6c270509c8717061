//! Estimation of the negative binomial dispersion `kappa`.
//!
//! The profile log-likelihood `l_p(kappa)` is maximised on the log scale:
//! a 60-point grid over `[1e-3, 1e8]` brackets the optimum and golden-section
//! search refines it. Each profile point is a full IRLS fit, warm-started from
//! the previous point's means.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::glm::{self, Family, FitOptions, ModelFit};
use crate::special::{chi2_1_sf, CHI2_1_95};
use crate::triangle::CellRecord;

pub const KAPPA_MIN: f64 = 1e-3;
/// Upper end of the search. A profile maximised here means no detectable
/// overdispersion.
pub const KAPPA_MAX: f64 = 1e8;
const GRID_POINTS: usize = 60;
/// Golden-section stopping width on `ln kappa`.
const GOLDEN_TOL: f64 = 1e-6;
/// Bisection stopping width on `ln kappa` for interval endpoints.
const ENDPOINT_TOL: f64 = 1e-7;
/// Profile values this close to the maximum at `KAPPA_MAX` count as a boundary optimum.
const BOUNDARY_SLACK: f64 = 1e-6;
/// Step on `ln kappa` for the curvature check.
const CURVATURE_STEP: f64 = 0.05;
/// Minimum `-d^2 l_p / d(ln kappa)^2` at an interior optimum.
const MIN_CURVATURE: f64 = 1e-4;
/// Extra points laid over the confidence region of an exported profile.
const DENSE_POINTS: usize = 31;

/// `kappa_mle * (n - p) / n`.
///
/// # Panics
/// If `n <= p`.
pub fn bias_correct(kappa_mle: f64, n: usize, p: usize) -> f64 {
    assert!(n > p, "bias correction needs n > p (n = {n}, p = {p})");
    kappa_mle * (n - p) as f64 / n as f64
}

/// Profile maximum without interval or curve, as used inside the bootstrap.
#[derive(Debug, Clone)]
pub struct KappaFit {
    pub kappa: f64,
    pub loglik: f64,
    /// Maximum reached at [`KAPPA_MAX`].
    pub at_boundary: bool,
    /// Maximum reached at [`KAPPA_MIN`].
    pub at_lower_bound: bool,
    /// Negative binomial fit at `kappa`.
    pub fit: ModelFit,
}

#[derive(Debug, Clone, Serialize)]
pub struct KappaEstimate {
    pub kappa_mle: f64,
    pub kappa_adj: f64,
    /// Profile likelihood-ratio interval. The upper end is infinite when the
    /// profile never falls by the chi-squared cutoff below [`KAPPA_MAX`].
    pub ci95: (f64, f64),
    /// `(kappa, l_p(kappa))` sorted by `kappa`.
    pub profile_curve: Vec<(f64, f64)>,
    pub at_boundary: bool,
    pub at_lower_bound: bool,
    /// `l_p` at the maximum.
    pub loglik: f64,
    /// `-d^2 l_p / d(ln kappa)^2` at an interior maximum, NaN at a bound.
    pub curvature: f64,
    pub n_obs: usize,
    pub n_params: usize,
    #[serde(skip)]
    pub fit: ModelFit,
}

/// Evaluates a profile over `ln kappa`, recording every point.
struct Profile<'a, F> {
    objective: F,
    data: &'a [CellRecord],
    opts: FitOptions,
    warm: Option<Vec<f64>>,
    evals: Vec<(f64, f64)>,
    best: Option<(f64, ModelFit)>,
    first_error: Option<Error>,
}

impl<'a, F: FnMut(&ModelFit) -> Result<f64>> Profile<'a, F> {
    fn new(data: &'a [CellRecord], opts: &FitOptions, objective: F) -> Self {
        let mut opts = opts.clone();
        opts.condition_warning = f64::INFINITY;
        Self {
            objective,
            data,
            opts,
            warm: None,
            evals: Vec::new(),
            best: None,
            first_error: None,
        }
    }

    fn fit(&mut self, kappa: f64) -> Result<ModelFit> {
        let f = glm::fit_with(self.data, Family::NegBin(kappa), &self.opts, self.warm.as_deref())?;
        self.warm = Some(f.fitted_mu.clone());
        Ok(f)
    }

    fn at(&mut self, t: f64) -> f64 {
        self.at_kappa(t.exp())
    }

    fn at_kappa(&mut self, kappa: f64) -> f64 {
        let value = self.fit(kappa).and_then(|f| {
            let v = (self.objective)(&f)?;
            if self.best.as_ref().is_none_or(|(b, _)| v > *b) {
                self.best = Some((v, f));
            }
            Ok(v)
        });
        let v = match value {
            Ok(v) => v,
            Err(e) => {
                self.first_error.get_or_insert(e);
                f64::NEG_INFINITY
            }
        };
        self.evals.push((kappa, v));
        v
    }

    /// Grid scan then golden-section refinement. Returns `(kappa, value,
    /// at_upper, at_lower)`.
    fn maximise(&mut self) -> Result<(f64, f64, bool, bool)> {
        let (t0, t1) = (KAPPA_MIN.ln(), KAPPA_MAX.ln());
        let step = (t1 - t0) / (GRID_POINTS - 1) as f64;
        let grid: Vec<f64> = (0..GRID_POINTS).map(|k| t0 + k as f64 * step).collect();
        let values: Vec<f64> = (0..GRID_POINTS)
            .map(|k| match k {
                0 => self.at_kappa(KAPPA_MIN),
                k if k == GRID_POINTS - 1 => self.at_kappa(KAPPA_MAX),
                k => self.at(grid[k]),
            })
            .collect();
        let (k_best, &v_best) = values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("grid is non-empty");
        if v_best == f64::NEG_INFINITY {
            return Err(self.first_error.take().unwrap_or(Error::NotConverged { iterations: 0 }));
        }
        if values[GRID_POINTS - 1] >= v_best - BOUNDARY_SLACK {
            return Ok((KAPPA_MAX, values[GRID_POINTS - 1], true, false));
        }
        if k_best == 0 {
            return Ok((KAPPA_MIN, v_best, false, true));
        }

        let (mut a, mut b) = (grid[k_best - 1], grid[k_best + 1]);
        let r = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - r * (b - a);
        let mut d = a + r * (b - a);
        let mut fc = self.at(c);
        let mut fd = self.at(d);
        while b - a > GOLDEN_TOL {
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - r * (b - a);
                fc = self.at(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + r * (b - a);
                fd = self.at(d);
            }
        }
        let (t, v) = if fc >= fd { (c, fc) } else { (d, fd) };
        if v >= v_best {
            Ok((t.exp(), v, false, false))
        } else {
            Ok((grid[k_best].exp(), v_best, false, false))
        }
    }

    /// The fit at `kappa`, reusing the best one when it matches.
    fn fit_at(&mut self, kappa: f64) -> Result<ModelFit> {
        match self.best.take() {
            Some((_, f)) if f.kappa() == Some(kappa) => Ok(f),
            _ => self.fit(kappa),
        }
    }
}

/// Maximum of the profile log-likelihood.
pub fn kappa_mle(data: &[CellRecord], opts: &FitOptions) -> Result<KappaFit> {
    let mut profile = Profile::new(data, opts, |f: &ModelFit| Ok(f.loglik));
    let (kappa, loglik, at_boundary, at_lower_bound) = profile.maximise()?;
    let fit = profile.fit_at(kappa)?;
    Ok(KappaFit {
        kappa,
        loglik,
        at_boundary,
        at_lower_bound,
        fit,
    })
}

/// Profile likelihood estimate of `kappa` with its likelihood-ratio interval.
pub fn profile_kappa(data: &[CellRecord]) -> Result<KappaEstimate> {
    profile_kappa_with(data, &FitOptions::default())
}

pub fn profile_kappa_with(data: &[CellRecord], opts: &FitOptions) -> Result<KappaEstimate> {
    let mut profile = Profile::new(data, opts, |f: &ModelFit| Ok(f.loglik));
    let (kappa_mle, l_max, at_boundary, at_lower_bound) = profile.maximise()?;
    let t_hat = kappa_mle.ln();

    let mut fit = profile.fit_at(kappa_mle)?;
    if opts.condition_warning.is_finite() {
        fit = glm::fit_with(data, Family::NegBin(kappa_mle), opts, Some(&fit.fitted_mu))?;
    }
    let (n_obs, n_params) = (fit.n_obs, fit.n_params);
    if n_obs <= n_params {
        return Err(Error::Saturated { n_obs, n_params });
    }

    let curvature = if at_boundary || at_lower_bound {
        f64::NAN
    } else {
        let up = profile.at(t_hat + CURVATURE_STEP);
        let down = profile.at(t_hat - CURVATURE_STEP);
        let c = -(up - 2.0 * l_max + down) / (CURVATURE_STEP * CURVATURE_STEP);
        if !(c >= MIN_CURVATURE) {
            return Err(Error::FlatProfile {
                kappa: kappa_mle,
                curvature: c,
            });
        }
        c
    };

    let cutoff = l_max - CHI2_1_95 / 2.0;
    let grid = profile.evals.clone();
    let outside_below = grid
        .iter()
        .filter(|&&(k, v)| k < kappa_mle && v < cutoff)
        .map(|&(k, _)| k)
        .fold(f64::NAN, f64::max);
    let outside_above = grid
        .iter()
        .filter(|&&(k, v)| k > kappa_mle && v < cutoff)
        .map(|&(k, _)| k)
        .fold(f64::NAN, f64::min);
    let mut crossing = |outside: f64| {
        let (mut out, mut inside) = (outside.ln(), t_hat);
        while (out - inside).abs() > ENDPOINT_TOL {
            let mid = 0.5 * (out + inside);
            if profile.at(mid) < cutoff {
                out = mid;
            } else {
                inside = mid;
            }
        }
        inside.exp()
    };
    let lower = if outside_below.is_nan() { KAPPA_MIN } else { crossing(outside_below) };
    let upper = if outside_above.is_nan() { f64::INFINITY } else { crossing(outside_above) };

    if upper.is_finite() {
        let (a, b) = ((lower / 1.3).max(KAPPA_MIN).ln(), (upper * 1.3).min(KAPPA_MAX).ln());
        for k in 0..DENSE_POINTS {
            profile.at(a + (b - a) * k as f64 / (DENSE_POINTS - 1) as f64);
        }
    }
    let mut profile_curve: Vec<(f64, f64)> = profile
        .evals
        .into_iter()
        .filter(|(_, v)| v.is_finite())
        .collect();
    profile_curve.sort_by(|a, b| a.0.total_cmp(&b.0));
    profile_curve.dedup_by(|a, b| a.0 == b.0);

    Ok(KappaEstimate {
        kappa_mle,
        kappa_adj: bias_correct(kappa_mle, n_obs, n_params),
        ci95: (lower, upper),
        profile_curve,
        at_boundary,
        at_lower_bound,
        loglik: l_max,
        curvature,
        n_obs,
        n_params,
        fit,
    })
}

/// Cox-Reid adjusted profile log-likelihood
/// `l_p(kappa) - 1/2 log det(X'WX)`, with `W` the NB working weights at the
/// fitted means.
pub fn adjusted_profile_loglik(data: &[CellRecord], kappa: f64) -> Result<f64> {
    let f = glm::fit(data, Family::negbin(kappa)?)?;
    Ok(f.loglik - 0.5 * glm::log_det_information(&f, kappa)?)
}

/// Numerical maximiser of the adjusted profile log-likelihood, an
/// alternative to [`bias_correct`].
pub fn adjusted_kappa(data: &[CellRecord], opts: &FitOptions) -> Result<KappaFit> {
    let mut profile = Profile::new(data, opts, |f: &ModelFit| {
        let kappa = f.kappa().expect("negative binomial fit");
        Ok(f.loglik - 0.5 * glm::log_det_information(f, kappa)?)
    });
    let (kappa, value, at_boundary, at_lower_bound) = profile.maximise()?;
    let fit = profile.fit_at(kappa)?;
    Ok(KappaFit {
        kappa,
        loglik: value,
        at_boundary,
        at_lower_bound,
        fit,
    })
}

/// Likelihood-ratio, AIC and BIC comparison of Poisson against negative
/// binomial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelectionReport {
    /// `2 (l_NB - l_Pois)`, floored at zero.
    pub lambda: f64,
    /// Boundary-corrected p-value `Pr(chi2_1 >= lambda) / 2`.
    pub p_value: f64,
    pub loglik_poisson: f64,
    pub loglik_nb: f64,
    pub aic_poisson: f64,
    pub aic_nb: f64,
    pub bic_poisson: f64,
    pub bic_nb: f64,
}

/// Builds the comparison from the two maximised log-likelihoods, `n`
/// observations and `p` mean parameters. The NB model has `p + 1`.
pub fn selection_report(loglik_poisson: f64, loglik_nb: f64, n: usize, p: usize) -> SelectionReport {
    let lambda = (2.0 * (loglik_nb - loglik_poisson)).max(0.0);
    let log_n = (n as f64).ln();
    let (p_pois, p_nb) = (p as f64, (p + 1) as f64);
    SelectionReport {
        lambda,
        p_value: 0.5 * chi2_1_sf(lambda),
        loglik_poisson,
        loglik_nb,
        aic_poisson: -2.0 * loglik_poisson + 2.0 * p_pois,
        aic_nb: -2.0 * loglik_nb + 2.0 * p_nb,
        bic_poisson: -2.0 * loglik_poisson + p_pois * log_n,
        bic_nb: -2.0 * loglik_nb + p_nb * log_n,
    }
}

/// Fits both models and tests for overdispersion.
pub fn overdispersion_test(data: &[CellRecord]) -> Result<SelectionReport> {
    let pois = glm::fit(data, Family::Poisson)?;
    let nb = kappa_mle(data, &FitOptions::default())?;
    Ok(selection_report(pois.loglik, nb.loglik, pois.n_obs, pois.n_params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets;

    #[test]
    fn bias_correction_factor() {
        let k = 7.3;
        assert_eq!(bias_correct(k, 55, 19) / k, 36.0 / 55.0);
        assert!((bias_correct(4.8, 28, 13) - 2.571_428_571_428_571).abs() < 1e-12);
        assert_eq!(bias_correct(k, 10, 0), k);
    }

    #[test]
    fn aus_motor_profile() {
        let data = datasets::aus_motor_bi().to_long();
        let est = profile_kappa(&data).unwrap();
        assert!((4.7..=4.9).contains(&est.kappa_mle), "{}", est.kappa_mle);
        assert!(!est.at_boundary);
        assert_eq!((est.n_obs, est.n_params), (28, 13));
        let (lo, hi) = est.ci95;
        assert!(lo < est.kappa_mle && est.kappa_mle < hi);
        // both endpoints sit on the likelihood-ratio cutoff
        for k in [lo, hi] {
            let f = glm::fit(&data, Family::NegBin(k)).unwrap();
            assert!((2.0 * (est.loglik - f.loglik) - CHI2_1_95).abs() < 1e-5);
        }
        assert!(est.profile_curve.windows(2).all(|w| w[0].0 < w[1].0));
        assert!(est.profile_curve.iter().filter(|p| p.0 >= lo && p.0 <= hi).count() >= 20);
    }

    #[test]
    fn aus_motor_selection() {
        let data = datasets::aus_motor_bi().to_long();
        let s = overdispersion_test(&data).unwrap();
        assert!((s.lambda / 2550.1 - 1.0).abs() < 0.01, "{}", s.lambda);
        assert!(s.p_value < 1e-20);
        assert!((s.aic_poisson - s.aic_nb - (s.lambda - 2.0)).abs() < 1e-9);
    }

    #[test]
    fn selection_at_zero() {
        let s = selection_report(-100.0, -100.0 - 1e-9, 28, 13);
        assert_eq!(s.lambda, 0.0);
        assert_eq!(s.p_value, 0.5);
        let s = selection_report(0.0, CHI2_1_95 / 2.0, 28, 13);
        assert!((s.p_value - 0.025).abs() < 1e-10);
    }

    #[test]
    fn equidispersed_triangle_hits_the_cap() {
        // counts equal to a multiplicative table, so Poisson fits exactly
        let rows: Vec<Vec<u64>> = (0..5)
            .map(|i| (0..5 - i).map(|j| (40 + 10 * i as u64) * [8u64, 4, 2, 1, 1][j]).collect())
            .collect();
        let data = crate::triangle::RunOffTriangle::new(rows).unwrap().to_long();
        let est = profile_kappa(&data).unwrap();
        assert!(est.at_boundary);
        assert_eq!(est.kappa_mle, KAPPA_MAX);
        assert!(est.ci95.1.is_infinite());
    }

    #[test]
    fn adjustment_lowers_the_profile() {
        let data = datasets::aus_motor_bi().to_long();
        let f = glm::fit(&data, Family::NegBin(4.8)).unwrap();
        let ld = glm::log_det_information(&f, 4.8).unwrap();
        let adj = adjusted_profile_loglik(&data, 4.8).unwrap();
        assert!(ld > 0.0);
        assert!((adj - (f.loglik - 0.5 * ld)).abs() < 1e-9);
        let k_ap = adjusted_kappa(&data, &FitOptions::default()).unwrap();
        assert!(k_ap.kappa < 4.8);
    }
}
