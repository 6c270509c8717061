//! IRLS for the two-way cross-classified log-link model
//! `log mu_{i,j} = intercept + alpha_i + beta_j` (treatment contrasts,
//! `alpha_1 = beta_0 = 0`).
//!
//! The design matrix is never materialised: each observation touches the
//! intercept, one accident-year column and one development-year column, so
//! the weighted normal equations are accumulated straight from the factor
//! indices and solved by Cholesky.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{nb_logpmf, poisson_logpmf};
use crate::triangle::CellRecord;

/// Response family. All share the log link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", content = "kappa")]
pub enum Family {
    Poisson,
    QuasiPoisson,
    /// Negative binomial with fixed dispersion `kappa`, `Var = mu + mu^2/kappa`.
    NegBin(f64),
}

impl Family {
    pub fn negbin(kappa: f64) -> Result<Self> {
        if kappa.is_finite() && kappa > 0.0 {
            Ok(Family::NegBin(kappa))
        } else {
            Err(Error::InvalidConfig(format!(
                "kappa must be positive and finite, got {kappa}"
            )))
        }
    }

    pub fn kappa(&self) -> Option<f64> {
        match self {
            Family::NegBin(k) => Some(*k),
            _ => None,
        }
    }

    /// IRLS working weight `(dmu/deta)^2 / V(mu)` under the log link.
    #[inline]
    pub fn working_weight(&self, mu: f64) -> f64 {
        match self {
            Family::NegBin(k) => mu / (1.0 + mu / k),
            _ => mu,
        }
    }

    #[inline]
    pub fn variance(&self, mu: f64) -> f64 {
        match self {
            Family::NegBin(k) => mu + mu * mu / k,
            _ => mu,
        }
    }

    fn unit_deviance(&self, y: u64, mu: f64) -> f64 {
        let yf = y as f64;
        let ylogy = if y == 0 { 0.0 } else { yf * (yf / mu).ln() };
        match self {
            Family::NegBin(k) => 2.0 * (ylogy - (yf + k) * ((yf - mu) / (mu + k)).ln_1p()),
            _ => 2.0 * (ylogy - (yf - mu)),
        }
    }

    fn logpmf(&self, y: u64, mu: f64) -> f64 {
        match self {
            Family::NegBin(k) => nb_logpmf(y, mu, *k),
            _ => poisson_logpmf(y, mu),
        }
    }
}

/// What to do with a factor level whose counts are all zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ZeroLevelPolicy {
    /// Fail with [`Error::Separation`].
    #[default]
    Reject,
    /// Take the limit: the level's coefficient is `-inf` and its fitted means
    /// are zero. The remaining levels are fitted as if the level were absent,
    /// which is where the likelihood supremum lies. Reference levels must
    /// still carry positive counts.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Factor {
    AccidentYear,
    DevelopmentYear,
}

impl Factor {
    fn name(self) -> &'static str {
        match self {
            Factor::AccidentYear => "accident year",
            Factor::DevelopmentYear => "development year",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegenerateLevel {
    pub factor: Factor,
    pub level: usize,
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Relative deviance change that counts as converged.
    pub tol: f64,
    pub zero_levels: ZeroLevelPolicy,
    /// Condition number of the scaled information above which a warning is
    /// recorded. Infinity skips the eigen-decomposition entirely.
    pub condition_warning: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-10,
            zero_levels: ZeroLevelPolicy::Reject,
            condition_warning: 1e3,
        }
    }
}

/// A fitted cross-classified model.
#[derive(Debug, Clone, Serialize)]
pub struct ModelFit {
    pub family: Family,
    pub n_ay: usize,
    pub n_dy: usize,
    pub intercept: f64,
    /// `alpha~_i` for accident years `2..=n_ay`.
    pub ay_effects: Vec<f64>,
    /// `beta~_j` for development years `1..n_dy`.
    pub dy_effects: Vec<f64>,
    /// Simplex form: `mu_{i,j} = exp(alpha_i + beta_j)`, `sum_j exp(beta_j) = 1`.
    pub simplex_alpha: Vec<f64>,
    pub simplex_beta: Vec<f64>,
    pub dev_weights: Vec<f64>,
    pub data: Vec<CellRecord>,
    pub fitted_mu: Vec<f64>,
    pub loglik: f64,
    pub deviance: f64,
    /// Pearson dispersion, quasi-Poisson only.
    pub phi: Option<f64>,
    pub n_obs: usize,
    pub n_params: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Deviance after each IRLS iteration.
    pub deviance_trace: Vec<f64>,
    /// Condition number of the unit-diagonal scaled information matrix, NaN
    /// when not computed.
    pub condition_number: f64,
    pub degenerate: Vec<DegenerateLevel>,
    pub warnings: Vec<String>,
}

impl ModelFit {
    /// Fitted mean of any cell in the `n_ay x n_dy` grid.
    pub fn mean(&self, ay: usize, dy: usize) -> f64 {
        (self.simplex_alpha[ay - 1] + self.simplex_beta[dy]).exp()
    }

    /// Grid cells not present in the data, row-major. For a triangle these
    /// are the cells with `ay + dy > I`.
    pub fn future_cells(&self) -> Vec<(usize, usize)> {
        let mut seen = vec![false; self.n_ay * self.n_dy];
        for r in &self.data {
            seen[(r.ay - 1) * self.n_dy + r.dy] = true;
        }
        (1..=self.n_ay)
            .flat_map(|ay| (0..self.n_dy).map(move |dy| (ay, dy)))
            .filter(|&(ay, dy)| !seen[(ay - 1) * self.n_dy + dy])
            .collect()
    }

    pub fn future_total(&self) -> f64 {
        self.future_cells()
            .into_iter()
            .map(|(ay, dy)| self.mean(ay, dy))
            .sum()
    }

    /// Expected outstanding count per accident year.
    pub fn future_by_ay(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_ay];
        for (ay, dy) in self.future_cells() {
            out[ay - 1] += self.mean(ay, dy);
        }
        out
    }

    pub fn kappa(&self) -> Option<f64> {
        self.family.kappa()
    }
}

/// Observation after factor levels have been mapped onto parameter columns.
#[derive(Clone, Copy)]
struct DesignRow {
    y: u64,
    /// Column of the accident-year dummy, `None` for the reference level.
    ay_col: Option<usize>,
    dy_col: Option<usize>,
}

/// IRLS iterate: linear predictor, working response and weights.
struct WorkingState {
    eta: Vec<f64>,
    z: Vec<f64>,
    w: Vec<f64>,
}

impl WorkingState {
    fn update(&mut self, rows: &[DesignRow], family: &Family) {
        for (k, row) in rows.iter().enumerate() {
            let mu = self.eta[k].exp();
            self.z[k] = self.eta[k] + (row.y as f64 - mu) / mu;
            self.w[k] = family.working_weight(mu);
            debug_assert!(self.w[k] > 0.0, "IRLS weight must be positive");
        }
    }
}

struct Design {
    n_ay: usize,
    n_dy: usize,
    rows: Vec<DesignRow>,
    /// Index into the caller's records for each design row.
    source: Vec<usize>,
    /// Parameter column per accident year (1-based), `None` for reference or degenerate.
    ay_map: Vec<Option<usize>>,
    dy_map: Vec<Option<usize>>,
    n_coef: usize,
    degenerate: Vec<DegenerateLevel>,
}

impl Design {
    fn build(data: &[CellRecord], policy: ZeroLevelPolicy) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::RankDeficient(0, 1));
        }
        let n_ay = data.iter().map(|r| r.ay).max().unwrap_or(0);
        let n_dy = data.iter().map(|r| r.dy + 1).max().unwrap_or(0);
        if data.iter().any(|r| r.ay == 0) {
            return Err(Error::InvalidRecords("accident years start at 1".into()));
        }
        let mut ay_obs = vec![0usize; n_ay + 1];
        let mut ay_sum = vec![0u64; n_ay + 1];
        let mut dy_obs = vec![0usize; n_dy];
        let mut dy_sum = vec![0u64; n_dy];
        for r in data {
            ay_obs[r.ay] += 1;
            ay_sum[r.ay] += r.count;
            dy_obs[r.dy] += 1;
            dy_sum[r.dy] += r.count;
        }
        let n_params = n_ay + n_dy - 1;
        if ay_obs[1..].contains(&0) || dy_obs.contains(&0) || data.len() < n_params {
            return Err(Error::RankDeficient(data.len(), n_params));
        }

        let mut degenerate = Vec::new();
        for (ay, &s) in ay_sum.iter().enumerate().skip(1) {
            if s == 0 {
                degenerate.push(DegenerateLevel {
                    factor: Factor::AccidentYear,
                    level: ay,
                });
            }
        }
        for (dy, &s) in dy_sum.iter().enumerate() {
            if s == 0 {
                degenerate.push(DegenerateLevel {
                    factor: Factor::DevelopmentYear,
                    level: dy,
                });
            }
        }
        let is_reference = |d: &&DegenerateLevel| match d.factor {
            Factor::AccidentYear => d.level == 1,
            Factor::DevelopmentYear => d.level == 0,
        };
        if let Some(first) = degenerate.first() {
            let reference = degenerate.iter().find(is_reference);
            if policy == ZeroLevelPolicy::Reject || reference.is_some() {
                let d = reference.unwrap_or(first);
                return Err(Error::Separation {
                    factor: d.factor.name(),
                    level: d.level,
                });
            }
        }

        let mut n_coef = 1;
        let mut ay_map = vec![None; n_ay + 1];
        for ay in 2..=n_ay {
            if ay_sum[ay] > 0 {
                ay_map[ay] = Some(n_coef);
                n_coef += 1;
            }
        }
        let mut dy_map = vec![None; n_dy];
        for dy in 1..n_dy {
            if dy_sum[dy] > 0 {
                dy_map[dy] = Some(n_coef);
                n_coef += 1;
            }
        }

        let mut rows = Vec::with_capacity(data.len());
        let mut source = Vec::with_capacity(data.len());
        for (k, r) in data.iter().enumerate() {
            if ay_sum[r.ay] == 0 || dy_sum[r.dy] == 0 {
                continue;
            }
            rows.push(DesignRow {
                y: r.count,
                ay_col: ay_map[r.ay],
                dy_col: dy_map[r.dy],
            });
            source.push(k);
        }
        Ok(Self {
            n_ay,
            n_dy,
            rows,
            source,
            ay_map,
            dy_map,
            n_coef,
            degenerate,
        })
    }

    #[inline]
    fn eta(&self, row: &DesignRow, coef: &[f64]) -> f64 {
        coef[0] + row.ay_col.map_or(0.0, |c| coef[c]) + row.dy_col.map_or(0.0, |c| coef[c])
    }

    /// Weighted information `X'WX` for the reduced design.
    fn information(&self, w: &[f64]) -> DMatrix<f64> {
        let q = self.n_coef;
        let mut h = DMatrix::<f64>::zeros(q, q);
        for (row, &wk) in self.rows.iter().zip(w) {
            let cols = [Some(0), row.ay_col, row.dy_col];
            for a in cols.iter().flatten() {
                for b in cols.iter().flatten() {
                    h[(*a, *b)] += wk;
                }
            }
        }
        h
    }

    fn solve(&self, state: &WorkingState) -> Result<DVector<f64>> {
        let q = self.n_coef;
        let h = self.information(&state.w);
        let mut g = DVector::<f64>::zeros(q);
        for ((row, &wk), &zk) in self.rows.iter().zip(&state.w).zip(&state.z) {
            g[0] += wk * zk;
            if let Some(c) = row.ay_col {
                g[c] += wk * zk;
            }
            if let Some(c) = row.dy_col {
                g[c] += wk * zk;
            }
        }
        let chol = Cholesky::new(h).ok_or(Error::SingularInformation)?;
        Ok(chol.solve(&g))
    }

    fn deviance(&self, family: &Family, eta: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(eta)
            .map(|(row, &e)| family.unit_deviance(row.y, e.exp()))
            .sum()
    }
}

fn scaled_condition_number(h: &DMatrix<f64>) -> f64 {
    let q = h.nrows();
    let d: Vec<f64> = (0..q).map(|i| h[(i, i)].sqrt()).collect();
    let scaled = DMatrix::from_fn(q, q, |i, j| h[(i, j)] / (d[i] * d[j]));
    let eig = SymmetricEigen::new(scaled).eigenvalues;
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Fits with default options.
pub fn fit(data: &[CellRecord], family: Family) -> Result<ModelFit> {
    fit_with(data, family, &FitOptions::default(), None)
}

/// Fits by IRLS. `start_mu`, when given, holds one positive mean per record
/// and replaces the default start `eta = log(N + 0.5)`.
pub fn fit_with(
    data: &[CellRecord],
    family: Family,
    opts: &FitOptions,
    start_mu: Option<&[f64]>,
) -> Result<ModelFit> {
    let design = Design::build(data, opts.zero_levels)?;
    let n = design.rows.len();

    let mut state = WorkingState {
        eta: design
            .rows
            .iter()
            .zip(&design.source)
            .map(|(row, &k)| match start_mu {
                Some(mu) if mu[k] > 0.0 && mu[k].is_finite() => mu[k].ln(),
                _ => (row.y as f64 + 0.5).ln(),
            })
            .collect(),
        z: vec![0.0; n],
        w: vec![0.0; n],
    };

    let mut coef: Option<DVector<f64>> = None;
    let mut dev_old = design.deviance(&family, &state.eta);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut eta_new = vec![0.0; n];

    while iterations < opts.max_iter {
        iterations += 1;
        state.update(&design.rows, &family);
        let mut proposal = design.solve(&state)?;
        let mut dev;
        let mut halvings = 0;
        loop {
            for (e, row) in eta_new.iter_mut().zip(&design.rows) {
                *e = design.eta(row, proposal.as_slice());
            }
            dev = design.deviance(&family, &eta_new);
            let worse = !dev.is_finite() || (coef.is_some() && dev > dev_old * (1.0 + 1e-12) + 1e-12);
            if !worse {
                break;
            }
            halvings += 1;
            match &coef {
                Some(prev) if halvings <= 40 => proposal = (prev + &proposal) * 0.5,
                _ => return Err(Error::NotConverged { iterations }),
            }
        }
        std::mem::swap(&mut state.eta, &mut eta_new);
        coef = Some(proposal);
        trace.push(dev);
        let change = (dev - dev_old).abs() / (dev.abs() + 0.1);
        dev_old = dev;
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotConverged { iterations });
    }
    let coef = coef.expect("at least one iteration ran");

    // information at the final iterate for the condition diagnostic
    state.update(&design.rows, &family);
    let condition_number = if opts.condition_warning.is_finite() {
        scaled_condition_number(&design.information(&state.w))
    } else {
        f64::NAN
    };
    let mut warnings = Vec::new();
    if condition_number > opts.condition_warning {
        warnings.push(format!(
            "condition number of the information matrix is {condition_number:.3e}"
        ));
    }

    let intercept = coef[0];
    let ay_effects: Vec<f64> = (2..=design.n_ay)
        .map(|ay| design.ay_map[ay].map_or(f64::NEG_INFINITY, |c| coef[c]))
        .collect();
    let dy_effects: Vec<f64> = (1..design.n_dy)
        .map(|dy| design.dy_map[dy].map_or(f64::NEG_INFINITY, |c| coef[c]))
        .collect();

    let fitted_mu = linear_means(data, intercept, &ay_effects, &dy_effects);
    let loglik = data
        .iter()
        .zip(&fitted_mu)
        .filter(|(_, &mu)| mu > 0.0)
        .map(|(r, &mu)| family.logpmf(r.count, mu))
        .sum();
    if !design.degenerate.is_empty() {
        warnings.push(format!(
            "{} factor level(s) with all-zero counts fitted at the limit",
            design.degenerate.len()
        ));
    }

    let mut fit = ModelFit {
        family,
        n_ay: design.n_ay,
        n_dy: design.n_dy,
        intercept,
        ay_effects,
        dy_effects,
        simplex_alpha: Vec::new(),
        simplex_beta: Vec::new(),
        dev_weights: Vec::new(),
        data: data.to_vec(),
        fitted_mu,
        loglik,
        deviance: dev_old,
        phi: None,
        n_obs: data.len(),
        n_params: design.n_ay + design.n_dy - 1,
        converged,
        iterations,
        deviance_trace: trace,
        condition_number,
        degenerate: design.degenerate,
        warnings,
    };
    if family == Family::QuasiPoisson {
        fit.phi = Some(pearson_dispersion(&fit));
    }
    Ok(to_simplex(fit))
}

/// Means `exp(intercept + alpha~_i + beta~_j)` of the given records under
/// treatment-contrast coefficients.
pub fn linear_means(
    data: &[CellRecord],
    intercept: f64,
    ay_effects: &[f64],
    dy_effects: &[f64],
) -> Vec<f64> {
    data.iter()
        .map(|r| {
            let a = if r.ay == 1 { 0.0 } else { ay_effects[r.ay - 2] };
            let b = if r.dy == 0 { 0.0 } else { dy_effects[r.dy - 1] };
            (intercept + a + b).exp()
        })
        .collect()
}

/// Populates the simplex fields from the treatment-contrast coefficients:
/// `S = sum_l exp(beta~_l)`, `alpha_i = intercept + alpha~_i + log S`,
/// `beta_j = beta~_j - log S`.
pub fn to_simplex(mut fit: ModelFit) -> ModelFit {
    let beta_tilde: Vec<f64> = std::iter::once(0.0)
        .chain(fit.dy_effects.iter().copied())
        .collect();
    let log_s = beta_tilde.iter().map(|b| b.exp()).sum::<f64>().ln();
    fit.simplex_alpha = std::iter::once(0.0)
        .chain(fit.ay_effects.iter().copied())
        .map(|a| fit.intercept + a + log_s)
        .collect();
    fit.simplex_beta = beta_tilde.iter().map(|b| b - log_s).collect();
    fit.dev_weights = fit.simplex_beta.iter().map(|b| b.exp()).collect();
    fit
}

/// NB log-likelihood of the records at the given means.
pub fn nb_loglik(data: &[CellRecord], mu: &[f64], kappa: f64) -> f64 {
    data.iter()
        .zip(mu)
        .map(|(r, &m)| nb_logpmf(r.count, m, kappa))
        .sum()
}

pub fn poisson_loglik(data: &[CellRecord], mu: &[f64]) -> f64 {
    data.iter()
        .zip(mu)
        .map(|(r, &m)| poisson_logpmf(r.count, m))
        .sum()
}

/// Score of the log-likelihood with respect to the treatment-contrast
/// coefficients `(intercept, alpha~_2.., beta~_1..)` at the given means.
/// `kappa = None` gives the Poisson score.
pub fn score(data: &[CellRecord], mu: &[f64], kappa: Option<f64>) -> Vec<f64> {
    let n_ay = data.iter().map(|r| r.ay).max().unwrap_or(1);
    let n_dy = data.iter().map(|r| r.dy + 1).max().unwrap_or(1);
    let mut g = vec![0.0; n_ay + n_dy - 1];
    for (r, &m) in data.iter().zip(mu) {
        let u = match kappa {
            Some(k) => (r.count as f64 - m) / (1.0 + m / k),
            None => r.count as f64 - m,
        };
        g[0] += u;
        if r.ay > 1 {
            g[r.ay - 1] += u;
        }
        if r.dy > 0 {
            g[n_ay - 1 + r.dy] += u;
        }
    }
    g
}

/// Log-determinant of the weighted information `X'WX` at the fit's means,
/// with NB working weights for dispersion `kappa`.
pub fn log_det_information(fit: &ModelFit, kappa: f64) -> Result<f64> {
    let family = Family::NegBin(kappa);
    let design = Design::build(&fit.data, ZeroLevelPolicy::Degenerate)?;
    let w: Vec<f64> = design
        .source
        .iter()
        .map(|&k| family.working_weight(fit.fitted_mu[k]))
        .collect();
    let chol = Cholesky::new(design.information(&w)).ok_or(Error::SingularInformation)?;
    Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Pearson dispersion `sum (N - mu)^2 / mu / (n - p)` under the Poisson variance.
pub fn pearson_dispersion(fit: &ModelFit) -> f64 {
    let chi2: f64 = fit
        .data
        .iter()
        .zip(&fit.fitted_mu)
        .filter(|(_, &mu)| mu > 0.0)
        .map(|(r, &mu)| (r.count as f64 - mu).powi(2) / mu)
        .sum();
    let df = fit.n_obs.saturating_sub(fit.n_params);
    if df == 0 {
        0.0
    } else {
        chi2 / df as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chainladder::chain_ladder;
    use crate::datasets;
    use crate::triangle::RunOffTriangle;

    fn recs(rows: Vec<Vec<u64>>) -> Vec<CellRecord> {
        RunOffTriangle::new(rows).unwrap().to_long()
    }

    #[test]
    fn saturated_single_row() {
        let data = vec![
            CellRecord { ay: 1, dy: 0, count: 10 },
            CellRecord { ay: 1, dy: 1, count: 10 },
        ];
        let f = fit(&data, Family::Poisson).unwrap();
        assert!((f.fitted_mu[0] - 10.0).abs() < 1e-9);
        assert!((f.fitted_mu[1] - 10.0).abs() < 1e-9);
        assert!(f.dy_effects[0].abs() < 1e-10);
        assert_eq!(pearson_dispersion(&f), 0.0);
    }

    #[test]
    fn poisson_reproduces_chain_ladder_on_aus_motor() {
        let t = datasets::aus_motor_bi();
        let f = fit(&t.to_long(), Family::Poisson).unwrap();
        let cl = chain_ladder(&t).unwrap();
        assert!((f.future_total() - cl.total_reserve).abs() / cl.total_reserve < 1e-8);
        for (a, b) in f.future_by_ay().iter().zip(&cl.reserves) {
            assert!((a - b).abs() <= 1e-8 * b.max(1.0));
        }
        assert_eq!(f.n_params, 13);
        assert_eq!(f.n_obs, 28);
    }

    #[test]
    fn simplex_constraint_and_invariance() {
        let t = datasets::aus_motor_bi();
        let f = fit(&t.to_long(), Family::NegBin(4.8)).unwrap();
        let s: f64 = f.dev_weights.iter().sum();
        assert!((s - 1.0).abs() < 1e-10);
        for (r, &mu) in f.data.iter().zip(&f.fitted_mu) {
            let via_simplex = f.mean(r.ay, r.dy);
            assert!((via_simplex - mu).abs() <= 1e-12 * mu);
        }
    }

    #[test]
    fn symmetric_dev_effects_give_equal_weights() {
        let mut f = fit(&recs(vec![vec![10, 10], vec![12]]), Family::Poisson).unwrap();
        f.dy_effects = vec![0.0];
        let f = to_simplex(f);
        let l2 = 2f64.ln();
        assert!((f.simplex_beta[0] + l2).abs() < 1e-15);
        assert!((f.simplex_beta[1] + l2).abs() < 1e-15);
        assert_eq!(f.dev_weights, vec![0.5, 0.5]);
    }

    #[test]
    fn separation_rejected_by_default() {
        let data = recs(vec![vec![5, 3, 1], vec![4, 2], vec![0]]);
        assert!(matches!(
            fit(&data, Family::NegBin(3.0)),
            Err(Error::Separation { level: 3, .. })
        ));
    }

    #[test]
    fn degenerate_policy_takes_the_limit() {
        let data = recs(vec![vec![5, 3, 1], vec![4, 2], vec![0]]);
        let opts = FitOptions {
            zero_levels: ZeroLevelPolicy::Degenerate,
            ..FitOptions::default()
        };
        let f = fit_with(&data, Family::Poisson, &opts, None).unwrap();
        assert_eq!(f.fitted_mu[5], 0.0);
        assert_eq!(f.ay_effects[1], f64::NEG_INFINITY);
        assert_eq!(f.future_by_ay()[2], 0.0);
        // remaining rows fit as if the zero row were absent
        let sub = fit(&data[..5], Family::Poisson).unwrap();
        for k in 0..5 {
            assert!((f.fitted_mu[k] - sub.fitted_mu[k]).abs() < 1e-9);
        }
        assert!((f.mean(2, 2) - sub.mean(2, 2)).abs() < 1e-9);
    }

    #[test]
    fn zero_reference_level_is_always_separation() {
        let data = recs(vec![vec![0, 0], vec![3]]);
        let opts = FitOptions {
            zero_levels: ZeroLevelPolicy::Degenerate,
            ..FitOptions::default()
        };
        assert!(matches!(
            fit_with(&data, Family::Poisson, &opts, None),
            Err(Error::Separation { .. })
        ));
    }

    #[test]
    fn zero_cells_are_fine() {
        let data = recs(vec![vec![5, 0, 2], vec![4, 3], vec![6]]);
        let f = fit(&data, Family::NegBin(2.0)).unwrap();
        assert!(f.converged);
        assert!(f.fitted_mu.iter().all(|&m| m > 0.0));
    }

    #[test]
    fn rank_deficient_designs() {
        let data = vec![CellRecord { ay: 2, dy: 0, count: 3 }];
        assert!(matches!(fit(&data, Family::Poisson), Err(Error::RankDeficient(..))));
    }

    #[test]
    fn quasi_poisson_reports_phi() {
        let t = datasets::aus_motor_bi();
        let f = fit(&t.to_long(), Family::QuasiPoisson).unwrap();
        let by_hand: f64 = f
            .data
            .iter()
            .zip(&f.fitted_mu)
            .map(|(r, m)| (r.count as f64 - m) * (r.count as f64 - m) / m)
            .sum::<f64>()
            / 15.0;
        assert!((f.phi.unwrap() - by_hand).abs() < 1e-9 * by_hand);
        assert!(by_hand > 1.0);
    }

    #[test]
    fn warm_start_reaches_same_fit() {
        let data = datasets::aus_motor_bi().to_long();
        let cold = fit(&data, Family::NegBin(4.8)).unwrap();
        let start = fit(&data, Family::NegBin(50.0)).unwrap();
        let warm = fit_with(&data, Family::NegBin(4.8), &FitOptions::default(), Some(&start.fitted_mu)).unwrap();
        assert!((cold.loglik - warm.loglik).abs() < 1e-8);
    }
}
