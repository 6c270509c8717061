#![allow(dead_code)]

use nbcl::glm::{self, Family, ModelFit};
use nbcl::predictive::{self, central_interval};
use nbcl::rng::{sample_nb, substream};
use nbcl::special::ln_factorial;
use nbcl::triangle::RunOffTriangle;
use rand::Rng;

/// Negative binomial triangle whose every accident year and development
/// year has a positive total.
pub fn random_triangle(dim: usize, seed: u64) -> RunOffTriangle {
    for attempt in 0u64.. {
        let mut rng = substream(seed, &[attempt]);
        let kappa = rng.random_range(2.0..50.0);
        let alpha: Vec<f64> = (0..dim).map(|_| rng.random_range(100.0f64..2000.0)).collect();
        let w: Vec<f64> = (0..dim)
            .map(|j| rng.random_range(0.3..1.0) * 0.75f64.powi(j as i32))
            .collect();
        let s: f64 = w.iter().sum();
        let rows: Vec<Vec<u64>> = (0..dim)
            .map(|i| {
                (0..dim - i)
                    .map(|j| sample_nb(alpha[i] * w[j] / s, kappa, &mut rng))
                    .collect()
            })
            .collect();
        let rows_ok = rows.iter().all(|r| r.iter().sum::<u64>() > 0);
        let cols_ok = (0..dim).all(|j| rows.iter().filter(|r| r.len() > j).map(|r| r[j]).sum::<u64>() > 0);
        if rows_ok && cols_ok {
            return RunOffTriangle::new(rows).expect("valid shape");
        }
    }
    unreachable!()
}

pub fn check_deviance_monotone(fit: &ModelFit) -> Result<(), String> {
    let tr = &fit.deviance_trace;
    for w in tr.windows(2) {
        if w[1] > w[0] * (1.0 + 1e-12) + 1e-12 {
            return Err(format!("deviance rose from {} to {}", w[0], w[1]));
        }
    }
    Ok(())
}

/// Analytic score against central differences of the log-likelihood, at the
/// fitted coefficients shifted by `shift`.
pub fn check_score(data: &[nbcl::triangle::CellRecord], fit: &ModelFit, kappa: Option<f64>, seed: u64) -> Result<(), String> {
    let mut rng = substream(seed, &[99]);
    let mut coef: Vec<f64> = std::iter::once(fit.intercept)
        .chain(fit.ay_effects.iter().copied())
        .chain(fit.dy_effects.iter().copied())
        .map(|c| c + rng.random_range(-0.1..0.1))
        .collect();
    let n_ay = fit.n_ay;
    let loglik = |c: &[f64]| {
        let mu = glm::linear_means(data, c[0], &c[1..n_ay], &c[n_ay..]);
        match kappa {
            Some(k) => glm::nb_loglik(data, &mu, k),
            None => glm::poisson_loglik(data, &mu),
        }
    };
    let mu = glm::linear_means(data, coef[0], &coef[1..n_ay], &coef[n_ay..]);
    let g = glm::score(data, &mu, kappa);
    let h = 1e-5;
    for k in 0..coef.len() {
        let c0 = coef[k];
        coef[k] = c0 + h;
        let up = loglik(&coef);
        coef[k] = c0 - h;
        let down = loglik(&coef);
        coef[k] = c0;
        let fd = (up - down) / (2.0 * h);
        if (g[k] - fd).abs() > 1e-4 * g[k].abs().max(1.0) {
            return Err(format!("coefficient {k}: score {} vs difference {fd}", g[k]));
        }
    }
    Ok(())
}

/// Means rebuilt from the simplex parameters match the fitted means.
pub fn check_simplex(fit: &ModelFit) -> Result<(), String> {
    let w_sum: f64 = fit.dev_weights.iter().sum();
    if (w_sum - 1.0).abs() > 1e-12 {
        return Err(format!("weights sum to {w_sum}"));
    }
    for (r, &mu) in fit.data.iter().zip(&fit.fitted_mu) {
        let m = fit.mean(r.ay, r.dy);
        if (m - mu).abs() > 1e-12 * mu.abs().max(1e-300) {
            return Err(format!("cell ({}, {}): {m} vs {mu}", r.ay, r.dy));
        }
    }
    Ok(())
}

/// The 75% interval of `draws` lies inside the 95% interval.
pub fn check_nesting(draws: &[f64]) -> Result<(), String> {
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (l75, u75) = central_interval(&sorted, 0.75);
    let (l95, u95) = central_interval(&sorted, 0.95);
    if l95 <= l75 && l75 <= u75 && u75 <= u95 {
        Ok(())
    } else {
        Err(format!("75% [{l75}, {u75}] not inside 95% [{l95}, {u95}]"))
    }
}

/// Bootstrap draws are identical for 1, 2 and 4 worker threads.
pub fn check_thread_determinism(t: &RunOffTriangle, seed: u64, b: usize) -> Result<(), String> {
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool")
            .install(|| predictive::bootstrap(t, b, true, seed))
            .map(|d| (d.draws_total, d.draws_by_ay))
            .map_err(|e| e.to_string())
    };
    let one = run(1)?;
    for threads in [2, 4] {
        if run(threads)? != one {
            return Err(format!("draws differ with {threads} threads"));
        }
    }
    Ok(())
}

pub fn poisson_fit(t: &RunOffTriangle) -> ModelFit {
    glm::fit(&t.to_long(), Family::Poisson).expect("Poisson fit")
}

fn binomial_pmf(n: u64, k: u64, p: f64) -> f64 {
    (ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
        + k as f64 * p.ln()
        + (n - k) as f64 * (1.0 - p).ln())
    .exp()
}

/// Central 95% acceptance band for a proportion out of `n` trials at
/// success probability `p`: each tail beyond the band carries at most 2.5%.
pub fn binomial_band(n: u64, p: f64) -> (f64, f64) {
    let pmf: Vec<f64> = (0..=n).map(|k| binomial_pmf(n, k, p)).collect();
    let mut lo = 0;
    let mut below = 0.0;
    while below + pmf[lo as usize] <= 0.025 {
        below += pmf[lo as usize];
        lo += 1;
    }
    let mut hi = n;
    let mut above = 0.0;
    while above + pmf[hi as usize] <= 0.025 {
        above += pmf[hi as usize];
        hi -= 1;
    }
    (lo as f64 / n as f64, hi as f64 / n as f64)
}
