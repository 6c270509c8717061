//! Log-probability helpers that stay accurate for very large dispersion.
//!
//! The profile search evaluates the negative binomial likelihood up to
//! `kappa = 1e8`, where `ln Γ(n + κ) - ln Γ(κ)` computed by subtraction loses
//! most of its significant digits. Above a threshold the difference is taken
//! from the Stirling series instead, grouped so that the large terms cancel
//! analytically.

use statrs::function::{erf::erfc, gamma::ln_gamma};

/// Below this argument `ln Γ` differences are taken directly.
const STIRLING_MIN: f64 = 10.0;

/// Upper 5% point of the chi-squared distribution with one degree of freedom.
pub const CHI2_1_95: f64 = 3.841_458_820_694_124;

/// Stirling correction `ln Γ(x) - [(x - 1/2) ln x - x + ln(2π)/2]` for `x >= 10`.
fn stirling_tail(x: f64) -> f64 {
    let r = 1.0 / x;
    let r2 = r * r;
    r * (1.0 / 12.0
        + r2 * (-1.0 / 360.0
            + r2 * (1.0 / 1260.0
                + r2 * (-1.0 / 1680.0 + r2 * (1.0 / 1188.0 + r2 * (-691.0 / 360_360.0))))))
}

pub fn ln_factorial(n: u64) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

/// `ln Γ(k + n) - ln Γ(k)` for `k > 0`, `n >= 0`.
pub fn ln_gamma_ratio(k: f64, n: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    if k < STIRLING_MIN {
        return ln_gamma(k + n) - ln_gamma(k);
    }
    (k - 0.5) * (n / k).ln_1p() + n * (k + n).ln() - n + stirling_tail(k + n) - stirling_tail(k)
}

/// Negative binomial log-pmf in mean-dispersion form,
/// `Var = mu + mu^2 / kappa`.
pub fn nb_logpmf(n: u64, mu: f64, kappa: f64) -> f64 {
    let nf = n as f64;
    let zero_term = -kappa * (mu / kappa).ln_1p();
    if n == 0 {
        return zero_term;
    }
    // ln Γ(n+κ) - ln Γ(κ) - n ln(κ+μ), grouped to avoid the n ln κ cancellation.
    let ratio_part = if kappa < STIRLING_MIN {
        ln_gamma_ratio(kappa, nf) - nf * (kappa + mu).ln()
    } else {
        (kappa - 0.5) * (nf / kappa).ln_1p() + nf * ((nf - mu) / (kappa + mu)).ln_1p() - nf
            + stirling_tail(kappa + nf)
            - stirling_tail(kappa)
    };
    ratio_part - ln_factorial(n) + nf * mu.ln() + zero_term
}

pub fn poisson_logpmf(n: u64, mu: f64) -> f64 {
    if n == 0 {
        -mu
    } else {
        n as f64 * mu.ln() - mu - ln_factorial(n)
    }
}

/// `Pr(χ²₁ ≥ x)`.
pub fn chi2_1_sf(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        erfc((x / 2.0).sqrt())
    }
}
