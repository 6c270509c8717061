//! Deterministic chain-ladder projection.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::triangle::{CumulativeTriangle, RunOffTriangle};

#[derive(Debug, Clone, Serialize)]
pub struct ChainLadderResult {
    /// Volume-weighted development factors `f_0 .. f_{J-2}`.
    pub factors: Vec<f64>,
    /// Latest observed cumulative count per accident year.
    pub latest: Vec<u64>,
    /// Projected ultimate per accident year.
    pub ultimates: Vec<f64>,
    /// Outstanding count per accident year; zero for the first one.
    pub reserves: Vec<f64>,
    pub total_reserve: f64,
}

impl ChainLadderResult {
    /// Per-accident-year reserves as integers that add up to
    /// [`rounded_total`](Self::rounded_total).
    ///
    /// Each reserve is floored and the remaining units go to the accident
    /// years with the largest fractional parts (largest-remainder rounding).
    pub fn rounded_reserves(&self) -> Vec<i64> {
        largest_remainder(&self.reserves, self.rounded_total())
    }

    pub fn rounded_total(&self) -> i64 {
        self.total_reserve.round() as i64
    }
}

/// Rounds non-negative `values` to integers summing to `target`.
pub fn largest_remainder(values: &[f64], target: i64) -> Vec<i64> {
    let mut out: Vec<i64> = values.iter().map(|v| v.floor() as i64).collect();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = values[a] - values[a].floor();
        let fb = values[b] - values[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let short = target - out.iter().sum::<i64>();
    for &k in order.iter().cycle().take(short.max(0) as usize) {
        out[k] += 1;
    }
    out
}

/// Development factors `f_j = sum_i C_{i,j+1} / sum_i C_{i,j}` over the
/// accident years where both cells are observed.
pub fn dev_factors(c: &CumulativeTriangle) -> Result<Vec<f64>> {
    let dim = c.dim();
    (0..dim - 1)
        .map(|j| {
            let (num, den) = (1..dim - j).fold((0u64, 0u64), |(num, den), ay| {
                let row = c.row(ay);
                (num + row[j + 1], den + row[j])
            });
            if den == 0 {
                Err(Error::ZeroColumnSum { dev: j })
            } else {
                Ok(num as f64 / den as f64)
            }
        })
        .collect()
}

pub fn project(c: &CumulativeTriangle, factors: &[f64]) -> ChainLadderResult {
    let dim = c.dim();
    let latest: Vec<u64> = (1..=dim).map(|ay| c.latest(ay)).collect();
    let ultimates: Vec<f64> = (1..=dim)
        .map(|ay| {
            let tail: f64 = factors[dim - ay..].iter().product();
            latest[ay - 1] as f64 * tail
        })
        .collect();
    let reserves: Vec<f64> = ultimates
        .iter()
        .zip(&latest)
        .map(|(&u, &l)| u - l as f64)
        .collect();
    let total_reserve = reserves.iter().sum();
    ChainLadderResult {
        factors: factors.to_vec(),
        latest,
        ultimates,
        reserves,
        total_reserve,
    }
}

/// Factors and projection in one step.
pub fn chain_ladder(t: &RunOffTriangle) -> Result<ChainLadderResult> {
    let c = t.cumulate();
    let f = dev_factors(&c)?;
    Ok(project(&c, &f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets;

    #[test]
    fn first_aus_motor_factor() {
        // column sums of cumulative dy0 and dy1 over accident years 1993-1998
        let c = datasets::aus_motor_bi().cumulate();
        let f = dev_factors(&c).unwrap();
        assert!((f[0] - 8834.0 / 2129.0).abs() < 1e-12);
        assert!((f[0] - 4.1494).abs() < 1e-4);
    }

    #[test]
    fn identical_rows_double() {
        let t = RunOffTriangle::new(vec![vec![10, 10], vec![10]]).unwrap();
        let f = dev_factors(&t.cumulate()).unwrap();
        assert_eq!(f, vec![2.0]);
    }

    #[test]
    fn all_mass_in_first_column() {
        let t = RunOffTriangle::new(vec![vec![5, 0, 0], vec![7, 0], vec![3]]).unwrap();
        let r = chain_ladder(&t).unwrap();
        assert!(r.factors.iter().all(|&f| f == 1.0));
        assert_eq!(r.total_reserve, 0.0);
    }

    #[test]
    fn zero_denominator() {
        let t = RunOffTriangle::new(vec![vec![0, 3], vec![4]]).unwrap();
        assert!(matches!(
            dev_factors(&t.cumulate()),
            Err(Error::ZeroColumnSum { dev: 0 })
        ));
    }

    #[test]
    fn aus_motor_reserves_by_year() {
        let r = chain_ladder(&datasets::aus_motor_bi()).unwrap();
        assert_eq!(r.rounded_reserves(), vec![0, 53, 293, 657, 1205, 966, 17]);
        assert_eq!(r.rounded_total(), 3191);
        assert_eq!(r.reserves[0], 0.0);
        // AY 1997 is 1204.46 before apportioning
        assert!((r.reserves[4] - 1204.46).abs() < 0.01);
        let sum: f64 = r.reserves.iter().sum();
        assert!((sum - r.total_reserve).abs() < 1e-9);
    }

    #[test]
    fn largest_remainder_keeps_the_total() {
        assert_eq!(largest_remainder(&[0.5, 0.5, 1.0], 2), vec![1, 0, 1]);
        assert_eq!(largest_remainder(&[2.2, 3.3], 6), vec![2, 4]);
        assert_eq!(largest_remainder(&[4.0], 4), vec![4]);
    }

    #[test]
    fn scale_equivariance() {
        let t = datasets::aus_motor_bi();
        let scaled = RunOffTriangle::new(
            t.rows()
                .iter()
                .map(|row| row.iter().map(|n| n * 3).collect())
                .collect(),
        )
        .unwrap();
        let a = chain_ladder(&t).unwrap();
        let b = chain_ladder(&scaled).unwrap();
        for (x, y) in a.factors.iter().zip(&b.factors) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((3.0 * a.total_reserve - b.total_reserve).abs() < 1e-8);
    }
}
