//! Residual diagnostics and plot-ready exports.

use std::io::Write;

use serde::Serialize;

use crate::dispersion::KappaEstimate;
use crate::error::Result;
use crate::glm::ModelFit;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residual {
    pub ay: usize,
    pub dy: usize,
    /// Calendar index `ay + dy`.
    pub calendar: usize,
    pub fitted: f64,
    pub pearson: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualSet {
    pub residuals: Vec<Residual>,
}

/// Pearson residuals `(N - mu) / sqrt(mu + mu^2 / kappa)`. Infinite `kappa`
/// gives the Poisson denominator `sqrt(mu)`. Cells of a level fitted at
/// zero get residual zero.
pub fn pearson_residuals(fit: &ModelFit, kappa: f64) -> ResidualSet {
    let residuals = fit
        .data
        .iter()
        .zip(&fit.fitted_mu)
        .map(|(r, &mu)| {
            let var = if kappa.is_finite() { mu + mu * mu / kappa } else { mu };
            Residual {
                ay: r.ay,
                dy: r.dy,
                calendar: r.ay + r.dy,
                fitted: mu,
                pearson: if var > 0.0 { (r.count as f64 - mu) / var.sqrt() } else { 0.0 },
            }
        })
        .collect();
    ResidualSet { residuals }
}

impl ResidualSet {
    /// Columns `ay, dy, calendar, fitted, pearson`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.residuals {
            w.serialize(r)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Sum of squared residuals over `n - p`.
    pub fn dispersion_ratio(&self, n_params: usize) -> f64 {
        let ss: f64 = self.residuals.iter().map(|r| r.pearson * r.pearson).sum();
        ss / (self.residuals.len() - n_params) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    AccidentYear,
    DevelopmentYear,
    Calendar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupSummary {
    pub level: usize,
    pub count: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

fn quartile(sorted: &[f64], q: f64) -> f64 {
    crate::predictive::quantile_sorted(sorted, q)
}

/// Median and quartiles of the residuals per level, levels ascending.
pub fn residuals_by_factor(rs: &ResidualSet, by: Grouping) -> Vec<GroupSummary> {
    let key = |r: &Residual| match by {
        Grouping::AccidentYear => r.ay,
        Grouping::DevelopmentYear => r.dy,
        Grouping::Calendar => r.calendar,
    };
    let mut levels: Vec<usize> = rs.residuals.iter().map(key).collect();
    levels.sort_unstable();
    levels.dedup();
    levels
        .into_iter()
        .map(|level| {
            let mut v: Vec<f64> = rs
                .residuals
                .iter()
                .filter(|r| key(r) == level)
                .map(|r| r.pearson)
                .collect();
            v.sort_by(f64::total_cmp);
            GroupSummary {
                level,
                count: v.len(),
                q1: quartile(&v, 0.25),
                median: quartile(&v, 0.5),
                q3: quartile(&v, 0.75),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Marker {
    Mle,
    CiLower,
    CiUpper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfilePoint {
    pub kappa: f64,
    pub loglik: f64,
    pub marker: Option<Marker>,
}

/// Profile curve in ascending `kappa` with the maximum and the finite
/// interval endpoints marked.
pub fn export_profile(k: &KappaEstimate) -> Vec<ProfilePoint> {
    let mut points: Vec<ProfilePoint> = k
        .profile_curve
        .iter()
        .map(|&(kappa, loglik)| ProfilePoint {
            kappa,
            loglik,
            marker: None,
        })
        .collect();
    let marks = [
        (k.kappa_mle, Marker::Mle),
        (k.ci95.0, Marker::CiLower),
        (k.ci95.1, Marker::CiUpper),
    ];
    for (kappa, marker) in marks {
        if !kappa.is_finite() {
            continue;
        }
        match points.iter_mut().find(|p| p.kappa == kappa) {
            Some(p) if p.marker.is_none() => p.marker = Some(marker),
            Some(_) => {}
            None => {
                let loglik = if marker == Marker::Mle {
                    k.loglik
                } else {
                    k.loglik - crate::special::CHI2_1_95 / 2.0
                };
                points.push(ProfilePoint {
                    kappa,
                    loglik,
                    marker: Some(marker),
                });
            }
        }
    }
    points.sort_by(|a, b| a.kappa.total_cmp(&b.kappa));
    points
}

/// Columns `kappa, loglik, marker`; the marker is empty on unmarked rows.
pub fn write_profile_csv<W: Write>(points: &[ProfilePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kappa", "loglik", "marker"])?;
    for p in points {
        let marker = match p.marker {
            Some(Marker::Mle) => "mle",
            Some(Marker::CiLower) => "ci_lower",
            Some(Marker::CiUpper) => "ci_upper",
            None => "",
        };
        w.write_record([p.kappa.to_string(), p.loglik.to_string(), marker.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
