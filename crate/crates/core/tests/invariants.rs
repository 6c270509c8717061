mod common;

use nbcl::datasets;
use nbcl::diagnostics::pearson_residuals;
use nbcl::dispersion::{self, adjusted_profile_loglik, profile_kappa};
use nbcl::glm::{self, Family, FitOptions, ZeroLevelPolicy};
use nbcl::predictive::{self, plugin_predict, BaseModel, BootstrapModel};
use nbcl::rng::{sample_nb, sample_odp, substream};
use nbcl::simulation::{self, default_config, Scenario};
use nbcl::special::nb_logpmf;
use nbcl::triangle::{CellRecord, RunOffTriangle};

fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
}

#[test]
fn nb_likelihood_nests_poisson() {
    for seed in 0..10 {
        let data = common::random_triangle(6, seed).to_long();
        let pois = glm::fit(&data, Family::Poisson).unwrap();
        let nb = dispersion::kappa_mle(&data, &FitOptions::default()).unwrap();
        assert!(nb.loglik >= pois.loglik - 1e-6);
    }
}

#[test]
fn bootstrap_variance_exceeds_process_variance() {
    let t = datasets::aus_motor_bi();
    let d = predictive::bootstrap(&t, 1000, true, 5).unwrap();
    let draws: Vec<f64> = d.draws_total.iter().map(|&x| x as f64).collect();
    let base = BaseModel::fit(&t.to_long(), BootstrapModel::NegBin, &FitOptions::default()).unwrap();
    let process: f64 = plugin_predict(&base.fit, d.kappa_used.unwrap())
        .iter()
        .map(|c| c.variance)
        .sum();
    assert!(variance(&draws) > process, "{} vs {process}", variance(&draws));
}

#[test]
fn correction_widens_intervals() {
    let t = datasets::aus_motor_bi();
    let width = |correct| {
        let d = predictive::bootstrap(&t, 1000, correct, 3).unwrap();
        let s = predictive::summarize(&d, &[0.95]).unwrap();
        s.total[0].upper - s.total[0].lower
    };
    assert!(width(true) >= width(false));
}

#[test]
fn anchored_zero_draws_are_kept() {
    // the youngest accident year's interval reaches zero
    let d = predictive::bootstrap(&datasets::aus_motor_bi(), 400, true, 9).unwrap();
    let last = d.draws_by_ay.last().unwrap();
    assert!(last.contains(&0));
    assert_eq!(d.draws_total.len(), d.b_effective);
}

#[test]
fn nb_sampler_matches_pmf() {
    let mut rng = substream(17, &[0]);
    let n = 1_000_000;
    let mut hist = vec![0u64; 31];
    let mut over = 0u64;
    for _ in 0..n {
        match sample_nb(3.0, 1.5, &mut rng) as usize {
            k if k <= 30 => hist[k] += 1,
            _ => over += 1,
        }
    }
    let mut tv = 0.0;
    let mut mass = 0.0;
    for (k, &h) in hist.iter().enumerate() {
        let p = nb_logpmf(k as u64, 3.0, 1.5).exp();
        mass += p;
        tv += (h as f64 / n as f64 - p).abs();
    }
    tv += (over as f64 / n as f64 - (1.0 - mass)).abs();
    assert!(tv / 2.0 < 0.005, "total variation {tv}");
}

#[test]
fn odp_draws_scale_variance() {
    let data = datasets::aus_motor_bi().to_long();
    let q = glm::fit(&data, Family::QuasiPoisson).unwrap();
    let phi = q.phi.unwrap();
    let mut rng = substream(4, &[0]);
    let mu = q.fitted_mu[0];
    let draws: Vec<f64> = (0..100_000).map(|_| sample_odp(mu, phi, &mut rng) as f64).collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let ratio = variance(&draws) / mean;
    assert!((ratio / phi - 1.0).abs() < 0.05, "{ratio} vs {phi}");
}

#[test]
fn pearson_ratio_near_one_on_model_data() {
    let config = default_config();
    let mut ratios = Vec::new();
    for rep in 0..30 {
        let (t, _) = simulation::generate(&config, rep).unwrap();
        let data = t.to_long();
        let opts = FitOptions {
            zero_levels: ZeroLevelPolicy::Degenerate,
            ..FitOptions::default()
        };
        let f = glm::fit_with(&data, Family::NegBin(config.kappa_true), &opts, None).unwrap();
        let rs = pearson_residuals(&f, config.kappa_true);
        ratios.push(rs.dispersion_ratio(f.n_params));
        let mean: f64 = rs.residuals.iter().map(|r| r.pearson).sum::<f64>() / rs.residuals.len() as f64;
        assert!(mean.abs() < 0.5);
    }
    let avg = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!((0.7..=1.3).contains(&avg), "{avg}");
}

#[test]
fn adjusted_profile_peaks_lower() {
    // dense grid evaluation of both curves on a small triangle
    for seed in 0..5 {
        let rows: Vec<Vec<u64>> = {
            let mut rng = substream(seed, &[1]);
            (0..4)
                .map(|i| (0..4 - i).map(|j| sample_nb(200.0 * 0.5f64.powi(j), 5.0, &mut rng)).collect())
                .collect()
        };
        let data = RunOffTriangle::new(rows).unwrap().to_long();
        let grid: Vec<f64> = (0..=240).map(|k| 10f64.powf(-1.0 + k as f64 / 40.0)).collect();
        let argmax = |f: &dyn Fn(f64) -> f64| {
            grid.iter()
                .copied()
                .max_by(|&a, &b| f(a).total_cmp(&f(b)))
                .unwrap()
        };
        let lp = |k: f64| glm::fit(&data, Family::NegBin(k)).unwrap().loglik;
        let lap = |k: f64| adjusted_profile_loglik(&data, k).unwrap();
        let (kp, kap) = (argmax(&lp), argmax(&lap));
        assert!(kap <= kp, "seed {seed}: {kap} > {kp}");
        let f = glm::fit(&data, Family::NegBin(2.0)).unwrap();
        let ld = glm::log_det_information(&f, 2.0).unwrap();
        if ld > 0.0 {
            assert!(lap(2.0) < lp(2.0));
        }
    }
}

#[test]
fn information_determinant_grows_with_scale() {
    let t = datasets::aus_motor_bi();
    let scaled: Vec<CellRecord> = t
        .to_long()
        .into_iter()
        .map(|r| CellRecord { count: r.count * 4, ..r })
        .collect();
    let k = 1e10;
    let a = glm::fit(&t.to_long(), Family::NegBin(k)).unwrap();
    let b = glm::fit(&scaled, Family::NegBin(k)).unwrap();
    let la = glm::log_det_information(&a, k).unwrap();
    let lb = glm::log_det_information(&b, k).unwrap();
    // information is proportional to the means in the Poisson limit
    assert!((lb - la - 13.0 * 4f64.ln()).abs() < 1e-3);
}

#[test]
fn profile_curve_covers_interval() {
    let e = profile_kappa(&common::random_triangle(7, 21).to_long()).unwrap();
    let (lo, hi) = e.ci95;
    assert!(lo <= e.kappa_mle && e.kappa_mle <= hi);
    assert!(e.profile_curve.first().unwrap().0 <= lo);
    if hi.is_finite() {
        assert!(e.profile_curve.last().unwrap().0 >= hi);
    }
}

#[test]
fn poisson_dgp_cells_are_equidispersed() {
    let mut config = default_config();
    config.scenario = Scenario::PoissonDgp;
    let mut cell = Vec::new();
    for rep in 0..10_000 {
        let (t, _) = simulation::generate(&config, rep).unwrap();
        cell.push(t.get(1, 0).unwrap() as f64);
    }
    let mean = cell.iter().sum::<f64>() / cell.len() as f64;
    assert!((variance(&cell) / mean - 1.0).abs() < 0.05);
}

#[test]
fn correct_dgp_variance() {
    let mut config = default_config();
    config.kappa_true = 2.0;
    config.true_alpha[0] = (1000.0f64 / config.true_dev_weights[0]).ln();
    let mut cell = Vec::new();
    for rep in 0..10_000 {
        let (t, _) = simulation::generate(&config, rep).unwrap();
        cell.push(t.get(1, 0).unwrap() as f64);
    }
    let target = 1000.0 + 1e6 / 2.0;
    assert!((variance(&cell) / target - 1.0).abs() < 0.05, "{}", variance(&cell));
}

#[test]
fn varying_kappa_and_inflation_scenarios() {
    let mut config = default_config();
    config.scenario = Scenario::VaryingKappa {
        kappas: simulation::VARYING_KAPPA.to_vec(),
    };
    config.validate().unwrap();
    let (t, _) = simulation::generate(&config, 0).unwrap();
    assert_eq!(t.n_observed(), 55);

    let mut plain = default_config();
    plain.scenario = Scenario::PoissonDgp;
    let mut inflated = plain.clone();
    inflated.scenario = Scenario::CalendarInflation { rate: 0.05 };
    inflated.kappa_true = f64::INFINITY;
    let totals = |c: &simulation::DgpConfig| {
        (0..200)
            .map(|r| simulation::generate(c, r).unwrap().1 as f64)
            .sum::<f64>()
    };
    assert!(totals(&inflated) > 1.5 * totals(&plain));
}

#[test]
fn study_metrics_are_consistent() {
    let mut config = default_config();
    config.dim = 6;
    config.true_alpha = simulation::default_alpha(6);
    config.true_dev_weights = simulation::default_dev_weights(6);
    config.n_sim = 8;
    config.b = 60;
    let r = simulation::run_study(&config).unwrap();
    assert_eq!(r.records.len(), 4);
    for rec in &r.records {
        assert!(rec.rmse >= rec.bias.abs());
        assert!((0.0..=1.0).contains(&rec.cov75) && (0.0..=1.0).contains(&rec.cov95));
        assert!(rec.cov75 <= rec.cov95);
        assert!(rec.width75 > 0.0 && rec.width75 <= rec.width95);
        assert_eq!(rec.completed + rec.failures, 8);
    }
    // point estimates agree within each likelihood
    for rep in &r.replicates {
        let p = |k: usize| rep.methods[k].unwrap().point;
        assert!((p(0) - p(1)).abs() <= 1e-6 * p(0));
        assert!((p(2) - p(3)).abs() <= 1e-6 * p(2));
    }
    let mut buf = Vec::new();
    r.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("method,kappa_true,bias,rmse,cov75,cov95,width75,width95"));
    assert_eq!(text.lines().count(), 5);
}
