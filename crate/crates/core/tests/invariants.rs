//! Statistical and structural invariants that span several modules.

use rayon::prelude::*;
use robust_amp::amp::{amp_run, amp_step, AmpMode, AmpState};
use robust_amp::baseline::m_estimate;
use robust_amp::harness::{run_experiment, ExperimentConfig, MeanSe, ModeSpec, ProblemInstance, SignalSpec};
use robust_amp::se::StateEvolution;
use robust_amp::{Loss, NoiseModel, Quadrature, Vector};

fn running_config(reps: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(1000, 200, "huber:3", "cn:0.05,10");
    cfg.theta0_norm = 6.0;
    cfg.replications = reps;
    cfg.seed = 41;
    cfg
}

#[test]
fn adjusted_residuals_follow_the_se_law() {
    let noise = NoiseModel::contaminated_normal(0.05, 10.0).unwrap();
    let loss = Loss::huber(3.0).unwrap();
    let se = StateEvolution::new(loss, noise.clone(), 5.0).unwrap();
    let steps = 6;
    let states = se.run_fixed(7.2, steps).unwrap();

    // Per replication: the k-th sample moment of Rᵗ for t = 0..steps.
    let per_rep: Vec<Vec<[f64; 4]>> = (0..10u64)
        .into_par_iter()
        .map(|seed| {
            let inst = ProblemInstance::generate(
                1000,
                200,
                &noise,
                &SignalSpec::Sphere { norm_per_sqrt_p: 6.0 },
                900 + seed,
            )
            .unwrap();
            let mut state = AmpState::initial(Vector::zeros(200), 1000);
            let mut out = Vec::new();
            for _ in 0..=steps {
                state = amp_step(&state, &inst, &loss, &AmpMode::Empirical).unwrap();
                let r = &state.resid_adj;
                out.push([1, 2, 3, 4].map(|k| r.iter().map(|v| v.powi(k)).sum::<f64>() / 1000.0));
            }
            out
        })
        .collect();

    let quad = Quadrature::default();
    for t in 0..=steps {
        let tau = states[t].tau_sq.sqrt();
        for k in 0..4 {
            let predicted = noise.smoothed_expectation(tau, |x| x.powi(k as i32 + 1), &[], &quad);
            let stats = MeanSe::of(&per_rep.iter().map(|m| m[t][k]).collect::<Vec<_>>());
            assert!(
                stats.z_score(predicted) <= 4.0,
                "t = {t}, order {}: {stats:?} vs {predicted}",
                k + 1
            );
        }
    }
}

#[test]
fn ordinary_residuals_and_suboptimality_gap() {
    let res = run_experiment(&running_config(10)).unwrap();
    let s = &res.summary;
    for (k, (emp, pred)) in s.residual_moments.iter().zip(&s.predicted_residual_moments).enumerate() {
        assert!(emp.z_score(*pred) <= 4.0, "order {}: {emp:?} vs {pred}", k + 1);
    }

    // MSE(θᵗ) − MSE(θ̂) ≈ δ(τ_t² − τ*²).
    let fp = s.fixed_point;
    for t in 1..=10 {
        let gaps: Vec<f64> = res
            .records
            .iter()
            .map(|r| r.iterations[t].mse - r.newton_rmse.powi(2))
            .collect();
        let predicted = s.delta * (res.se_trajectory[t].tau_sq - fp.tau_star_sq);
        let stats = MeanSe::of(&gaps);
        assert!(stats.z_score(predicted) <= 3.0, "t = {t}: {stats:?} vs {predicted}");
    }
}

#[test]
fn experiments_are_reproducible_byte_for_byte() {
    let mut cfg = running_config(3);
    cfg.n = 300;
    cfg.p = 60;
    let a = serde_json::to_string(&run_experiment(&cfg).unwrap().summary).unwrap();
    let b = serde_json::to_string(&run_experiment(&cfg).unwrap().summary).unwrap();
    assert_eq!(a, b);
}

#[test]
fn amp_limit_is_stationary_for_strongly_convex_losses() {
    let noise = NoiseModel::contaminated_normal(0.05, 10.0).unwrap();
    let tol = 1e-9;
    for loss in [Loss::log_cosh(1.0).unwrap(), Loss::huber_ridge(2.0, 0.05).unwrap()] {
        for seed in 0..3 {
            let inst =
                ProblemInstance::generate(400, 80, &noise, &SignalSpec::Sphere { norm_per_sqrt_p: 2.0 }, seed).unwrap();
            let report = amp_run(&inst, &loss, &Vector::zeros(80), 2000, tol, &AmpMode::Empirical, None).unwrap();
            assert!(report.converged, "{loss}");
            assert!(
                report.final_gradient_norm <= 10.0 * tol,
                "{loss}: {}",
                report.final_gradient_norm
            );
        }
    }
}

#[test]
fn analytic_mode_tracks_empirical_mode() {
    let mut cfg = running_config(4);
    cfg.amp_max_iters = 30;
    let empirical = run_experiment(&cfg).unwrap();
    cfg.mode = ModeSpec::Analytic;
    let analytic = run_experiment(&cfg).unwrap();
    for (e, a) in empirical.records.iter().zip(&analytic.records) {
        assert!(
            (e.amp_rmse - a.amp_rmse).abs() < 0.05,
            "{} vs {}",
            e.amp_rmse,
            a.amp_rmse
        );
        assert!((e.final_b - a.final_b).abs() < 0.02);
    }
}

#[test]
fn squared_loss_single_replication_matches_closed_form() {
    let mut cfg = ExperimentConfig::new(1000, 200, "squared", "normal:0,1");
    cfg.seed = 3;
    let res = run_experiment(&cfg).unwrap();
    // δσ²/(δ − 1) = 1.25; the per-coordinate MSE has relative sd about sqrt(2/p).
    let mse = res.records[0].amp_rmse.powi(2);
    assert!((mse - 1.25).abs() < 4.0 * 1.25 * (2.0f64 / 200.0).sqrt(), "{mse}");
}

#[test]
fn newton_and_amp_agree_on_huber_running_example() {
    let noise = NoiseModel::contaminated_normal(0.05, 10.0).unwrap();
    let inst = ProblemInstance::generate(1000, 200, &noise, &SignalSpec::Sphere { norm_per_sqrt_p: 6.0 }, 77).unwrap();
    let loss = Loss::huber(3.0).unwrap();
    let newton = m_estimate(&inst, &loss, 1e-10, 100).unwrap();
    let amp = amp_run(
        &inst,
        &loss,
        &Vector::zeros(200),
        200,
        1e-8,
        &AmpMode::Empirical,
        Some(&newton.theta),
    )
    .unwrap();
    let gap = amp.trajectory.last().unwrap().rmse_mest.unwrap();
    assert!(gap < 1e-3, "{gap}");
}
