use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ModeSpec};
use super::instance::ProblemInstance;
use crate::amp::{amp_run, AmpMode};
use crate::baseline::m_estimate;
use crate::duality::{compare, DualityRecord};
use crate::error::{Error, Result};
use crate::loss::Loss;
use crate::numerics::Vector;
use crate::se::{predicted_mae, predicted_mse, FixedPoint, SeState, StateEvolution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationObservables {
    pub t: usize,
    pub tau_hat: f64,
    pub b: f64,
    pub mse: f64,
    pub mae: f64,
    pub rmse_truth: f64,
    pub rmse_mest: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub seed: u64,
    pub iterations: Vec<IterationObservables>,
    pub amp_converged: bool,
    pub amp_rmse: f64,
    pub newton_rmse: f64,
    /// `‖θ̂_AMP − θ̂_Newton‖₂ / √p`.
    pub amp_vs_newton: f64,
    pub newton_gradient_norm: f64,
    pub final_b: f64,
    /// Moments of orders 1..=4 of the ordinary residuals `Y − Xθ̂_AMP`.
    pub residual_moments: [f64; 4],
    pub duality: Option<DualityRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedReplication {
    pub seed: u64,
    pub error: String,
}

/// Across-replication mean and standard error `sd/√reps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub count: usize,
}

impl MeanSe {
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return MeanSe {
                mean: f64::NAN,
                se: f64::NAN,
                count,
            };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let se = if count > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
            (var / count as f64).sqrt()
        } else {
            0.0
        };
        MeanSe { mean, se, count }
    }

    /// `|mean − target| / se`, or infinity when `se` is zero and they differ.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.mean - target).abs();
        if self.se > 0.0 {
            d / self.se
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub t: usize,
    pub mse: MeanSe,
    pub mae: MeanSe,
    pub b: MeanSe,
    pub predicted_mse: f64,
    pub predicted_mae: f64,
    pub predicted_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub delta: f64,
    pub tau0_sq: f64,
    pub fixed_point: FixedPoint,
    /// `√(δ τ*²)`.
    pub predicted_rmse: f64,
    pub amp_rmse: MeanSe,
    pub newton_rmse: MeanSe,
    pub final_b: MeanSe,
    pub max_amp_vs_newton: f64,
    pub per_iteration: Vec<IterationSummary>,
    /// Empirical residual moments (orders 1..=4) against
    /// `E η(W + τ*Z; b*)^k`.
    pub residual_moments: Vec<MeanSe>,
    pub predicted_residual_moments: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub records: Vec<ReplicationRecord>,
    pub failures: Vec<FailedReplication>,
    pub se_trajectory: Vec<SeState>,
    pub summary: ExperimentSummary,
}

impl ExperimentResult {
    /// Writes the full result (config, records, SE trajectory, summary) as
    /// pretty-printed JSON.
    pub fn write_json(&self, path: &std::path::Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(file, self)?;
        Ok(())
    }

    pub fn read_json(path: &std::path::Path) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(file)?)
    }
}

/// One replication: generate, Newton, AMP (with the Newton estimate as
/// reference), optional Lasso dual.
pub fn run_replication(config: &ExperimentConfig, seed: u64, mode: &AmpMode) -> Result<ReplicationRecord> {
    let loss = config.loss()?;
    let noise = config.noise()?;
    let inst = ProblemInstance::generate(config.n, config.p, &noise, &config.signal(), seed)?;
    let newton = m_estimate(&inst, &loss, config.newton_tol, config.newton_max_iters)?;
    let amp = amp_run(
        &inst,
        &loss,
        &Vector::zeros(config.p),
        config.amp_max_iters,
        config.amp_tol,
        mode,
        Some(&newton.theta),
    )?;
    let theta = Vector::from_column_slice(&amp.theta);
    let resid = &inst.y - &inst.x * &theta;
    let n = resid.len() as f64;
    let mut residual_moments = [0.0; 4];
    for (k, m) in residual_moments.iter_mut().enumerate() {
        *m = resid.iter().map(|r| r.powi(k as i32 + 1)).sum::<f64>() / n;
    }
    let duality = match (config.duality, loss) {
        (true, Loss::Huber { lambda }) => Some(compare(&inst, lambda)?),
        _ => None,
    };
    Ok(ReplicationRecord {
        seed,
        iterations: amp
            .trajectory
            .iter()
            .map(|it| IterationObservables {
                t: it.t,
                tau_hat: it.tau_hat,
                b: it.b,
                mse: it.mse,
                mae: it.mae,
                rmse_truth: it.rmse_truth,
                rmse_mest: it.rmse_mest,
            })
            .collect(),
        amp_converged: amp.converged,
        amp_rmse: amp.final_rmse_truth,
        newton_rmse: inst.rmse(&newton.theta),
        amp_vs_newton: amp.trajectory.last().and_then(|it| it.rmse_mest).unwrap_or(f64::NAN),
        newton_gradient_norm: newton.gradient_norm,
        final_b: amp.final_b,
        residual_moments,
        duality,
    })
}

/// Runs every replication (in parallel) and aggregates in seed-list order.
/// Individual failures are recorded; the run fails only if all of them do.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let se = StateEvolution::new(config.loss()?, config.noise()?, config.delta())?;
    let tau0_sq = config.tau0_sq();
    let se_trajectory = se.run_fixed(tau0_sq, config.amp_max_iters)?;
    let fixed_point = se.fixed_point(1e-10, 1000)?;
    let mode = match config.mode {
        ModeSpec::Empirical => AmpMode::Empirical,
        ModeSpec::Analytic => AmpMode::Analytic(se_trajectory.iter().map(|s| s.b).collect()),
    };

    let outcomes: Vec<(u64, Result<ReplicationRecord>)> = config
        .seeds()
        .into_par_iter()
        .map(|seed| (seed, run_replication(config, seed, &mode)))
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (seed, outcome) in outcomes {
        match outcome {
            Ok(r) => records.push(r),
            Err(e) => failures.push(FailedReplication {
                seed,
                error: e.to_string(),
            }),
        }
    }
    if records.is_empty() {
        return Err(Error::Solver(format!(
            "all {} replications failed; first error: {}",
            failures.len(),
            failures[0].error
        )));
    }
    let summary = summarize(&se, &records, &se_trajectory, fixed_point, tau0_sq);
    Ok(ExperimentResult {
        config: config.clone(),
        records,
        failures,
        se_trajectory,
        summary,
    })
}

fn summarize(
    se: &StateEvolution,
    records: &[ReplicationRecord],
    se_trajectory: &[SeState],
    fixed_point: FixedPoint,
    tau0_sq: f64,
) -> ExperimentSummary {
    let delta = se.delta;
    let collect = |f: &dyn Fn(&ReplicationRecord) -> f64| records.iter().map(f).collect::<Vec<_>>();
    let horizon = records.iter().map(|r| r.iterations.len()).max().unwrap_or(0);
    let per_iteration = (0..horizon.min(se_trajectory.len()))
        .map(|t| {
            let at: Vec<&IterationObservables> = records.iter().filter_map(|r| r.iterations.get(t)).collect();
            let pick =
                |f: &dyn Fn(&IterationObservables) -> f64| MeanSe::of(&at.iter().map(|o| f(o)).collect::<Vec<_>>());
            let tau_sq = se_trajectory[t].tau_sq;
            IterationSummary {
                t,
                mse: pick(&|o| o.mse),
                mae: pick(&|o| o.mae),
                b: pick(&|o| o.b),
                predicted_mse: predicted_mse(delta, tau_sq),
                predicted_mae: predicted_mae(delta, tau_sq),
                predicted_b: se_trajectory[t].b,
            }
        })
        .collect();
    let residual_moments = (0..4)
        .map(|k| MeanSe::of(&collect(&|r| r.residual_moments[k])))
        .collect();
    let tau_star = fixed_point.tau_star_sq.sqrt();
    let predicted_residual_moments = (1..=4)
        .map(|k| se.residual_moment(tau_star, fixed_point.b_star, k))
        .collect();
    ExperimentSummary {
        delta,
        tau0_sq,
        predicted_rmse: fixed_point.asymptotic_variance.sqrt(),
        fixed_point,
        amp_rmse: MeanSe::of(&collect(&|r| r.amp_rmse)),
        newton_rmse: MeanSe::of(&collect(&|r| r.newton_rmse)),
        final_b: MeanSe::of(&collect(&|r| r.final_b)),
        max_amp_vs_newton: records.iter().map(|r| r.amp_vs_newton).fold(0.0, f64::max),
        per_iteration,
        residual_moments,
        predicted_residual_moments,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(loss: &str, reps: usize) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(200, 40, loss, "normal:0,1");
        cfg.replications = reps;
        cfg.seed = 10;
        cfg
    }

    #[test]
    fn mean_and_standard_error() {
        let m = MeanSe::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.se - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert_eq!(MeanSe::of(&[7.0]).se, 0.0);
        assert!(MeanSe::of(&[]).mean.is_nan());
    }

    #[test]
    fn squared_loss_reaches_the_analytic_fixed_point() {
        let res = run_experiment(&small("squared", 1)).unwrap();
        let fp = res.summary.fixed_point;
        // δ σ² / (δ − 1) with δ = 5.
        assert!((fp.asymptotic_variance - 1.25).abs() < 1e-9);
        let mse = res.records[0].amp_rmse.powi(2);
        assert!((mse - 1.25).abs() < 0.6, "{mse}");
        assert!(res.records[0].amp_vs_newton < 1e-6);
    }

    #[test]
    fn aggregation_is_deterministic_and_ordered() {
        let cfg = small("huber:1.5", 3);
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.records.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![10, 11, 12]);
        assert_ne!(a.records[0], a.records[1]);
    }

    #[test]
    fn records_round_trip_losslessly() {
        let res = run_experiment(&small("logcosh:1", 1)).unwrap();
        let text = serde_json::to_string(&res.records[0]).unwrap();
        let back: ReplicationRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(back, res.records[0]);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("result.json");
        res.write_json(&path).unwrap();
        assert_eq!(ExperimentResult::read_json(&path).unwrap(), res);
    }
}
