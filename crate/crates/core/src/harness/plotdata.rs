use std::path::{Path, PathBuf};

use super::experiment::ExperimentResult;
use crate::error::{Error, Result};
use crate::se::{predicted_mae, predicted_mse, StateEvolution};

pub const AMP_RMSE_FILE: &str = "amp-rmse-vs-iteration.csv";
pub const B_FILE: &str = "b-vs-iteration.csv";
pub const VARIANCE_MAP_FILE: &str = "se-variance-map.csv";
pub const SE_TRAJECTORY_FILE: &str = "se-trajectory.csv";
pub const EMPIRICAL_VS_PREDICTED_FILE: &str = "empirical-vs-predicted.csv";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Default `τ²` grid: 41 points on `[0, 2 max(τ₀², τ*²)]`.
pub fn default_variance_grid(result: &ExperimentResult) -> Vec<f64> {
    let top = 2.0
        * result
            .summary
            .tau0_sq
            .max(result.summary.fixed_point.tau_star_sq)
            .max(1e-3);
    (0..41).map(|i| top * i as f64 / 40.0).collect()
}

/// Writes one CSV per plot into `dir` and returns the paths.
pub fn emit_plotdata(result: &ExperimentResult, se: &StateEvolution, grid: &[f64], dir: &Path) -> Result<Vec<PathBuf>> {
    if result.records.is_empty() {
        return Err(Error::invalid("no replication records to plot"));
    }
    if grid.is_empty() {
        return Err(Error::invalid("variance-map grid is empty"));
    }
    std::fs::create_dir_all(dir)?;
    let path = |name: &str| dir.join(name);

    write_rows(
        &path(AMP_RMSE_FILE),
        &["seed", "t", "rmse_truth", "rmse_mest", "tau_hat"],
        result.records.iter().flat_map(|r| {
            r.iterations.iter().map(move |o| {
                vec![
                    r.seed.to_string(),
                    o.t.to_string(),
                    o.rmse_truth.to_string(),
                    opt(o.rmse_mest),
                    o.tau_hat.to_string(),
                ]
            })
        }),
    )?;

    write_rows(
        &path(B_FILE),
        &["seed", "t", "b"],
        result.records.iter().flat_map(|r| {
            r.iterations
                .iter()
                .map(move |o| vec![r.seed.to_string(), o.t.to_string(), o.b.to_string()])
        }),
    )?;

    let curve = se.variance_map_curve(grid)?;
    write_rows(
        &path(VARIANCE_MAP_FILE),
        &["tau_sq", "v_tilde", "b", "diagonal"],
        curve
            .iter()
            .map(|&(x, v, b)| vec![x.to_string(), v.to_string(), b.to_string(), x.to_string()]),
    )?;

    write_rows(
        &path(SE_TRAJECTORY_FILE),
        &["t", "tau_sq", "b", "predicted_mse", "predicted_mae"],
        result.se_trajectory.iter().map(|s| {
            vec![
                s.t.to_string(),
                s.tau_sq.to_string(),
                s.b.to_string(),
                predicted_mse(s.delta, s.tau_sq).to_string(),
                predicted_mae(s.delta, s.tau_sq).to_string(),
            ]
        }),
    )?;

    write_rows(
        &path(EMPIRICAL_VS_PREDICTED_FILE),
        &[
            "t",
            "mse_mean",
            "mse_se",
            "predicted_mse",
            "mae_mean",
            "mae_se",
            "predicted_mae",
            "b_mean",
            "b_se",
            "predicted_b",
            "count",
        ],
        result.summary.per_iteration.iter().map(|s| {
            vec![
                s.t.to_string(),
                s.mse.mean.to_string(),
                s.mse.se.to_string(),
                s.predicted_mse.to_string(),
                s.mae.mean.to_string(),
                s.mae.se.to_string(),
                s.predicted_mae.to_string(),
                s.b.mean.to_string(),
                s.b.se.to_string(),
                s.predicted_b.to_string(),
                s.mse.count.to_string(),
            ]
        }),
    )?;

    Ok([
        AMP_RMSE_FILE,
        B_FILE,
        VARIANCE_MAP_FILE,
        SE_TRAJECTORY_FILE,
        EMPIRICAL_VS_PREDICTED_FILE,
    ]
    .iter()
    .map(|n| path(n))
    .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run_experiment, ExperimentConfig};

    fn result() -> (ExperimentResult, StateEvolution) {
        let mut cfg = ExperimentConfig::new(120, 30, "huber:2", "cn:0.05,10");
        cfg.replications = 2;
        cfg.amp_max_iters = 15;
        let res = run_experiment(&cfg).unwrap();
        let se = StateEvolution::new(cfg.loss().unwrap(), cfg.noise().unwrap(), cfg.delta()).unwrap();
        (res, se)
    }

    #[test]
    fn writes_all_files_and_values_round_trip() {
        let (res, se) = result();
        let dir = tempfile::tempdir().unwrap();
        let grid = default_variance_grid(&res);
        let files = emit_plotdata(&res, &se, &grid, dir.path()).unwrap();
        assert_eq!(files.len(), 5);
        assert!(files.iter().all(|f| f.exists()));

        let mut rdr = csv::Reader::from_path(dir.path().join(SE_TRAJECTORY_FILE)).unwrap();
        for (row, state) in rdr.records().zip(&res.se_trajectory) {
            let row = row.unwrap();
            assert_eq!(row[1].parse::<f64>().unwrap(), state.tau_sq);
            assert_eq!(row[2].parse::<f64>().unwrap(), state.b);
        }
        let mut rdr = csv::Reader::from_path(dir.path().join(B_FILE)).unwrap();
        let first = rdr.records().next().unwrap().unwrap();
        assert_eq!(first[2].parse::<f64>().unwrap(), res.records[0].iterations[0].b);
    }

    #[test]
    fn empty_grid_is_an_error() {
        let (res, se) = result();
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_plotdata(&res, &se, &[], dir.path()).is_err());
    }

    #[test]
    fn variance_map_crosses_the_diagonal_at_the_fixed_point() {
        let se = StateEvolution::new("huber:3".parse().unwrap(), "cn:0.05,10".parse().unwrap(), 5.0).unwrap();
        let fp = se.fixed_point(1e-10, 500).unwrap();
        let below = se.v_tilde(fp.tau_star_sq * 0.9).unwrap().0;
        let above = se.v_tilde(fp.tau_star_sq * 1.1).unwrap().0;
        assert!(below > fp.tau_star_sq * 0.9 && above < fp.tau_star_sq * 1.1);
        assert!((fp.tau_star_sq - 0.472).abs() < 0.01);
    }
}
