//! Problem generation, replication experiments and plot-data emission.

mod config;
mod experiment;
mod instance;
mod plotdata;

pub use config::{ExperimentConfig, ModeSpec};
pub use experiment::{
    run_experiment, run_replication, ExperimentResult, ExperimentSummary, FailedReplication, IterationObservables,
    IterationSummary, MeanSe, ReplicationRecord,
};
pub use instance::{rmse, ProblemInstance, SignalSpec};
pub use plotdata::{
    default_variance_grid, emit_plotdata, AMP_RMSE_FILE, B_FILE, EMPIRICAL_VS_PREDICTED_FILE, SE_TRAJECTORY_FILE,
    VARIANCE_MAP_FILE,
};
