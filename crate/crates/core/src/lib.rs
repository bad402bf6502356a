//! Approximate message passing (AMP) for robust M-estimation when `n/p → δ > 1`,
//! with the state-evolution engine that predicts its operating characteristics.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: quadrature, root finding, random streams, dense QR;
//! * [`loss`]: smooth convex losses, `prox`, the effective score `Ψ(·; b)`;
//! * [`noise`]: mixture noise laws, smoothed expectations, Fisher information;
//! * [`se`]: state evolution, its fixed point, predictions and lower bounds;
//! * [`amp`]: the AMP iteration itself;
//! * [`baseline`]: Newton M-estimation, classical variance, design whitening;
//! * [`duality`]: the Huber / Lasso correspondence;
//! * [`harness`]: problem generation, replication experiments and output files.

// `!(x > y)` guards double as NaN checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod amp;
pub mod baseline;
pub mod duality;
pub mod error;
pub mod harness;
pub mod loss;
pub mod noise;
pub mod numerics;
pub mod se;

pub use amp::{amp_run, amp_step, AmpMode, AmpReport, AmpState};
pub use baseline::{classical_variance, m_estimate, whiten_design, MEstimate};
pub use duality::{build_dual, lasso_solve, DualInstance, DualityRecord};
pub use error::{Error, Result};
pub use harness::{run_experiment, ExperimentConfig, ProblemInstance, ReplicationRecord, SignalSpec};
pub use loss::Loss;
pub use noise::NoiseModel;
pub use numerics::{Matrix, Quadrature, RngStream, Vector};
pub use se::{FixedPoint, LowerBounds, PredictionReport, SeState, StateEvolution};
