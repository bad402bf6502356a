//! Benchmark fixtures shared by the criterion benches.

use robust_amp::{Loss, NoiseModel, ProblemInstance, SignalSpec};

/// Huber(3) under 5% contamination at scale 10.
pub fn running_model() -> (Loss, NoiseModel) {
    (
        Loss::huber(3.0).expect("valid loss"),
        NoiseModel::contaminated_normal(0.05, 10.0).expect("valid noise"),
    )
}

/// A seeded instance with ‖θ₀‖/√p = 6.
pub fn running_instance(n: usize, p: usize) -> ProblemInstance {
    let (_, noise) = running_model();
    ProblemInstance::generate(n, p, &noise, &SignalSpec::Sphere { norm_per_sqrt_p: 6.0 }, 1).expect("valid instance")
}
