//! Deterministic inputs shared by the benchmarks under `benches/`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thermofuse_core::engine::{Shape, Tensor};
use thermofuse_core::simulate::{simulate_batch, SimulationPlan};
use thermofuse_core::ThermalSequence;

pub fn random_tensor(shape: Shape, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_, _, _, _| rng.random_range(-1.0..1.0))
}

/// One simulated `side x side` sequence with `n_t` frames.
pub fn simulated_sequence(side: usize, n_t: usize) -> ThermalSequence {
    let mut plan = SimulationPlan::desk_default(side, side);
    plan.acquisition.n_t = n_t;
    simulate_batch(&plan, 1, 1).expect("simulation").remove(0).0
}
