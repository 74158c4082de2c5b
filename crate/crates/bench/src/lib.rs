//! Fixtures shared by the criterion benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zcnas::engine::{InitConfig, Network};
use zcnas::proxy::{Batch, DataMode};
use zcnas::space::{materialize, Architecture, CellOp, ScaleConfig, SpaceSpec};

/// An all-conv3x3 cell network at the default scale with a random batch.
pub fn conv_network(batch: usize) -> (Network, Batch) {
    let space = SpaceSpec::default();
    let scale = ScaleConfig::default();
    let arch = Architecture::uniform(&space, CellOp::Conv3x3).expect("space has conv3x3");
    let net = materialize(&space, &arch, &scale, &InitConfig::with_seed(0)).expect("arch builds");
    let shape = [3, scale.resolution, scale.resolution];
    (net, Batch::synthetic(DataMode::RandomBatch, &shape, scale.classes, batch, 1))
}

/// Two random series of length `n`, each with roughly 10% tied values.
pub fn series(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || {
        let v: f64 = rng.random();
        if v < 0.1 {
            0.0
        } else {
            v
        }
    };
    let xs: Vec<f64> = (0..n).map(|_| draw()).collect();
    let ys: Vec<f64> = (0..n).map(|_| draw()).collect();
    (xs, ys)
}
