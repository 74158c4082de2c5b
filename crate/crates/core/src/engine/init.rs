use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::graph::{ParamDecl, ParamKind};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    /// `U(−1/√fan_in, 1/√fan_in)` for weights and biases.
    #[default]
    Default,
    /// `N(0, 2/fan_in)` weights.
    KaimingNormal,
    /// `U(±√(6/(fan_in+fan_out)))` weights.
    XavierUniform,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiasMode {
    /// Biases follow the default uniform rule regardless of weight scheme.
    #[default]
    SchemeDefault,
    Zero,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InitConfig {
    pub scheme: InitScheme,
    pub bias_mode: BiasMode,
    pub seed: u64,
}

impl InitConfig {
    pub fn with_seed(seed: u64) -> Self {
        InitConfig {
            seed,
            ..Default::default()
        }
    }
}

impl std::str::FromStr for InitScheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "default" => Ok(InitScheme::Default),
            "kaiming-normal" | "kaiming" => Ok(InitScheme::KaimingNormal),
            "xavier-uniform" | "xavier" => Ok(InitScheme::XavierUniform),
            other => Err(format!("unknown init scheme `{other}`")),
        }
    }
}

impl std::str::FromStr for BiasMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "scheme-default" | "default" => Ok(BiasMode::SchemeDefault),
            "zero" => Ok(BiasMode::Zero),
            other => Err(format!("unknown bias mode `{other}`")),
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, bound: f64, n: usize) -> Vec<f64> {
    (0..n).map(|_| (2.0 * rng.random::<f64>() - 1.0) * bound).collect()
}

/// Draws every parameter in declaration order from one seeded stream.
pub(crate) fn initialize(decls: &[ParamDecl], cfg: &InitConfig) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    decls
        .iter()
        .map(|d| {
            let n: usize = d.shape.iter().product();
            let fan_in = d.fan_in.max(1) as f64;
            match d.kind {
                ParamKind::NormScale => vec![1.0; n],
                ParamKind::NormShift => vec![0.0; n],
                ParamKind::Bias => match cfg.bias_mode {
                    BiasMode::Zero => vec![0.0; n],
                    BiasMode::SchemeDefault => uniform(&mut rng, 1.0 / fan_in.sqrt(), n),
                },
                ParamKind::Weight => match cfg.scheme {
                    InitScheme::Default => uniform(&mut rng, 1.0 / fan_in.sqrt(), n),
                    InitScheme::KaimingNormal => {
                        let std = (2.0 / fan_in).sqrt();
                        (0..n).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect()
                    }
                    InitScheme::XavierUniform => {
                        let bound = (6.0 / (fan_in + d.fan_out.max(1) as f64)).sqrt();
                        uniform(&mut rng, bound, n)
                    }
                },
            }
        })
        .collect()
}
