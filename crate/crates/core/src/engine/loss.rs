use serde::{Deserialize, Serialize};

use super::scalar::Real;
use super::EngineError;

/// Scalar objective reduced from network outputs of shape `[B, K]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LossSpec {
    /// Mean softmax cross-entropy against integer labels.
    CrossEntropy { targets: Vec<usize> },
    /// Sum of every output; with absolute-valued parameters and a ones
    /// input this is the path-product objective scored by synflow.
    SynflowProduct,
    /// Sum of every output.
    SumOfOutputs,
    /// `½ Σ (y − t)²` over all outputs.
    HalfSquaredError { targets: Vec<f64> },
}

impl LossSpec {
    pub fn cross_entropy(targets: &[usize]) -> Self {
        LossSpec::CrossEntropy {
            targets: targets.to_vec(),
        }
    }

    pub(crate) fn validate(&self, batch: usize, classes: usize) -> Result<(), EngineError> {
        match self {
            LossSpec::CrossEntropy { targets } => {
                if targets.is_empty() {
                    return Err(EngineError::MissingTargets);
                }
                if targets.len() != batch {
                    return Err(EngineError::TargetLength {
                        expected: batch,
                        found: targets.len(),
                    });
                }
                if let Some(&t) = targets.iter().find(|&&t| t >= classes) {
                    return Err(EngineError::InvalidTarget { target: t, classes });
                }
            }
            LossSpec::HalfSquaredError { targets } => {
                if targets.len() != batch * classes {
                    return Err(EngineError::TargetLength {
                        expected: batch * classes,
                        found: targets.len(),
                    });
                }
            }
            LossSpec::SynflowProduct | LossSpec::SumOfOutputs => {}
        }
        Ok(())
    }

    /// Loss value and its gradient with respect to the outputs.
    pub(crate) fn eval<T: Real>(&self, out: &[T], batch: usize, classes: usize) -> (T, Vec<T>) {
        match self {
            LossSpec::CrossEntropy { targets } => {
                let inv_b = T::from_f64(1.0 / batch as f64);
                let mut total = T::zero();
                let mut grad = vec![T::zero(); out.len()];
                for n in 0..batch {
                    let row = &out[n * classes..(n + 1) * classes];
                    let shift = T::from_f64(row.iter().map(|v| v.value()).fold(f64::NEG_INFINITY, f64::max));
                    let exps: Vec<T> = row.iter().map(|&v| (v - shift).exp()).collect();
                    let mut z = T::zero();
                    for &e in &exps {
                        z += e;
                    }
                    let t = targets[n];
                    total += z.ln() + shift - row[t];
                    for k in 0..classes {
                        let p = exps[k] / z;
                        let ind = if k == t { T::one() } else { T::zero() };
                        grad[n * classes + k] = (p - ind) * inv_b;
                    }
                }
                (total * inv_b, grad)
            }
            LossSpec::SynflowProduct | LossSpec::SumOfOutputs => {
                let mut total = T::zero();
                for &v in out {
                    total += v;
                }
                (total, vec![T::one(); out.len()])
            }
            LossSpec::HalfSquaredError { targets } => {
                let mut total = T::zero();
                let mut grad = Vec::with_capacity(out.len());
                for (&y, &t) in out.iter().zip(targets) {
                    let d = y - T::from_f64(t);
                    total += T::from_f64(0.5) * d * d;
                    grad.push(d);
                }
                (total, grad)
            }
        }
    }
}
