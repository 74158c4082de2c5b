use nalgebra::{DMatrix, SymmetricEigen};

use super::{ParamScope, ProxyError};
use crate::engine::scalar::{Real, Wide};
use crate::engine::{GradientSet, LossSpec, Network, NormMode, Op, ParamKind, Tensor};

fn scoped<'a>(
    net: &'a Network,
    scope: ParamScope,
) -> impl Iterator<Item = (&'a str, ParamKind, Tensor)> + 'a {
    net.parameters().filter(move |(_, kind, _)| scope.includes(*kind))
}

/// `Σ_tensors ‖∂L/∂θ‖₂`. Proxy scoring uses cross-entropy.
pub fn grad_norm(net: &mut Network, loss: &LossSpec, batch: &Tensor, scope: ParamScope) -> Result<f64, ProxyError> {
    let grads = net.backward(loss, batch)?;
    Ok(grad_norm_from(net, &grads, scope))
}

pub(crate) fn grad_norm_from(net: &Network, grads: &GradientSet, scope: ParamScope) -> f64 {
    scoped(net, scope).map(|(name, _, _)| grads.params[name].norm()).sum()
}

/// `Σ |∂L/∂θ ⊙ θ|`.
pub fn snip(net: &mut Network, loss: &LossSpec, batch: &Tensor, scope: ParamScope) -> Result<f64, ProxyError> {
    let grads = net.backward(loss, batch)?;
    Ok(snip_from(net, &grads, scope))
}

pub(crate) fn snip_from(net: &Network, grads: &GradientSet, scope: ParamScope) -> f64 {
    scoped(net, scope)
        .map(|(name, _, theta)| {
            let g = grads.params[name].data();
            theta.data().iter().zip(g).map(|(t, g)| (t * g).abs()).sum::<f64>()
        })
        .sum()
}

/// `Σ −(H g) ⊙ θ` with `g = ∂L/∂θ`; the sum is signed.
pub fn grasp(net: &mut Network, loss: &LossSpec, batch: &Tensor, scope: ParamScope) -> Result<f64, ProxyError> {
    let grads = net.backward(loss, batch)?;
    let hg = net.hvp(loss, batch, &grads.params)?;
    Ok(scoped(net, scope)
        .map(|(name, _, theta)| -theta.dot(&hg[name]))
        .sum())
}

/// Per output channel of every convolution and linear node,
/// `(Σ_{batch, spatial} ∂L/∂z · z)²`, summed.
pub fn fisher(net: &mut Network, loss: &LossSpec, batch: &Tensor) -> Result<f64, ProxyError> {
    let grads = net.backward(loss, batch)?;
    fisher_from(net, &grads)
}

pub(crate) fn fisher_from(net: &Network, grads: &GradientSet) -> Result<f64, ProxyError> {
    let mut total = 0.0;
    for name in net.node_names() {
        let channels = match net.node_op(name) {
            Some(Op::Conv2d { out_channels, .. }) => *out_channels,
            Some(Op::Linear { out_features, .. }) => *out_features,
            _ => continue,
        };
        let z = net
            .activation(name)
            .ok_or_else(|| ProxyError::Degenerate(format!("no cached activation for `{name}`")))?;
        let g = grads
            .activations
            .get(name)
            .ok_or_else(|| ProxyError::Degenerate(format!("no activation gradient for `{name}`")))?;
        let b = z.batch();
        let spatial = z.len() / (b * channels);
        let mut per_channel = vec![0.0; channels];
        for (i, (zv, gv)) in z.data().iter().zip(g.data()).enumerate() {
            per_channel[(i / spatial) % channels] += zv * gv;
        }
        total += per_channel.iter().map(|s| s * s).sum::<f64>();
    }
    Ok(total)
}

/// Data-free path-product score: with every parameter replaced by its
/// magnitude, normalization bypassed and an all-ones input of batch 1,
/// `Σ (∂R/∂θ ⊙ θ)` for `R = Σ outputs`. Parameters are restored afterwards.
///
/// In log domain the score is `ln(1 + S)`, evaluated in extended range so
/// that deep products never overflow.
pub fn synflow(net: &mut Network, scope: ParamScope, log_domain: bool) -> Result<f64, ProxyError> {
    if log_domain {
        synflow_wide(net, scope)
    } else {
        synflow_with_input(net, scope, 1.0)
    }
}

/// [`synflow`] with every input entry set to `value` instead of 1.
pub fn synflow_with_input(net: &mut Network, scope: ParamScope, value: f64) -> Result<f64, ProxyError> {
    with_synflow_state(net, |net| {
        let mut shape = vec![1];
        shape.extend_from_slice(net.input_shape());
        let input = Tensor::filled(&shape, value);
        let grads = match net.backward(&LossSpec::SynflowProduct, &input) {
            Ok(g) => g,
            Err(crate::engine::EngineError::NonFinite { .. } | crate::engine::EngineError::NonFiniteLoss) => {
                return Err(ProxyError::Overflow)
            }
            Err(e) => return Err(e.into()),
        };
        let s: f64 = scoped(net, scope)
            .map(|(name, _, theta)| theta.dot(&grads.params[name]))
            .sum();
        if s.is_finite() {
            Ok(s)
        } else {
            Err(ProxyError::Overflow)
        }
    })
}

fn synflow_wide(net: &mut Network, scope: ParamScope) -> Result<f64, ProxyError> {
    with_synflow_state(net, |net| {
        let mut shape = vec![1];
        shape.extend_from_slice(net.input_shape());
        let input = Tensor::filled(&shape, 1.0);
        let grads = net.gradients_in(&LossSpec::SynflowProduct, &input, Wide::from_f64)?;
        let mut s = Wide::zero();
        for ((_, kind, theta), g) in net.parameters().zip(&grads) {
            if scope.includes(kind) {
                for (&t, &gv) in theta.data().iter().zip(g) {
                    s += Wide::from_f64(t) * gv;
                }
            }
        }
        let v = s.value();
        if v < 1e300 {
            Ok(v.ln_1p())
        } else {
            // ln(1 + S) = ln S + ln(1 + 1/S), and 1/S is below 1e-300 here.
            Ok(s.ln_abs())
        }
    })
}

fn with_synflow_state<R>(
    net: &mut Network,
    f: impl FnOnce(&mut Network) -> Result<R, ProxyError>,
) -> Result<R, ProxyError> {
    let saved = net.param_set();
    let mode = net.norm_mode();
    net.map_params(|_, v| v.abs());
    net.set_norm_mode(NormMode::Bypass);
    let out = f(net);
    net.set_norm_mode(mode);
    for (name, t) in &saved {
        net.set_param(name, t).expect("restoring own parameters");
    }
    out
}

/// Input-Jacobian correlation score. The Jacobian of the summed outputs with
/// respect to the input is split into one row per sample.
pub fn jacob_cov(net: &mut Network, batch: &Tensor, k: f64) -> Result<f64, ProxyError> {
    let grads = net.backward(&LossSpec::SumOfOutputs, batch)?;
    let b = batch.batch();
    let d = grads.input.len() / b;
    let rows: Vec<Vec<f64>> = grads.input.data().chunks(d).map(<[f64]>::to_vec).collect();
    jacob_cov_from_rows(&rows, k)
}

/// `−Σ_i [ln(σ_i + k) + 1/(σ_i + k)]` over the eigenvalues `σ_i` of the
/// row correlation matrix.
pub fn jacob_cov_from_rows(rows: &[Vec<f64>], k: f64) -> Result<f64, ProxyError> {
    let b = rows.len();
    if b < 2 {
        return Err(ProxyError::Degenerate("jacob_cov needs at least two samples".into()));
    }
    let centered: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let mean = r.iter().sum::<f64>() / r.len() as f64;
            r.iter().map(|v| v - mean).collect()
        })
        .collect();
    let norms: Vec<f64> = centered.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    if let Some(i) = norms.iter().position(|&n| n == 0.0 || !n.is_finite()) {
        return Err(ProxyError::Degenerate(format!("Jacobian row {i} has zero variance")));
    }
    let corr = DMatrix::from_fn(b, b, |i, j| {
        if i == j {
            1.0
        } else {
            let dot: f64 = centered[i].iter().zip(&centered[j]).map(|(x, y)| x * y).sum();
            (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
        }
    });
    let eig = SymmetricEigen::new(corr);
    Ok(-eig
        .eigenvalues
        .iter()
        .map(|&s| {
            let s = s.max(0.0) + k;
            s.ln() + 1.0 / s
        })
        .sum::<f64>())
}
