use crate::autodiff::{input_gradient_norm, Graph, Tensor};
use crate::codec::GumbelConfig;
use crate::error::{Error, Result};

use super::model::GanModel;

/// Scalar parts of one critic evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriticTerms {
    pub loss: f64,
    /// `E[D(real)] - E[D(fake)]`, the critic's Wasserstein estimate.
    pub wasserstein: f64,
    pub penalty: f64,
    pub mean_gradient_norm: f64,
}

/// `x_hat = eps * real + (1 - eps) * fake`, one `eps` per row.
pub fn interpolate(real: &Tensor, fake: &Tensor, eps: &[f64]) -> Result<Tensor> {
    if real.dims() != fake.dims() || eps.len() != real.rows() {
        return Err(Error::Shape {
            op: "interpolate",
            left: real.shape().to_vec(),
            right: fake.shape().to_vec(),
        });
    }
    let c = real.cols();
    let data = real
        .data()
        .iter()
        .zip(fake.data())
        .enumerate()
        .map(|(j, (r, f))| {
            let e = eps[j / c];
            e * r + (1.0 - e) * f
        })
        .collect();
    Tensor::matrix(real.rows(), c, data)
}

/// Critic objective `E[D(fake)] - E[D(real)] + lambda * E[(|grad D(x_hat)| - 1)^2]`
/// and its gradients with respect to the critic parameters.
pub fn critic_loss(
    model: &GanModel,
    real: &Tensor,
    fake: &Tensor,
    eps: &[f64],
    step: usize,
) -> Result<(CriticTerms, Vec<Tensor>)> {
    if real.rows() == 0 || real.cols() != model.dim() {
        return Err(Error::contract("critic batch does not match the feature layout"));
    }
    let x_hat = interpolate(real, fake, eps)?;
    let mut g = Graph::new();
    let cvars = model.critic_params.bind(&mut g);
    let r = g.constant(real.clone());
    let f = g.constant(fake.clone());
    let dr = model.critic_graph(&mut g, &cvars, r)?;
    let df = model.critic_graph(&mut g, &cvars, f)?;
    let dr = g.mean(dr);
    let df = g.mean(df);
    let w = g.sub(df, dr)?;

    let xh = g.param(x_hat);
    let dh = model.critic_graph(&mut g, &cvars, xh)?;
    let norms = input_gradient_norm(&mut g, dh, xh)?;
    let dev = g.add_scalar(norms, -1.0);
    let sq = g.square(dev);
    let pen = g.mean(sq);
    let weighted = g.scale(pen, model.lambda);
    let loss = g.add(w, weighted)?;

    let terms = CriticTerms {
        loss: g.value(loss).item(),
        wasserstein: -g.value(w).item(),
        penalty: g.value(pen).item(),
        mean_gradient_norm: g.value(norms).sum() / real.rows() as f64,
    };
    if !terms.loss.is_finite() {
        return Err(Error::training(format!("non-finite critic loss at step {step}")));
    }
    let grads = g.grad(loss, &cvars)?;
    Ok((terms, grads.into_iter().map(|v| g.value(v).clone()).collect()))
}

/// Generator objective `-E[D(G(z))]` and its gradients with respect to the
/// generator parameters; the critic is held fixed.
pub fn generator_loss(
    model: &GanModel,
    noise: &Tensor,
    gumbel_noise: &Tensor,
    gumbel: GumbelConfig,
    step: usize,
) -> Result<(f64, Vec<Tensor>)> {
    if noise.rows() == 0 || noise.cols() != model.noise_dim() {
        return Err(Error::contract("generator noise batch has the wrong shape"));
    }
    let mut g = Graph::new();
    let gvars = model.generator_params.bind(&mut g);
    let cvars = model.critic_params.bind_frozen(&mut g);
    let z = g.constant(noise.clone());
    let x = model.generate_graph(&mut g, &gvars, z, gumbel_noise, gumbel)?;
    let d = model.critic_graph(&mut g, &cvars, x)?;
    let m = g.mean(d);
    let loss = g.neg(m);
    let value = g.value(loss).item();
    if !value.is_finite() {
        return Err(Error::training(format!("non-finite generator loss at step {step}")));
    }
    let grads = g.grad(loss, &gvars)?;
    Ok((value, grads.into_iter().map(|v| g.value(v).clone()).collect()))
}
