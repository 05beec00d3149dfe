use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

use super::model::VaeModel;

/// Closed-form `KL(N(mu, exp(logvar)) || N(0, I))` for one latent vector.
pub fn kl_standard_normal(mu: &[f64], logvar: &[f64]) -> f64 {
    mu.iter()
        .zip(logvar)
        .map(|(m, lv)| 0.5 * (m * m + lv.exp() - 1.0 - lv))
        .sum()
}

/// Batch-mean terms of the negative evidence lower bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElboTerms {
    pub continuous: Var,
    pub categorical: Var,
    pub kl: Var,
    pub total: Var,
}

/// Supervision for one batch: encoded rows plus the categorical indices they
/// came from (row-major, one index per categorical field).
#[derive(Clone, Debug)]
pub struct ElboTargets<'a> {
    pub x: &'a Tensor,
    pub categories: &'a [u32],
}

/// Negative ELBO on decoder output: squared error on continuous columns,
/// cross-entropy on each categorical head, and closed-form KL, each averaged
/// over the batch. `kl_weight` of 1 is the plain ELBO.
#[allow(clippy::too_many_arguments)]
pub fn negative_elbo(
    g: &mut Graph,
    model: &VaeModel,
    targets: &ElboTargets<'_>,
    x: Var,
    mu: Var,
    logvar: Var,
    decoded: Var,
    kl_weight: f64,
) -> Result<ElboTerms> {
    let rows = targets.x.rows();
    let n_cat = model.codec.tables.len();
    if targets.categories.len() != rows * n_cat {
        return Err(Error::contract("category targets do not match batch"));
    }
    let nc = model.codec.schema.continuous.len();
    let inv_b = 1.0 / rows as f64;

    let x_cont = g.slice_cols(x, 0, nc)?;
    let cont_hat = g.slice_cols(decoded, 0, nc)?;
    let diff = g.sub(x_cont, cont_hat)?;
    let sq = g.square(diff);
    let se = g.sum(sq);
    let continuous = g.scale(se, inv_b);

    let mut ce_parts = Vec::with_capacity(n_cat);
    let mut pos = nc;
    for (f, table) in model.codec.tables.iter().enumerate() {
        let k = table.cardinality;
        let logits = g.slice_cols(decoded, pos, pos + k)?;
        pos += k;
        // log-sum-exp with a constant per-row shift
        let lv = g.value(logits);
        let shift: Vec<f64> = (0..rows)
            .map(|i| lv.row_slice(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let mut onehot = vec![0.0; rows * k];
        for i in 0..rows {
            onehot[i * k + targets.categories[i * n_cat + f] as usize] = 1.0;
        }
        let shift = g.constant(Tensor::matrix(rows, 1, shift)?);
        let shift_b = g.broadcast_cols(shift, k)?;
        let centered = g.sub(logits, shift_b)?;
        let e = g.exp(centered);
        let s = g.sum_cols(e);
        let lse = g.log(s);
        let lse = g.add(lse, shift)?;
        let onehot = g.constant(Tensor::matrix(rows, k, onehot)?);
        let picked = g.mul(logits, onehot)?;
        let picked = g.sum_cols(picked);
        let ce = g.sub(lse, picked)?;
        ce_parts.push(g.sum(ce));
    }
    let categorical = match ce_parts.split_first() {
        None => g.constant(Tensor::scalar(0.0)),
        Some((&first, rest)) => {
            let mut acc = first;
            for &p in rest {
                acc = g.add(acc, p)?;
            }
            g.scale(acc, inv_b)
        }
    };

    // 0.5 * sum(mu^2 + exp(logvar) - 1 - logvar)
    let mu2 = g.square(mu);
    let var = g.exp(logvar);
    let a = g.add(mu2, var)?;
    let a = g.sub(a, logvar)?;
    let a = g.add_scalar(a, -1.0);
    let s = g.sum(a);
    let kl = g.scale(s, 0.5 * inv_b);

    let recon = g.add(continuous, categorical)?;
    let weighted_kl = g.scale(kl, kl_weight);
    let total = g.add(recon, weighted_kl)?;
    Ok(ElboTerms {
        continuous,
        categorical,
        kl,
        total,
    })
}

/// Loss value and parameter gradients for one batch with fixed noise `eps`.
pub fn elbo_loss(
    model: &VaeModel,
    targets: &ElboTargets<'_>,
    eps: &Tensor,
    kl_weight: f64,
) -> Result<(f64, Vec<Tensor>)> {
    let mut g = Graph::new();
    let vars = model.params.bind(&mut g);
    let x = g.constant(targets.x.clone());
    let fwd = model.forward_graph(&mut g, &vars, x, Some(eps))?;
    let terms = negative_elbo(&mut g, model, targets, x, fwd.mu, fwd.logvar, fwd.decoded, kl_weight)?;
    let loss = g.value(terms.total).item();
    let grads = g.grad(terms.total, &vars)?;
    Ok((loss, grads.into_iter().map(|v| g.value(v).clone()).collect()))
}
