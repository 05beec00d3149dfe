use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{softmax_rows, Activation, Graph, Mlp, ParameterSet, Tensor, Var};
use crate::codec::{Codec, FeatureVector, Transaction};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeArchitecture {
    pub latent_dim: usize,
    pub hidden: usize,
    pub hidden_layers: usize,
    pub activation: Activation,
}

impl Default for VaeArchitecture {
    fn default() -> Self {
        VaeArchitecture {
            latent_dim: 3,
            hidden: 64,
            hidden_layers: 2,
            activation: Activation::Tanh,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    kind: String,
    architecture: VaeArchitecture,
    encoder: Mlp,
    decoder: Mlp,
}

/// Encoder `x -> (mu, log var)` and decoder `z -> (continuous, per-field
/// logits)`. The decoder's categorical heads are turned back into feature
/// space as softmax-weighted mixtures of embedding rows.
#[derive(Clone, Debug)]
pub struct VaeModel {
    pub codec: Arc<Codec>,
    pub architecture: VaeArchitecture,
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub params: ParameterSet,
    tables: Vec<Tensor>,
}

/// Graph nodes of one forward pass.
pub struct VaeForward {
    pub mu: Var,
    pub logvar: Var,
    pub z: Var,
    pub decoded: Var,
}

impl VaeModel {
    pub fn new<R: Rng>(codec: Arc<Codec>, architecture: VaeArchitecture, rng: &mut R) -> Result<Self> {
        if architecture.latent_dim == 0 || architecture.hidden == 0 {
            return Err(Error::contract("latent and hidden sizes must be positive"));
        }
        let n = codec.dim();
        let mut widths = vec![n];
        widths.extend(std::iter::repeat_n(architecture.hidden, architecture.hidden_layers));
        widths.push(2 * architecture.latent_dim);
        let mut params = ParameterSet::new();
        let encoder = Mlp::init("encoder", &widths, architecture.activation, &mut params, rng)?;
        let mut widths = vec![architecture.latent_dim];
        widths.extend(std::iter::repeat_n(architecture.hidden, architecture.hidden_layers));
        widths.push(Self::decoder_width(&codec));
        let decoder = Mlp::init("decoder", &widths, architecture.activation, &mut params, rng)?;
        let tables = codec.tables.iter().map(|t| t.as_tensor()).collect();
        Ok(VaeModel {
            codec,
            architecture,
            encoder,
            decoder,
            params,
            tables,
        })
    }

    fn decoder_width(codec: &Codec) -> usize {
        codec.schema.continuous.len() + codec.tables.iter().map(|t| t.cardinality).sum::<usize>()
    }

    pub fn version(&self) -> u64 {
        self.params.version()
    }

    pub fn latent_dim(&self) -> usize {
        self.architecture.latent_dim
    }

    pub fn dim(&self) -> usize {
        self.codec.dim()
    }

    fn n_cont(&self) -> usize {
        self.codec.schema.continuous.len()
    }

    /// Training-time forward pass with reparameterised `z = mu + sigma * eps`.
    /// `eps` of `None` uses the posterior mean.
    pub fn forward_graph(&self, g: &mut Graph, vars: &[Var], x: Var, eps: Option<&Tensor>) -> Result<VaeForward> {
        let l = self.latent_dim();
        let enc = self.encoder.forward(g, vars, x)?;
        let mu = g.slice_cols(enc, 0, l)?;
        let logvar = g.slice_cols(enc, l, 2 * l)?;
        let z = match eps {
            Some(eps) => {
                let half = g.scale(logvar, 0.5);
                let std = g.exp(half);
                let e = g.constant(eps.clone());
                let noise = g.mul(std, e)?;
                g.add(mu, noise)?
            }
            None => mu,
        };
        let decoded = self.decoder.forward(g, vars, z)?;
        Ok(VaeForward { mu, logvar, z, decoded })
    }

    /// Feature-space reconstruction from decoder output, on the graph.
    pub fn reconstruct_graph(&self, g: &mut Graph, decoded: Var) -> Result<Var> {
        let nc = self.n_cont();
        let mut parts = vec![g.slice_cols(decoded, 0, nc)?];
        let mut pos = nc;
        for table in &self.tables {
            let k = table.rows();
            let logits = g.slice_cols(decoded, pos, pos + k)?;
            let p = g.softmax(logits);
            let t = g.constant(table.clone());
            parts.push(g.matmul(p, t)?);
            pos += k;
        }
        g.concat_cols(&parts)
    }

    /// Per-row squared reconstruction error `||x - x_hat||^2` on the graph,
    /// decoding from the posterior mean. Returns `[rows, 1]`.
    pub fn error_graph(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<Var> {
        let fwd = self.forward_graph(g, vars, x, None)?;
        let xh = self.reconstruct_graph(g, fwd.decoded)?;
        let d = g.sub(x, xh)?;
        let sq = g.square(d);
        Ok(g.sum_cols(sq))
    }

    /// Deterministic reconstruction of a `[rows, dim]` batch (posterior mean).
    pub fn reconstruct(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.dim() {
            return Err(Error::Shape {
                op: "reconstruct",
                left: vec![self.dim()],
                right: x.shape().to_vec(),
            });
        }
        let l = self.latent_dim();
        let enc = self.encoder.forward_plain(&self.params, x)?;
        let mu = enc.slice_cols(0, l)?;
        let dec = self.decoder.forward_plain(&self.params, &mu)?;
        let nc = self.n_cont();
        let mut parts = vec![dec.slice_cols(0, nc)?];
        let mut pos = nc;
        for table in &self.tables {
            let k = table.rows();
            let p = softmax_rows(&dec.slice_cols(pos, pos + k)?);
            parts.push(p.matmul(table)?);
            pos += k;
        }
        let refs: Vec<&Tensor> = parts.iter().collect();
        Tensor::concat_cols(&refs)
    }

    /// Reconstruction error of every row of `x`.
    pub fn reconstruction_errors(&self, x: &Tensor) -> Result<Vec<f64>> {
        let xh = self.reconstruct(x)?;
        Ok((0..x.rows())
            .map(|i| squared_distance(x.row_slice(i), xh.row_slice(i)))
            .collect())
    }

    pub fn reconstruction_error(&self, x: &FeatureVector) -> Result<f64> {
        if x.layout.as_ref() != self.codec.layout().as_ref() {
            return Err(Error::contract("feature vector layout does not match model"));
        }
        Ok(self.reconstruction_errors(&Tensor::row(x.values.clone()))?[0])
    }

    pub fn score_transaction(&self, t: &Transaction) -> Result<f64> {
        let fv = self.codec.encode(t)?;
        self.reconstruction_error(&fv)
    }

    /// Errors for many transactions, batched.
    pub fn score_transactions(&self, txs: &[Transaction]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(txs.len());
        for chunk in txs.chunks(1024) {
            out.extend(self.reconstruction_errors(&self.codec.encode_batch(chunk)?)?);
        }
        Ok(out)
    }

    pub fn sample_eps<R: Rng + ?Sized>(&self, rows: usize, rng: &mut R) -> Tensor {
        let l = self.latent_dim();
        let data = (0..rows * l).map(|_| StandardNormal.sample(rng)).collect();
        Tensor::matrix(rows, l, data).expect("positive dims")
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let meta = CheckpointMeta {
            kind: "vae".into(),
            architecture: self.architecture.clone(),
            encoder: self.encoder.clone(),
            decoder: self.decoder.clone(),
        };
        self.params
            .save(&dir.join("vae.ckpt"), &serde_json::to_string(&meta)?)?;
        self.codec.save(&dir.join("codec.json"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let codec = Arc::new(Codec::load(&dir.join("codec.json"))?);
        let (params, meta) = ParameterSet::load(&dir.join("vae.ckpt"))?;
        let meta: CheckpointMeta =
            serde_json::from_str(&meta).map_err(|e| Error::Checkpoint(format!("bad vae metadata: {e}")))?;
        if meta.kind != "vae" {
            return Err(Error::Checkpoint(format!(
                "expected a vae checkpoint, found `{}`",
                meta.kind
            )));
        }
        let (mut encoder, mut decoder) = (meta.encoder, meta.decoder);
        encoder.attach(&params)?;
        decoder.attach(&params)?;
        if encoder.input_dim() != codec.dim() || decoder.output_dim() != Self::decoder_width(&codec) {
            return Err(Error::Checkpoint("checkpoint does not match codec layout".into()));
        }
        let tables = codec.tables.iter().map(|t| t.as_tensor()).collect();
        Ok(VaeModel {
            codec,
            architecture: meta.architecture,
            encoder,
            decoder,
            params,
            tables,
        })
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
