use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Graph, Mlp, ParameterSet, Tensor, Var};
use crate::codec::{argmax, gumbel_softmax_graph, sample_gumbel_with, Codec, GumbelConfig, Transaction};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanArchitecture {
    pub noise_dim: usize,
    pub hidden: usize,
    pub hidden_layers: usize,
    pub activation: Activation,
}

impl Default for GanArchitecture {
    fn default() -> Self {
        GanArchitecture {
            noise_dim: 16,
            hidden: 64,
            hidden_layers: 2,
            activation: Activation::Tanh,
        }
    }
}

/// Generator and critic of the adversarial path. The generator emits
/// continuous columns directly and one Gumbel-Softmax head per categorical
/// field, mapped through the frozen embedding table so its output lives in
/// the same feature space as encoded transactions.
#[derive(Clone, Debug)]
pub struct GanModel {
    pub codec: Arc<Codec>,
    pub architecture: GanArchitecture,
    pub generator: Mlp,
    pub critic: Mlp,
    pub generator_params: ParameterSet,
    pub critic_params: ParameterSet,
    /// Gradient-penalty coefficient.
    pub lambda: f64,
    pub n_critic: usize,
    /// Gumbel temperature reached by training; used for soft sampling.
    pub temperature: f64,
    tables: Vec<Tensor>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    kind: String,
    architecture: GanArchitecture,
    generator: Mlp,
    critic: Mlp,
    lambda: f64,
    n_critic: usize,
    temperature: f64,
}

impl GanModel {
    pub fn new<R: Rng>(
        codec: Arc<Codec>,
        architecture: GanArchitecture,
        lambda: f64,
        n_critic: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if !(lambda > 0.0) || n_critic == 0 || architecture.noise_dim == 0 {
            return Err(Error::contract(
                "gan needs lambda > 0, n_critic >= 1 and a noise dimension",
            ));
        }
        let hidden = std::iter::repeat_n(architecture.hidden, architecture.hidden_layers);
        let mut widths = vec![architecture.noise_dim];
        widths.extend(hidden.clone());
        widths.push(Self::head_width(&codec));
        let mut generator_params = ParameterSet::new();
        let generator = Mlp::init(
            "generator",
            &widths,
            architecture.activation,
            &mut generator_params,
            rng,
        )?;
        let mut widths = vec![codec.dim()];
        widths.extend(hidden);
        widths.push(1);
        let mut critic_params = ParameterSet::new();
        let critic = Mlp::init("critic", &widths, architecture.activation, &mut critic_params, rng)?;
        let tables = codec.tables.iter().map(|t| t.as_tensor()).collect();
        Ok(GanModel {
            codec,
            architecture,
            generator,
            critic,
            generator_params,
            critic_params,
            lambda,
            n_critic,
            temperature: 1.0,
            tables,
        })
    }

    /// Replaces the critic, e.g. with a hand-built linear one in tests.
    pub fn with_critic(mut self, critic: Mlp, params: ParameterSet) -> Result<Self> {
        if critic.input_dim() != self.codec.dim() || critic.output_dim() != 1 {
            return Err(Error::contract("critic must map the feature dimension to one score"));
        }
        self.critic = critic;
        self.critic_params = params;
        Ok(self)
    }

    fn head_width(codec: &Codec) -> usize {
        codec.schema.continuous.len() + Self::logit_width(codec)
    }

    fn logit_width(codec: &Codec) -> usize {
        codec.tables.iter().map(|t| t.cardinality).sum()
    }

    pub fn dim(&self) -> usize {
        self.codec.dim()
    }

    pub fn noise_dim(&self) -> usize {
        self.architecture.noise_dim
    }

    pub fn version(&self) -> u64 {
        self.generator_params.version()
    }

    pub fn sample_noise<R: Rng + ?Sized>(&self, rows: usize, rng: &mut R) -> Tensor {
        let data = (0..rows * self.noise_dim())
            .map(|_| StandardNormal.sample(rng))
            .collect();
        Tensor::matrix(rows, self.noise_dim(), data).expect("positive dims")
    }

    /// Gumbel noise for every categorical head, `[rows, sum of cardinalities]`.
    pub fn sample_gumbel_noise<R: Rng + ?Sized>(&self, rows: usize, rng: &mut R) -> Tensor {
        let k = Self::logit_width(&self.codec);
        Tensor::matrix(rows, k, sample_gumbel_with(rng, rows * k)).expect("positive dims")
    }

    /// Generator output in feature space, on the graph.
    pub fn generate_graph(
        &self,
        g: &mut Graph,
        gvars: &[Var],
        noise: Var,
        gumbel_noise: &Tensor,
        gumbel: GumbelConfig,
    ) -> Result<Var> {
        let nc = self.codec.schema.continuous.len();
        let head = self.generator.forward(g, gvars, noise)?;
        let mut parts = vec![g.slice_cols(head, 0, nc)?];
        let mut pos = nc;
        let mut noise_pos = 0;
        for table in &self.tables {
            let k = table.rows();
            let logits = g.slice_cols(head, pos, pos + k)?;
            let n = gumbel_noise.slice_cols(noise_pos, noise_pos + k)?;
            let y = gumbel_softmax_graph(g, logits, &n, gumbel)?;
            let t = g.constant(table.clone());
            parts.push(g.matmul(y, t)?);
            pos += k;
            noise_pos += k;
        }
        g.concat_cols(&parts)
    }

    pub fn critic_graph(&self, g: &mut Graph, cvars: &[Var], x: Var) -> Result<Var> {
        self.critic.forward(g, cvars, x)
    }

    /// Hard samples in feature space: each categorical slice is exactly one
    /// embedding row picked by Gumbel-max.
    pub fn generate(&self, noise: &Tensor, gumbel_noise: &Tensor) -> Result<Tensor> {
        let head = self.generator.forward_plain(&self.generator_params, noise)?;
        let nc = self.codec.schema.continuous.len();
        let d = self.dim();
        let mut out = Vec::with_capacity(noise.rows() * d);
        for i in 0..noise.rows() {
            let row = head.row_slice(i);
            let gn = gumbel_noise.row_slice(i);
            out.extend_from_slice(&row[..nc]);
            let mut pos = nc;
            let mut npos = 0;
            for table in &self.codec.tables {
                let k = table.cardinality;
                let z: Vec<f64> = (0..k).map(|j| row[pos + j] + gn[npos + j]).collect();
                out.extend_from_slice(table.row(argmax(&z)));
                pos += k;
                npos += k;
            }
        }
        Tensor::matrix(noise.rows(), d, out)
    }

    pub fn critic_scores(&self, x: &Tensor) -> Result<Vec<f64>> {
        Ok(self.critic.forward_plain(&self.critic_params, x)?.into_data())
    }

    /// `count` schema-valid synthetic transactions. Ids start at `first_id`.
    pub fn synthesize(&self, count: usize, seed: u64, first_id: u64) -> Result<Vec<Transaction>> {
        if count == 0 {
            return Ok(Vec::new());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        let mut id = first_id;
        while out.len() < count {
            let rows = (count - out.len()).min(1024);
            let z = self.sample_noise(rows, &mut rng);
            let gn = self.sample_gumbel_noise(rows, &mut rng);
            let x = self.generate(&z, &gn)?;
            for i in 0..rows {
                let mut t = self.codec.decode_transaction(x.row_slice(i), id, u32::MAX, 0.0)?;
                for (v, f) in t.continuous.iter_mut().zip(&self.codec.schema.continuous) {
                    if f.normalization == crate::codec::Normalization::LogThenZScore {
                        *v = v.max(0.0);
                    }
                }
                t.amount = self
                    .codec
                    .schema
                    .continuous_index("amount")
                    .map_or(t.amount, |a| t.continuous[a]);
                self.codec.schema.validate_transaction(&t)?;
                out.push(t);
                id += 1;
            }
        }
        Ok(out)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let meta = CheckpointMeta {
            kind: "gan".into(),
            architecture: self.architecture.clone(),
            generator: self.generator.clone(),
            critic: self.critic.clone(),
            lambda: self.lambda,
            n_critic: self.n_critic,
            temperature: self.temperature,
        };
        let meta = serde_json::to_string(&meta)?;
        self.generator_params.save(&dir.join("generator.ckpt"), &meta)?;
        self.critic_params.save(&dir.join("critic.ckpt"), &meta)?;
        self.codec.save(&dir.join("codec.json"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let codec = Arc::new(Codec::load(&dir.join("codec.json"))?);
        let (generator_params, meta) = ParameterSet::load(&dir.join("generator.ckpt"))?;
        let (critic_params, _) = ParameterSet::load(&dir.join("critic.ckpt"))?;
        let meta: CheckpointMeta =
            serde_json::from_str(&meta).map_err(|e| Error::Checkpoint(format!("bad gan metadata: {e}")))?;
        if meta.kind != "gan" {
            return Err(Error::Checkpoint(format!(
                "expected a gan checkpoint, found `{}`",
                meta.kind
            )));
        }
        let (mut generator, mut critic) = (meta.generator, meta.critic);
        generator.attach(&generator_params)?;
        critic.attach(&critic_params)?;
        if generator.output_dim() != Self::head_width(&codec) || critic.input_dim() != codec.dim() {
            return Err(Error::Checkpoint("gan checkpoint does not match codec layout".into()));
        }
        let tables = codec.tables.iter().map(|t| t.as_tensor()).collect();
        Ok(GanModel {
            codec,
            architecture: meta.architecture,
            generator,
            critic,
            generator_params,
            critic_params,
            lambda: meta.lambda,
            n_critic: meta.n_critic,
            temperature: meta.temperature,
            tables,
        })
    }
}
