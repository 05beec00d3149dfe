use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamConfig, AdamState, Tensor};
use crate::codec::{Codec, GumbelConfig, TemperatureSchedule, Transaction};
use crate::error::{Error, Result};

use super::loss::{critic_loss, generator_loss, interpolate};
use super::model::{GanArchitecture, GanModel};

/// Fewest real fraud rows a synthesizer may be trained on.
pub const MIN_REAL_EXAMPLES: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanTrainConfig {
    pub architecture: GanArchitecture,
    pub lambda: f64,
    pub n_critic: usize,
    /// Generator updates; each is preceded by `n_critic` critic updates.
    pub generator_steps: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub temperature: TemperatureSchedule,
    /// Straight-through one-hot categorical heads during training.
    pub hard_gumbel: bool,
    /// Share of each real batch drawn from the buffer when both sources exist.
    pub buffer_fraction: f64,
    /// Samples drawn for the report's marginals and coverage.
    pub report_samples: usize,
    pub seed: u64,
}

impl Default for GanTrainConfig {
    fn default() -> Self {
        GanTrainConfig {
            architecture: GanArchitecture::default(),
            lambda: 10.0,
            n_critic: 5,
            generator_steps: 1_000,
            batch_size: 32,
            adam: AdamConfig::adversarial(),
            temperature: TemperatureSchedule::default(),
            hard_gumbel: true,
            buffer_fraction: 0.5,
            report_samples: 10_000,
            seed: 23,
        }
    }
}

impl GanTrainConfig {
    pub fn total_steps(&self) -> usize {
        self.generator_steps * (self.n_critic + 1)
    }
}

/// Real fraud used for adversarial training.
#[derive(Clone, Copy, Debug)]
pub struct RealFraud<'a> {
    /// Expert-confirmed entries from the adversarial buffer.
    pub buffer: &'a [Transaction],
    /// Simulator-generated cold-start examples.
    pub seed_set: &'a [Transaction],
}

impl RealFraud<'_> {
    pub fn len(&self) -> usize {
        self.buffer.len() + self.seed_set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NormStatistics {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl NormStatistics {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        NormStatistics {
            mean,
            std: var.sqrt(),
            min: values.iter().cloned().fold(f64::INFINITY, f64::min),
            max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldMarginal {
    pub field: String,
    pub counts: Vec<usize>,
    /// Shannon entropy in nats.
    pub entropy: f64,
    /// Categories present among real examples.
    pub real_support: Vec<u32>,
    /// Real-support categories never generated.
    pub missing: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub sample_count: usize,
    pub real_examples: usize,
    pub critic_steps: usize,
    pub generator_steps: usize,
    /// Critic Wasserstein estimate after each generator step.
    pub wasserstein_trace: Vec<f64>,
    /// Mean interpolate gradient norm after each generator step.
    pub gradient_norm_trace: Vec<f64>,
    /// Gradient norms at fresh interpolates once training has finished.
    pub final_gradient_norm: NormStatistics,
    pub marginals: Vec<FieldMarginal>,
    /// Share of real-support categories (all fields) that were generated.
    pub mode_coverage: f64,
    pub final_temperature: f64,
    pub model_version: u64,
}

impl SynthesisReport {
    pub fn marginal(&self, field: &str) -> Option<&FieldMarginal> {
        self.marginals.iter().find(|m| m.field == field)
    }

    pub fn all_finite(&self) -> bool {
        self.wasserstein_trace
            .iter()
            .chain(&self.gradient_norm_trace)
            .all(|v| v.is_finite())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

struct RealSampler {
    buffer: Option<Tensor>,
    seed: Option<Tensor>,
    buffer_fraction: f64,
}

impl RealSampler {
    fn new(codec: &Codec, real: RealFraud<'_>, buffer_fraction: f64) -> Result<Self> {
        let enc = |t: &[Transaction]| -> Result<Option<Tensor>> {
            if t.is_empty() {
                Ok(None)
            } else {
                codec.encode_batch(t).map(Some)
            }
        };
        Ok(RealSampler {
            buffer: enc(real.buffer)?,
            seed: enc(real.seed_set)?,
            buffer_fraction,
        })
    }

    fn batch<R: Rng>(&self, rows: usize, rng: &mut R) -> Tensor {
        let mut out = Vec::new();
        let mut cols = 0;
        for _ in 0..rows {
            let src = match (&self.buffer, &self.seed) {
                (Some(b), Some(s)) => {
                    if rng.random_bool(self.buffer_fraction) {
                        b
                    } else {
                        s
                    }
                }
                (Some(b), None) => b,
                (None, Some(s)) => s,
                (None, None) => unreachable!("sampler built from a non-empty source"),
            };
            cols = src.cols();
            out.extend_from_slice(src.row_slice(rng.random_range(0..src.rows())));
        }
        Tensor::matrix(rows, cols, out).expect("positive dims")
    }
}

/// Trains (or, given `init`, continues training) the synthesizer on real
/// fraud, alternating `n_critic` critic steps with one generator step.
pub fn train_gan(
    codec: Arc<Codec>,
    real: RealFraud<'_>,
    config: &GanTrainConfig,
    init: Option<&GanModel>,
) -> Result<(GanModel, SynthesisReport)> {
    if real.len() < MIN_REAL_EXAMPLES {
        return Err(Error::ColdStart {
            available: real.len(),
            required: MIN_REAL_EXAMPLES,
        });
    }
    if config.batch_size == 0 {
        return Err(Error::contract("gan batch size must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = match init {
        Some(m) => {
            if m.codec.dim() != codec.dim() {
                return Err(Error::contract("initial gan does not match the codec"));
            }
            m.clone()
        }
        None => GanModel::new(
            Arc::clone(&codec),
            config.architecture.clone(),
            config.lambda,
            config.n_critic,
            &mut rng,
        )?,
    };
    let sampler = RealSampler::new(&codec, real, config.buffer_fraction)?;
    let mut critic_adam = AdamState::new(&model.critic_params, config.adam);
    let mut gen_adam = AdamState::new(&model.generator_params, config.adam);
    let b = config.batch_size;
    let mut wasserstein_trace = Vec::with_capacity(config.generator_steps);
    let mut gradient_norm_trace = Vec::with_capacity(config.generator_steps);
    let mut critic_steps = 0;
    let mut temperature = config.temperature.at(0);
    for step in 0..config.generator_steps {
        temperature = config.temperature.at(step as u64);
        let gumbel = GumbelConfig {
            temperature,
            hard: config.hard_gumbel,
        };
        let mut last = None;
        for _ in 0..model.n_critic {
            let real_batch = sampler.batch(b, &mut rng);
            let z = model.sample_noise(b, &mut rng);
            let gn = model.sample_gumbel_noise(b, &mut rng);
            let fake = model.generate(&z, &gn)?;
            let eps: Vec<f64> = (0..b).map(|_| rng.random_range(0.0..=1.0)).collect();
            let (terms, grads) = critic_loss(&model, &real_batch, &fake, &eps, critic_steps)?;
            critic_adam
                .step(&mut model.critic_params, &grads)
                .map_err(|e| Error::training(format!("critic step {critic_steps}: {e}")))?;
            critic_steps += 1;
            last = Some(terms);
        }
        let z = model.sample_noise(b, &mut rng);
        let gn = model.sample_gumbel_noise(b, &mut rng);
        let (_, grads) = generator_loss(&model, &z, &gn, gumbel, step)?;
        gen_adam
            .step(&mut model.generator_params, &grads)
            .map_err(|e| Error::training(format!("generator step {step}: {e}")))?;
        let terms = last.expect("n_critic >= 1");
        wasserstein_trace.push(terms.wasserstein);
        gradient_norm_trace.push(terms.mean_gradient_norm);
    }
    model.temperature = temperature;

    let final_gradient_norm = interpolate_norms(&model, &sampler, 1_024, &mut rng)?;
    let (marginals, mode_coverage) = marginals(&model, real, config.report_samples, config.seed ^ 0xa11)?;
    let report = SynthesisReport {
        sample_count: config.report_samples,
        real_examples: real.len(),
        critic_steps,
        generator_steps: config.generator_steps,
        wasserstein_trace,
        gradient_norm_trace,
        final_gradient_norm,
        marginals,
        mode_coverage,
        final_temperature: temperature,
        model_version: model.version(),
    };
    if !report.all_finite() {
        return Err(Error::training("non-finite value in gan training traces"));
    }
    Ok((model, report))
}

fn interpolate_norms<R: Rng>(model: &GanModel, sampler: &RealSampler, n: usize, rng: &mut R) -> Result<NormStatistics> {
    let real = sampler.batch(n, rng);
    let z = model.sample_noise(n, rng);
    let gn = model.sample_gumbel_noise(n, rng);
    let fake = model.generate(&z, &gn)?;
    let eps: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
    let x = interpolate(&real, &fake, &eps)?;
    let norms = critic_input_gradient_norms(model, &x)?;
    Ok(NormStatistics::of(&norms))
}

/// Per-row norm of the critic's input gradient.
pub fn critic_input_gradient_norms(model: &GanModel, x: &Tensor) -> Result<Vec<f64>> {
    let mut g = crate::autodiff::Graph::new();
    let cvars = model.critic_params.bind_frozen(&mut g);
    let xv = g.param(x.clone());
    let d = model.critic_graph(&mut g, &cvars, xv)?;
    let n = crate::autodiff::input_gradient_norm(&mut g, d, xv)?;
    Ok(g.value(n).data().to_vec())
}

fn entropy(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum()
}

fn marginals(model: &GanModel, real: RealFraud<'_>, samples: usize, seed: u64) -> Result<(Vec<FieldMarginal>, f64)> {
    let synth = model.synthesize(samples, seed, 0)?;
    let schema = &model.codec.schema;
    let mut out = Vec::with_capacity(schema.categorical.len());
    let (mut covered, mut support_total) = (0usize, 0usize);
    for (f, field) in schema.categorical.iter().enumerate() {
        let mut counts = vec![0usize; field.cardinality as usize];
        for t in &synth {
            counts[t.categorical[f] as usize] += 1;
        }
        let mut real_support: Vec<u32> = real
            .buffer
            .iter()
            .chain(real.seed_set)
            .map(|t| t.categorical[f])
            .collect();
        real_support.sort_unstable();
        real_support.dedup();
        let missing: Vec<u32> = real_support
            .iter()
            .copied()
            .filter(|&c| counts[c as usize] == 0)
            .collect();
        covered += real_support.len() - missing.len();
        support_total += real_support.len();
        out.push(FieldMarginal {
            field: field.name.clone(),
            entropy: entropy(&counts),
            counts,
            real_support,
            missing,
        });
    }
    Ok((out, covered as f64 / support_total.max(1) as f64))
}
