use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{negative_elbo, ElboTargets};
use super::model::{VaeArchitecture, VaeModel};
use super::threshold::{calibrate_threshold, ThresholdConfig};
use crate::autodiff::{AdamConfig, AdamState, Graph, Tensor};
use crate::codec::{Codec, Transaction};
use crate::error::{Error, Result};

/// Encoded rows with the categorical indices they were built from.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub x: Vec<f64>,
    pub categories: Vec<u32>,
    pub dim: usize,
    pub n_cat: usize,
}

impl TrainingSet {
    pub fn from_transactions(codec: &Codec, txs: &[Transaction]) -> Result<Self> {
        let dim = codec.dim();
        let n_cat = codec.schema.categorical.len();
        let mut x = vec![0.0; txs.len() * dim];
        let mut categories = Vec::with_capacity(txs.len() * n_cat);
        for (t, row) in txs.iter().zip(x.chunks_mut(dim)) {
            codec.encode_into(t, row)?;
            categories.extend_from_slice(&t.categorical);
        }
        Ok(TrainingSet {
            x,
            categories,
            dim,
            n_cat,
        })
    }

    pub fn len(&self) -> usize {
        self.x.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    /// Gathers rows into a batch tensor plus category targets.
    pub fn gather(&self, idx: &[usize]) -> (Tensor, Vec<u32>) {
        let mut x = Vec::with_capacity(idx.len() * self.dim);
        let mut c = Vec::with_capacity(idx.len() * self.n_cat);
        for &i in idx {
            x.extend_from_slice(self.row(i));
            c.extend_from_slice(&self.categories[i * self.n_cat..(i + 1) * self.n_cat]);
        }
        (Tensor::matrix(idx.len(), self.dim, x).expect("non-empty batch"), c)
    }

    pub fn all(&self) -> (Tensor, Vec<u32>) {
        let idx: Vec<usize> = (0..self.len()).collect();
        self.gather(&idx)
    }

    pub fn extend(&mut self, other: &TrainingSet) {
        self.x.extend_from_slice(&other.x);
        self.categories.extend_from_slice(&other.categories);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeTrainConfig {
    pub architecture: VaeArchitecture,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub kl_weight: f64,
    pub validation_fraction: f64,
    /// Training rows used per epoch (a fresh random subset each epoch);
    /// `None` uses the whole training split.
    pub rows_per_epoch: Option<usize>,
    pub seed: u64,
}

impl Default for VaeTrainConfig {
    fn default() -> Self {
        VaeTrainConfig {
            architecture: VaeArchitecture::default(),
            epochs: 40,
            batch_size: 128,
            adam: AdamConfig::vae(),
            kl_weight: 1.0,
            validation_fraction: 0.1,
            rows_per_epoch: Some(32_768),
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub initial_validation_loss: f64,
    pub epochs: Vec<EpochStats>,
    pub model_version: u64,
    pub train_rows: usize,
    pub validation_rows: usize,
}

impl TrainingReport {
    pub fn final_validation_loss(&self) -> f64 {
        self.epochs
            .last()
            .map(|e| e.validation_loss)
            .unwrap_or(self.initial_validation_loss)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Negative ELBO over a whole set with noise drawn from `seed`.
pub fn evaluate_loss(model: &VaeModel, set: &TrainingSet, kl_weight: f64, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(1024) {
        let (x, c) = set.gather(chunk);
        let eps = model.sample_eps(chunk.len(), &mut rng);
        let mut g = Graph::new();
        let vars = model.params.bind_frozen(&mut g);
        let xv = g.constant(x.clone());
        let fwd = model.forward_graph(&mut g, &vars, xv, Some(&eps))?;
        let t = ElboTargets { x: &x, categories: &c };
        let terms = negative_elbo(&mut g, model, &t, xv, fwd.mu, fwd.logvar, fwd.decoded, kl_weight)?;
        total += g.value(terms.total).item() * chunk.len() as f64;
    }
    Ok(total / set.len() as f64)
}

/// Stops a run whose validation loss is NaN, or above 10x the initial value
/// for three consecutive epochs.
#[derive(Debug)]
pub(crate) struct DivergenceGuard {
    initial: f64,
    strikes: usize,
}

impl DivergenceGuard {
    pub(crate) fn new(initial: f64) -> Self {
        DivergenceGuard { initial, strikes: 0 }
    }

    pub(crate) fn check(&mut self, epoch: usize, loss: f64, history: &[EpochStats]) -> Result<()> {
        if !loss.is_finite() {
            return Err(Error::training(format!(
                "loss diverged to {loss} at epoch {epoch}; history {history:?}"
            )));
        }
        if loss > 10.0 * self.initial.abs() {
            self.strikes += 1;
        } else {
            self.strikes = 0;
        }
        if self.strikes >= 3 {
            return Err(Error::training(format!(
                "loss above 10x initial ({}) for 3 epochs; history {history:?}",
                self.initial
            )));
        }
        Ok(())
    }
}

/// Runs one Adam step on a batch and returns the batch loss.
#[allow(clippy::too_many_arguments)]
pub(crate) fn train_step(
    model: &mut VaeModel,
    adam: &mut AdamState,
    x: &Tensor,
    cats: &[u32],
    eps: &Tensor,
    kl_weight: f64,
    hinge: Option<(&Tensor, f64, f64)>,
    batch_index: usize,
) -> Result<f64> {
    let mut g = Graph::new();
    let vars = model.params.bind(&mut g);
    let xv = g.constant(x.clone());
    let fwd = model.forward_graph(&mut g, &vars, xv, Some(eps))?;
    let t = ElboTargets { x, categories: cats };
    let terms = negative_elbo(&mut g, model, &t, xv, fwd.mu, fwd.logvar, fwd.decoded, kl_weight)?;
    let mut loss = terms.total;
    if let Some((syn, margin, weight)) = hinge {
        let sv = g.constant(syn.clone());
        let err = model.error_graph(&mut g, &vars, sv)?;
        let neg = g.neg(err);
        let gap = g.add_scalar(neg, margin);
        let h = g.relu(gap);
        let h = g.mean(h);
        let h = g.scale(h, weight);
        loss = g.add(loss, h)?;
    }
    let value = g.value(loss).item();
    if !value.is_finite() {
        return Err(Error::training(format!("non-finite loss at batch {batch_index}")));
    }
    let grads = g.grad(loss, &vars)?;
    let grads: Vec<Tensor> = grads.into_iter().map(|v| g.value(v).clone()).collect();
    adam.step(&mut model.params, &grads)
        .map_err(|e| Error::training(format!("batch {batch_index}: {e}")))?;
    Ok(value)
}

/// Fits a fresh model on legitimate transactions only.
pub fn train(
    codec: Arc<Codec>,
    legitimate: &[Transaction],
    config: &VaeTrainConfig,
) -> Result<(VaeModel, TrainingReport)> {
    if legitimate.len() < 2 {
        return Err(Error::contract("training needs at least two legitimate transactions"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..legitimate.len()).collect();
    order.shuffle(&mut rng);
    let n_val =
        ((legitimate.len() as f64 * config.validation_fraction).round() as usize).clamp(1, legitimate.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let pick = |idx: &[usize]| idx.iter().map(|&i| legitimate[i].clone()).collect::<Vec<_>>();
    let train_set = TrainingSet::from_transactions(&codec, &pick(train_idx))?;
    let val_set = TrainingSet::from_transactions(&codec, &pick(val_idx))?;

    let mut model = VaeModel::new(codec, config.architecture.clone(), &mut rng)?;
    let mut adam = AdamState::new(&model.params, config.adam);
    let val_seed = config.seed ^ 0x5eed;
    let initial = evaluate_loss(&model, &val_set, config.kl_weight, val_seed)?;
    let mut guard = DivergenceGuard::new(initial);
    let mut epochs = Vec::new();
    let mut batch_index = 0;
    for epoch in 0..config.epochs {
        let mut idx: Vec<usize> = (0..train_set.len()).collect();
        idx.shuffle(&mut rng);
        if let Some(n) = config.rows_per_epoch {
            idx.truncate(n.max(1));
        }
        let mut sum = 0.0;
        let mut rows = 0;
        for chunk in idx.chunks(config.batch_size) {
            let (x, c) = train_set.gather(chunk);
            let eps = model.sample_eps(chunk.len(), &mut rng);
            let l = train_step(&mut model, &mut adam, &x, &c, &eps, config.kl_weight, None, batch_index)?;
            batch_index += 1;
            sum += l * chunk.len() as f64;
            rows += chunk.len();
        }
        let validation_loss = evaluate_loss(&model, &val_set, config.kl_weight, val_seed)?;
        epochs.push(EpochStats {
            epoch,
            train_loss: sum / rows as f64,
            validation_loss,
        });
        guard.check(epoch, validation_loss, &epochs)?;
    }
    let report = TrainingReport {
        initial_validation_loss: initial,
        model_version: model.version(),
        epochs,
        train_rows: train_set.len(),
        validation_rows: val_set.len(),
    };
    Ok((model, report))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticMode {
    /// Push synthetic fraud above a reconstruction-error margin.
    Hinge,
    /// Leave weights alone for synthetic samples; only recalibrate.
    RecalibrateOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FineTuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub rows_per_epoch: usize,
    pub adam: AdamConfig,
    pub kl_weight: f64,
    /// Include confirmed false positives in the legitimate set.
    pub train_on_false_positives: bool,
    pub synthetic_mode: SyntheticMode,
    /// Hinge margin as a multiple of the current threshold.
    pub margin_factor: f64,
    pub hinge_weight: f64,
    pub quantile: f64,
    pub seed: u64,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        FineTuneConfig {
            epochs: 3,
            batch_size: 128,
            rows_per_epoch: 8_192,
            adam: AdamConfig::vae(),
            kl_weight: 1.0,
            train_on_false_positives: true,
            synthetic_mode: SyntheticMode::Hinge,
            margin_factor: 2.0,
            hinge_weight: 1.0,
            quantile: 0.995,
            seed: 11,
        }
    }
}

/// Inputs to a fine-tuning pass.
pub struct FineTuneData<'a> {
    pub legitimate: &'a [Transaction],
    pub false_positives: &'a [Transaction],
    pub synthetic_fraud: &'a [Transaction],
    pub calibration: &'a [Transaction],
}

/// Continues ELBO training with false positives folded into the legitimate
/// set, pushes synthetic fraud beyond `margin_factor * threshold`, then
/// recalibrates the threshold.
pub fn fine_tune(
    model: &VaeModel,
    threshold: &ThresholdConfig,
    data: &FineTuneData<'_>,
    config: &FineTuneConfig,
) -> Result<(VaeModel, ThresholdConfig, TrainingReport)> {
    if data.legitimate.is_empty() {
        return Err(Error::contract("fine-tuning needs legitimate transactions"));
    }
    let codec = Arc::clone(&model.codec);
    let mut model = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let legit = TrainingSet::from_transactions(&codec, data.legitimate)?;
    let fps = if config.train_on_false_positives && !data.false_positives.is_empty() {
        Some(TrainingSet::from_transactions(&codec, data.false_positives)?)
    } else {
        None
    };
    let synthetic = if config.synthetic_mode == SyntheticMode::Hinge && !data.synthetic_fraud.is_empty() {
        Some(TrainingSet::from_transactions(&codec, data.synthetic_fraud)?)
    } else {
        None
    };
    let margin = config.margin_factor * threshold.tau;
    let mut adam = AdamState::new(&model.params, config.adam);
    let val_seed = config.seed ^ 0x5eed;
    let initial = evaluate_loss(&model, &legit, config.kl_weight, val_seed)?;
    let mut guard = DivergenceGuard::new(initial);
    let mut epochs = Vec::new();
    let mut batch_index = 0;
    // false positives ride along in every batch, a few at a time
    let fp_per_batch = fps.as_ref().map_or(0, |f| f.len().min(16));
    for epoch in 0..config.epochs {
        let mut idx: Vec<usize> = (0..legit.len()).collect();
        idx.shuffle(&mut rng);
        idx.truncate(config.rows_per_epoch.max(1));
        let mut fp_cursor = 0;
        let mut syn_order: Vec<usize> = synthetic.as_ref().map_or(Vec::new(), |s| (0..s.len()).collect());
        syn_order.shuffle(&mut rng);
        let mut syn_cursor = 0;
        let mut sum = 0.0;
        let mut rows = 0;
        for chunk in idx.chunks(config.batch_size) {
            let (mut x, mut c) = legit.gather(chunk);
            if let Some(f) = &fps {
                let pick: Vec<usize> = (0..fp_per_batch).map(|k| (fp_cursor + k) % f.len()).collect();
                fp_cursor += fp_per_batch;
                let (fx, fc) = f.gather(&pick);
                x = Tensor::concat_rows(&x, &fx)?;
                c.extend(fc);
            }
            let syn_batch = synthetic.as_ref().map(|s| {
                let take = config.batch_size.min(s.len()).max(1);
                let pick: Vec<usize> = (0..take).map(|k| syn_order[(syn_cursor + k) % s.len()]).collect();
                syn_cursor += take;
                s.gather(&pick).0
            });
            let eps = model.sample_eps(x.rows(), &mut rng);
            let hinge = syn_batch.as_ref().map(|s| (s, margin, config.hinge_weight));
            let l = train_step(
                &mut model,
                &mut adam,
                &x,
                &c,
                &eps,
                config.kl_weight,
                hinge,
                batch_index,
            )?;
            batch_index += 1;
            sum += l * x.rows() as f64;
            rows += x.rows();
        }
        let validation_loss = evaluate_loss(&model, &legit, config.kl_weight, val_seed)?;
        epochs.push(EpochStats {
            epoch,
            train_loss: sum / rows.max(1) as f64,
            validation_loss,
        });
        guard.check(epoch, validation_loss, &epochs)?;
    }
    let new_threshold = calibrate_threshold(&model, data.calibration, config.quantile)?;
    let report = TrainingReport {
        initial_validation_loss: initial,
        model_version: model.version(),
        epochs,
        train_rows: legit.len(),
        validation_rows: legit.len(),
    };
    Ok((model, new_threshold, report))
}
