use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::game::{explain_exact, explain_sampled, Game, MAX_EXACT_PLAYERS};
use super::Explanation;
use crate::autodiff::Tensor;
use crate::codec::{FeatureLayout, Transaction};
use crate::error::{Error, Result};
use crate::vae::VaeModel;

pub const DEFAULT_BACKGROUND_SIZE: usize = 100;

/// Legitimate reference rows used to marginalise absent fields.
#[derive(Clone, Debug, PartialEq)]
pub struct BackgroundSet {
    pub transactions: Vec<Transaction>,
    pub encoded: Tensor,
}

impl BackgroundSet {
    pub fn new(model: &VaeModel, transactions: Vec<Transaction>) -> Result<Self> {
        if transactions.is_empty() {
            return Err(Error::contract("background set must not be empty"));
        }
        let encoded = model.codec.encode_batch(&transactions)?;
        Ok(BackgroundSet { transactions, encoded })
    }

    /// `size` transactions drawn without replacement from `calibration`.
    pub fn sample(model: &VaeModel, calibration: &[Transaction], size: usize, seed: u64) -> Result<Self> {
        if calibration.is_empty() || size == 0 {
            return Err(Error::contract("background set must not be empty"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = sample(&mut rng, calibration.len(), size.min(calibration.len())).into_vec();
        idx.sort_unstable();
        Self::new(model, idx.into_iter().map(|i| calibration[i].clone()).collect())
    }

    pub fn len(&self) -> usize {
        self.transactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transactions.is_empty()
    }
}

/// `v(S)`: mean reconstruction error of `x` after replacing every field
/// outside `S` with each background row in turn.
pub struct VaeValueFunction<'a> {
    model: &'a VaeModel,
    x: Vec<f64>,
    background: &'a BackgroundSet,
    layout: &'a FeatureLayout,
}

impl<'a> VaeValueFunction<'a> {
    pub fn new(model: &'a VaeModel, x: &Transaction, background: &'a BackgroundSet) -> Result<Self> {
        if background.is_empty() {
            return Err(Error::contract("background set must not be empty"));
        }
        if background.encoded.cols() != model.dim() {
            return Err(Error::contract("background does not match the model layout"));
        }
        Ok(VaeValueFunction {
            model,
            x: model.codec.encode(x)?.values,
            background,
            layout: model.codec.layout(),
        })
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.layout.fields.iter().map(|f| f.name.clone()).collect()
    }

    fn compose(&self, coalition: u32, out: &mut Vec<f64>) {
        for b in 0..self.background.len() {
            let start = out.len();
            out.extend_from_slice(self.background.encoded.row_slice(b));
            for (i, f) in self.layout.fields.iter().enumerate() {
                if coalition & (1 << i) != 0 {
                    out[start + f.start..start + f.end].copy_from_slice(&self.x[f.start..f.end]);
                }
            }
        }
    }
}

impl Game for VaeValueFunction<'_> {
    fn num_players(&self) -> usize {
        self.layout.fields.len()
    }

    fn value(&self, coalition: u32) -> Result<f64> {
        Ok(self.values(&[coalition])?[0])
    }

    fn values(&self, coalitions: &[u32]) -> Result<Vec<f64>> {
        let b = self.background.len();
        let d = self.model.dim();
        let per_chunk = (4096 / b).max(1);
        let mut out = Vec::with_capacity(coalitions.len());
        let mut rows = Vec::new();
        for chunk in coalitions.chunks(per_chunk) {
            rows.clear();
            for &c in chunk {
                self.compose(c, &mut rows);
            }
            let x = Tensor::matrix(chunk.len() * b, d, std::mem::take(&mut rows))?;
            let e = self.model.reconstruction_errors(&x)?;
            out.extend(e.chunks(b).map(|c| c.iter().sum::<f64>() / b as f64));
            rows = x.into_data();
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplainConfig {
    /// Field counts above this use permutation sampling.
    pub exact_cutover: usize,
    pub permutations: usize,
    pub seed: u64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            exact_cutover: MAX_EXACT_PLAYERS,
            permutations: 2_000,
            seed: 0,
        }
    }
}

/// Explains the reconstruction error of `t`, exactly when the schema is small
/// enough and by sampling otherwise.
pub fn explain_transaction(
    model: &VaeModel,
    background: &BackgroundSet,
    t: &Transaction,
    config: &ExplainConfig,
) -> Result<Explanation> {
    let game = VaeValueFunction::new(model, t, background)?;
    let names = game.feature_names();
    let mut e = if game.num_players() <= config.exact_cutover.min(MAX_EXACT_PLAYERS) {
        explain_exact(&game, &names, t.id)?
    } else {
        explain_sampled(&game, &names, t.id, config.permutations, config.seed ^ t.id)?
    };
    e.model_version = model.version();
    Ok(e)
}
