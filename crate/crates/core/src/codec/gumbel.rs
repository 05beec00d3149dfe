//! Gumbel-Softmax relaxation of categorical sampling.
//!
//! `y_i = exp((l_i + g_i) / t) / sum_j exp((l_j + g_j) / t)` with logits `l`
//! standing in for `log(pi)`, Gumbel(0, 1) noise `g` and temperature `t`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GumbelConfig {
    pub temperature: f64,
    /// Straight-through: one-hot forward value, soft gradient.
    pub hard: bool,
}

impl GumbelConfig {
    pub fn soft(temperature: f64) -> Self {
        GumbelConfig {
            temperature,
            hard: false,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::contract(format!(
                "gumbel temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// One Gumbel(0, 1) draw.
pub fn gumbel<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // random::<f64>() lies in [0, 1); keep u strictly inside (0, 1).
    let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    -(-u.ln()).ln()
}

pub fn sample_gumbel_with<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    (0..k).map(|_| gumbel(rng)).collect()
}

/// `k` Gumbel(0, 1) values, reproducible per seed.
pub fn sample_gumbel(k: usize, seed: u64) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::contract("sample_gumbel needs k >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample_gumbel_with(&mut rng, k))
}

/// Relaxed (or straight-through hard) categorical sample for one logit vector.
pub fn gumbel_softmax(logits: &[f64], noise: &[f64], config: GumbelConfig) -> Result<Vec<f64>> {
    config.check()?;
    if logits.len() < 2 || noise.len() != logits.len() {
        return Err(Error::contract(format!(
            "gumbel_softmax needs k >= 2 logits and matching noise ({} vs {})",
            logits.len(),
            noise.len()
        )));
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::contract("non-finite logit"));
    }
    let z: Vec<f64> = logits
        .iter()
        .zip(noise)
        .map(|(l, g)| (l + g) / config.temperature)
        .collect();
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = e.iter().sum();
    let y: Vec<f64> = e.iter().map(|v| v / total).collect();
    if config.hard {
        let arg = argmax(&y);
        return Ok((0..y.len()).map(|i| if i == arg { 1.0 } else { 0.0 }).collect());
    }
    Ok(y)
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("non-empty")
}

/// Row-wise Gumbel-Softmax on the graph. `noise` matches `logits` in shape.
/// In hard mode the forward value is one-hot while gradients follow the soft
/// sample.
pub fn gumbel_softmax_graph(g: &mut Graph, logits: Var, noise: &Tensor, config: GumbelConfig) -> Result<Var> {
    config.check()?;
    let [_, k] = g.value(logits).dims();
    if k < 2 {
        return Err(Error::contract("gumbel_softmax needs k >= 2"));
    }
    if !g.value(logits).is_finite() {
        return Err(Error::contract("non-finite logit"));
    }
    let n = g.constant(noise.clone());
    let z = g.add(logits, n)?;
    let z = g.scale(z, 1.0 / config.temperature);
    let soft = g.softmax(z);
    if !config.hard {
        return Ok(soft);
    }
    let y = g.value(soft);
    let mut shift = vec![0.0; y.numel()];
    for i in 0..y.rows() {
        let row = y.row_slice(i);
        let arg = argmax(row);
        for (j, &v) in row.iter().enumerate() {
            shift[i * k + j] = if j == arg { 1.0 - v } else { -v };
        }
    }
    let shift = g.constant(Tensor::matrix(y.rows(), k, shift)?);
    g.add(soft, shift)
}

/// Exponential temperature decay with a floor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSchedule {
    pub initial: f64,
    pub min: f64,
    pub rate: f64,
}

impl Default for TemperatureSchedule {
    fn default() -> Self {
        TemperatureSchedule {
            initial: 1.0,
            min: 0.1,
            rate: 1e-4,
        }
    }
}

impl TemperatureSchedule {
    pub fn at(&self, step: u64) -> f64 {
        (self.initial * (-self.rate * step as f64).exp()).max(self.min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_equal_noise_give_uniform() {
        let y = gumbel_softmax(&[0.3; 4], &[0.7; 4], GumbelConfig::soft(1.0)).unwrap();
        for v in y {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn low_temperature_approaches_one_hot() {
        let logits = [0.2, -0.4, 0.1, 0.0];
        let noise = sample_gumbel(4, 11).unwrap();
        let y = gumbel_softmax(&logits, &noise, GumbelConfig::soft(0.01)).unwrap();
        assert!(y.iter().cloned().fold(0.0, f64::max) >= 0.99);
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(gumbel_softmax(&[0.0, 1.0], &[0.0, 0.0], GumbelConfig::soft(0.0)).is_err());
        assert!(gumbel_softmax(&[0.0, f64::NAN], &[0.0, 0.0], GumbelConfig::soft(1.0)).is_err());
        assert!(gumbel_softmax(&[0.0], &[0.0], GumbelConfig::soft(1.0)).is_err());
    }

    #[test]
    fn seeded_noise_reproducible() {
        let a = sample_gumbel(16, 42).unwrap();
        let b = sample_gumbel(16, 42).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn hard_mode_forward_is_one_hot_with_soft_gradient() {
        let mut g = Graph::new();
        let logits = g.param(Tensor::row(vec![0.5, 1.5, -0.2]));
        let noise = Tensor::row(vec![0.0; 3]);
        let cfg = GumbelConfig {
            temperature: 0.5,
            hard: true,
        };
        let y = gumbel_softmax_graph(&mut g, logits, &noise, cfg).unwrap();
        assert_eq!(g.value(y).data(), &[0.0, 1.0, 0.0]);
        let w = g.constant(Tensor::row(vec![1.0, -2.0, 3.0]));
        let prod = g.mul(y, w).unwrap();
        let root = g.sum(prod);
        let grads = g.backward(root).unwrap();
        let grad = grads.get(logits).unwrap();
        assert!(grad.data().iter().any(|v| v.abs() > 1e-6));
    }

    #[test]
    fn anneal_schedule() {
        let s = TemperatureSchedule::default();
        assert_eq!(s.at(0), 1.0);
        assert_eq!(s.at(u64::MAX / 2), 0.1);
        assert!((s.at(10_000) - (-1.0f64).exp()).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for step in (0..100_000).step_by(997) {
            let t = s.at(step);
            assert!(t <= prev);
            prev = t;
        }
    }
}
