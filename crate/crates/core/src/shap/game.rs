use std::collections::HashMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Explanation, Method};
use crate::error::{Error, Result};

/// Largest player count handled by full subset enumeration.
pub const MAX_EXACT_PLAYERS: usize = 15;

/// A cooperative game over `num_players` players; coalitions are bitmasks.
pub trait Game {
    fn num_players(&self) -> usize;

    fn value(&self, coalition: u32) -> Result<f64>;

    /// Values of many coalitions; override to batch the work.
    fn values(&self, coalitions: &[u32]) -> Result<Vec<f64>> {
        coalitions.iter().map(|&c| self.value(c)).collect()
    }
}

/// A game defined by a closure.
pub struct FnGame<F> {
    pub players: usize,
    pub f: F,
}

impl<F: Fn(u32) -> f64> Game for FnGame<F> {
    fn num_players(&self) -> usize {
        self.players
    }

    fn value(&self, coalition: u32) -> Result<f64> {
        Ok((self.f)(coalition))
    }
}

/// `|S|! (n - |S| - 1)! / n!`.
pub fn shapley_weight(s: usize, n: usize) -> f64 {
    // product form keeps the factorials from overflowing
    let mut w = 1.0 / n as f64;
    for k in 1..=s {
        w *= k as f64 / (n - k) as f64;
    }
    w
}

fn check_players(n: usize, names: &[String]) -> Result<()> {
    if n == 0 || names.len() != n {
        return Err(Error::contract(format!(
            "game has {n} players but {} feature names",
            names.len()
        )));
    }
    Ok(())
}

/// Exact Shapley values by enumerating every coalition.
pub fn explain_exact<G: Game + ?Sized>(game: &G, names: &[String], transaction_id: u64) -> Result<Explanation> {
    let start = Instant::now();
    let n = game.num_players();
    check_players(n, names)?;
    if n > MAX_EXACT_PLAYERS {
        return Err(Error::Cost(format!(
            "{n} fields need 2^{n} coalition values; exact enumeration stops at {MAX_EXACT_PLAYERS}, use explain_sampled"
        )));
    }
    let all: Vec<u32> = (0..1u32 << n).collect();
    let v = game.values(&all)?;
    let weights: Vec<f64> = (0..n).map(|s| shapley_weight(s, n)).collect();
    let mut phi = vec![0.0; n];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1u32 << i;
        for s in all.iter().copied().filter(|s| s & bit == 0) {
            *p += weights[s.count_ones() as usize] * (v[(s | bit) as usize] - v[s as usize]);
        }
    }
    Ok(Explanation {
        transaction_id,
        feature_names: names.to_vec(),
        attributions: phi,
        base_value: v[0],
        model_output: v[(1usize << n) - 1],
        method: Method::Exact,
        samples: None,
        confidence_bound: None,
        compute_micros: start.elapsed().as_secs_f64() * 1e6,
        model_version: 0,
    })
}

/// Monte-Carlo permutation estimate from `permutations` random orderings,
/// rescaled so attributions plus base sum exactly to the full value.
pub fn explain_sampled<G: Game + ?Sized>(
    game: &G,
    names: &[String],
    transaction_id: u64,
    permutations: usize,
    seed: u64,
) -> Result<Explanation> {
    let start = Instant::now();
    let n = game.num_players();
    check_players(n, names)?;
    if n > 31 {
        return Err(Error::Cost(format!("{n} players exceed the coalition bitmask")));
    }
    if permutations < 2 * n {
        return Err(Error::contract(format!(
            "sample budget {permutations} below the minimum 2n = {}",
            2 * n
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut orders = Vec::with_capacity(permutations);
    let mut needed: Vec<u32> = vec![0];
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..permutations {
        order.shuffle(&mut rng);
        let mut s = 0u32;
        for &i in &order {
            s |= 1 << i;
            needed.push(s);
        }
        orders.push(order.clone());
    }
    needed.sort_unstable();
    needed.dedup();
    let values = game.values(&needed)?;
    let v: HashMap<u32, f64> = needed.into_iter().zip(values).collect();

    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    for order in &orders {
        let mut s = 0u32;
        for &i in order {
            let next = s | (1 << i);
            let d = v[&next] - v[&s];
            sum[i] += d;
            sum_sq[i] += d * d;
            s = next;
        }
    }
    let m = permutations as f64;
    let mut phi: Vec<f64> = sum.iter().map(|s| s / m).collect();
    let bound = (0..n)
        .map(|i| {
            let var = (sum_sq[i] / m - phi[i] * phi[i]).max(0.0);
            1.96 * (var / m).sqrt()
        })
        .fold(0.0, f64::max);
    let base = v[&0];
    let full = v[&((1u32 << n) - 1)];
    let residual = full - base - phi.iter().sum::<f64>();
    let mass: f64 = phi.iter().map(|p| p.abs()).sum();
    for p in &mut phi {
        *p += if mass > 0.0 {
            residual * p.abs() / mass
        } else {
            residual / n as f64
        };
    }
    Ok(Explanation {
        transaction_id,
        feature_names: names.to_vec(),
        attributions: phi,
        base_value: base,
        model_output: full,
        method: Method::Sampled,
        samples: Some(permutations),
        confidence_bound: Some(bound),
        compute_micros: start.elapsed().as_secs_f64() * 1e6,
        model_version: 0,
    })
}
