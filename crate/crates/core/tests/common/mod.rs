//! Independent reference implementations used by the integration tests and
//! the acceptance run. Nothing here calls into the code it checks beyond
//! evaluating forward values.
#![allow(dead_code)]

use dualpath_core::autodiff::{Graph, Tensor, Var};
use dualpath_core::Result;

pub mod cases;
pub mod criteria;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

/// `|a - b| / max(|a|, |b|, 1e-3)`, worst over all entries.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-3))
        .fold(0.0, f64::max)
}

/// Central differences of a scalar function.
pub fn numeric_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn random_tensor(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

pub type Builder = dyn Fn(&mut Graph, &[Var]) -> Result<Var>;

/// Worst relative error between backward and central differences for
/// `sum(w * build(inputs))` with fixed random weights `w`. Also returns the
/// debug name of the output node's op.
pub fn check_op(inputs: &[Tensor], build: &Builder, seed: u64) -> (f64, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = build(&mut g, &vars).unwrap();
    let op = format!("{:?}", g.op(out));
    let op = op.split(['(', ' ', '{']).next().unwrap().to_string();
    let [r, c] = g.value(out).dims();
    let w = random_tensor(r, c, -1.0, 1.0, &mut rng);
    let wv = g.constant(w.clone());
    let prod = g.mul(out, wv).unwrap();
    let loss = g.sum(prod);
    let grads = g.backward(loss).unwrap();

    let mut worst: f64 = 0.0;
    for (k, t) in inputs.iter().enumerate() {
        let f = |x: &[f64]| {
            let mut g = Graph::new();
            let vars: Vec<Var> = inputs
                .iter()
                .enumerate()
                .map(|(j, u)| {
                    if j == k {
                        g.param(Tensor::new(u.shape().to_vec(), x.to_vec()).unwrap())
                    } else {
                        g.param(u.clone())
                    }
                })
                .collect();
            let out = build(&mut g, &vars).unwrap();
            g.value(out)
                .data()
                .iter()
                .zip(w.data())
                .map(|(a, b)| a * b)
                .sum::<f64>()
        };
        let numeric = numeric_gradient(&f, t.data(), FD_STEP);
        let analytic = grads.get(vars[k]).unwrap().data().to_vec();
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    (worst, op)
}

/// Plain softmax.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Shapley values as the average marginal contribution over all `n!`
/// orderings.
pub fn permutation_shapley(n: usize, v: &dyn Fn(u32) -> f64) -> Vec<f64> {
    let perms = permutations(n);
    let mut phi = vec![0.0; n];
    for p in &perms {
        let mut s = 0u32;
        for &i in p {
            phi[i] += v(s | 1 << i) - v(s);
            s |= 1 << i;
        }
    }
    phi.iter().map(|x| x / perms.len() as f64).collect()
}

/// Value table of a game with arbitrary coalition values.
pub fn random_game(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..1usize << n).map(|_| rng.random_range(-5.0..5.0)).collect()
}

/// Value table of a model with pairwise interactions, absent features held
/// at a zero baseline.
pub fn quadratic_game(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| rng.random_range(-0.5..0.5)).collect())
        .collect();
    (0..1u32 << n)
        .map(|s| {
            let z: Vec<f64> = (0..n).map(|i| if s & 1 << i != 0 { x[i] } else { 0.0 }).collect();
            let mut v: f64 = a.iter().zip(&z).map(|(a, z)| a * z).sum();
            for i in 0..n {
                for j in i + 1..n {
                    v += b[i][j] * z[i] * z[j];
                }
            }
            v
        })
        .collect()
}
