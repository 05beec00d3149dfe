//! Finite-difference cases for every graph op, random MLPs and the
//! gradient-norm penalty.

use dualpath_core::autodiff::{input_gradient_norm, Activation, Graph, Mlp, ParameterSet, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_op, numeric_gradient, random_tensor, relative_error, Builder, FD_STEP};

pub struct OpCase {
    pub name: &'static str,
    pub inputs: Vec<Tensor>,
    pub build: Box<Builder>,
}

fn case(
    name: &'static str,
    inputs: Vec<Tensor>,
    build: impl Fn(&mut Graph, &[Var]) -> dualpath_core::Result<Var> + 'static,
) -> OpCase {
    OpCase {
        name,
        inputs,
        build: Box::new(build),
    }
}

/// One case per graph op. Inputs avoid kinks (relu at 0) and domain edges.
pub fn op_cases(seed: u64) -> Vec<OpCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = |r, c| random_tensor(r, c, -1.5, 1.5, &mut rng);
    let a = t(3, 4);
    let b = t(3, 4);
    let m = t(4, 2);
    let row = t(1, 4);
    let col = t(3, 1);
    let s = t(1, 1);
    let narrow = t(3, 2);
    let mut pos_rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
    let pos = random_tensor(3, 4, 0.3, 2.0, &mut pos_rng);
    let mut away = t(3, 4);
    for v in away.data_mut() {
        *v = v.signum() * (v.abs() + 0.2);
    }
    vec![
        case("matmul", vec![a.clone(), m.clone()], |g, v| g.matmul(v[0], v[1])),
        case("transpose", vec![a.clone()], |g, v| Ok(g.transpose(v[0]))),
        case("add", vec![a.clone(), b.clone()], |g, v| g.add(v[0], v[1])),
        case("sub", vec![a.clone(), b.clone()], |g, v| g.sub(v[0], v[1])),
        case("mul", vec![a.clone(), b.clone()], |g, v| g.mul(v[0], v[1])),
        case("div", vec![a.clone(), pos.clone()], |g, v| g.div(v[0], v[1])),
        case("neg", vec![a.clone()], |g, v| Ok(g.neg(v[0]))),
        case("scale", vec![a.clone()], |g, v| Ok(g.scale(v[0], -2.5))),
        case("add_scalar", vec![a.clone()], |g, v| Ok(g.add_scalar(v[0], 0.7))),
        case("exp", vec![a.clone()], |g, v| Ok(g.exp(v[0]))),
        case("log", vec![pos.clone()], |g, v| Ok(g.log(v[0]))),
        case("tanh", vec![a.clone()], |g, v| Ok(g.tanh(v[0]))),
        case("sigmoid", vec![a.clone()], |g, v| Ok(g.sigmoid(v[0]))),
        case("relu", vec![away], |g, v| Ok(g.relu(v[0]))),
        case("square", vec![a.clone()], |g, v| Ok(g.square(v[0]))),
        case("sqrt", vec![pos.clone()], |g, v| Ok(g.sqrt(v[0]))),
        case("softmax", vec![a.clone()], |g, v| Ok(g.softmax(v[0]))),
        case("sum", vec![a.clone()], |g, v| Ok(g.sum(v[0]))),
        case("mean", vec![a.clone()], |g, v| Ok(g.mean(v[0]))),
        case("sum_rows", vec![a.clone()], |g, v| Ok(g.sum_rows(v[0]))),
        case("sum_cols", vec![a.clone()], |g, v| Ok(g.sum_cols(v[0]))),
        case("broadcast_rows", vec![row.clone()], |g, v| g.broadcast_rows(v[0], 3)),
        case("broadcast_cols", vec![col], |g, v| g.broadcast_cols(v[0], 5)),
        case("broadcast_scalar", vec![s], |g, v| g.broadcast_scalar(v[0], 2, 3)),
        case("add_row", vec![a.clone(), row], |g, v| g.add_row(v[0], v[1])),
        case("concat_cols", vec![a.clone(), narrow], |g, v| {
            g.concat_cols(&[v[0], v[1]])
        }),
        case("slice_cols", vec![a.clone()], |g, v| g.slice_cols(v[0], 1, 3)),
        case("pad_cols", vec![a], |g, v| g.pad_cols(v[0], 2, 7)),
    ]
}

/// Runs every op case and returns `(name, op node, worst error)`.
pub fn run_op_cases(seed: u64) -> Vec<(&'static str, String, f64)> {
    op_cases(seed)
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let (err, op) = check_op(&c.inputs, c.build.as_ref(), seed + i as u64);
            (c.name, op, err)
        })
        .collect()
}

/// Worst error of parameter and input gradients of `sum(w * mlp(x))` for a
/// random MLP with three weight layers.
pub fn mlp_gradcheck(seed: u64, activation: Activation) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let widths: Vec<usize> = (0..4).map(|_| rng.random_range(2..7)).collect();
    let mut params = ParameterSet::new();
    let mlp = Mlp::init("m", &widths, activation, &mut params, &mut rng).unwrap();
    for i in 0..params.len() {
        for v in params.tensor_mut(i).data_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    let x = random_tensor(4, widths[0], -1.0, 1.0, &mut rng);
    let w = random_tensor(4, widths[3], -1.0, 1.0, &mut rng);
    let value = |p: &ParameterSet, x: &Tensor| -> f64 {
        let y = mlp.forward_plain(p, x).unwrap();
        y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
    };

    let mut g = Graph::new();
    let vars = params.bind(&mut g);
    let xv = g.param(x.clone());
    let out = mlp.forward(&mut g, &vars, xv).unwrap();
    let wv = g.constant(w.clone());
    let prod = g.mul(out, wv).unwrap();
    let loss = g.sum(prod);
    let grads = g.backward(loss).unwrap();

    let mut worst = 0.0f64;
    for (i, var) in vars.iter().enumerate() {
        let f = |d: &[f64]| {
            let mut p = params.clone();
            p.tensor_mut(i).data_mut().copy_from_slice(d);
            value(&p, &x)
        };
        let numeric = numeric_gradient(&f, params.tensor(i).data(), FD_STEP);
        worst = worst.max(relative_error(grads.get(*var).unwrap().data(), &numeric));
    }
    let f = |d: &[f64]| value(&params, &Tensor::new(x.shape().to_vec(), d.to_vec()).unwrap());
    let numeric = numeric_gradient(&f, x.data(), FD_STEP);
    worst.max(relative_error(grads.get(xv).unwrap().data(), &numeric))
}

/// Hand-written input-gradient norm of a tanh MLP with scalar output, one
/// value per row of `x`.
fn reference_input_gradient_norms(params: &ParameterSet, widths: &[usize], x: &Tensor) -> Vec<f64> {
    let layers = widths.len() - 1;
    (0..x.rows())
        .map(|r| {
            let mut hs: Vec<Vec<f64>> = vec![x.row_slice(r).to_vec()];
            for l in 0..layers {
                let w = params.tensor(2 * l).data();
                let b = params.tensor(2 * l + 1).data();
                let (din, dout) = (widths[l], widths[l + 1]);
                let h = &hs[l];
                let mut a: Vec<f64> = (0..dout)
                    .map(|j| b[j] + (0..din).map(|i| h[i] * w[i * dout + j]).sum::<f64>())
                    .collect();
                if l + 1 < layers {
                    a.iter_mut().for_each(|v| *v = v.tanh());
                }
                hs.push(a);
            }
            // d out / d h_l, walking back from the linear output
            let mut grad = vec![1.0];
            for l in (0..layers).rev() {
                let w = params.tensor(2 * l).data();
                let (din, dout) = (widths[l], widths[l + 1]);
                let da: Vec<f64> = if l + 1 < layers {
                    (0..dout)
                        .map(|j| grad[j] * (1.0 - hs[l + 1][j] * hs[l + 1][j]))
                        .collect()
                } else {
                    grad.clone()
                };
                grad = (0..din)
                    .map(|i| (0..dout).map(|j| w[i * dout + j] * da[j]).sum())
                    .collect();
            }
            grad.iter().map(|v| v * v).sum::<f64>().sqrt()
        })
        .collect()
}

/// Worst error of the gradient of `mean((||d D / d x|| - 1)^2)` with respect
/// to the critic parameters, differentiated twice through the graph versus
/// central differences of a hand-written input-gradient norm.
pub fn double_backward_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let widths = vec![5, 6, 4, 1];
    let mut params = ParameterSet::new();
    let mlp = Mlp::init("critic", &widths, Activation::Tanh, &mut params, &mut rng).unwrap();
    for i in 0..params.len() {
        for v in params.tensor_mut(i).data_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    let x = random_tensor(3, 5, -1.0, 1.0, &mut rng);
    let penalty = |p: &ParameterSet| -> f64 {
        let n = reference_input_gradient_norms(p, &widths, &x);
        n.iter().map(|v| (v - 1.0).powi(2)).sum::<f64>() / n.len() as f64
    };

    let mut g = Graph::new();
    let vars = params.bind(&mut g);
    let xv = g.param(x.clone());
    let out = mlp.forward(&mut g, &vars, xv).unwrap();
    let norms = input_gradient_norm(&mut g, out, xv).unwrap();
    let shifted = g.add_scalar(norms, -1.0);
    let sq = g.square(shifted);
    let loss = g.mean(sq);
    assert!((g.value(loss).item() - penalty(&params)).abs() < 1e-12);
    let grads = g.backward(loss).unwrap();

    let mut worst = 0.0f64;
    for (i, var) in vars.iter().enumerate() {
        let f = |d: &[f64]| {
            let mut p = params.clone();
            p.tensor_mut(i).data_mut().copy_from_slice(d);
            penalty(&p)
        };
        let numeric = numeric_gradient(&f, params.tensor(i).data(), FD_STEP);
        worst = worst.max(relative_error(grads.get(*var).unwrap().data(), &numeric));
    }
    worst
}
