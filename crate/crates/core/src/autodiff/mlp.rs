use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::params::ParameterSet;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    fn apply_graph(self, g: &mut Graph, x: Var) -> Var {
        match self {
            Activation::Tanh => g.tanh(x),
            Activation::Relu => g.relu(x),
            Activation::Sigmoid => g.sigmoid(x),
            Activation::Identity => x,
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => super::graph::sigmoid(x),
            Activation::Identity => x,
        }
    }
}

/// Fully connected network whose weights live in a shared [`ParameterSet`]
/// under `{prefix}.{layer}.weight` (`[in, out]`) and `{prefix}.{layer}.bias`
/// (`[1, out]`). The output layer is linear.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub prefix: String,
    pub widths: Vec<usize>,
    pub activation: Activation,
    /// Index of each layer's weight in the parameter set; bias follows it.
    #[serde(skip)]
    slots: Vec<usize>,
}

impl Mlp {
    /// Registers freshly initialised layers in `params`.
    pub fn init<R: Rng>(
        prefix: &str,
        widths: &[usize],
        activation: Activation,
        params: &mut ParameterSet,
        rng: &mut R,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::contract(format!("invalid mlp widths {widths:?}")));
        }
        let mut slots = Vec::new();
        for (l, pair) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            let w: Vec<f64> = (0..fan_in * fan_out).map(|_| normal.sample(rng)).collect();
            let wi = params.insert(format!("{prefix}.{l}.weight"), Tensor::matrix(fan_in, fan_out, w)?)?;
            params.insert(format!("{prefix}.{l}.bias"), Tensor::zeros(1, fan_out))?;
            slots.push(wi);
        }
        Ok(Mlp {
            prefix: prefix.to_string(),
            widths: widths.to_vec(),
            activation,
            slots,
        })
    }

    /// Locates this network's layers in an existing parameter set.
    pub fn attach(&mut self, params: &ParameterSet) -> Result<()> {
        let mut slots = Vec::new();
        for (l, pair) in self.widths.windows(2).enumerate() {
            let wname = format!("{}.{l}.weight", self.prefix);
            let bname = format!("{}.{l}.bias", self.prefix);
            let wi = params
                .index_of(&wname)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{wname}`")))?;
            if params.tensor(wi).dims() != [pair[0], pair[1]] {
                return Err(Error::Checkpoint(format!("`{wname}` has wrong shape")));
            }
            if params.index_of(&bname) != Some(wi + 1) || params.tensor(wi + 1).dims() != [1, pair[1]] {
                return Err(Error::Checkpoint(format!("`{bname}` missing or misplaced")));
            }
            slots.push(wi);
        }
        self.slots = slots;
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("at least two widths")
    }

    /// Parameter indices owned by this network.
    pub fn param_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.slots.iter().flat_map(|&w| [w, w + 1])
    }

    /// Graph forward pass; `vars` are the bound parameters of the whole set.
    pub fn forward(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<Var> {
        let mut h = x;
        let last = self.slots.len() - 1;
        for (l, &wi) in self.slots.iter().enumerate() {
            let z = g.matmul(h, vars[wi])?;
            let z = g.add_row(z, vars[wi + 1])?;
            h = if l == last {
                z
            } else {
                self.activation.apply_graph(g, z)
            };
        }
        Ok(h)
    }

    /// Allocation-light forward pass over plain tensors for inference.
    pub fn forward_plain(&self, params: &ParameterSet, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        let last = self.slots.len() - 1;
        for (l, &wi) in self.slots.iter().enumerate() {
            let mut z = h.matmul(params.tensor(wi))?;
            let bias = params.tensor(wi + 1).data();
            let act = if l == last {
                Activation::Identity
            } else {
                self.activation
            };
            let cols = z.cols();
            for (j, v) in z.data_mut().iter_mut().enumerate() {
                *v = act.apply(*v + bias[j % cols]);
            }
            h = z;
        }
        Ok(h)
    }
}

/// Per-row Euclidean norm of `d sum(output) / d input`, kept on the graph so it
/// can be differentiated again. Returns a `[rows, 1]` node.
pub fn input_gradient_norm(g: &mut Graph, output: Var, input: Var) -> Result<Var> {
    if !g.requires_grad(input) {
        return Err(Error::contract("input must be a grad-requiring leaf"));
    }
    let total = g.sum(output);
    let grad = g.grad(total, &[input])?[0];
    let sq = g.square(grad);
    let s = g.sum_cols(sq);
    // Keeps the norm differentiable where the gradient vanishes.
    let s = g.add_scalar(s, 1e-24);
    Ok(g.sqrt(s))
}

/// Euclidean norm of the critic's gradient with respect to its input at
/// `point` (a single row).
pub fn gradient_norm_of_critic(critic: &Mlp, params: &ParameterSet, point: &Tensor) -> Result<f64> {
    if point.cols() != critic.input_dim() {
        return Err(Error::Shape {
            op: "gradient_norm_of_critic",
            left: vec![critic.input_dim()],
            right: point.shape().to_vec(),
        });
    }
    let mut g = Graph::new();
    let vars = params.bind_frozen(&mut g);
    let x = g.param(point.clone());
    let out = critic.forward(&mut g, &vars, x)?;
    let n = input_gradient_norm(&mut g, out, x)?;
    Ok(g.value(n).data()[0])
}
