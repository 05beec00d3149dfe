mod common;

use common::criteria::gumbel_stats;
use common::softmax;
use dualpath_core::autodiff::{Graph, Tensor};
use dualpath_core::codec::{gumbel_softmax, gumbel_softmax_graph, sample_gumbel, GumbelConfig};

#[test]
fn argmax_frequencies_follow_softmax() {
    for (i, logits) in [vec![1.0, -0.5, 0.3, 2.0, -1.2], vec![0.0, 0.0, 0.7], vec![-3.0, 3.0]]
        .iter()
        .enumerate()
    {
        let s = gumbel_stats(logits, 100 + i as u64);
        assert!(s.max_frequency_gap <= 0.01, "{logits:?}: {}", s.max_frequency_gap);
        assert!(s.mean_max_component >= 0.99, "{}", s.mean_max_component);
        assert!(s.max_sum_error <= 1e-12);
    }
}

#[test]
fn zero_noise_at_unit_temperature_is_softmax() {
    let logits = [0.4, -1.0, 2.2, 0.0];
    let y = gumbel_softmax(&logits, &[0.0; 4], GumbelConfig::soft(1.0)).unwrap();
    for (a, b) in y.iter().zip(softmax(&logits)) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn hard_mode_is_one_hot_at_the_soft_argmax() {
    let logits = [0.1, 0.5, -0.2];
    for seed in 0..50 {
        let g = sample_gumbel(3, seed).unwrap();
        let soft = gumbel_softmax(&logits, &g, GumbelConfig::soft(0.5)).unwrap();
        let hard = gumbel_softmax(
            &logits,
            &g,
            GumbelConfig {
                temperature: 0.5,
                hard: true,
            },
        )
        .unwrap();
        let arg = soft.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(hard.iter().sum::<f64>(), 1.0);
        assert_eq!(hard[arg], 1.0);
    }
}

#[test]
fn graph_and_plain_samples_agree() {
    let logits = [0.3, -0.7, 1.1, 0.0, 0.2];
    let g = sample_gumbel(5, 9).unwrap();
    let plain = gumbel_softmax(&logits, &g, GumbelConfig::soft(0.7)).unwrap();
    let mut graph = Graph::new();
    let l = graph.param(Tensor::matrix(1, 5, logits.to_vec()).unwrap());
    let y = gumbel_softmax_graph(
        &mut graph,
        l,
        &Tensor::matrix(1, 5, g).unwrap(),
        GumbelConfig::soft(0.7),
    )
    .unwrap();
    for (a, b) in graph.value(y).data().iter().zip(&plain) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn bad_temperatures_are_rejected() {
    for t in [0.0, -1.0, f64::NAN, f64::INFINITY] {
        assert!(gumbel_softmax(&[0.0, 1.0], &[0.0, 0.0], GumbelConfig::soft(t)).is_err());
    }
}
