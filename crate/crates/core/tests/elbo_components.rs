mod common;

use common::criteria::elbo_gradient_error;
use dualpath_core::vae::kl_standard_normal;

#[test]
fn kl_vanishes_at_the_prior() {
    assert_eq!(kl_standard_normal(&[0.0; 6], &[0.0; 6]), 0.0);
}

#[test]
fn kl_matches_the_gaussian_closed_form() {
    // KL(N(m, s^2) || N(0, 1)) = 0.5 * (s^2 + m^2 - 1 - ln s^2)
    for (m, s) in [(1.0f64, 1.0f64), (0.0, 2.0), (-0.5, 0.3), (2.0, 0.7)] {
        let closed = 0.5 * (s * s + m * m - 1.0 - (s * s).ln());
        let got = kl_standard_normal(&[m], &[(s * s).ln()]);
        assert!((got - closed).abs() < 1e-9, "m {m} s {s}: {got} vs {closed}");
    }
    assert!((kl_standard_normal(&[1.0], &[0.0]) - 0.5).abs() < 1e-9);
}

#[test]
fn kl_adds_over_latent_dimensions() {
    let a = kl_standard_normal(&[0.3], &[0.2]);
    let b = kl_standard_normal(&[-1.1], &[-0.4]);
    assert!((kl_standard_normal(&[0.3, -1.1], &[0.2, -0.4]) - (a + b)).abs() < 1e-15);
}

#[test]
fn loss_gradients_match_finite_differences() {
    for seed in 2..5 {
        let err = elbo_gradient_error(seed);
        assert!(err < 1e-6, "seed {seed}: {err:e}");
    }
}
