mod common;

use std::collections::BTreeSet;

use common::criteria::{cnp_seed_set, wgan_identities};
use dualpath_core::gan::{train_gan, GanTrainConfig, RealFraud};

#[test]
fn unit_linear_critic_identities() {
    let (zero, lam, lambda) = wgan_identities();
    assert!(zero.abs() <= 1e-9, "{zero}");
    assert!((lam - lambda).abs() <= 1e-9, "{lam}");
}

#[test]
fn short_run_on_cnp_seed_set_is_finite_and_covers_mccs() {
    let (codec, seeds) = cnp_seed_set();
    let config = GanTrainConfig {
        generator_steps: 300,
        ..GanTrainConfig::default()
    };
    let real = RealFraud {
        buffer: &[],
        seed_set: &seeds,
    };
    let (model, report) = train_gan(codec, real, &config, None).unwrap();
    assert!(report.all_finite());
    assert_eq!(report.critic_steps, 1_500);
    let real_mcc: BTreeSet<u32> = seeds.iter().map(|t| t.categorical[0]).collect();
    let counts = &report.marginal("mcc").unwrap().counts;
    assert!(real_mcc.iter().all(|&m| counts[m as usize] > 0));
    let synthetic = model.synthesize(200, 3, 1 << 48).unwrap();
    assert!(synthetic.iter().all(|t| t.continuous.iter().all(|v| v.is_finite())));
}
