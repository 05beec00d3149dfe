//! One function per acceptance criterion. Each returns whether it held and
//! the measured values, so the same checks back both the integration tests
//! and the acceptance run.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;

use dualpath_core::autodiff::{Activation, Mlp, ParameterSet, Tensor};
use dualpath_core::codec::{argmax, gumbel_softmax, sample_gumbel_with, Codec, GumbelConfig, Transaction};
use dualpath_core::experiment::{Detector, ExperimentConfig, ExperimentData};
use dualpath_core::gan::{critic_loss, train_gan, GanArchitecture, GanModel, GanTrainConfig, RealFraud};
use dualpath_core::pipeline::{
    measure_latency, percentile_summary, Action, CycleContext, CycleReport, DetectionService, PipelineConfig,
    ReviewState, ReviewVerdict, Snapshot, SnapshotStore,
};
use dualpath_core::shap::{explain_exact, explain_sampled, BackgroundSet, FnGame};
use dualpath_core::sim::{
    default_scenarios, default_schema, generate_stream, generate_stream_for, Label, LabeledStream, MetricsReport,
    OracleReviewer, Scenario, ScenarioConfig, ScenarioParams, StreamConfig,
};
use dualpath_core::vae::{elbo_loss, kl_standard_normal, ElboTargets, TrainingSet, VaeArchitecture, VaeModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cases::{double_backward_check, mlp_gradcheck, run_op_cases};
use super::{permutation_shapley, quadratic_game, random_game, relative_error, softmax, FD_STEP};

pub struct Check {
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Check {
            pass,
            detail: detail.into(),
        }
    }
}

pub const ALL_OPS: &[&str] = &[
    "MatMul",
    "Transpose",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "Neg",
    "Scale",
    "AddScalar",
    "Exp",
    "Log",
    "Tanh",
    "Sigmoid",
    "Relu",
    "Square",
    "Sqrt",
    "Softmax",
    "Sum",
    "SumRows",
    "SumCols",
    "BroadcastRows",
    "BroadcastCols",
    "BroadcastScalar",
    "ConcatCols",
    "SliceCols",
    "PadCols",
];

pub fn autodiff() -> Check {
    let mut op_worst: f64 = 0.0;
    let mut seen = BTreeSet::new();
    for seed in [3, 11, 29] {
        for (_, op, err) in run_op_cases(seed) {
            op_worst = op_worst.max(err);
            seen.insert(op);
        }
    }
    let missing: Vec<_> = ALL_OPS.iter().filter(|o| !seen.contains(**o)).collect();
    let mut mlp_worst: f64 = 0.0;
    for activation in [Activation::Tanh, Activation::Sigmoid, Activation::Relu] {
        for seed in 0..5 {
            mlp_worst = mlp_worst.max(mlp_gradcheck(seed, activation));
        }
    }
    let db_worst = (0..5).map(double_backward_check).fold(0.0, f64::max);
    Check::new(
        op_worst < 1e-6 && missing.is_empty() && mlp_worst < 1e-6 && db_worst < 1e-4,
        format!(
            "ops {}/{} worst {op_worst:.2e}; mlp worst {mlp_worst:.2e}; double-backward worst {db_worst:.2e}{}",
            ALL_OPS.len() - missing.len(),
            ALL_OPS.len(),
            if missing.is_empty() {
                String::new()
            } else {
                format!("; uncovered {missing:?}")
            }
        ),
    )
}

pub const GUMBEL_DRAWS: usize = 100_000;

pub struct GumbelStats {
    pub max_frequency_gap: f64,
    pub mean_max_component: f64,
    pub max_sum_error: f64,
}

pub fn gumbel_stats(logits: &[f64], seed: u64) -> GumbelStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = softmax(logits);
    let mut counts = vec![0usize; logits.len()];
    let mut max_sum_error: f64 = 0.0;
    let mut max_component = 0.0;
    for _ in 0..GUMBEL_DRAWS {
        let g = sample_gumbel_with(&mut rng, logits.len());
        let y = gumbel_softmax(logits, &g, GumbelConfig::soft(1.0)).unwrap();
        counts[argmax(&y)] += 1;
        max_sum_error = max_sum_error.max((y.iter().sum::<f64>() - 1.0).abs());
        let cold = gumbel_softmax(logits, &g, GumbelConfig::soft(0.01)).unwrap();
        max_component += cold.iter().cloned().fold(0.0, f64::max);
        max_sum_error = max_sum_error.max((cold.iter().sum::<f64>() - 1.0).abs());
    }
    let max_frequency_gap = counts
        .iter()
        .zip(&p)
        .map(|(&c, q)| (c as f64 / GUMBEL_DRAWS as f64 - q).abs())
        .fold(0.0, f64::max);
    GumbelStats {
        max_frequency_gap,
        mean_max_component: max_component / GUMBEL_DRAWS as f64,
        max_sum_error,
    }
}

pub fn gumbel() -> Check {
    let cases: [&[f64]; 2] = [&[1.0, -0.5, 0.3, 2.0, -1.2], &[0.0, 0.0, 0.7]];
    let stats: Vec<GumbelStats> = cases
        .iter()
        .enumerate()
        .map(|(i, l)| gumbel_stats(l, 40 + i as u64))
        .collect();
    let gap = stats.iter().map(|s| s.max_frequency_gap).fold(0.0, f64::max);
    let maxc = stats.iter().map(|s| s.mean_max_component).fold(1.0, f64::min);
    let sum = stats.iter().map(|s| s.max_sum_error).fold(0.0, f64::max);
    Check::new(
        gap <= 0.01 && maxc >= 0.99 && sum <= 1e-12,
        format!("argmax frequency gap {gap:.4}; mean max component at t=0.01 {maxc:.5}; sum error {sum:.1e}"),
    )
}

fn small_codec(seed: u64) -> (Arc<Codec>, LabeledStream) {
    let (s, _) = generate_stream(&StreamConfig {
        accounts: 4,
        length: 3_000,
        scenarios: vec![],
        seed,
    })
    .unwrap();
    (Arc::new(Codec::fit(default_schema(), &s.legitimate(), 1).unwrap()), s)
}

/// Worst relative error of the batch ELBO gradient against central
/// differences of the loss value, over every parameter entry.
pub fn elbo_gradient_error(seed: u64) -> f64 {
    let (codec, s) = small_codec(seed);
    let arch = VaeArchitecture {
        latent_dim: 2,
        hidden: 5,
        hidden_layers: 1,
        activation: Activation::Tanh,
    };
    let model = VaeModel::new(codec.clone(), arch, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let set = TrainingSet::from_transactions(&codec, &s.transactions[..5]).unwrap();
    let (x, c) = set.all();
    let eps = model.sample_eps(5, &mut ChaCha8Rng::seed_from_u64(seed + 1));
    let t = ElboTargets { x: &x, categories: &c };
    let (_, grads) = elbo_loss(&model, &t, &eps, 1.0).unwrap();
    let mut worst: f64 = 0.0;
    for (p, grad) in grads.iter().enumerate() {
        let f = |d: &[f64]| {
            let mut m = model.clone();
            m.params.tensor_mut(p).data_mut().copy_from_slice(d);
            elbo_loss(&m, &t, &eps, 1.0).unwrap().0
        };
        let numeric = super::numeric_gradient(&f, model.params.tensor(p).data(), FD_STEP);
        worst = worst.max(relative_error(grad.data(), &numeric));
    }
    worst
}

pub fn elbo() -> Check {
    let kl0 = kl_standard_normal(&[0.0; 4], &[0.0; 4]);
    // KL(N(1, 1) || N(0, 1)) = 0.5 * (sigma^2 + mu^2 - 1 - ln sigma^2)
    let closed = 0.5 * (1.0 + 1.0 - 1.0 - 0.0);
    let kl1 = kl_standard_normal(&[1.0], &[0.0]);
    let grad = (0..3).map(|s| elbo_gradient_error(s + 2)).fold(0.0, f64::max);
    Check::new(
        kl0 == 0.0 && (kl1 - closed).abs() <= 1e-9 && grad < 1e-6,
        format!("KL(0,1) = {kl0}; KL(1,1) = {kl1}; gradient worst {grad:.2e}"),
    )
}

/// `scale * w.x` with a unit `w`.
fn linear_critic(dim: usize, scale: f64, seed: u64) -> (Mlp, ParameterSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ParameterSet::new();
    let mlp = Mlp::init("critic", &[dim, 1], Activation::Identity, &mut p, &mut rng).unwrap();
    let w: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    *p.tensor_mut(0) = Tensor::matrix(dim, 1, w.iter().map(|v| scale * v / norm).collect()).unwrap();
    (mlp, p)
}

/// Loss at the unit linear critic on identical batches (0) and at the
/// doubled critic (lambda).
pub fn wgan_identities() -> (f64, f64, f64) {
    let (codec, s) = small_codec(5);
    let x = codec.encode_batch(&s.transactions[..16]).unwrap();
    let eps: Vec<f64> = (0..16).map(|i| i as f64 / 15.0).collect();
    let arch = GanArchitecture {
        noise_dim: 3,
        hidden: 6,
        hidden_layers: 1,
        activation: Activation::Tanh,
    };
    let base = GanModel::new(codec.clone(), arch, 10.0, 5, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let (c, p) = linear_critic(codec.dim(), 1.0, 1);
    let unit = base.clone().with_critic(c, p).unwrap();
    let (c, p) = linear_critic(codec.dim(), 2.0, 2);
    let doubled = base.with_critic(c, p).unwrap();
    let zero = critic_loss(&unit, &x, &x, &eps, 0).unwrap().0.loss;
    let lam = critic_loss(&doubled, &x, &x, &eps, 0).unwrap().0.loss;
    (zero, lam, doubled.lambda)
}

pub fn cnp_seed_set() -> (Arc<Codec>, Vec<Transaction>) {
    let cnp = ScenarioConfig {
        params: ScenarioParams::default_for(Scenario::CnpVelocity).unwrap(),
        prevalence: 0.03,
    };
    let (s, _) = generate_stream(&StreamConfig {
        accounts: 20,
        length: 20_000,
        scenarios: vec![cnp],
        seed: 61,
    })
    .unwrap();
    let codec = Arc::new(Codec::fit(default_schema(), &s.legitimate(), 1).unwrap());
    (codec, s.with_label(Label::Fraud(Scenario::CnpVelocity)))
}

pub fn wgan() -> Check {
    let (zero, lam, lambda) = wgan_identities();
    let (codec, seeds) = cnp_seed_set();
    let config = GanTrainConfig::default();
    let real = RealFraud {
        buffer: &[],
        seed_set: &seeds,
    };
    let (_, report) = match train_gan(codec.clone(), real, &config, None) {
        Ok(r) => r,
        Err(e) => return Check::new(false, format!("training failed: {e}")),
    };
    let norm = report.final_gradient_norm.mean;
    let steps = report.critic_steps + report.generator_steps;
    let real_mcc: BTreeSet<u32> = seeds.iter().map(|t| t.categorical[0]).collect();
    let mcc = report.marginal("mcc").expect("mcc marginal");
    let missing: Vec<u32> = real_mcc
        .iter()
        .copied()
        .filter(|&m| mcc.counts.get(m as usize).is_none_or(|&c| c == 0))
        .collect();
    Check::new(
        zero.abs() <= 1e-9
            && (lam - lambda).abs() <= 1e-9
            && (0.8..=1.2).contains(&norm)
            && report.all_finite()
            && steps >= 5_000
            && report.sample_count >= 10_000
            && missing.is_empty(),
        format!(
            "identity losses {zero:.1e} / {lam} (lambda {lambda}); {} seed rows, {steps} steps, final interpolate norm {norm:.3} (std {:.3}), finite {}; MCC coverage {}/{} in {} samples",
            seeds.len(),
            report.final_gradient_norm.std,
            report.all_finite(),
            real_mcc.len() - missing.len(),
            real_mcc.len(),
            report.sample_count
        ),
    )
}

fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("f{i}")).collect()
}

pub fn shapley_exact_error() -> f64 {
    let mut worst: f64 = 0.0;
    for n in 1..=8 {
        for seed in 0..3 {
            let table = random_game(n, seed * 10 + n as u64);
            let game = FnGame {
                players: n,
                f: |s: u32| table[s as usize],
            };
            let e = explain_exact(&game, &names(n), 0).unwrap();
            let oracle = permutation_shapley(n, &|s| table[s as usize]);
            for (a, b) in e.attributions.iter().zip(&oracle) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    worst
}

/// Worst `|sampled - exact| / (max exact - min exact)` at 2000 permutations.
pub fn shapley_sampled_error() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in [42, 43, 44] {
        let table = quadratic_game(8, seed);
        let game = FnGame {
            players: 8,
            f: |s: u32| table[s as usize],
        };
        let exact = permutation_shapley(8, &|s| table[s as usize]);
        let sampled = explain_sampled(&game, &names(8), 0, 2_000, seed).unwrap();
        let range = exact.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - exact.iter().cloned().fold(f64::INFINITY, f64::min);
        for (a, b) in sampled.attributions.iter().zip(&exact) {
            worst = worst.max((a - b).abs() / range);
        }
    }
    worst
}

/// Worst violation of efficiency, symmetry and null-player on constructed games.
pub fn shapley_axiom_error() -> f64 {
    let n = 6;
    // players 0 and 1 are interchangeable; player 5 never changes the value
    let v = |s: u32| {
        let a = (s & 1 != 0) as u8 as f64;
        let b = (s & 2 != 0) as u8 as f64;
        let c = (s & 4 != 0) as u8 as f64;
        let d = (s & 8 != 0) as u8 as f64;
        let e = (s & 16 != 0) as u8 as f64;
        1.5 * (a + b) + 2.0 * a * b * c - 0.7 * d + 3.0 * c * d * e + 0.25
    };
    let game = FnGame { players: n, f: v };
    let e = explain_exact(&game, &names(n), 0).unwrap();
    let efficiency = e.efficiency_gap().abs().max((e.model_output - v(63)).abs());
    let symmetry = (e.attributions[0] - e.attributions[1]).abs();
    let null = e.attributions[5].abs();
    let sampled = explain_sampled(&game, &names(n), 0, 500, 9).unwrap();
    efficiency
        .max(symmetry)
        .max(null)
        .max(sampled.efficiency_gap().abs())
        .max(sampled.attributions[5].abs())
}

pub fn shapley() -> Check {
    let exact = shapley_exact_error();
    let sampled = shapley_sampled_error();
    let axioms = shapley_axiom_error();
    Check::new(
        exact <= 1e-12 && sampled <= 0.05 && axioms <= 1e-12,
        format!(
            "exact vs oracle {exact:.1e} (n<=8); sampled 2000 perms {:.2}% of range; axioms {axioms:.1e}",
            100.0 * sampled
        ),
    )
}

/// Trained detector and data shared by the end-to-end criteria.
pub struct EndToEnd {
    pub config: ExperimentConfig,
    pub data: ExperimentData,
    pub detector: Detector,
    pub metrics: MetricsReport,
    pub train_secs: f64,
}

impl EndToEnd {
    pub fn build() -> dualpath_core::Result<Self> {
        let config = ExperimentConfig::default();
        let start = std::time::Instant::now();
        let data = ExperimentData::generate(&config)?;
        let detector = Detector::train(&data, &config)?;
        let train_secs = start.elapsed().as_secs_f64();
        let metrics = detector.evaluate(&data.eval)?;
        Ok(EndToEnd {
            config,
            data,
            detector,
            metrics,
            train_secs,
        })
    }

    pub fn snapshot(&self) -> Snapshot {
        let background = BackgroundSet::sample(&self.detector.model, &self.data.calibration, 100, 5).unwrap();
        Snapshot::new(
            self.detector.model.clone(),
            self.detector.threshold.clone(),
            background,
            None,
        )
    }

    pub fn service(&self) -> Arc<DetectionService> {
        let store = Arc::new(SnapshotStore::new(self.snapshot()));
        Arc::new(DetectionService::start(PipelineConfig::default(), store).unwrap())
    }

    pub fn recall(&self, s: Scenario) -> f64 {
        self.metrics.scenario(s).map_or(0.0, |m| m.recall)
    }
}

pub fn detection(e: &EndToEnd) -> Check {
    let m = &e.metrics;
    let prevalence = e.data.eval.labels.iter().filter(|l| l.label.is_fraud()).count() as f64 / e.data.eval.len() as f64;
    let salami = e.recall(Scenario::Salami);
    let cnp = e.recall(Scenario::CnpVelocity);
    Check::new(
        m.auroc >= 0.95 && salami >= 0.80 && cnp >= 0.80 && m.fpr <= 0.01,
        format!(
            "{} rows at {:.3}% fraud; AUROC {:.4}; recall salami {salami:.3} cnp {cnp:.3} ato {:.3}; FPR {:.3}%; tau {:.3}; trained in {:.0}s",
            e.data.eval.len(),
            100.0 * prevalence,
            m.auroc,
            e.recall(Scenario::Ato),
            100.0 * m.fpr,
            e.detector.threshold.tau,
            e.train_secs
        ),
    )
}

pub fn trigger_economics(e: &EndToEnd) -> Check {
    let service = e.service();
    let r = measure_latency(&service, &e.data.eval.transactions, &[]).unwrap();
    let m = service.metrics();
    service.shutdown().unwrap();
    Check::new(
        r.explained_fraction < 0.01 && r.approve_path_explanations == 0 && m.approve_path_explanations == 0,
        format!(
            "{} of {} explained ({:.3}%); flagged {}; approve-path explanations {}",
            r.explanations,
            r.transactions,
            100.0 * r.explained_fraction,
            r.flagged,
            r.approve_path_explanations
        ),
    )
}

fn offset_ids(s: &LabeledStream, offset: u64) -> LabeledStream {
    let mut s = s.clone();
    for t in &mut s.transactions {
        t.id += offset;
    }
    for l in &mut s.labels {
        l.id += offset;
    }
    s
}

fn approve_latencies(service: &DetectionService, txs: &[Transaction]) -> Vec<f64> {
    txs.iter()
        .filter_map(|t| service.process_transaction(t).ok())
        .filter(|d| d.action == Action::Approve)
        .map(|d| d.latency_micros)
        .collect()
}

/// State of the feedback-loop run: a service that has seen an ATO-heavy
/// stream with every flag resolved by the oracle reviewer.
pub struct FeedbackRun {
    pub service: Arc<DetectionService>,
    pub context: CycleContext,
    pub confirmed_ato: usize,
    pub confirmed: usize,
    pub false_positives: usize,
    pub ato_test: LabeledStream,
}

fn ato_config(prevalence: f64) -> ScenarioConfig {
    ScenarioConfig {
        params: ScenarioParams::default_for(Scenario::Ato).unwrap(),
        prevalence,
    }
}

pub fn feedback_run(e: &EndToEnd) -> FeedbackRun {
    let profiles = &e.data.profiles;
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let ato = generate_stream_for(profiles, 40_000, &[ato_config(0.05)], 0.0, &mut rng).unwrap();
    let ato = offset_ids(&ato, 1_000_000);
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let ato_test = generate_stream_for(profiles, 20_000, &[ato_config(0.05)], 0.0, &mut rng).unwrap();
    let ato_test = offset_ids(&ato_test, 2_000_000);
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut scenarios = default_scenarios();
    for s in &mut scenarios {
        s.prevalence = 0.01;
    }
    let seed_stream = generate_stream_for(profiles, 20_000, &scenarios, 0.0, &mut rng).unwrap();
    let seed_set: Vec<Transaction> = seed_stream
        .iter()
        .filter(|(_, l)| l.is_fraud())
        .map(|(t, _)| t.clone())
        .collect();

    let service = e.service();
    for t in &ato.transactions {
        service.process_transaction(t).unwrap();
    }
    service.drain(Duration::from_secs(600));
    let mut oracle = OracleReviewer::new(&ato.labels, 0.0, 7);
    let labels = ato.label_map();
    let (mut confirmed_ato, mut confirmed, mut fps) = (0, 0, 0);
    for item in service.reviews(Some(ReviewState::Open)) {
        let id = item.transaction.id;
        let verdict = if oracle.confirms_fraud(id).unwrap() {
            confirmed += 1;
            confirmed_ato += (labels[&id] == Label::Fraud(Scenario::Ato)) as usize;
            ReviewVerdict::ConfirmedFraud
        } else {
            fps += 1;
            ReviewVerdict::FalsePositive
        };
        service
            .resolve_review(item.item_id, verdict, &oracle.reviewer_id)
            .unwrap();
    }
    FeedbackRun {
        service,
        context: CycleContext {
            legitimate: Arc::new(e.data.fit.clone()),
            calibration: Arc::new(e.data.calibration.clone()),
            seed_set: Arc::new(seed_set),
        },
        confirmed_ato,
        confirmed,
        false_positives: fps,
        ato_test,
    }
}

pub struct LatencyOutcome {
    pub check: Check,
    pub report: Option<CycleReport>,
}

/// Idle approve-path p99, then the same measurement while a retraining
/// cycle runs in the background on the feedback service. The cycle's report
/// is handed on to the feedback-loop check.
pub fn latency(e: &EndToEnd, run: &FeedbackRun) -> LatencyOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let traffic = generate_stream_for(&e.data.profiles, 60_000, &[], 0.0, &mut rng).unwrap();
    let traffic = offset_ids(&traffic, 3_000_000);
    let (warm, rest) = traffic.transactions.split_at(5_000);
    let (idle_tx, busy_tx) = rest.split_at(rest.len() / 2);
    let service = &run.service;
    approve_latencies(service, warm);
    service.drain(Duration::from_secs(60));
    let idle = percentile_summary(&approve_latencies(service, idle_tx)).unwrap();
    service.drain(Duration::from_secs(60));

    let handle = service.spawn_cycle(run.context.clone(), service.config().cycle.clone());
    // let the cycle thread get scheduled before measuring
    std::thread::sleep(Duration::from_millis(200));
    let busy = percentile_summary(&approve_latencies(service, busy_tx)).unwrap();
    let still_running = !handle.is_finished();
    let report = handle.join().expect("cycle thread").ok().flatten();
    let ratio = busy.p99_ms / idle.p99_ms;
    LatencyOutcome {
        check: Check::new(
            idle.p99_ms < 50.0 && ratio <= 1.2 && still_running,
            format!(
                "approve p99 idle {:.4} ms (p50 {:.4}, n {}); during cycle {:.4} ms (n {}); ratio {ratio:.3}; cycle active throughout {still_running}",
                idle.p99_ms, idle.p50_ms, idle.count, busy.p99_ms, busy.count
            ),
        ),
        report,
    }
}

pub fn feedback(e: &EndToEnd, run: &FeedbackRun, report: Option<&CycleReport>) -> Check {
    let Some(report) = report else {
        return Check::new(false, "retraining cycle did not complete");
    };
    let before = e.detector.evaluate(&run.ato_test).unwrap();
    let snap = run.service.snapshot();
    let after = Detector {
        model: snap.vae.clone(),
        threshold: snap.threshold.clone(),
        training: e.detector.training.clone(),
    }
    .evaluate(&run.ato_test)
    .unwrap();
    let r0 = before.scenario(Scenario::Ato).map_or(0.0, |m| m.recall);
    let r1 = after.scenario(Scenario::Ato).map_or(0.0, |m| m.recall);
    Check::new(
        run.confirmed_ato >= 50
            && r1 > r0
            && report.synthetic_mean_error_after > report.tau_after
            && snap.generation == report.generation,
        format!(
            "{} confirmed ({} ATO), {} false positives; ATO recall {r0:.3} -> {r1:.3}; FPR {:.3}% -> {:.3}%; synthetic mean E {:.2} vs tau {:.3}; cycle {:.0}s",
            run.confirmed,
            run.confirmed_ato,
            run.false_positives,
            100.0 * before.fpr,
            100.0 * after.fpr,
            report.synthetic_mean_error_after,
            report.tau_after,
            report.duration_secs
        ),
    )
}

/// Recall of `amount > x` on the salami subset.
pub fn static_rule_recall(stream: &LabeledStream, x: f64) -> f64 {
    let salami = stream.with_label(Label::Fraud(Scenario::Salami));
    let hit = salami.iter().filter(|t| t.continuous[0] > x).count();
    hit as f64 / salami.len().max(1) as f64
}

pub fn salami_evasion(e: &EndToEnd) -> Check {
    let rules = [0.5, 0.51, 1.0, 5.0, 20.0, 100.0, 1_000.0];
    let worst = rules
        .iter()
        .map(|&x| static_rule_recall(&e.data.eval, x))
        .fold(0.0, f64::max);
    let salami = e.data.eval.with_label(Label::Fraud(Scenario::Salami));
    let largest = salami.iter().map(|t| t.continuous[0]).fold(0.0, f64::max);
    let system = e.recall(Scenario::Salami);
    Check::new(
        !salami.is_empty() && worst == 0.0 && system >= 0.80,
        format!(
            "{} salami rows, largest amount {largest:.2}; amount rules X in {rules:?} best recall {worst}; system recall {system:.3}",
            salami.len()
        ),
    )
}

/// Every branch of the decision and review state machine on the trained
/// detector, followed by a replay of the event log.
pub fn state_machine(e: &EndToEnd) -> Check {
    let t = e.data.eval.legitimate()[10].clone();
    let score = e.detector.model.score_transaction(&t).unwrap();
    let mut failures = Vec::new();
    let mut expect = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };

    // tau set to the transaction's own score: E == tau approves
    let mut at_tau = e.snapshot();
    at_tau.threshold.tau = score;
    let svc = DetectionService::start(PipelineConfig::default(), Arc::new(SnapshotStore::new(at_tau))).unwrap();
    let d = svc.process_transaction(&t).unwrap();
    expect(
        d.action == Action::Approve && d.review_item.is_none(),
        "approve at E == tau",
    );

    // just below: flagged, then each verdict once
    let mut below = e.snapshot();
    below.threshold.tau = score * (1.0 - 1e-9);
    let store = Arc::new(SnapshotStore::new(below));
    let svc = DetectionService::start(PipelineConfig::default(), store).unwrap();
    let mut flagged = Vec::new();
    for k in 0..2u64 {
        let mut u = t.clone();
        u.id = 5_000_000 + k;
        let d = svc.process_transaction(&u).unwrap();
        expect(
            d.action == Action::PendingReview && d.review_item.is_some(),
            "flag at E > tau",
        );
        flagged.push(d.review_item.unwrap_or(u64::MAX));
    }
    svc.drain(Duration::from_secs(60));
    let confirm = svc.resolve_review(flagged[0], ReviewVerdict::ConfirmedFraud, "r1");
    expect(
        confirm.as_ref().is_ok_and(|d| d.action == Action::Block) && svc.buffer().len() == 1,
        "confirm blocks and buffers",
    );
    let reject = svc.resolve_review(flagged[1], ReviewVerdict::FalsePositive, "r2");
    expect(
        reject.as_ref().is_ok_and(|d| d.action == Action::Approve) && svc.false_positives().len() == 1,
        "reject approves and records the false positive",
    );
    let again = svc.resolve_review(flagged[0], ReviewVerdict::FalsePositive, "r3");
    expect(
        matches!(again, Err(dualpath_core::Error::Conflict(_))),
        "double resolution rejected",
    );
    expect(
        svc.buffer().len() == 1 && svc.false_positives().len() == 1,
        "rejected resolution changed nothing",
    );
    let replay = svc.event_log().replay();
    expect(
        replay.as_ref().is_ok_and(|r| *r == svc.projection()),
        "log replay equals live state",
    );

    Check::new(
        failures.is_empty(),
        if failures.is_empty() {
            format!(
                "approve at E == tau ({score:.4}); flag above; confirm -> block + buffer; reject -> approve + FP set; double resolution conflict; replay of {} events matches",
                svc.event_log().len()
            )
        } else {
            format!("failed: {}", failures.join(", "))
        },
    )
}
