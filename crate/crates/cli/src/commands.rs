use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use dualpath_core::autodiff::Activation;
use dualpath_core::codec::{write_jsonl, Codec, Transaction};
use dualpath_core::gan::{train_gan, AdversarialBuffer, GanArchitecture, GanTrainConfig, RealFraud};
use dualpath_core::pipeline::{
    measure_latency, Action, CycleConfig, DetectionService, EventKind, PipelineConfig, ReviewState, ReviewVerdict,
    SnapshotStore,
};
use dualpath_core::shap::{explain_transaction, BackgroundSet, Explanation};
use dualpath_core::sim::{
    default_schema, evaluate, generate_stream, generate_stream_for, Label, LabeledStream, LegitimateProfile,
    OracleReviewer, Outcome, Scenario, ScenarioConfig, ScenarioParams, StreamConfig,
};
use dualpath_core::vae::{calibrate_threshold, train, VaeArchitecture, VaeTrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::api;
use crate::config::{
    ExplainSettings, GenDataSettings, ServeSettings, SimulateSettings, TrainGanSettings, TrainVaeSettings,
};
use crate::error::{CliError, CliResult, Context, ErrorClass};
use crate::manifest::{ManifestBuilder, RunManifest};
use crate::model_dir::ModelDir;

pub const STREAM_FILE: &str = "stream.jsonl";
pub const LABELS_FILE: &str = "labels.jsonl";
pub const PROFILES_FILE: &str = "profiles.json";

fn parse_scenarios(names: &[String]) -> CliResult<Vec<Scenario>> {
    names
        .iter()
        .map(|n| n.parse::<Scenario>().map_err(|e| CliError::usage(e.to_string())))
        .collect()
}

fn load_stream(stream: &Path, labels: &Path) -> CliResult<LabeledStream> {
    LabeledStream::load(stream, labels).class(
        ErrorClass::Data,
        format!("reading {} with {}", stream.display(), labels.display()),
    )
}

pub fn gen_data(s: &GenDataSettings) -> CliResult<RunManifest> {
    let mut m = ManifestBuilder::start("gen-data", s);
    m.seed("stream", s.seed);
    let scenarios = parse_scenarios(&s.scenarios)?;
    if !scenarios.is_empty() && (s.prevalence.is_nan() || s.prevalence <= 0.0) {
        return Err(CliError::usage(
            "prevalence must be positive when scenarios are injected",
        ));
    }
    let configs = scenarios
        .iter()
        .map(|&sc| {
            Ok(ScenarioConfig {
                params: ScenarioParams::default_for(sc)?,
                prevalence: s.prevalence / scenarios.len() as f64,
            })
        })
        .collect::<dualpath_core::Result<Vec<_>>>()
        .class(ErrorClass::Usage, "scenario settings")?;
    let (mut stream, profiles) = match &s.profiles {
        None => generate_stream(&StreamConfig {
            accounts: s.accounts,
            length: s.length,
            scenarios: configs,
            seed: s.seed,
        })
        .class(ErrorClass::Usage, "generating stream")?,
        Some(path) => {
            m.input(path);
            let profiles: Vec<LegitimateProfile> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
            let stream = generate_stream_for(&profiles, s.length, &configs, 0.0, &mut rng)
                .class(ErrorClass::Usage, "generating stream")?;
            (stream, profiles)
        }
    };
    if s.id_offset > 0 {
        stream.transactions.iter_mut().for_each(|t| t.id += s.id_offset);
        stream.labels.iter_mut().for_each(|l| l.id += s.id_offset);
    }
    std::fs::create_dir_all(&s.out_dir)?;
    let (sp, lp, pp) = (
        s.out_dir.join(STREAM_FILE),
        s.out_dir.join(LABELS_FILE),
        s.out_dir.join(PROFILES_FILE),
    );
    stream.save(&sp, &lp)?;
    std::fs::write(&pp, serde_json::to_string_pretty(&profiles)?)?;
    let mut counts = serde_json::Map::new();
    for sc in Scenario::INJECTED {
        counts.insert(sc.as_str().into(), stream.count(Label::Fraud(sc)).into());
    }
    counts.insert("legitimate".into(), stream.count(Label::Legitimate).into());
    println!("wrote {} transactions to {}", stream.len(), sp.display());
    for (k, v) in &counts {
        println!("  {k:<14} {v}");
    }
    m.output(sp).output(lp).output(pp).summary(json!({ "counts": counts }));
    m.finish(&s.out_dir)
}

pub fn train_vae(s: &TrainVaeSettings) -> CliResult<RunManifest> {
    let mut m = ManifestBuilder::start("train-vae", s);
    m.seed("training", s.seed)
        .seed("embedding", s.embedding_seed)
        .seed("background", s.seed);
    m.input(&s.stream).input(&s.labels);
    if !(s.calibration_fraction > 0.0 && s.calibration_fraction < 1.0) {
        return Err(CliError::usage("calibration fraction must lie in (0, 1)"));
    }
    let stream = load_stream(&s.stream, &s.labels)?;
    let mut legit = stream.legitimate();
    let n_cal = (legit.len() as f64 * s.calibration_fraction).round() as usize;
    let calibration = legit.split_off(legit.len() - n_cal);
    let codec =
        Arc::new(Codec::fit(default_schema(), &legit, s.embedding_seed).class(ErrorClass::Data, "fitting codec")?);
    let config = VaeTrainConfig {
        architecture: VaeArchitecture {
            latent_dim: s.latent_dim,
            hidden: s.hidden,
            hidden_layers: s.hidden_layers,
            activation: Activation::Tanh,
        },
        epochs: s.epochs,
        batch_size: s.batch_size,
        rows_per_epoch: Some(s.rows_per_epoch),
        seed: s.seed,
        ..VaeTrainConfig::default()
    };
    println!(
        "training on {} legitimate rows, calibrating on {}",
        legit.len(),
        calibration.len()
    );
    let (model, report) = train(codec, &legit, &config).class(ErrorClass::Training, "training")?;
    let threshold = calibrate_threshold(&model, &calibration, s.quantile).class(ErrorClass::Training, "calibration")?;
    let background = BackgroundSet::sample(&model, &calibration, s.background_size, s.seed)?;

    let dir = ModelDir::new(&s.out_dir);
    model.save(&dir.vae())?;
    threshold.save(&dir.threshold())?;
    report.save(&dir.training_report())?;
    write_jsonl(&dir.background(), &background.transactions)?;
    std::fs::create_dir_all(dir.root.join("reference"))?;
    write_jsonl(&dir.legitimate(), &legit)?;
    write_jsonl(&dir.calibration(), &calibration)?;
    println!(
        "validation loss {:.4} -> {:.4}; tau {:.4} at quantile {}",
        report.initial_validation_loss,
        report.final_validation_loss(),
        threshold.tau,
        threshold.quantile
    );
    for p in [
        dir.vae(),
        dir.threshold(),
        dir.training_report(),
        dir.background(),
        dir.legitimate(),
        dir.calibration(),
    ] {
        m.output(p);
    }
    m.summary(json!({
        "tau": threshold.tau,
        "model_version": model.version(),
        "final_validation_loss": report.final_validation_loss(),
    }));
    m.finish(&s.out_dir)
}

pub fn train_gan_cmd(s: &TrainGanSettings) -> CliResult<RunManifest> {
    let mut m = ManifestBuilder::start("train-gan", s);
    m.seed("training", s.seed)
        .input(&s.stream)
        .input(&s.labels)
        .input(&s.model_dir);
    let dir = ModelDir::new(&s.model_dir);
    let codec = Arc::clone(&dir.load_vae()?.codec);
    let stream = load_stream(&s.stream, &s.labels)?;
    let wanted = parse_scenarios(&s.scenarios)?;
    let seed_set: Vec<Transaction> = stream
        .iter()
        .filter(|(_, l)| match l {
            Label::Fraud(sc) => wanted.is_empty() || wanted.contains(sc),
            Label::Legitimate => false,
        })
        .map(|(t, _)| t.clone())
        .collect();
    let buffer: Vec<Transaction> = match &s.buffer {
        Some(path) if path.exists() => {
            m.input(path);
            AdversarialBuffer::open(path)?
                .entries()
                .into_iter()
                .map(|e| e.transaction)
                .collect()
        }
        Some(path) => return Err(CliError::data(format!("buffer {} does not exist", path.display()))),
        None => Vec::new(),
    };
    let config = GanTrainConfig {
        architecture: GanArchitecture::default(),
        generator_steps: s.generator_steps,
        n_critic: s.n_critic,
        batch_size: s.batch_size,
        lambda: s.lambda,
        seed: s.seed,
        ..GanTrainConfig::default()
    };
    println!(
        "training synthesizer on {} buffer and {} seed-set rows ({} steps)",
        buffer.len(),
        seed_set.len(),
        config.total_steps()
    );
    let real = RealFraud {
        buffer: &buffer,
        seed_set: &seed_set,
    };
    let (model, report) = train_gan(codec, real, &config, None).class(ErrorClass::Training, "adversarial training")?;
    let out = s.out_dir.clone().unwrap_or_else(|| dir.gan());
    model.save(&out)?;
    let report_path = out.join("synthesis-report.json");
    report.save(&report_path)?;
    println!(
        "final interpolate gradient norm {:.3}; mode coverage {:.3}",
        report.final_gradient_norm.mean, report.mode_coverage
    );
    m.output(&out).output(report_path).summary(json!({
        "final_gradient_norm": report.final_gradient_norm.mean,
        "mode_coverage": report.mode_coverage,
        "model_version": report.model_version,
    }));
    m.finish(&out)
}

fn fraud_rows(stream: &LabeledStream) -> Vec<Transaction> {
    stream
        .iter()
        .filter(|(_, l)| l.is_fraud())
        .map(|(t, _)| t.clone())
        .collect()
}

/// Starts the service described by `s` without binding a socket.
pub fn start_service(s: &ServeSettings) -> CliResult<Arc<DetectionService>> {
    let snapshot = ModelDir::new(&s.model_dir).load_snapshot()?;
    let config = PipelineConfig {
        explanation_workers: s.explanation_workers,
        queue_capacity: s.queue_capacity,
        pending_policy: s.pending_policy,
        data_dir: Some(s.data_dir.clone()),
        cycle: CycleConfig {
            min_entries: s.min_entries,
            interval_secs: s.interval_secs,
            ..CycleConfig::default()
        },
        ..PipelineConfig::default()
    };
    let service = DetectionService::start(config, Arc::new(SnapshotStore::new(snapshot)))
        .class(ErrorClass::Service, "starting service")?;
    Ok(Arc::new(service))
}

pub fn serve(s: &ServeSettings) -> CliResult<RunManifest> {
    let mut m = ManifestBuilder::start("serve", s);
    m.input(&s.model_dir).output(&s.data_dir);
    let service = start_service(s)?;
    let _retrain = if s.retrain {
        let seed_set = match (&s.seed_stream, &s.seed_labels) {
            (Some(st), Some(lb)) => fraud_rows(&load_stream(st, lb)?),
            (None, None) => Vec::new(),
            _ => return Err(CliError::usage("seed-stream and seed-labels go together")),
        };
        let ctx = ModelDir::new(&s.model_dir).load_context(seed_set)?;
        Some(service.start_retraining(ctx))
    } else {
        None
    };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::new(ErrorClass::Service, e.to_string()))?;
    let app = api::router(Arc::clone(&service));
    runtime
        .block_on(async {
            let listener = tokio::net::TcpListener::bind(&s.bind).await?;
            println!("listening on {}", listener.local_addr()?);
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = tokio::signal::ctrl_c().await;
                })
                .await
        })
        .map_err(|e| CliError::new(ErrorClass::Service, format!("server: {e}")))?;
    drop(_retrain);
    service.shutdown().class(ErrorClass::Service, "shutdown")?;
    let metrics = service.metrics();
    m.summary(serde_json::to_value(&metrics)?);
    m.finish(&s.data_dir)
}

pub fn simulate(s: &SimulateSettings) -> CliResult<RunManifest> {
    let mut m = ManifestBuilder::start("simulate", s);
    m.seed("reviewer", s.reviewer_seed)
        .input(&s.model_dir)
        .input(&s.stream)
        .input(&s.labels);
    let dir = ModelDir::new(&s.model_dir);
    let stream = load_stream(&s.stream, &s.labels)?;
    let snapshot = dir.load_snapshot()?;
    let config = PipelineConfig {
        explanation_workers: s.explanation_workers,
        pending_policy: s.pending_policy,
        data_dir: s.data_dir.clone(),
        ..PipelineConfig::default()
    };
    let service = Arc::new(
        DetectionService::start(config, Arc::new(SnapshotStore::new(snapshot)))
            .class(ErrorClass::Service, "starting service")?,
    );
    let latency = measure_latency(&service, &stream.transactions, &[0.5, 0.95, 0.99])
        .class(ErrorClass::Service, "streaming transactions")?;

    let mut oracle = OracleReviewer::new(&stream.labels, s.reviewer_error, s.reviewer_seed);
    for item in service.reviews(Some(ReviewState::Open)) {
        let verdict = if oracle.confirms_fraud(item.transaction.id)? {
            ReviewVerdict::ConfirmedFraud
        } else {
            ReviewVerdict::FalsePositive
        };
        service
            .resolve_review(item.item_id, verdict, &oracle.reviewer_id)
            .class(ErrorClass::Service, "resolving review")?;
    }
    let blocked: HashMap<u64, bool> = service
        .reviews(None)
        .into_iter()
        .map(|i| (i.transaction.id, i.state == ReviewState::ConfirmedFraud))
        .collect();
    let outcomes: Vec<Outcome> = service
        .event_log()
        .events()
        .into_iter()
        .filter_map(|e| match e.kind {
            EventKind::Scored {
                transaction_id,
                reconstruction_error,
                action,
                ..
            } => Some(Outcome {
                id: transaction_id,
                score: reconstruction_error.unwrap_or(f64::INFINITY),
                flagged: action != Action::Approve,
                blocked: Some(blocked.get(&transaction_id).copied().unwrap_or(false)),
            }),
            _ => None,
        })
        .collect();
    let metrics = evaluate(&outcomes, &stream.labels)?;
    println!("{}", metrics.recall_table());
    if let Some(a) = &latency.approve {
        println!(
            "approve path: p50 {:.4} ms  p95 {:.4} ms  p99 {:.4} ms  (n {})",
            a.p50_ms, a.p95_ms, a.p99_ms, a.count
        );
    }
    if let Some(f) = &latency.flag {
        println!(
            "flag path:    p50 {:.4} ms  p99 {:.4} ms  (n {})",
            f.p50_ms, f.p99_ms, f.count
        );
    }
    println!(
        "explained {} of {} transactions ({:.3}%); approve-path explanations {}",
        latency.explanations,
        latency.transactions,
        100.0 * latency.explained_fraction,
        latency.approve_path_explanations
    );

    std::fs::create_dir_all(&s.out_dir)?;
    let metrics_path = s.out_dir.join("metrics.json");
    let latency_path = s.out_dir.join("latency.json");
    std::fs::write(&metrics_path, serde_json::to_string_pretty(&metrics)?)?;
    std::fs::write(&latency_path, serde_json::to_string_pretty(&latency)?)?;
    m.output(metrics_path).output(latency_path);
    let mut summary = json!({
        "auroc": metrics.auroc,
        "fpr": metrics.fpr,
        "recall": metrics.per_scenario.iter().map(|(k, v)| (k.clone(), v.recall)).collect::<HashMap<_, _>>(),
        "explained_fraction": latency.explained_fraction,
        "approve_p99_ms": latency.approve.as_ref().map(|a| a.p99_ms),
    });

    if s.cycle {
        let ctx = dir.load_context(fraud_rows(&stream))?;
        let report = service
            .run_cycle(&ctx, &service.config().cycle.clone(), true)
            .class(ErrorClass::Service, "retraining cycle")?;
        match report {
            Some(r) => {
                println!(
                    "cycle {}: {} buffer rows consumed, tau {:.4} -> {:.4}, synthetic mean E {:.3} -> {:.3}",
                    r.cycle,
                    r.consumed.len(),
                    r.tau_before,
                    r.tau_after,
                    r.synthetic_mean_error_before,
                    r.synthetic_mean_error_after
                );
                let path = s.out_dir.join("cycle-report.json");
                std::fs::write(&path, serde_json::to_string_pretty(&r)?)?;
                m.output(path);
                summary["cycle_tau_after"] = json!(r.tau_after);
            }
            None => println!("cycle skipped: nothing to learn from"),
        }
    }
    service.shutdown().class(ErrorClass::Service, "shutdown")?;
    m.summary(summary);
    m.finish(&s.out_dir)
}

/// What `explain` found for a transaction.
#[derive(Debug)]
pub enum ExplainOutcome {
    Explained(Box<Explanation>),
    BelowThreshold { error: f64, tau: f64 },
}

pub fn explain_lookup(s: &ExplainSettings, txid: u64) -> CliResult<ExplainOutcome> {
    let dir = ModelDir::new(&s.model_dir);
    if let Some(data_dir) = &s.data_dir {
        let log = data_dir.join("events.jsonl");
        if !log.exists() {
            return Err(CliError::data(format!("no event log at {}", log.display())));
        }
        let events = dualpath_core::pipeline::EventLog::open(&log)?.events();
        let mut flagged = None;
        let mut below = None;
        for e in &events {
            match &e.kind {
                EventKind::Flagged {
                    item_id, transaction, ..
                } if transaction.id == txid => {
                    flagged = Some((*item_id, transaction.clone()));
                }
                EventKind::Explained { item_id, explanation }
                    if flagged.as_ref().is_some_and(|(i, _)| i == item_id) =>
                {
                    return Ok(ExplainOutcome::Explained(Box::new(explanation.clone())));
                }
                EventKind::Scored {
                    transaction_id,
                    reconstruction_error: Some(error),
                    threshold,
                    action: Action::Approve,
                    ..
                } if *transaction_id == txid => below = Some((*error, *threshold)),
                _ => {}
            }
        }
        if let Some((_, t)) = flagged {
            let snap = dir.load_snapshot()?;
            let e = explain_transaction(&snap.vae, &snap.background, &t, &Default::default())?;
            return Ok(ExplainOutcome::Explained(Box::new(e)));
        }
        if let Some((error, tau)) = below {
            return Ok(ExplainOutcome::BelowThreshold { error, tau });
        }
        if s.stream.is_none() {
            return Err(CliError::data(format!(
                "transaction {txid} not found in {}",
                log.display()
            )));
        }
    }
    let Some(stream) = &s.stream else {
        return Err(CliError::usage("explain needs --data-dir or --stream"));
    };
    let txs: Vec<Transaction> = dualpath_core::codec::read_jsonl(stream)?;
    let t = txs
        .into_iter()
        .find(|t| t.id == txid)
        .ok_or_else(|| CliError::data(format!("transaction {txid} not found in {}", stream.display())))?;
    let snap = dir.load_snapshot()?;
    let error = snap.vae.score_transaction(&t)?;
    if error <= snap.threshold.tau {
        return Ok(ExplainOutcome::BelowThreshold {
            error,
            tau: snap.threshold.tau,
        });
    }
    let e = explain_transaction(&snap.vae, &snap.background, &t, &Default::default())?;
    Ok(ExplainOutcome::Explained(Box::new(e)))
}

pub fn render_explanation(e: &Explanation) -> String {
    let mut order: Vec<usize> = (0..e.attributions.len()).collect();
    order.sort_by(|&a, &b| e.attributions[b].abs().total_cmp(&e.attributions[a].abs()));
    let scale = e.attributions.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let mut out = format!(
        "transaction {}  E(x) = {:.4}  base = {:.4}  method {:?}\n",
        e.transaction_id, e.model_output, e.base_value, e.method
    );
    for i in order {
        let phi = e.attributions[i];
        let bar = "#".repeat((phi.abs() / scale * 30.0).round() as usize);
        out.push_str(&format!("  {:<12} {:>+10.4}  {}\n", e.feature_names[i], phi, bar));
    }
    out.push_str(&format!("  efficiency gap {:.2e}\n", e.efficiency_gap()));
    out
}

pub fn explain(s: &ExplainSettings, txid: u64) -> CliResult<()> {
    match explain_lookup(s, txid)? {
        ExplainOutcome::Explained(e) if s.json => println!("{}", serde_json::to_string_pretty(&e)?),
        ExplainOutcome::Explained(e) => print!("{}", render_explanation(&e)),
        ExplainOutcome::BelowThreshold { error, tau } if s.json => println!(
            "{}",
            json!({ "transaction_id": txid, "explained": false, "reason": "below threshold", "reconstruction_error": error, "tau": tau })
        ),
        ExplainOutcome::BelowThreshold { error, tau } => {
            println!("transaction {txid} not explained: below threshold (E = {error:.4} <= tau = {tau:.4})")
        }
    }
    Ok(())
}
