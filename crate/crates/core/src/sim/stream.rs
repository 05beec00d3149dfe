use std::collections::HashMap;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::profile::{
    generate_profiles, GeoPoint, LegitimateProfile, CHANNEL_ONLINE, DEVICE_CARDINALITY, MCC_CARDINALITY,
};
use crate::codec::{read_jsonl, write_jsonl, Transaction};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Salami,
    CnpVelocity,
    Ato,
    /// Emitted by the adversarial synthesizer, never by the simulator.
    Synthetic,
}

impl Scenario {
    pub const INJECTED: [Scenario; 3] = [Scenario::Salami, Scenario::CnpVelocity, Scenario::Ato];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Salami => "salami",
            Scenario::CnpVelocity => "cnp_velocity",
            Scenario::Ato => "ato",
            Scenario::Synthetic => "synthetic",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "salami" => Ok(Scenario::Salami),
            "cnp" | "cnp_velocity" | "cnp-velocity" => Ok(Scenario::CnpVelocity),
            "ato" => Ok(Scenario::Ato),
            other => Err(Error::Scenario(format!("unknown scenario `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "scenario")]
pub enum Label {
    Legitimate,
    Fraud(Scenario),
}

impl Label {
    pub fn is_fraud(self) -> bool {
        matches!(self, Label::Fraud(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub id: u64,
    pub label: Label,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SalamiParams {
    /// Upper bound on each micro-transaction, strictly below 0.50.
    pub max_amount: f64,
    pub burst_size: usize,
    pub window_secs: f64,
}

impl Default for SalamiParams {
    fn default() -> Self {
        SalamiParams {
            max_amount: 0.45,
            burst_size: 20,
            window_secs: 60.0,
        }
    }
}

impl SalamiParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_amount > 0.0 && self.max_amount < 0.50) {
            return Err(Error::Scenario(format!(
                "salami amounts must stay below 0.50 currency units (micro-transaction slicing), got {}",
                self.max_amount
            )));
        }
        if !(self.window_secs > 0.0) {
            return Err(Error::Scenario("salami window must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnpParams {
    pub mcc_spread: usize,
    pub geo_spread: usize,
    pub window_secs: f64,
    pub burst_size: usize,
}

impl Default for CnpParams {
    fn default() -> Self {
        CnpParams {
            mcc_spread: 12,
            geo_spread: 5,
            window_secs: 600.0,
            burst_size: 12,
        }
    }
}

impl CnpParams {
    pub fn validate(&self) -> Result<()> {
        if self.mcc_spread < 2 || self.geo_spread < 2 {
            return Err(Error::Scenario(
                "cnp velocity needs at least 2 MCCs and 2 regions; a single-merchant, single-region burst is not a velocity attack"
                    .into(),
            ));
        }
        if self.mcc_spread > MCC_CARDINALITY as usize {
            return Err(Error::Scenario(format!(
                "mcc spread {} exceeds MCC cardinality {MCC_CARDINALITY}",
                self.mcc_spread
            )));
        }
        if self.geo_spread > 64 {
            return Err(Error::Scenario(format!(
                "geo spread {} exceeds 64 regions",
                self.geo_spread
            )));
        }
        if self.burst_size < self.mcc_spread.max(self.geo_spread) {
            return Err(Error::Scenario("cnp burst too small to cover its spreads".into()));
        }
        if !(self.window_secs > 0.0) {
            return Err(Error::Scenario("cnp window must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtoParams {
    pub device_swap: bool,
    pub geo_jump_km: f64,
    pub session_size: usize,
}

impl Default for AtoParams {
    fn default() -> Self {
        AtoParams {
            device_swap: true,
            geo_jump_km: 8000.0,
            session_size: 6,
        }
    }
}

impl AtoParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.geo_jump_km > 0.0) || self.geo_jump_km > 19_000.0 {
            return Err(Error::Scenario(format!(
                "account takeover needs a geo jump in (0, 19000] km, got {}",
                self.geo_jump_km
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ScenarioParams {
    Salami(SalamiParams),
    CnpVelocity(CnpParams),
    Ato(AtoParams),
}

impl ScenarioParams {
    pub fn scenario(&self) -> Scenario {
        match self {
            ScenarioParams::Salami(_) => Scenario::Salami,
            ScenarioParams::CnpVelocity(_) => Scenario::CnpVelocity,
            ScenarioParams::Ato(_) => Scenario::Ato,
        }
    }

    pub fn default_for(s: Scenario) -> Result<Self> {
        match s {
            Scenario::Salami => Ok(ScenarioParams::Salami(SalamiParams::default())),
            Scenario::CnpVelocity => Ok(ScenarioParams::CnpVelocity(CnpParams::default())),
            Scenario::Ato => Ok(ScenarioParams::Ato(AtoParams::default())),
            Scenario::Synthetic => Err(Error::Scenario("synthetic is not an injectable scenario".into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub params: ScenarioParams,
    /// Fraction of the stream devoted to this scenario, in (0, 0.05].
    pub prevalence: f64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.prevalence > 0.0 && self.prevalence <= 0.05) {
            return Err(Error::Scenario(format!(
                "prevalence must be in (0, 0.05], got {}",
                self.prevalence
            )));
        }
        match &self.params {
            ScenarioParams::Salami(p) => p.validate(),
            ScenarioParams::CnpVelocity(p) => p.validate(),
            ScenarioParams::Ato(p) => p.validate(),
        }
    }
}

/// Overall fraud prevalence of the default stream.
pub const DEFAULT_PREVALENCE: f64 = 0.0017;

/// The three injected scenarios sharing [`DEFAULT_PREVALENCE`] equally.
pub fn default_scenarios() -> Vec<ScenarioConfig> {
    Scenario::INJECTED
        .iter()
        .map(|&s| ScenarioConfig {
            params: ScenarioParams::default_for(s).expect("injectable"),
            prevalence: DEFAULT_PREVALENCE / 3.0,
        })
        .collect()
}

/// An event before ids and per-account time deltas are assigned.
#[derive(Clone, Debug, PartialEq)]
pub struct RawEvent {
    pub account: u32,
    pub timestamp: f64,
    pub amount: f64,
    pub geo: GeoPoint,
    pub mcc: u32,
    pub channel: u32,
    pub device: u32,
    pub label: Label,
}

/// A finished stream: schema-conformant transactions plus a parallel label
/// list keyed by id. Labels never appear in the transactions themselves.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledStream {
    pub transactions: Vec<Transaction>,
    pub labels: Vec<LabelRecord>,
}

impl LabeledStream {
    pub fn len(&self) -> usize {
        self.transactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transactions.is_empty()
    }

    pub fn label_map(&self) -> HashMap<u64, Label> {
        self.labels.iter().map(|r| (r.id, r.label)).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Transaction, Label)> {
        self.transactions.iter().zip(self.labels.iter().map(|r| r.label))
    }

    pub fn legitimate(&self) -> Vec<Transaction> {
        self.iter()
            .filter(|(_, l)| !l.is_fraud())
            .map(|(t, _)| t.clone())
            .collect()
    }

    pub fn with_label(&self, label: Label) -> Vec<Transaction> {
        self.iter()
            .filter(|(_, l)| *l == label)
            .map(|(t, _)| t.clone())
            .collect()
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|r| r.label == label).count()
    }

    pub fn save(&self, stream_path: &Path, labels_path: &Path) -> Result<()> {
        write_jsonl(stream_path, &self.transactions)?;
        write_jsonl(labels_path, &self.labels)
    }

    pub fn load(stream_path: &Path, labels_path: &Path) -> Result<Self> {
        let transactions: Vec<Transaction> = read_jsonl(stream_path)?;
        let labels: Vec<LabelRecord> = read_jsonl(labels_path)?;
        if transactions.len() != labels.len() || transactions.iter().zip(&labels).any(|(t, l)| t.id != l.id) {
            return Err(Error::Evaluation("stream and label files are not aligned by id".into()));
        }
        Ok(LabeledStream { transactions, labels })
    }

    /// Converts back to raw events so more scenarios can be injected.
    pub fn into_builder(self, profiles: Vec<LegitimateProfile>) -> StreamBuilder {
        let events = self
            .transactions
            .into_iter()
            .zip(self.labels)
            .map(|(t, l)| RawEvent {
                account: t.account,
                timestamp: t.timestamp,
                amount: t.amount,
                geo: GeoPoint {
                    lat: t.continuous[super::profile::LAT],
                    lon: t.continuous[super::profile::LON],
                },
                mcc: t.categorical[super::profile::MCC],
                channel: t.categorical[super::profile::CHANNEL],
                device: t.categorical[super::profile::DEVICE],
                label: l.label,
            })
            .collect();
        StreamBuilder { profiles, events }
    }
}

/// Accumulates legitimate traffic and injected scenario bursts.
#[derive(Clone, Debug)]
pub struct StreamBuilder {
    pub profiles: Vec<LegitimateProfile>,
    pub events: Vec<RawEvent>,
}

impl StreamBuilder {
    pub fn new(profiles: Vec<LegitimateProfile>) -> Result<Self> {
        if profiles.is_empty() {
            return Err(Error::Scenario("at least one profile required".into()));
        }
        for p in &profiles {
            p.validate()?;
        }
        Ok(StreamBuilder {
            profiles,
            events: Vec::new(),
        })
    }

    fn profile(&self, account: u32) -> Result<&LegitimateProfile> {
        self.profiles
            .iter()
            .find(|p| p.account == account)
            .ok_or_else(|| Error::Scenario(format!("unknown account {account}")))
    }

    pub fn end_time(&self) -> f64 {
        self.events.iter().map(|e| e.timestamp).fold(0.0, f64::max)
    }

    /// Merged Poisson traffic of all accounts starting at `start`.
    pub fn add_legitimate<R: Rng + ?Sized>(&mut self, count: usize, start: f64, rng: &mut R) {
        let rates: Vec<f64> = self.profiles.iter().map(|p| p.rate_per_day / 86_400.0).collect();
        let total: f64 = rates.iter().sum();
        let probs: Vec<f64> = rates.iter().map(|r| r / total).collect();
        let gap = Exp::new(total).expect("positive rate");
        let mut t = start;
        for _ in 0..count {
            t += gap.sample(rng);
            let p = &self.profiles[super::profile::sample_index(&probs, rng)];
            let channel = p.sample_channel(rng);
            let device = p.devices[rng.random_range(0..p.devices.len())];
            self.events.push(RawEvent {
                account: p.account,
                timestamp: t,
                amount: round_cents(p.amount_distribution().sample(rng)),
                geo: p.home.jitter(p.dispersion_km, rng),
                mcc: p.sample_mcc(rng),
                channel,
                device,
                label: Label::Legitimate,
            });
        }
    }

    /// One salami burst: `burst_size` micro-transactions inside the window.
    pub fn inject_salami<R: Rng + ?Sized>(
        &mut self,
        account: u32,
        start: f64,
        params: &SalamiParams,
        rng: &mut R,
    ) -> Result<usize> {
        params.validate()?;
        let p = self.profile(account)?.clone();
        let step = params.window_secs / params.burst_size.max(1) as f64;
        for i in 0..params.burst_size {
            let amount = round_down_cents(rng.random_range(0.05..params.max_amount));
            self.events.push(RawEvent {
                account,
                timestamp: start + step * (i as f64 + rng.random_range(0.0..1.0)),
                amount: amount.max(0.01),
                geo: p.home.jitter(p.dispersion_km, rng),
                mcc: p.sample_mcc(rng),
                channel: CHANNEL_ONLINE,
                device: p.devices[0],
                label: Label::Fraud(Scenario::Salami),
            });
        }
        Ok(params.burst_size)
    }

    /// One velocity burst over `mcc_spread` MCCs and `geo_spread` regions.
    pub fn inject_cnp_velocity<R: Rng + ?Sized>(
        &mut self,
        account: u32,
        start: f64,
        params: &CnpParams,
        rng: &mut R,
    ) -> Result<usize> {
        params.validate()?;
        let p = self.profile(account)?.clone();
        let mccs = sample(rng, MCC_CARDINALITY as usize, params.mcc_spread).into_vec();
        let regions: Vec<GeoPoint> = (0..params.geo_spread)
            .map(|_| GeoPoint {
                lat: rng.random_range(-50.0..65.0),
                lon: rng.random_range(-180.0..180.0),
            })
            .collect();
        let device = rng.random_range(0..DEVICE_CARDINALITY);
        let mut times: Vec<f64> = (0..params.burst_size)
            .map(|_| start + rng.random_range(0.0..params.window_secs))
            .collect();
        times.sort_by(f64::total_cmp);
        for (i, t) in times.into_iter().enumerate() {
            self.events.push(RawEvent {
                account,
                timestamp: t,
                amount: round_cents(p.amount_distribution().sample(rng)),
                geo: regions[i % params.geo_spread].jitter(20.0, rng),
                mcc: mccs[i % params.mcc_spread] as u32,
                channel: CHANNEL_ONLINE,
                device,
                label: Label::Fraud(Scenario::CnpVelocity),
            });
        }
        Ok(params.burst_size)
    }

    /// One takeover session: in-profile spending from a foreign device and a
    /// location at least `geo_jump_km` from home.
    pub fn inject_ato<R: Rng + ?Sized>(
        &mut self,
        account: u32,
        start: f64,
        params: &AtoParams,
        rng: &mut R,
    ) -> Result<usize> {
        params.validate()?;
        let p = self.profile(account)?.clone();
        let device = if params.device_swap {
            loop {
                let d = rng.random_range(0..DEVICE_CARDINALITY);
                if !p.devices.contains(&d) {
                    break d;
                }
            }
        } else {
            p.devices[0]
        };
        let bearing = rng.random_range(0.0..360.0);
        let jump = params.geo_jump_km + rng.random_range(0.0..1000.0);
        let location = p.home.destination(bearing, jump.min(19_000.0));
        let (lo, hi) = (p.amount_at_z(-1.645), p.amount_at_z(1.645));
        let gap = Exp::new(p.rate_per_day / 86_400.0).expect("positive rate");
        let mut t = start;
        for _ in 0..params.session_size {
            t += gap.sample(rng);
            let amount = round_cents(p.amount_distribution().sample(rng).clamp(lo, hi));
            self.events.push(RawEvent {
                account,
                timestamp: t,
                amount,
                geo: location.jitter(p.dispersion_km, rng),
                mcc: p.sample_mcc(rng),
                channel: p.sample_channel(rng),
                device,
                label: Label::Fraud(Scenario::Ato),
            });
        }
        Ok(params.session_size)
    }

    /// Injects bursts of one scenario until `count` transactions are added
    /// (the last burst is truncated). Returns the number injected.
    pub fn inject_count<R: Rng + ?Sized>(
        &mut self,
        params: &ScenarioParams,
        count: usize,
        horizon: (f64, f64),
        rng: &mut R,
    ) -> Result<usize> {
        let mut injected = 0;
        while injected < count {
            let remaining = count - injected;
            let account = self.profiles[rng.random_range(0..self.profiles.len())].account;
            let start = rng.random_range(horizon.0..horizon.1.max(horizon.0 + 1.0));
            injected += match params {
                ScenarioParams::Salami(p) => {
                    let p = SalamiParams {
                        burst_size: p.burst_size.min(remaining),
                        ..p.clone()
                    };
                    if p.burst_size == 0 {
                        break;
                    }
                    self.inject_salami(account, start, &p, rng)?
                }
                ScenarioParams::CnpVelocity(p) => {
                    // Truncation would break the spread guarantee; overshoot instead.
                    self.inject_cnp_velocity(account, start, p, rng)?
                }
                ScenarioParams::Ato(p) => {
                    let p = AtoParams {
                        session_size: p.session_size.min(remaining),
                        ..p.clone()
                    };
                    if p.session_size == 0 {
                        break;
                    }
                    self.inject_ato(account, start, &p, rng)?
                }
            };
        }
        Ok(injected)
    }

    /// Sorts by time, assigns sequential ids and per-account time deltas.
    pub fn finish(mut self) -> LabeledStream {
        self.events.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        let mut last: HashMap<u32, f64> = HashMap::new();
        let mut transactions = Vec::with_capacity(self.events.len());
        let mut labels = Vec::with_capacity(self.events.len());
        for (id, e) in self.events.into_iter().enumerate() {
            let mean_gap = self
                .profiles
                .iter()
                .find(|p| p.account == e.account)
                .map(|p| p.mean_interval_secs())
                .unwrap_or(28_800.0);
            let delta = match last.insert(e.account, e.timestamp) {
                Some(prev) => (e.timestamp - prev).max(0.0),
                None => mean_gap,
            };
            transactions.push(Transaction {
                id: id as u64,
                account: e.account,
                timestamp: e.timestamp,
                amount: e.amount,
                continuous: vec![e.amount, delta, e.geo.lat, e.geo.lon],
                categorical: vec![e.mcc, e.channel, e.device],
            });
            labels.push(LabelRecord {
                id: id as u64,
                label: e.label,
            });
        }
        LabeledStream { transactions, labels }
    }
}

fn round_cents(x: f64) -> f64 {
    ((x * 100.0).round() / 100.0).max(0.01)
}

fn round_down_cents(x: f64) -> f64 {
    (x * 100.0).floor() / 100.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub accounts: usize,
    pub length: usize,
    pub scenarios: Vec<ScenarioConfig>,
    pub seed: u64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            accounts: 20,
            length: 100_000,
            scenarios: default_scenarios(),
            seed: 17,
        }
    }
}

/// Legitimate traffic with injected scenarios; the per-scenario fraud count
/// is drawn from `Binomial(length, prevalence)`. Profiles are returned so
/// later streams can reuse the same accounts.
pub fn generate_stream(config: &StreamConfig) -> Result<(LabeledStream, Vec<LegitimateProfile>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let profiles = generate_profiles(config.accounts, &mut rng)?;
    let stream = generate_stream_for(&profiles, config.length, &config.scenarios, 0.0, &mut rng)?;
    Ok((stream, profiles))
}

/// Like [`generate_stream`] over existing profiles, starting at `start_time`.
pub fn generate_stream_for<R: Rng + ?Sized>(
    profiles: &[LegitimateProfile],
    length: usize,
    scenarios: &[ScenarioConfig],
    start_time: f64,
    rng: &mut R,
) -> Result<LabeledStream> {
    if length == 0 {
        return Err(Error::Scenario("stream length must be positive".into()));
    }
    let mut counts = Vec::with_capacity(scenarios.len());
    for s in scenarios {
        s.validate()?;
        let n = Binomial::new(length as u64, s.prevalence)
            .map_err(|e| Error::Scenario(e.to_string()))?
            .sample(rng) as usize;
        counts.push(n);
    }
    let fraud: usize = counts.iter().sum();
    let mut b = StreamBuilder::new(profiles.to_vec())?;
    b.add_legitimate(length.saturating_sub(fraud), start_time, rng);
    let horizon = (start_time, b.end_time());
    for (s, &n) in scenarios.iter().zip(&counts) {
        b.inject_count(&s.params, n, horizon, rng)?;
    }
    Ok(b.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::profile::{default_schema, TIME_DELTA};

    fn small(scenarios: Vec<ScenarioConfig>, seed: u64) -> LabeledStream {
        generate_stream(&StreamConfig {
            accounts: 5,
            length: 5_000,
            scenarios,
            seed,
        })
        .unwrap()
        .0
    }

    #[test]
    fn no_scenarios_means_all_legitimate() {
        let s = small(vec![], 1);
        assert_eq!(s.len(), 5_000);
        assert!(s.labels.iter().all(|r| r.label == Label::Legitimate));
    }

    #[test]
    fn same_seed_same_stream() {
        assert_eq!(small(default_scenarios(), 4), small(default_scenarios(), 4));
        assert_ne!(small(default_scenarios(), 4), small(default_scenarios(), 5));
    }

    #[test]
    fn stream_is_schema_valid_and_time_ordered() {
        let s = small(default_scenarios(), 2);
        let schema = default_schema();
        for w in s.transactions.windows(2) {
            assert!(w[0].timestamp <= w[1].timestamp);
        }
        for t in &s.transactions {
            schema.validate_transaction(t).unwrap();
        }
    }

    fn builder() -> (StreamBuilder, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let profiles = generate_profiles(3, &mut rng).unwrap();
        (StreamBuilder::new(profiles).unwrap(), rng)
    }

    #[test]
    fn salami_burst_of_200_in_a_minute() {
        let (mut b, mut rng) = builder();
        b.add_legitimate(300, 0.0, &mut rng);
        let p = SalamiParams {
            max_amount: 0.30,
            burst_size: 200,
            window_secs: 60.0,
        };
        b.inject_salami(1, 50_000.0, &p, &mut rng).unwrap();
        let s = b.finish();
        let salami = s.with_label(Label::Fraud(Scenario::Salami));
        assert_eq!(salami.len(), 200);
        assert!(salami.iter().all(|t| t.amount < 0.30 && t.account == 1));
        let span = salami.last().unwrap().timestamp - salami[0].timestamp;
        assert!(span <= 60.0);
        // most deltas are sub-second against a ~8h legitimate mean
        let fast = salami.iter().filter(|t| t.continuous[TIME_DELTA] < 1.0).count();
        assert!(fast > 150);
    }

    #[test]
    fn salami_rejects_amount_at_limit_and_empty_burst_is_noop() {
        let (mut b, mut rng) = builder();
        let bad = SalamiParams {
            max_amount: 0.50,
            ..SalamiParams::default()
        };
        let err = b.inject_salami(0, 0.0, &bad, &mut rng).unwrap_err();
        assert!(err.to_string().contains("0.50"));
        let empty = SalamiParams {
            burst_size: 0,
            ..SalamiParams::default()
        };
        assert_eq!(b.inject_salami(0, 0.0, &empty, &mut rng).unwrap(), 0);
        assert!(b.events.is_empty());
    }

    #[test]
    fn cnp_covers_spreads_inside_window() {
        let (mut b, mut rng) = builder();
        b.inject_cnp_velocity(2, 1_000.0, &CnpParams::default(), &mut rng)
            .unwrap();
        let s = b.finish();
        let txs = s.with_label(Label::Fraud(Scenario::CnpVelocity));
        let mut mccs: Vec<u32> = txs.iter().map(|t| t.categorical[0]).collect();
        mccs.sort_unstable();
        mccs.dedup();
        assert!(mccs.len() >= 12);
        let span = txs.last().unwrap().timestamp - txs[0].timestamp;
        assert!(span <= 600.0);
        let pts: Vec<GeoPoint> = txs
            .iter()
            .map(|t| GeoPoint {
                lat: t.continuous[2],
                lon: t.continuous[3],
            })
            .collect();
        // regions are distinct clusters: at least 5 points pairwise > 100 km apart
        let mut reps: Vec<GeoPoint> = Vec::new();
        for p in pts {
            if reps.iter().all(|r| r.distance_km(p) > 100.0) {
                reps.push(p);
            }
        }
        assert!(reps.len() >= 5);
    }

    #[test]
    fn cnp_degenerate_and_oversized_spreads_rejected() {
        let (mut b, mut rng) = builder();
        let degenerate = CnpParams {
            mcc_spread: 1,
            geo_spread: 1,
            ..CnpParams::default()
        };
        assert!(b.inject_cnp_velocity(0, 0.0, &degenerate, &mut rng).is_err());
        let oversized = CnpParams {
            mcc_spread: 30,
            burst_size: 30,
            ..CnpParams::default()
        };
        assert!(b.inject_cnp_velocity(0, 0.0, &oversized, &mut rng).is_err());
    }

    #[test]
    fn ato_swaps_device_jumps_geo_keeps_amounts() {
        let (mut b, mut rng) = builder();
        let p = b.profiles[0].clone();
        b.inject_ato(0, 0.0, &AtoParams::default(), &mut rng).unwrap();
        let s = b.finish();
        for t in &s.transactions {
            assert!(!p.devices.contains(&t.categorical[2]));
            let at = GeoPoint {
                lat: t.continuous[2],
                lon: t.continuous[3],
            };
            assert!(p.home.distance_km(at) >= 7_800.0);
            assert!(t.amount >= p.amount_at_z(-1.645) - 0.01 && t.amount <= p.amount_at_z(1.645) + 0.01);
        }
        let zero = AtoParams {
            geo_jump_km: 0.0,
            ..AtoParams::default()
        };
        assert!(b_reject(&zero));
    }

    fn b_reject(p: &AtoParams) -> bool {
        let (mut b, mut rng) = builder();
        b.inject_ato(0, 0.0, p, &mut rng).is_err()
    }

    #[test]
    fn prevalence_outside_range_rejected() {
        let mut cfg = default_scenarios();
        cfg[0].prevalence = 0.2;
        assert!(generate_stream(&StreamConfig {
            accounts: 2,
            length: 100,
            scenarios: cfg,
            seed: 0
        })
        .is_err());
    }

    #[test]
    fn round_trip_through_files() {
        let s = small(default_scenarios(), 3);
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("s.jsonl"), dir.path().join("l.jsonl"));
        s.save(&a, &b).unwrap();
        assert_eq!(LabeledStream::load(&a, &b).unwrap(), s);
    }
}
