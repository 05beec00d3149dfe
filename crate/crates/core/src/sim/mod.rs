//! Synthetic legitimate traffic, injected fraud scenarios and evaluation.

mod evaluate;
mod profile;
mod stream;

pub use evaluate::{auroc, evaluate, Confusion, MetricsReport, OracleReviewer, Outcome, ScenarioMetrics};
pub use profile::{
    default_schema, generate_profiles, GeoPoint, LegitimateProfile, AMOUNT, CHANNEL, CHANNEL_ATM, CHANNEL_CARDINALITY,
    CHANNEL_ONLINE, CHANNEL_POS, DEVICE, DEVICE_CARDINALITY, LAT, LEGIT_DEVICE_POOL, LON, MCC, MCC_CARDINALITY,
    TIME_DELTA,
};
pub use stream::{
    default_scenarios, generate_stream, generate_stream_for, AtoParams, CnpParams, Label, LabelRecord, LabeledStream,
    RawEvent, SalamiParams, Scenario, ScenarioConfig, ScenarioParams, StreamBuilder, StreamConfig, DEFAULT_PREVALENCE,
};
