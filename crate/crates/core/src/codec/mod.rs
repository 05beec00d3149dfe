//! Transaction schema, numeric encoding and the Gumbel-Softmax estimator.

mod encode;
mod gumbel;
mod schema;

pub use encode::{Codec, EmbeddingTable, FeatureLayout, FeatureVector, FieldKind, FieldSlice, NormStats};
pub use gumbel::{
    argmax, gumbel, gumbel_softmax, gumbel_softmax_graph, sample_gumbel, sample_gumbel_with, GumbelConfig,
    TemperatureSchedule,
};
pub use schema::{
    read_jsonl, write_jsonl, CategoricalField, ContinuousField, Normalization, Transaction, TransactionSchema,
    SCHEMA_VERSION,
};
