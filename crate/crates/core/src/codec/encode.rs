use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::schema::{Normalization, Transaction, TransactionSchema};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

/// `k x dim` lookup table for one categorical field. Tables are frozen once
/// built: reconstruction error is measured in the space they define.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub cardinality: usize,
    pub dim: usize,
    pub rows: Vec<f64>,
}

impl EmbeddingTable {
    /// One-hot rows; requires `dim == cardinality`.
    pub fn identity(k: usize) -> Self {
        let mut rows = vec![0.0; k * k];
        for i in 0..k {
            rows[i * k + i] = 1.0;
        }
        EmbeddingTable {
            cardinality: k,
            dim: k,
            rows,
        }
    }

    /// Gaussian rows with variance `1 / dim`, so a whole field carries about
    /// the same squared norm as one z-scored continuous column.
    pub fn random(k: usize, dim: usize, seed: u64) -> Self {
        if dim == k {
            return Self::identity(k);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (dim as f64).sqrt();
        let rows = (0..k * dim)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                scale * v
            })
            .collect();
        EmbeddingTable {
            cardinality: k,
            dim,
            rows,
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_tensor(&self) -> Tensor {
        Tensor::matrix(self.cardinality, self.dim, self.rows.clone()).expect("valid table")
    }

    /// Index of the row closest (squared Euclidean) to `v`.
    pub fn nearest(&self, v: &[f64]) -> usize {
        (0..self.cardinality)
            .map(|i| {
                let d: f64 = self.row(i).iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
                (i, d)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
            .expect("cardinality >= 2")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldKind {
    Continuous(usize),
    Categorical(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSlice {
    pub name: String,
    pub kind: FieldKind,
    pub start: usize,
    pub end: usize,
}

/// Maps each schema field to its columns in a feature vector: continuous
/// fields first (one column each), then categorical embeddings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub fields: Vec<FieldSlice>,
    pub dim: usize,
}

impl FeatureLayout {
    pub fn num_fields(&self) -> usize {
        self.fields.len()
    }

    pub fn num_continuous(&self) -> usize {
        self.fields
            .iter()
            .filter(|f| matches!(f.kind, FieldKind::Continuous(_)))
            .count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub layout: Arc<FeatureLayout>,
}

/// Schema, frozen normalisation statistics and embedding tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Codec {
    pub schema: TransactionSchema,
    pub stats: Vec<NormStats>,
    pub tables: Vec<EmbeddingTable>,
    #[serde(skip)]
    layout: Option<Arc<FeatureLayout>>,
}

fn pre_transform(norm: Normalization, x: f64) -> f64 {
    match norm {
        Normalization::ZScore => x,
        Normalization::LogThenZScore => x.max(0.0).ln_1p(),
    }
}

fn inverse_pre_transform(norm: Normalization, y: f64) -> f64 {
    match norm {
        Normalization::ZScore => y,
        Normalization::LogThenZScore => y.exp_m1().max(0.0),
    }
}

impl Codec {
    pub fn new(schema: TransactionSchema, stats: Vec<NormStats>, tables: Vec<EmbeddingTable>) -> Result<Self> {
        schema.validate()?;
        if stats.len() != schema.continuous.len() || tables.len() != schema.categorical.len() {
            return Err(Error::contract("codec statistics/tables do not match schema"));
        }
        for (f, t) in schema.categorical.iter().zip(&tables) {
            if t.cardinality != f.cardinality as usize
                || t.dim != f.embedding_dim
                || t.rows.len() != t.cardinality * t.dim
            {
                return Err(Error::contract(format!(
                    "embedding table for `{}` must be {} x {}",
                    f.name, f.cardinality, f.embedding_dim
                )));
            }
        }
        if stats.iter().any(|s| !(s.std > 0.0) || !s.mean.is_finite()) {
            return Err(Error::contract("normalisation std must be positive"));
        }
        let mut codec = Codec {
            schema,
            stats,
            tables,
            layout: None,
        };
        codec.layout = Some(Arc::new(codec.build_layout()));
        Ok(codec)
    }

    /// Fits normalisation statistics on `legitimate` and draws seeded
    /// embedding tables.
    pub fn fit(schema: TransactionSchema, legitimate: &[Transaction], embedding_seed: u64) -> Result<Self> {
        schema.validate()?;
        if legitimate.is_empty() {
            return Err(Error::contract("cannot fit codec on zero transactions"));
        }
        let n = legitimate.len() as f64;
        let stats = schema
            .continuous
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let vals = legitimate
                    .iter()
                    .map(|t| pre_transform(f.normalization, t.continuous[i]));
                let mean = vals.clone().sum::<f64>() / n;
                let var = vals.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                NormStats {
                    mean,
                    std: var.sqrt().max(1e-9),
                }
            })
            .collect();
        let tables = schema
            .categorical
            .iter()
            .enumerate()
            .map(|(i, f)| {
                EmbeddingTable::random(
                    f.cardinality as usize,
                    f.embedding_dim,
                    embedding_seed.wrapping_add(i as u64 * 7919),
                )
            })
            .collect();
        Codec::new(schema, stats, tables)
    }

    fn build_layout(&self) -> FeatureLayout {
        let mut fields = Vec::new();
        let mut pos = 0;
        for (i, f) in self.schema.continuous.iter().enumerate() {
            fields.push(FieldSlice {
                name: f.name.clone(),
                kind: FieldKind::Continuous(i),
                start: pos,
                end: pos + 1,
            });
            pos += 1;
        }
        for (i, f) in self.schema.categorical.iter().enumerate() {
            fields.push(FieldSlice {
                name: f.name.clone(),
                kind: FieldKind::Categorical(i),
                start: pos,
                end: pos + f.embedding_dim,
            });
            pos += f.embedding_dim;
        }
        FeatureLayout { fields, dim: pos }
    }

    pub fn layout(&self) -> &Arc<FeatureLayout> {
        self.layout.as_ref().expect("layout built in Codec::new")
    }

    pub fn dim(&self) -> usize {
        self.layout().dim
    }

    pub fn encode(&self, t: &Transaction) -> Result<FeatureVector> {
        let mut values = vec![0.0; self.dim()];
        self.encode_into(t, &mut values)?;
        Ok(FeatureVector {
            values,
            layout: Arc::clone(self.layout()),
        })
    }

    pub fn encode_into(&self, t: &Transaction, out: &mut [f64]) -> Result<()> {
        self.schema.validate_transaction(t)?;
        if out.len() != self.dim() {
            return Err(Error::Shape {
                op: "encode",
                left: vec![self.dim()],
                right: vec![out.len()],
            });
        }
        for (i, f) in self.schema.continuous.iter().enumerate() {
            let s = self.stats[i];
            out[i] = (pre_transform(f.normalization, t.continuous[i]) - s.mean) / s.std;
        }
        let mut pos = self.schema.continuous.len();
        for (table, &idx) in self.tables.iter().zip(&t.categorical) {
            out[pos..pos + table.dim].copy_from_slice(table.row(idx as usize));
            pos += table.dim;
        }
        Ok(())
    }

    /// Encodes many transactions into a `[n, dim]` matrix.
    pub fn encode_batch(&self, txs: &[Transaction]) -> Result<Tensor> {
        if txs.is_empty() {
            return Err(Error::contract("encode_batch of zero transactions"));
        }
        let d = self.dim();
        let mut data = vec![0.0; txs.len() * d];
        for (t, row) in txs.iter().zip(data.chunks_mut(d)) {
            self.encode_into(t, row)?;
        }
        Tensor::matrix(txs.len(), d, data)
    }

    /// Inverts continuous normalisation and maps each categorical slice to its
    /// nearest embedding row.
    pub fn decode(&self, values: &[f64]) -> Result<(Vec<f64>, Vec<u32>)> {
        if values.len() != self.dim() {
            return Err(Error::Shape {
                op: "decode",
                left: vec![self.dim()],
                right: vec![values.len()],
            });
        }
        let continuous = self
            .schema
            .continuous
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let s = self.stats[i];
                inverse_pre_transform(f.normalization, values[i] * s.std + s.mean)
            })
            .collect();
        let mut pos = self.schema.continuous.len();
        let categorical = self
            .tables
            .iter()
            .map(|table| {
                let idx = table.nearest(&values[pos..pos + table.dim]);
                pos += table.dim;
                idx as u32
            })
            .collect();
        Ok((continuous, categorical))
    }

    /// Builds a schema-valid transaction from a feature vector.
    pub fn decode_transaction(&self, values: &[f64], id: u64, account: u32, timestamp: f64) -> Result<Transaction> {
        let (mut continuous, categorical) = self.decode(values)?;
        for v in &mut continuous {
            if !v.is_finite() {
                *v = 0.0;
            }
        }
        let amount = match self.schema.continuous_index("amount") {
            Some(i) => {
                continuous[i] = continuous[i].max(0.0);
                continuous[i]
            }
            None => 0.0,
        };
        Ok(Transaction {
            id,
            account,
            timestamp,
            amount,
            continuous,
            categorical,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let raw: Codec = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Codec::new(raw.schema, raw.stats, raw.tables)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::schema::{CategoricalField, ContinuousField, SCHEMA_VERSION};

    fn schema(dim: usize) -> TransactionSchema {
        TransactionSchema {
            version: SCHEMA_VERSION,
            continuous: vec![
                ContinuousField {
                    name: "amount".into(),
                    unit: "currency".into(),
                    normalization: Normalization::ZScore,
                },
                ContinuousField {
                    name: "lat".into(),
                    unit: "deg".into(),
                    normalization: Normalization::ZScore,
                },
            ],
            categorical: vec![
                CategoricalField {
                    name: "mcc".into(),
                    cardinality: 5,
                    embedding_dim: dim,
                },
                CategoricalField {
                    name: "channel".into(),
                    cardinality: 3,
                    embedding_dim: 3,
                },
            ],
        }
    }

    fn unit_codec(dim: usize) -> Codec {
        let s = schema(dim);
        let tables = vec![EmbeddingTable::random(5, dim, 1), EmbeddingTable::identity(3)];
        let stats = vec![NormStats { mean: 0.0, std: 1.0 }; 2];
        Codec::new(s, stats, tables).unwrap()
    }

    fn tx(amount: f64, lat: f64, mcc: u32, ch: u32) -> Transaction {
        Transaction {
            id: 7,
            account: 0,
            timestamp: 0.0,
            amount,
            continuous: vec![amount, lat],
            categorical: vec![mcc, ch],
        }
    }

    #[test]
    fn zero_continuous_encodes_to_zero() {
        let c = unit_codec(2);
        let fv = c.encode(&tx(0.0, 0.0, 1, 2)).unwrap();
        assert_eq!(&fv.values[..2], &[0.0, 0.0]);
    }

    #[test]
    fn categorical_slice_is_table_row() {
        let c = unit_codec(2);
        let fv = c.encode(&tx(1.0, 2.0, 3, 1)).unwrap();
        assert_eq!(&fv.values[2..4], c.tables[0].row(3));
        assert_eq!(&fv.values[4..7], &[0.0, 1.0, 0.0]);
        assert_eq!(fv.layout.dim, 7);
    }

    #[test]
    fn identity_embeddings_round_trip_indices() {
        let c = unit_codec(5);
        for mcc in 0..5 {
            for ch in 0..3 {
                let t = tx(4.5, -2.0, mcc, ch);
                let (cont, cat) = c.decode(&c.encode(&t).unwrap().values).unwrap();
                assert_eq!(cat, vec![mcc, ch]);
                assert_eq!(cont, vec![4.5, -2.0]);
            }
        }
    }

    #[test]
    fn out_of_range_category_is_encoding_error() {
        let c = unit_codec(2);
        assert!(matches!(c.encode(&tx(1.0, 0.0, 5, 0)), Err(Error::Encoding { .. })));
    }

    #[test]
    fn log_normalisation_inverts() {
        let mut s = schema(2);
        s.continuous[0].normalization = Normalization::LogThenZScore;
        let legit: Vec<Transaction> = (1..50).map(|i| tx(i as f64 * 3.0, i as f64, 0, 0)).collect();
        let c = Codec::fit(s, &legit, 9).unwrap();
        let t = tx(0.3, 10.0, 2, 1);
        let (cont, _) = c.decode(&c.encode(&t).unwrap().values).unwrap();
        assert!((cont[0] - 0.3).abs() < 1e-12);
        assert!((cont[1] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn encode_is_pure() {
        let c = unit_codec(2);
        let t = tx(1.25, 3.5, 4, 2);
        assert_eq!(c.encode(&t).unwrap(), c.encode(&t).unwrap());
    }
}
