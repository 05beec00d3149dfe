use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    ZScore,
    /// `ln(1 + x)` followed by z-scoring, for heavy-tailed non-negative fields.
    LogThenZScore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuousField {
    pub name: String,
    pub unit: String,
    pub normalization: Normalization,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoricalField {
    pub name: String,
    pub cardinality: u32,
    pub embedding_dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransactionSchema {
    pub version: u32,
    pub continuous: Vec<ContinuousField>,
    pub categorical: Vec<CategoricalField>,
}

/// One banking event. `continuous` and `categorical` follow schema order; the
/// continuous field named `amount`, when present, mirrors [`Transaction::amount`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub id: u64,
    pub account: u32,
    pub timestamp: f64,
    pub amount: f64,
    pub continuous: Vec<f64>,
    pub categorical: Vec<u32>,
}

impl TransactionSchema {
    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::contract(format!("unsupported schema version {}", self.version)));
        }
        let mut names: Vec<&str> = self.field_names().collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::contract("schema field names must be unique"));
        }
        for c in &self.categorical {
            if c.cardinality < 2 || c.embedding_dim < 1 {
                return Err(Error::contract(format!(
                    "categorical field `{}` needs cardinality >= 2 and embedding_dim >= 1",
                    c.name
                )));
            }
        }
        if self.num_fields() == 0 {
            return Err(Error::contract("schema declares no fields"));
        }
        Ok(())
    }

    /// Continuous names first, then categorical, which is also the order of
    /// Shapley players.
    pub fn field_names(&self) -> impl Iterator<Item = &str> {
        self.continuous
            .iter()
            .map(|f| f.name.as_str())
            .chain(self.categorical.iter().map(|f| f.name.as_str()))
    }

    pub fn num_fields(&self) -> usize {
        self.continuous.len() + self.categorical.len()
    }

    pub fn continuous_index(&self, name: &str) -> Option<usize> {
        self.continuous.iter().position(|f| f.name == name)
    }

    pub fn categorical_index(&self, name: &str) -> Option<usize> {
        self.categorical.iter().position(|f| f.name == name)
    }

    pub fn validate_transaction(&self, t: &Transaction) -> Result<()> {
        if t.continuous.len() != self.continuous.len() || t.categorical.len() != self.categorical.len() {
            return Err(Error::contract(format!(
                "transaction {} has {}+{} fields, schema expects {}+{}",
                t.id,
                t.continuous.len(),
                t.categorical.len(),
                self.continuous.len(),
                self.categorical.len()
            )));
        }
        if !(t.amount.is_finite() && t.amount >= 0.0) || !t.timestamp.is_finite() {
            return Err(Error::contract(format!(
                "transaction {} has invalid amount or timestamp",
                t.id
            )));
        }
        if let Some(v) = t.continuous.iter().find(|v| !v.is_finite()) {
            return Err(Error::contract(format!(
                "transaction {} has non-finite value {v}",
                t.id
            )));
        }
        if let Some(i) = self.continuous_index("amount") {
            if t.continuous[i] != t.amount {
                return Err(Error::contract(format!(
                    "transaction {} amount field disagrees with amount",
                    t.id
                )));
            }
        }
        for (f, &idx) in self.categorical.iter().zip(&t.categorical) {
            if idx >= f.cardinality {
                return Err(Error::Encoding {
                    field: f.name.clone(),
                    index: idx,
                    cardinality: f.cardinality,
                });
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s: TransactionSchema = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        s.validate()?;
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Reads newline-delimited JSON records, skipping blank lines.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in f.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> TransactionSchema {
        TransactionSchema {
            version: SCHEMA_VERSION,
            continuous: vec![ContinuousField {
                name: "amount".into(),
                unit: "currency".into(),
                normalization: Normalization::LogThenZScore,
            }],
            categorical: vec![CategoricalField {
                name: "mcc".into(),
                cardinality: 4,
                embedding_dim: 2,
            }],
        }
    }

    #[test]
    fn rejects_duplicate_names_and_tiny_cardinality() {
        let mut s = schema();
        s.validate().unwrap();
        s.categorical[0].name = "amount".into();
        assert!(s.validate().is_err());
        let mut s = schema();
        s.categorical[0].cardinality = 1;
        assert!(s.validate().is_err());
    }

    #[test]
    fn out_of_range_index_names_field() {
        let t = Transaction {
            id: 1,
            account: 0,
            timestamp: 0.0,
            amount: 3.0,
            continuous: vec![3.0],
            categorical: vec![9],
        };
        match schema().validate_transaction(&t) {
            Err(Error::Encoding { field, index, .. }) => {
                assert_eq!(field, "mcc");
                assert_eq!(index, 9);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
