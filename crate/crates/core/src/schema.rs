//! Column schema for tabular data: column kinds, missing-value policies,
//! and the membership-exclusion flag.
//!
//! Schemas are stored as JSON arrays of column records with the keys
//! `name`, `kind`, `imputation`, `exclude_from_membership`.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a raw column contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnKind {
    Numeric,
    Binary,
    Categorical,
}

/// Missing-value policy applied when a column is materialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImputePolicy {
    /// Missing binary cells become 0 (absent findings are unlikely to go
    /// unrecorded when present).
    AssumeNegative,
    /// Missing binary cells become 1.
    AssumePositive,
    /// Missing cells take the median of the non-missing fitting values.
    Median,
    /// Missingness becomes its own category level, `MISSING`.
    KeepMissingCategory,
    /// No imputation; a missing cell is an error.
    None,
}

/// One column of the schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    pub imputation: ImputePolicy,
    #[serde(default)]
    pub exclude_from_membership: bool,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, kind: ColumnKind, imputation: ImputePolicy) -> Self {
        Self {
            name: name.into(),
            kind,
            imputation,
            exclude_from_membership: false,
        }
    }

    pub fn exclude_from_membership(mut self) -> Self {
        self.exclude_from_membership = true;
        self
    }
}

/// Ordered set of feature columns. The outcome and group columns are not
/// part of the schema; they are named separately at ingestion time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureSchema {
    pub columns: Vec<ColumnSpec>,
}

impl FeatureSchema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self> {
        let schema = Self { columns };
        schema.validate()?;
        Ok(schema)
    }

    /// A schema of plain numeric columns without imputation, as produced by
    /// generators and simulations.
    pub fn all_numeric(names: &[&str]) -> Self {
        Self {
            columns: names
                .iter()
                .map(|n| ColumnSpec::new(*n, ColumnKind::Numeric, ImputePolicy::None))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.columns.is_empty() {
            return Err(Error::Schema("schema has no columns".into()));
        }
        let mut seen = HashSet::new();
        for col in &self.columns {
            if !seen.insert(col.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name {:?}", col.name)));
            }
            match (col.kind, col.imputation) {
                (ColumnKind::Categorical, ImputePolicy::KeepMissingCategory) => {}
                (_, ImputePolicy::KeepMissingCategory) => {
                    return Err(Error::Schema(format!(
                        "column {:?}: keep-missing-category is only valid for categorical columns",
                        col.name
                    )));
                }
                (ColumnKind::Binary, ImputePolicy::AssumeNegative | ImputePolicy::AssumePositive) => {}
                (_, ImputePolicy::AssumeNegative | ImputePolicy::AssumePositive) => {
                    return Err(Error::Schema(format!(
                        "column {:?}: assume-negative/assume-positive are only valid for binary columns",
                        col.name
                    )));
                }
                (ColumnKind::Categorical, ImputePolicy::Median) => {
                    return Err(Error::Schema(format!(
                        "column {:?}: median imputation is not valid for categorical columns",
                        col.name
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schema: FeatureSchema = serde_json::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicate_names() {
        let err = FeatureSchema::new(vec![
            ColumnSpec::new("a", ColumnKind::Numeric, ImputePolicy::None),
            ColumnSpec::new("a", ColumnKind::Binary, ImputePolicy::None),
        ]);
        assert!(matches!(err, Err(Error::Schema(_))));
    }

    #[test]
    fn rejects_keep_missing_on_non_categorical() {
        let err = FeatureSchema::new(vec![ColumnSpec::new(
            "x",
            ColumnKind::Numeric,
            ImputePolicy::KeepMissingCategory,
        )]);
        assert!(matches!(err, Err(Error::Schema(_))));
    }

    #[test]
    fn rejects_assume_negative_on_numeric() {
        let err = FeatureSchema::new(vec![ColumnSpec::new(
            "x",
            ColumnKind::Numeric,
            ImputePolicy::AssumeNegative,
        )]);
        assert!(matches!(err, Err(Error::Schema(_))));
    }

    #[test]
    fn json_round_trip_uses_exact_keys() {
        let schema = FeatureSchema::new(vec![
            ColumnSpec::new("age", ColumnKind::Numeric, ImputePolicy::Median)
                .exclude_from_membership(),
            ColumnSpec::new("pain", ColumnKind::Binary, ImputePolicy::AssumeNegative),
            ColumnSpec::new("mech", ColumnKind::Categorical, ImputePolicy::KeepMissingCategory),
        ])
        .unwrap();
        let text = schema.to_json();
        for key in ["\"name\"", "\"kind\"", "\"imputation\"", "\"exclude_from_membership\""] {
            assert!(text.contains(key), "missing key {key} in {text}");
        }
        assert!(text.contains("\"assume-negative\""));
        assert!(text.contains("\"keep-missing-category\""));
        let back = FeatureSchema::from_json(&text).unwrap();
        assert_eq!(schema, back);
    }
}
