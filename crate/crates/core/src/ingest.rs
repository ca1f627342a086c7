//! CSV ingestion and missing-value handling.
//!
//! Ingestion is two-phase so that imputation statistics can be fitted on the
//! training partition only: [`read_csv`] parses into a [`RawTable`] that
//! preserves missingness, the table can be split, and a [`Materializer`]
//! fitted on one table turns any compatible table into a [`Dataset`].
//! [`load_csv`] is the one-shot convenience that fits the materializer on
//! the file itself.
//!
//! Missing cells are empty fields or the literal `NA`. Categorical columns
//! are one-hot expanded into `name=level` indicator columns; the membership
//! view always carries a `name=MISSING` indicator so that categorical
//! missingness stays observable to membership models regardless of the
//! outcome-view policy.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::schema::{ColumnKind, FeatureSchema, ImputePolicy};

pub const MISSING_LEVEL: &str = "MISSING";

/// One parsed feature column with missingness preserved.
#[derive(Debug, Clone)]
pub enum RawColumn {
    /// Numeric or binary values.
    Number(Vec<Option<f64>>),
    /// Categorical levels as text.
    Text(Vec<Option<String>>),
}

impl RawColumn {
    fn take_rows(&self, rows: &[usize]) -> RawColumn {
        match self {
            RawColumn::Number(v) => RawColumn::Number(rows.iter().map(|&i| v[i]).collect()),
            RawColumn::Text(v) => RawColumn::Text(rows.iter().map(|&i| v[i].clone()).collect()),
        }
    }
}

/// Parsed but not yet imputed tabular data.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub schema: FeatureSchema,
    pub columns: Vec<RawColumn>,
    pub y: Vec<u8>,
    pub group: Option<Vec<String>>,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn take_rows(&self, rows: &[usize]) -> RawTable {
        RawTable {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.take_rows(rows)).collect(),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            group: self
                .group
                .as_ref()
                .map(|g| rows.iter().map(|&i| g[i].clone()).collect()),
        }
    }

    /// Split rows before imputation so statistics can be fitted train-only.
    pub fn split(
        &self,
        spec: &crate::dataset::SplitSpec,
    ) -> Result<(RawTable, RawTable, RawTable)> {
        let strat = spec.stratify_by_outcome.then_some(self.y.as_slice());
        let (tr, va, te) = crate::dataset::split_indices(self.n_rows(), spec, strat)?;
        Ok((self.take_rows(&tr), self.take_rows(&va), self.take_rows(&te)))
    }
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == "NA"
}

/// Parse a CSV file against a schema. The header must contain exactly the
/// schema columns plus the outcome column and, if named, the group column.
pub fn read_csv(
    path: impl AsRef<Path>,
    schema: &FeatureSchema,
    outcome_col: &str,
    group_col: Option<&str>,
) -> Result<RawTable> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;

    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();

    let mut expected: BTreeSet<&str> = schema.columns.iter().map(|c| c.name.as_str()).collect();
    if schema.column(outcome_col).is_some() {
        return Err(Error::Schema(format!(
            "outcome column {outcome_col:?} must not also be a schema feature"
        )));
    }
    expected.insert(outcome_col);
    if let Some(g) = group_col {
        if schema.column(g).is_some() {
            return Err(Error::Schema(format!(
                "group column {g:?} must not also be a schema feature"
            )));
        }
        expected.insert(g);
    }
    let present: BTreeSet<&str> = headers.iter().map(|h| h.as_str()).collect();
    for name in &expected {
        if !present.contains(name) {
            return Err(Error::Schema(format!("column {name:?} missing from CSV header")));
        }
    }
    for name in &present {
        if !expected.contains(name) {
            return Err(Error::Schema(format!("unknown column {name:?} in CSV header")));
        }
    }
    if headers.len() != present.len() {
        return Err(Error::Schema("duplicate column in CSV header".into()));
    }

    let col_pos = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let outcome_pos = col_pos(outcome_col);
    let group_pos = group_col.map(col_pos);
    let feature_pos: Vec<usize> = schema.columns.iter().map(|c| col_pos(&c.name)).collect();

    let mut columns: Vec<RawColumn> = schema
        .columns
        .iter()
        .map(|c| match c.kind {
            ColumnKind::Categorical => RawColumn::Text(Vec::new()),
            _ => RawColumn::Number(Vec::new()),
        })
        .collect();
    let mut y = Vec::new();
    let mut group = group_col.map(|_| Vec::new());

    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let line = row_idx + 2; // 1-based, after header

        let outcome_cell = record.get(outcome_pos).unwrap_or("");
        if is_missing(outcome_cell) {
            return Err(Error::Validation(format!("line {line}: missing outcome value")));
        }
        match outcome_cell.parse::<f64>() {
            Ok(v) if v == 0.0 => y.push(0u8),
            Ok(v) if v == 1.0 => y.push(1u8),
            _ => {
                return Err(Error::Validation(format!(
                    "line {line}: outcome {outcome_cell:?} is not binary 0/1"
                )))
            }
        }

        if let (Some(pos), Some(g)) = (group_pos, group.as_mut()) {
            let cell = record.get(pos).unwrap_or("");
            if is_missing(cell) {
                return Err(Error::Validation(format!("line {line}: missing group label")));
            }
            g.push(cell.to_string());
        }

        for (feat_idx, spec) in schema.columns.iter().enumerate() {
            let cell = record.get(feature_pos[feat_idx]).unwrap_or("");
            match &mut columns[feat_idx] {
                RawColumn::Text(col) => {
                    col.push(if is_missing(cell) { None } else { Some(cell.to_string()) });
                }
                RawColumn::Number(col) => {
                    if is_missing(cell) {
                        col.push(None);
                        continue;
                    }
                    let v: f64 = cell.parse().map_err(|_| {
                        Error::Validation(format!(
                            "line {line}: column {:?} value {cell:?} is not numeric",
                            spec.name
                        ))
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Validation(format!(
                            "line {line}: column {:?} value is not finite",
                            spec.name
                        )));
                    }
                    if spec.kind == ColumnKind::Binary && v != 0.0 && v != 1.0 {
                        return Err(Error::Validation(format!(
                            "line {line}: binary column {:?} has value {cell:?}",
                            spec.name
                        )));
                    }
                    col.push(Some(v));
                }
            }
        }
    }

    if y.is_empty() {
        return Err(Error::Validation("CSV contains no data rows".into()));
    }
    Ok(RawTable { schema: schema.clone(), columns, y, group })
}

/// Per-column statistics learned at fit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnStats {
    /// No statistic needed (policy-determined fill or no imputation).
    Plain,
    /// Median of non-missing fitting values.
    Median(f64),
    /// Sorted category levels observed at fit time.
    Levels(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
enum FeatureSource {
    /// Copy the (imputed) numeric value of a raw column.
    Passthrough { col: usize },
    /// Indicator for one level of a categorical column.
    Indicator { col: usize, level: usize },
    /// Indicator for a missing categorical cell.
    MissingIndicator { col: usize },
}

/// Fitted preprocessing: imputation statistics plus the one-hot layout of
/// both feature views. Serialized into model files so that prediction-time
/// data is transformed exactly as the training data was.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Materializer {
    pub schema: FeatureSchema,
    stats: Vec<ColumnStats>,
    outcome_names: Vec<String>,
    outcome_sources: Vec<FeatureSource>,
    membership_names: Vec<String>,
    membership_sources: Vec<FeatureSource>,
}

impl Materializer {
    /// Materializer for data that is already numeric: every schema column
    /// passes through unchanged in both views (respecting the membership
    /// exclusion flag). Only valid for schemas without categorical columns.
    pub fn passthrough(schema: &FeatureSchema) -> Result<Materializer> {
        schema.validate()?;
        if schema.columns.iter().any(|c| c.kind == ColumnKind::Categorical) {
            return Err(Error::Schema(
                "passthrough materializer cannot handle categorical columns".into(),
            ));
        }
        let mut outcome_names = Vec::new();
        let mut outcome_sources = Vec::new();
        let mut membership_names = Vec::new();
        let mut membership_sources = Vec::new();
        for (idx, spec) in schema.columns.iter().enumerate() {
            outcome_names.push(spec.name.clone());
            outcome_sources.push(FeatureSource::Passthrough { col: idx });
            if !spec.exclude_from_membership {
                membership_names.push(spec.name.clone());
                membership_sources.push(FeatureSource::Passthrough { col: idx });
            }
        }
        Ok(Materializer {
            schema: schema.clone(),
            stats: vec![ColumnStats::Plain; schema.len()],
            outcome_names,
            outcome_sources,
            membership_names,
            membership_sources,
        })
    }

    /// Learn medians and category layouts from a fitting table.
    pub fn fit(table: &RawTable) -> Result<Materializer> {
        let schema = &table.schema;
        let mut stats = Vec::with_capacity(schema.len());
        for (idx, spec) in schema.columns.iter().enumerate() {
            let stat = match (&table.columns[idx], spec.imputation) {
                (RawColumn::Number(col), ImputePolicy::Median) => {
                    let mut values: Vec<f64> = col.iter().filter_map(|v| *v).collect();
                    if values.is_empty() {
                        return Err(Error::Imputation(format!(
                            "column {:?} is entirely missing; cannot fit a median",
                            spec.name
                        )));
                    }
                    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    let m = values.len();
                    let median = if m % 2 == 1 {
                        values[m / 2]
                    } else {
                        (values[m / 2 - 1] + values[m / 2]) / 2.0
                    };
                    ColumnStats::Median(median)
                }
                (RawColumn::Text(col), _) => {
                    let levels: BTreeSet<String> = col.iter().flatten().cloned().collect();
                    ColumnStats::Levels(levels.into_iter().collect())
                }
                _ => ColumnStats::Plain,
            };
            stats.push(stat);
        }

        let mut outcome_names = Vec::new();
        let mut outcome_sources = Vec::new();
        let mut membership_names = Vec::new();
        let mut membership_sources = Vec::new();

        for (idx, spec) in schema.columns.iter().enumerate() {
            match spec.kind {
                ColumnKind::Numeric | ColumnKind::Binary => {
                    outcome_names.push(spec.name.clone());
                    outcome_sources.push(FeatureSource::Passthrough { col: idx });
                    if !spec.exclude_from_membership {
                        membership_names.push(spec.name.clone());
                        membership_sources.push(FeatureSource::Passthrough { col: idx });
                    }
                }
                ColumnKind::Categorical => {
                    let levels = match &stats[idx] {
                        ColumnStats::Levels(l) => l,
                        _ => unreachable!("categorical columns always carry levels"),
                    };
                    for (li, level) in levels.iter().enumerate() {
                        outcome_names.push(format!("{}={}", spec.name, level));
                        outcome_sources.push(FeatureSource::Indicator { col: idx, level: li });
                        if !spec.exclude_from_membership {
                            membership_names.push(format!("{}={}", spec.name, level));
                            membership_sources.push(FeatureSource::Indicator { col: idx, level: li });
                        }
                    }
                    if spec.imputation == ImputePolicy::KeepMissingCategory {
                        outcome_names.push(format!("{}={}", spec.name, MISSING_LEVEL));
                        outcome_sources.push(FeatureSource::MissingIndicator { col: idx });
                    }
                    if !spec.exclude_from_membership {
                        // Membership models always see missingness as a level.
                        membership_names.push(format!("{}={}", spec.name, MISSING_LEVEL));
                        membership_sources.push(FeatureSource::MissingIndicator { col: idx });
                    }
                }
            }
        }

        Ok(Materializer {
            schema: schema.clone(),
            stats,
            outcome_names,
            outcome_sources,
            membership_names,
            membership_sources,
        })
    }

    pub fn outcome_feature_names(&self) -> &[String] {
        &self.outcome_names
    }

    pub fn membership_feature_names(&self) -> &[String] {
        &self.membership_names
    }

    fn fill_number(&self, col_idx: usize, value: Option<f64>, row: usize) -> Result<f64> {
        if let Some(v) = value {
            return Ok(v);
        }
        let spec = &self.schema.columns[col_idx];
        match spec.imputation {
            ImputePolicy::AssumeNegative => Ok(0.0),
            ImputePolicy::AssumePositive => Ok(1.0),
            ImputePolicy::Median => match &self.stats[col_idx] {
                ColumnStats::Median(m) => Ok(*m),
                _ => Err(Error::Imputation(format!("no fitted median for {:?}", spec.name))),
            },
            ImputePolicy::None | ImputePolicy::KeepMissingCategory => Err(Error::Imputation(
                format!("row {row}: column {:?} is missing and has no imputation policy", spec.name),
            )),
        }
    }

    fn emit_row(
        &self,
        table: &RawTable,
        row: usize,
        sources: &[FeatureSource],
        allow_missing_category: bool,
        out: &mut Vec<f64>,
    ) -> Result<()> {
        for source in sources {
            let v = match *source {
                FeatureSource::Passthrough { col } => match &table.columns[col] {
                    RawColumn::Number(values) => self.fill_number(col, values[row], row)?,
                    RawColumn::Text(_) => unreachable!("passthrough source is numeric"),
                },
                FeatureSource::Indicator { col, level } => match &table.columns[col] {
                    RawColumn::Text(values) => {
                        let levels = match &self.stats[col] {
                            ColumnStats::Levels(l) => l,
                            _ => unreachable!(),
                        };
                        match &values[row] {
                            Some(cell) => f64::from(cell == &levels[level]),
                            None => {
                                let policy = self.schema.columns[col].imputation;
                                if policy == ImputePolicy::KeepMissingCategory
                                    || allow_missing_category
                                {
                                    0.0
                                } else {
                                    return Err(Error::Imputation(format!(
                                        "row {row}: categorical column {:?} is missing and has no imputation policy",
                                        self.schema.columns[col].name
                                    )));
                                }
                            }
                        }
                    }
                    RawColumn::Number(_) => unreachable!("indicator source is categorical"),
                },
                FeatureSource::MissingIndicator { col } => match &table.columns[col] {
                    RawColumn::Text(values) => f64::from(values[row].is_none()),
                    RawColumn::Number(_) => unreachable!(),
                },
            };
            out.push(v);
        }
        Ok(())
    }

    /// Materialize a raw table into numeric feature matrices.
    pub fn transform(&self, table: &RawTable) -> Result<Dataset> {
        if table.schema != self.schema {
            return Err(Error::Schema("table schema differs from fitted schema".into()));
        }
        let n = table.n_rows();
        let mut x = Vec::with_capacity(n * self.outcome_sources.len());
        let mut x_m = Vec::with_capacity(n * self.membership_sources.len());
        for row in 0..n {
            self.emit_row(table, row, &self.outcome_sources, false, &mut x)?;
            self.emit_row(table, row, &self.membership_sources, true, &mut x_m)?;
        }
        Dataset::from_parts(
            self.outcome_names.clone(),
            x,
            self.membership_names.clone(),
            x_m,
            table.y.clone(),
            table.group.clone(),
            None,
        )
    }
}

/// One-shot load: parse a CSV, fit imputation statistics on the file itself,
/// and materialize it.
pub fn load_csv(
    path: impl AsRef<Path>,
    schema: &FeatureSchema,
    outcome_col: &str,
    group_col: Option<&str>,
) -> Result<(Dataset, Materializer)> {
    let raw = read_csv(path, schema, outcome_col, group_col)?;
    let materializer = Materializer::fit(&raw)?;
    let dataset = materializer.transform(&raw)?;
    Ok((dataset, materializer))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::ColumnSpec;
    use std::io::Write;

    fn write_temp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    fn schema_bnc() -> FeatureSchema {
        FeatureSchema::new(vec![
            ColumnSpec::new("b", ColumnKind::Binary, ImputePolicy::AssumeNegative),
            ColumnSpec::new("n", ColumnKind::Numeric, ImputePolicy::Median),
            ColumnSpec::new("c", ColumnKind::Categorical, ImputePolicy::KeepMissingCategory),
        ])
        .unwrap()
    }

    #[test]
    fn assume_negative_fills_zero() {
        let f = write_temp("b,n,c,y\n1,1,A,0\n,3,B,1\n0,,A,0\n");
        let (d, _) = load_csv(f.path(), &schema_bnc(), "y", None).unwrap();
        // b column: [1, missing->0, 0]
        let b_idx = d.feature_names.iter().position(|s| s == "b").unwrap();
        let col: Vec<f64> = (0..3).map(|i| d.features().get(i, b_idx)).collect();
        assert_eq!(col, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn median_fills_median_of_observed() {
        let f = write_temp("b,n,c,y\n1,1,A,0\n1,3,B,1\n0,,A,0\n");
        let (d, _) = load_csv(f.path(), &schema_bnc(), "y", None).unwrap();
        let n_idx = d.feature_names.iter().position(|s| s == "n").unwrap();
        let col: Vec<f64> = (0..3).map(|i| d.features().get(i, n_idx)).collect();
        assert_eq!(col, vec![1.0, 3.0, 2.0]);
    }

    #[test]
    fn keep_missing_category_adds_level() {
        let f = write_temp("b,n,c,y\n1,1,A,0\n1,3,,1\n0,2,B,0\n");
        let (d, _) = load_csv(f.path(), &schema_bnc(), "y", None).unwrap();
        assert!(d.feature_names.contains(&"c=A".to_string()));
        assert!(d.feature_names.contains(&"c=B".to_string()));
        assert!(d.feature_names.contains(&"c=MISSING".to_string()));
        let miss_idx = d.feature_names.iter().position(|s| s == "c=MISSING").unwrap();
        let col: Vec<f64> = (0..3).map(|i| d.features().get(i, miss_idx)).collect();
        assert_eq!(col, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn imputation_never_alters_observed_cells() {
        let f = write_temp("b,n,c,y\n1,10,A,0\n0,30,B,1\n1,,A,0\n,20,B,1\n");
        let (d, _) = load_csv(f.path(), &schema_bnc(), "y", None).unwrap();
        let n_idx = d.feature_names.iter().position(|s| s == "n").unwrap();
        assert_eq!(d.features().get(0, n_idx), 10.0);
        assert_eq!(d.features().get(1, n_idx), 30.0);
        assert_eq!(d.features().get(3, n_idx), 20.0);
        let b_idx = d.feature_names.iter().position(|s| s == "b").unwrap();
        assert_eq!(d.features().get(0, b_idx), 1.0);
        assert_eq!(d.features().get(2, b_idx), 1.0);
    }

    #[test]
    fn unknown_column_is_schema_error() {
        let f = write_temp("b,n,c,extra,y\n1,1,A,9,0\n");
        let err = load_csv(f.path(), &schema_bnc(), "y", None);
        assert!(matches!(err, Err(Error::Schema(_))));
    }

    #[test]
    fn missing_schema_column_is_schema_error() {
        let f = write_temp("b,n,y\n1,1,0\n");
        let err = load_csv(f.path(), &schema_bnc(), "y", None);
        assert!(matches!(err, Err(Error::Schema(_))));
    }

    #[test]
    fn non_binary_outcome_is_validation_error() {
        let f = write_temp("b,n,c,y\n1,1,A,2\n");
        let err = load_csv(f.path(), &schema_bnc(), "y", None);
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn all_missing_median_column_is_imputation_error() {
        let f = write_temp("b,n,c,y\n1,,A,0\n0,,B,1\n");
        let err = load_csv(f.path(), &schema_bnc(), "y", None);
        assert!(matches!(err, Err(Error::Imputation(_))));
    }

    #[test]
    fn missing_without_policy_is_imputation_error() {
        let schema = FeatureSchema::new(vec![ColumnSpec::new(
            "n",
            ColumnKind::Numeric,
            ImputePolicy::None,
        )])
        .unwrap();
        let f = write_temp("n,y\n1,0\nNA,1\n");
        let err = load_csv(f.path(), &schema, "y", None);
        assert!(matches!(err, Err(Error::Imputation(_))));
    }

    #[test]
    fn group_column_is_carried() {
        let f = write_temp("b,n,c,y,g\n1,1,A,0,young\n0,2,B,1,old\n1,3,A,0,young\n");
        let (d, _) = load_csv(f.path(), &schema_bnc(), "y", Some("g")).unwrap();
        assert_eq!(d.group_labels(), vec!["old".to_string(), "young".to_string()]);
        assert_eq!(d.group_rows("young"), vec![0, 2]);
    }

    #[test]
    fn membership_view_drops_excluded_and_keeps_missing_level() {
        let schema = FeatureSchema::new(vec![
            ColumnSpec::new("age", ColumnKind::Numeric, ImputePolicy::Median)
                .exclude_from_membership(),
            ColumnSpec::new("c", ColumnKind::Categorical, ImputePolicy::None),
        ])
        .unwrap();
        let f = write_temp("age,c,y\n1,A,0\n2,B,1\n3,A,0\n");
        let (d, _) = load_csv(f.path(), &schema, "y", None).unwrap();
        assert!(d.feature_names.contains(&"age".to_string()));
        assert!(!d.membership_feature_names.contains(&"age".to_string()));
        assert!(d.membership_feature_names.contains(&"c=MISSING".to_string()));
        // policy none, but the membership view still tolerates missing cells
        // because missingness is its own level there.
        assert!(!d.feature_names.contains(&"c=MISSING".to_string()));
    }

    #[test]
    fn train_only_median_statistics() {
        let schema = FeatureSchema::new(vec![ColumnSpec::new(
            "n",
            ColumnKind::Numeric,
            ImputePolicy::Median,
        )])
        .unwrap();
        let f = write_temp("n,y\n1,0\n3,1\n,0\n100,1\n200,0\n");
        let raw = read_csv(f.path(), &schema, "y", None).unwrap();
        let train = raw.take_rows(&[0, 1, 2]);
        let test = raw.take_rows(&[3, 4]);
        let mat = Materializer::fit(&train).unwrap();
        let d_train = mat.transform(&train).unwrap();
        // median of {1,3} = 2, unaffected by the 100/200 test values
        assert_eq!(d_train.features().get(2, 0), 2.0);
        let d_test = mat.transform(&test).unwrap();
        assert_eq!(d_test.features().get(0, 0), 100.0);
    }
}
