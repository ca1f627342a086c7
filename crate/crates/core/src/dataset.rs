//! Materialized tabular data: a numeric feature matrix for outcome models,
//! a parallel matrix for membership models, the binary outcome, optional
//! group labels, and per-instance weights.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Row-major feature matrix view used by the tree learners.
#[derive(Debug, Clone, Copy)]
pub struct Features<'a> {
    x: &'a [f64],
    n_cols: usize,
}

impl<'a> Features<'a> {
    pub fn new(x: &'a [f64], n_cols: usize) -> Self {
        debug_assert!(n_cols > 0 && x.len() % n_cols == 0);
        Self { x, n_cols }
    }

    pub fn n_rows(&self) -> usize {
        self.x.len() / self.n_cols
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.x[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.x[row * self.n_cols + col]
    }
}

/// A fully materialized dataset.
///
/// The outcome-model view (`features`) and the membership-model view
/// (`membership_features`) can differ: membership columns exclude features
/// flagged in the schema and keep categorical missingness as its own level.
/// For data born numeric (e.g. simulations) the two views coincide.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    x: Vec<f64>,
    pub membership_feature_names: Vec<String>,
    x_membership: Vec<f64>,
    pub y: Vec<u8>,
    pub group: Option<Vec<String>>,
    pub weights: Vec<f64>,
}

impl Dataset {
    /// Build a dataset whose membership view equals the outcome view.
    pub fn from_numeric(
        feature_names: Vec<String>,
        x: Vec<f64>,
        y: Vec<u8>,
        group: Option<Vec<String>>,
    ) -> Result<Self> {
        let names_m = feature_names.clone();
        let x_m = x.clone();
        Self::from_parts(feature_names, x, names_m, x_m, y, group, None)
    }

    pub fn from_parts(
        feature_names: Vec<String>,
        x: Vec<f64>,
        membership_feature_names: Vec<String>,
        x_membership: Vec<f64>,
        y: Vec<u8>,
        group: Option<Vec<String>>,
        weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = y.len();
        if feature_names.is_empty() {
            return Err(Error::Validation("dataset has no feature columns".into()));
        }
        if x.len() != n * feature_names.len() {
            return Err(Error::Validation(format!(
                "feature matrix has {} cells, expected {} rows x {} columns",
                x.len(),
                n,
                feature_names.len()
            )));
        }
        if x_membership.len() != n * membership_feature_names.len() {
            return Err(Error::Validation("membership matrix shape mismatch".into()));
        }
        if let Some(g) = &group {
            if g.len() != n {
                return Err(Error::Validation("group vector length mismatch".into()));
            }
        }
        if y.iter().any(|&v| v > 1) {
            return Err(Error::Validation("outcome vector must be 0/1".into()));
        }
        let weights = weights.unwrap_or_else(|| vec![1.0; n]);
        if weights.len() != n {
            return Err(Error::Validation("weight vector length mismatch".into()));
        }
        if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(Error::Validation("weights must be finite and nonnegative".into()));
        }
        if n > 0 && !weights.iter().any(|&w| w > 0.0) {
            return Err(Error::DegenerateWeight("all instance weights are zero".into()));
        }
        Ok(Self {
            feature_names,
            x,
            membership_feature_names,
            x_membership,
            y,
            group,
            weights,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn features(&self) -> Features<'_> {
        Features::new(&self.x, self.feature_names.len())
    }

    pub fn membership_features(&self) -> Features<'_> {
        Features::new(&self.x_membership, self.membership_feature_names.len())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.features().row(i)
    }

    /// Distinct group labels in sorted order. Empty when no group column.
    pub fn group_labels(&self) -> Vec<String> {
        match &self.group {
            None => Vec::new(),
            Some(g) => {
                let mut labels: Vec<String> = g.clone();
                labels.sort();
                labels.dedup();
                labels
            }
        }
    }

    /// Row indices belonging to a group.
    pub fn group_rows(&self, label: &str) -> Vec<usize> {
        match &self.group {
            None => Vec::new(),
            Some(g) => (0..g.len()).filter(|&i| g[i] == label).collect(),
        }
    }

    /// New dataset containing the given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let p = self.feature_names.len();
        let pm = self.membership_feature_names.len();
        let mut x = Vec::with_capacity(rows.len() * p);
        let mut x_m = Vec::with_capacity(rows.len() * pm);
        for &i in rows {
            x.extend_from_slice(&self.x[i * p..(i + 1) * p]);
            x_m.extend_from_slice(&self.x_membership[i * pm..(i + 1) * pm]);
        }
        Dataset {
            feature_names: self.feature_names.clone(),
            x,
            membership_feature_names: self.membership_feature_names.clone(),
            x_membership: x_m,
            y: rows.iter().map(|&i| self.y[i]).collect(),
            group: self
                .group
                .as_ref()
                .map(|g| rows.iter().map(|&i| g[i].clone()).collect()),
            weights: rows.iter().map(|&i| self.weights[i]).collect(),
        }
    }

    /// Same dataset with a replaced weight vector.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Dataset> {
        Self::from_parts(
            self.feature_names.clone(),
            self.x.clone(),
            self.membership_feature_names.clone(),
            self.x_membership.clone(),
            self.y.clone(),
            self.group.clone(),
            Some(weights),
        )
    }
}

/// Train/validation/test fractions plus the seed that fixes the shuffle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub seed: u64,
    pub stratify_by_outcome: bool,
}

impl SplitSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            train: 0.60,
            validation: 0.20,
            test: 0.20,
            seed,
            stratify_by_outcome: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.train <= 0.0 || self.validation <= 0.0 || self.test <= 0.0 {
            return Err(Error::Split("all fractions must be positive".into()));
        }
        if (self.train + self.validation + self.test - 1.0).abs() > 1e-9 {
            return Err(Error::Split("fractions must sum to 1".into()));
        }
        Ok(())
    }
}

/// Deterministic three-way partition of `0..n`.
///
/// Shuffles indices with a generator seeded by `spec.seed`, slices by
/// fraction (train and validation sizes round down, test takes the rest),
/// then sorts each partition ascending. Depends only on `(n, spec)`, or on
/// the outcome vector as well when stratifying.
pub fn split_indices(
    n: usize,
    spec: &SplitSpec,
    stratify_labels: Option<&[u8]>,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    spec.validate()?;
    if n < 5 {
        return Err(Error::Split(format!("need at least 5 rows to split, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();

    let mut push_block = |indices: &mut Vec<usize>, rng: &mut ChaCha8Rng| {
        indices.shuffle(rng);
        let m = indices.len();
        let n_train = (spec.train * m as f64).floor() as usize;
        let n_val = (spec.validation * m as f64).floor() as usize;
        train.extend_from_slice(&indices[..n_train]);
        val.extend_from_slice(&indices[n_train..n_train + n_val]);
        test.extend_from_slice(&indices[n_train + n_val..]);
    };

    match (spec.stratify_by_outcome, stratify_labels) {
        (true, Some(labels)) => {
            if labels.len() != n {
                return Err(Error::Split("stratification labels length mismatch".into()));
            }
            for class in [0u8, 1u8] {
                let mut block: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
                push_block(&mut block, &mut rng);
            }
        }
        _ => {
            let mut all: Vec<usize> = (0..n).collect();
            push_block(&mut all, &mut rng);
        }
    }

    for (name, part) in [("train", &train), ("validation", &val), ("test", &test)] {
        if part.is_empty() {
            return Err(Error::Split(format!("{name} partition is empty")));
        }
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok((train, val, test))
}

/// Split a dataset into disjoint, exhaustive train/validation/test parts.
pub fn split_dataset(d: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    let strat = spec.stratify_by_outcome.then_some(d.y.as_slice());
    let (tr, va, te) = split_indices(d.n_rows(), spec, strat)?;
    Ok((d.subset(&tr), d.subset(&va), d.subset(&te)))
}

/// Per-class loss multipliers: positives weighted by inverse prevalence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassWeights {
    pub positive: f64,
    pub negative: f64,
}

impl ClassWeights {
    pub fn uniform() -> Self {
        Self { positive: 1.0, negative: 1.0 }
    }

    pub fn weight_for(&self, y: u8) -> f64 {
        if y == 1 {
            self.positive
        } else {
            self.negative
        }
    }
}

/// Class weights from a binary outcome vector: `positive = n / n_pos`,
/// `negative = 1`.
pub fn class_weights(y: &[u8]) -> Result<ClassWeights> {
    let n_pos = y.iter().filter(|&&v| v == 1).count();
    if n_pos == 0 || n_pos == y.len() {
        return Err(Error::DegenerateClass(
            "class weights need both a positive and a negative instance".into(),
        ));
    }
    Ok(ClassWeights {
        positive: y.len() as f64 / n_pos as f64,
        negative: 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Dataset {
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let y: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        Dataset::from_numeric(vec!["x".into()], x, y, None).unwrap()
    }

    #[test]
    fn split_sizes_follow_fractions() {
        let d = toy(10);
        let (tr, va, te) = split_dataset(&d, &SplitSpec::new(0)).unwrap();
        assert_eq!((tr.n_rows(), va.n_rows(), te.n_rows()), (6, 2, 2));
    }

    #[test]
    fn split_is_deterministic_and_exhaustive() {
        let spec = SplitSpec::new(7);
        let (a1, b1, c1) = split_indices(100, &spec, None).unwrap();
        let (a2, b2, c2) = split_indices(100, &spec, None).unwrap();
        assert_eq!((&a1, &b1, &c1), (&a2, &b2, &c2));

        let mut all: Vec<usize> = a1.iter().chain(&b1).chain(&c1).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn different_seeds_differ() {
        let (a, _, _) = split_indices(100, &SplitSpec::new(0), None).unwrap();
        let (b, _, _) = split_indices(100, &SplitSpec::new(1), None).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn split_rejects_tiny_inputs() {
        assert!(matches!(split_indices(4, &SplitSpec::new(0), None), Err(Error::Split(_))));
    }

    #[test]
    fn stratified_split_balances_positives() {
        let n = 100;
        let y: Vec<u8> = (0..n).map(|i| u8::from(i < 10)).collect();
        let mut spec = SplitSpec::new(3);
        spec.stratify_by_outcome = true;
        let (tr, va, te) = split_indices(n, &spec, Some(&y)).unwrap();
        let pos = |part: &[usize]| part.iter().filter(|&&i| y[i] == 1).count();
        assert_eq!(pos(&tr), 6);
        assert_eq!(pos(&va), 2);
        assert_eq!(pos(&te), 2);
    }

    #[test]
    fn class_weights_match_inverse_prevalence() {
        let y = vec![0, 0, 0, 1];
        let w = class_weights(&y).unwrap();
        assert_eq!(w.positive, 4.0);
        assert_eq!(w.negative, 1.0);

        let y: Vec<u8> = (0..1000).map(|i| u8::from(i < 9)).collect();
        let w = class_weights(&y).unwrap();
        assert!((w.positive - 1000.0 / 9.0).abs() < 1e-12);
        assert!(w.positive > 110.0 && w.positive < 112.0);

        let y: Vec<u8> = (0..10).map(|i| (i % 2) as u8).collect();
        assert_eq!(class_weights(&y).unwrap().positive, 2.0);
    }

    #[test]
    fn class_weights_times_prevalence_is_one() {
        for (n, n_pos) in [(10usize, 3usize), (1000, 9), (64, 16), (7, 2)] {
            let y: Vec<u8> = (0..n).map(|i| u8::from(i < n_pos)).collect();
            let w = class_weights(&y).unwrap();
            let prevalence = n_pos as f64 / n as f64;
            assert!((w.positive * prevalence - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn class_weights_reject_single_class() {
        assert!(matches!(class_weights(&[1, 1, 1]), Err(Error::DegenerateClass(_))));
        assert!(matches!(class_weights(&[0, 0]), Err(Error::DegenerateClass(_))));
    }

    #[test]
    fn rejects_negative_weights() {
        let err = toy(4).with_weights(vec![1.0, -0.5, 1.0, 1.0]);
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn rejects_all_zero_weights() {
        let err = toy(4).with_weights(vec![0.0; 4]);
        assert!(matches!(err, Err(Error::DegenerateWeight(_))));
    }
}
