//! Two-stage hyperparameter selection on validation data.
//!
//! Stage 1 picks the split budget for every (membership model, group) pair
//! independently, by validation specificity at the primary sensitivity
//! level; ties fall back to specificity at the tiebreak level, then to the
//! smaller budget. Stage 2 picks the membership model by the pooled
//! validation performance of each membership's stage-1 winners across all
//! groups, so every group ends up weighted by the same membership model.
//! Variants without a membership dimension stop after stage 1.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{class_weights, ClassWeights, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::figs::TreeSumModel;
use crate::ingest::{Materializer, RawTable};
use crate::membership::{MembershipModel, MembershipSpec};
use crate::metrics::spec_at_sens;
use crate::pipeline::{Learner, PipelineConfig, SplitBudget, Variant, POOLED_GROUP};

/// Which validation metric drives selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionCriterion {
    /// Sensitivity level of the primary metric (default 0.94).
    pub primary_level: f64,
    /// Sensitivity level used to break ties (default 0.90).
    pub tiebreak_level: f64,
    /// Use only the tiebreak level (for datasets whose positives are too
    /// scarce for stable high-sensitivity metrics).
    #[serde(default)]
    pub tiebreak_only: bool,
}

impl Default for SelectionCriterion {
    fn default() -> Self {
        Self { primary_level: 0.94, tiebreak_level: 0.90, tiebreak_only: false }
    }
}

impl SelectionCriterion {
    pub fn score(&self, scores: &[f64], labels: &[u8]) -> Result<ValidationScore> {
        let tiebreak = spec_at_sens(scores, labels, self.tiebreak_level)?;
        let primary = if self.tiebreak_only {
            tiebreak
        } else {
            spec_at_sens(scores, labels, self.primary_level)?
        };
        Ok(ValidationScore { primary, tiebreak })
    }
}

/// A candidate's validation metrics: the primary specificity and the
/// tiebreak specificity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationScore {
    pub primary: f64,
    pub tiebreak: f64,
}

impl ValidationScore {
    /// Strictly better on (primary, then tiebreak).
    fn beats(&self, other: &ValidationScore) -> bool {
        if self.primary != other.primary {
            return self.primary > other.primary;
        }
        self.tiebreak > other.tiebreak
    }
}

/// Result of the two-stage protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Stage-1 winner (budget, score) per group, per membership candidate.
    /// A single entry when there is no membership dimension.
    pub budgets_per_membership: Vec<BTreeMap<String, (usize, ValidationScore)>>,
    /// Stage-2 combined score per membership candidate (empty when skipped).
    pub stage2_scores: Vec<ValidationScore>,
    /// Index of the winning membership candidate, if any.
    pub winner_membership: Option<usize>,
    /// Final per-group budgets of the winner.
    pub winner_budgets: BTreeMap<String, usize>,
}

/// Run the protocol against caller-supplied validation metrics.
///
/// `stage1` maps `(membership index, group, max_splits)` to a validation
/// score (membership index is `None` when `n_memberships` is 0); `stage2`
/// maps `(membership index, per-group budgets)` to the combined score.
pub fn two_stage_select<S1, S2>(
    groups: &[String],
    budget_grid: &[usize],
    n_memberships: usize,
    mut stage1: S1,
    mut stage2: S2,
) -> Result<Selection>
where
    S1: FnMut(Option<usize>, &str, usize) -> Result<ValidationScore>,
    S2: FnMut(usize, &BTreeMap<String, usize>) -> Result<ValidationScore>,
{
    if groups.is_empty() || budget_grid.is_empty() {
        return Err(Error::Config("selection grid is empty".into()));
    }
    let mut budgets = budget_grid.to_vec();
    budgets.sort_unstable();
    budgets.dedup();

    let membership_indices: Vec<Option<usize>> = if n_memberships == 0 {
        vec![None]
    } else {
        (0..n_memberships).map(Some).collect()
    };

    // Stage 1: per (membership, group), best budget; smaller budgets come
    // first so a full tie keeps the smaller model.
    let mut budgets_per_membership = Vec::new();
    for &m in &membership_indices {
        let mut per_group = BTreeMap::new();
        for g in groups {
            let mut best: Option<(usize, ValidationScore)> = None;
            for &k in &budgets {
                let score = stage1(m, g, k)?;
                if best.map_or(true, |(_, b)| score.beats(&b)) {
                    best = Some((k, score));
                }
            }
            per_group.insert(g.clone(), best.expect("budget grid is nonempty"));
        }
        budgets_per_membership.push(per_group);
    }

    // Stage 2: best membership by combined score; earlier candidates win
    // ties, matching the canonical grid order.
    if n_memberships == 0 {
        let winner_budgets = budgets_per_membership[0]
            .iter()
            .map(|(g, (k, _))| (g.clone(), *k))
            .collect();
        return Ok(Selection {
            budgets_per_membership,
            stage2_scores: Vec::new(),
            winner_membership: None,
            winner_budgets,
        });
    }

    let mut stage2_scores = Vec::new();
    let mut winner: Option<(usize, ValidationScore)> = None;
    for (m, per_group) in budgets_per_membership.iter().enumerate() {
        let budgets: BTreeMap<String, usize> =
            per_group.iter().map(|(g, (k, _))| (g.clone(), *k)).collect();
        let score = stage2(m, &budgets)?;
        stage2_scores.push(score);
        if winner.map_or(true, |(_, b)| score.beats(&b)) {
            winner = Some((m, score));
        }
    }
    let (winner_membership, _) = winner.expect("membership grid is nonempty");
    let winner_budgets = budgets_per_membership[winner_membership]
        .iter()
        .map(|(g, (k, _))| (g.clone(), *k))
        .collect();
    Ok(Selection {
        budgets_per_membership,
        stage2_scores,
        winner_membership: Some(winner_membership),
        winner_budgets,
    })
}

/// Candidate grid and criterion for [`run_selection`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionGrid {
    pub learner: Learner,
    pub variant: Variant,
    pub max_splits: Vec<usize>,
    /// Membership candidates in canonical order; required (non-empty) iff
    /// the variant is group-weighted.
    #[serde(default)]
    pub membership: Vec<MembershipSpec>,
    #[serde(default)]
    pub criterion: SelectionCriterion,
    #[serde(default = "default_true")]
    pub class_weighting: bool,
    #[serde(default)]
    pub stratify_splits: bool,
}

fn default_true() -> bool {
    true
}

impl SelectionGrid {
    /// The standard grid: budgets 8/12/16; logistic regression at C in
    /// {2.8, 0.1} and gradient boosting at N in {100, 50}.
    pub fn standard(learner: Learner, variant: Variant) -> Self {
        let membership = if variant == Variant::GroupWeighted {
            vec![
                MembershipSpec::Logreg { c: 2.8 },
                MembershipSpec::Logreg { c: 0.1 },
                MembershipSpec::Gbt { n: 100 },
                MembershipSpec::Gbt { n: 50 },
            ]
        } else {
            Vec::new()
        };
        SelectionGrid {
            learner,
            variant,
            max_splits: vec![8, 12, 16],
            membership,
            criterion: SelectionCriterion::default(),
            class_weighting: true,
            stratify_splits: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_splits.is_empty() {
            return Err(Error::Config("selection grid has no split budgets".into()));
        }
        if self.max_splits.iter().any(|&k| k < 1) {
            return Err(Error::Config("split budgets must be at least 1".into()));
        }
        match (self.variant, self.membership.is_empty()) {
            (Variant::GroupWeighted, true) => Err(Error::Config(
                "group-weighted selection needs membership candidates".into(),
            )),
            (Variant::Pooled | Variant::Separate, false) => Err(Error::Config(
                "membership candidates are only valid for the group-weighted variant".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Winner and diagnostics for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSelection {
    pub seed: u64,
    pub selection: Selection,
    pub winner: PipelineConfig,
    /// Stage-1 validation score per (membership, group, budget), for the
    /// stage-1 summary table.
    pub stage1_table: Vec<Stage1Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Cell {
    pub membership: Option<MembershipSpec>,
    pub group: String,
    pub max_splits: usize,
    pub score: ValidationScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub grid: SelectionGrid,
    pub per_seed: Vec<SeedSelection>,
}

/// Run the full protocol: for each seed, split 60/20/20, fit candidates on
/// the training partition, and select on the validation partition. The
/// membership models themselves are fitted on the validation (tuning)
/// partition, which also supplies the selection metrics.
pub fn run_selection(table: &RawTable, grid: &SelectionGrid, seeds: &[u64]) -> Result<SelectionReport> {
    grid.validate()?;
    if seeds.is_empty() {
        return Err(Error::Config("selection needs at least one seed".into()));
    }
    let mut per_seed = Vec::new();
    for &seed in seeds {
        per_seed.push(run_selection_for_seed(table, grid, seed)?);
    }
    Ok(SelectionReport { grid: grid.clone(), per_seed })
}

fn run_selection_for_seed(table: &RawTable, grid: &SelectionGrid, seed: u64) -> Result<SeedSelection> {
    let mut split = SplitSpec::new(seed);
    split.stratify_by_outcome = grid.stratify_splits;
    let (train_raw, val_raw, _test_raw) = table.split(&split)?;
    let materializer = Materializer::fit(&train_raw)?;
    let train = materializer.transform(&train_raw)?;
    let val = materializer.transform(&val_raw)?;

    let class_w = if grid.class_weighting {
        class_weights(&train.y)?
    } else {
        ClassWeights::uniform()
    };

    let groups: Vec<String> = match grid.variant {
        Variant::Pooled => vec![POOLED_GROUP.to_string()],
        _ => {
            let g = train.group_labels();
            if g.is_empty() {
                return Err(Error::Validation("selection variant needs group labels".into()));
            }
            if val.group_labels() != g {
                return Err(Error::Split(format!(
                    "seed {seed}: validation groups {:?} differ from training groups {:?}",
                    val.group_labels(),
                    g
                )));
            }
            g
        }
    };

    // Membership models are estimated on the tuning partition.
    let memberships: Vec<MembershipModel> = grid
        .membership
        .iter()
        .map(|spec| MembershipModel::fit(&val, spec))
        .collect::<Result<Vec<_>>>()?;
    for m in &memberships {
        if m.groups != groups {
            return Err(Error::Validation(
                "membership groups differ from training groups".into(),
            ));
        }
    }

    // Precompute per-membership, per-group training weights.
    let mut group_weights: Vec<BTreeMap<String, Vec<f64>>> = Vec::new();
    for m in &memberships {
        let mut per_group = BTreeMap::new();
        for g in &groups {
            let probs = m.predict_group_column(&train, g)?;
            let w: Vec<f64> = (0..train.n_rows())
                .map(|i| train.weights[i] * class_w.weight_for(train.y[i]) * probs[i])
                .collect();
            per_group.insert(g.clone(), w);
        }
        group_weights.push(per_group);
    }

    // Validation rows per group (all rows for pooled).
    let mut val_rows: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for g in &groups {
        let rows = if grid.variant == Variant::Pooled {
            (0..val.n_rows()).collect()
        } else {
            val.group_rows(g)
        };
        if rows.is_empty() {
            return Err(Error::Split(format!("seed {seed}: group {g:?} missing from validation")));
        }
        val_rows.insert(g.clone(), rows);
    }

    // The budget cells fitted in stage 1 are reused by stage 2; a RefCell
    // lets both selection closures share the cache.
    let model_cache: std::cell::RefCell<BTreeMap<(usize, String, usize), TreeSumModel>> =
        std::cell::RefCell::new(BTreeMap::new());
    let stage1_table: std::cell::RefCell<Vec<Stage1Cell>> = std::cell::RefCell::new(Vec::new());

    let fit_candidate = |m_idx: Option<usize>, g: &str, k: usize| -> Result<TreeSumModel> {
        let targets: Vec<f64> = train.y.iter().map(|&v| f64::from(v)).collect();
        match grid.variant {
            Variant::GroupWeighted => {
                let weights = &group_weights[m_idx.expect("membership index")][g];
                fit_budgeted(grid.learner, train.features(), &targets, weights, k)
            }
            Variant::Separate => {
                let rows = train.group_rows(g);
                has_positive(&train, &rows, g)?;
                let sub = train.subset(&rows);
                let sub_targets: Vec<f64> = sub.y.iter().map(|&v| f64::from(v)).collect();
                let weights: Vec<f64> = (0..sub.n_rows())
                    .map(|i| sub.weights[i] * class_w.weight_for(sub.y[i]))
                    .collect();
                fit_budgeted(grid.learner, sub.features(), &sub_targets, &weights, k)
            }
            Variant::Pooled => {
                let weights: Vec<f64> = (0..train.n_rows())
                    .map(|i| train.weights[i] * class_w.weight_for(train.y[i]))
                    .collect();
                fit_budgeted(grid.learner, train.features(), &targets, &weights, k)
            }
        }
    };

    let score_rows = |model: &TreeSumModel, rows: &[usize]| -> Result<(Vec<f64>, Vec<u8>)> {
        let mut scores = Vec::with_capacity(rows.len());
        let mut labels = Vec::with_capacity(rows.len());
        for &i in rows {
            scores.push(model.predict_proba(val.row(i))?);
            labels.push(val.y[i]);
        }
        Ok((scores, labels))
    };

    let selection = {
        let stage1 = |m_idx: Option<usize>, g: &str, k: usize| -> Result<ValidationScore> {
            let model = fit_candidate(m_idx, g, k)?;
            let (scores, labels) = score_rows(&model, &val_rows[g])?;
            let score = grid.criterion.score(&scores, &labels)?;
            stage1_table.borrow_mut().push(Stage1Cell {
                membership: m_idx.map(|i| grid.membership[i]),
                group: g.to_string(),
                max_splits: k,
                score,
            });
            model_cache
                .borrow_mut()
                .insert((m_idx.unwrap_or(usize::MAX), g.to_string(), k), model);
            Ok(score)
        };
        let stage2 = |m_idx: usize, budgets: &BTreeMap<String, usize>| -> Result<ValidationScore> {
            let mut scores = Vec::new();
            let mut labels = Vec::new();
            let cache = model_cache.borrow();
            for (g, &k) in budgets {
                let model = &cache[&(m_idx, g.clone(), k)];
                let (mut s, mut l) = score_rows(model, &val_rows[g])?;
                scores.append(&mut s);
                labels.append(&mut l);
            }
            grid.criterion.score(&scores, &labels)
        };
        two_stage_select(&groups, &grid.max_splits, grid.membership.len(), stage1, stage2)?
    };

    let membership_spec = selection.winner_membership.map(|i| grid.membership[i]);
    let max_splits = if grid.variant == Variant::Pooled {
        SplitBudget::Uniform(selection.winner_budgets[POOLED_GROUP])
    } else {
        SplitBudget::PerGroup(selection.winner_budgets.clone())
    };
    let winner = PipelineConfig {
        learner: grid.learner,
        variant: grid.variant,
        max_splits,
        membership: membership_spec,
        class_weighting: grid.class_weighting,
        seed,
    };
    Ok(SeedSelection { seed, selection, winner, stage1_table: stage1_table.into_inner() })
}

fn fit_budgeted(
    learner: Learner,
    x: crate::dataset::Features<'_>,
    targets: &[f64],
    weights: &[f64],
    max_splits: usize,
) -> Result<TreeSumModel> {
    match learner {
        Learner::Figs => crate::figs::fit_figs(x, targets, weights, max_splits),
        Learner::Cart => {
            let tree = crate::tree::fit_cart(x, targets, weights, max_splits)?;
            if tree.split_count == 0 {
                let value = match &tree.nodes[0] {
                    crate::tree::Node::Leaf { value, .. } => *value,
                    _ => unreachable!(),
                };
                Ok(TreeSumModel::constant(value, x.n_cols()))
            } else {
                let total_splits = tree.split_count;
                Ok(TreeSumModel { intercept: 0.0, trees: vec![tree], total_splits, n_features: x.n_cols() })
            }
        }
    }
}

fn has_positive(train: &Dataset, rows: &[usize], group: &str) -> Result<()> {
    if !rows.iter().any(|&i| train.y[i] == 1) {
        return Err(Error::DegenerateClass(format!(
            "group {group:?} has zero positive outcomes"
        )));
    }
    Ok(())
}

/// Render the per-seed winners plus stage-1/stage-2 summary tables
/// aggregated across seeds (mean with standard error).
pub fn render_selection_report(report: &SelectionReport) -> String {
    let mut out = String::new();
    out.push_str("Per-seed winners\n");
    for seed in &report.per_seed {
        out.push_str(&format!("  seed {}: {}\n", seed.seed, seed.winner.fingerprint()));
    }

    // stage-1 summary: mean (se) of the primary metric per cell
    let mut cells: BTreeMap<(String, String, usize), Vec<f64>> = BTreeMap::new();
    for seed in &report.per_seed {
        for cell in &seed.stage1_table {
            let mkey = cell.membership.map_or_else(String::new, |m| m.to_string());
            cells
                .entry((mkey, cell.group.clone(), cell.max_splits))
                .or_default()
                .push(cell.score.primary * 100.0);
        }
    }
    out.push_str("\nStage 1: validation specificity at the primary sensitivity level, mean (se)\n");
    out.push_str(&format!(
        "{:<16}{:<12}{:>12}{:>16}\n",
        "membership", "group", "max splits", "specificity"
    ));
    for ((membership, group, k), values) in &cells {
        let (mean, se) = mean_se(values);
        let mname = if membership.is_empty() { "-" } else { membership };
        out.push_str(&format!(
            "{mname:<16}{group:<12}{k:>12}{:>16}\n",
            format!("{mean:.1} ({se:.1})")
        ));
    }

    // stage-2 summary per membership candidate
    if !report.grid.membership.is_empty() {
        let mut combined: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for seed in &report.per_seed {
            for (m_idx, score) in seed.selection.stage2_scores.iter().enumerate() {
                combined.entry(m_idx).or_default().push(score.primary * 100.0);
            }
        }
        out.push_str("\nStage 2: combined-group validation specificity, mean (se)\n");
        for (m_idx, values) in &combined {
            let (mean, se) = mean_se(values);
            out.push_str(&format!(
                "{:<16}{:>16}\n",
                report.grid.membership[*m_idx].to_string(),
                format!("{mean:.1} ({se:.1})")
            ));
        }
    }
    out
}

pub(crate) fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn make_score(primary: f64, tiebreak: f64) -> ValidationScore {
        ValidationScore { primary, tiebreak }
    }

    #[test]
    fn dominant_membership_is_selected() {
        let groups = vec!["a".to_string(), "b".to_string()];
        let selection = two_stage_select(
            &groups,
            &[8, 12, 16],
            2,
            |m, _, k| {
                // membership 1 always better; budget 12 best everywhere
                let base = if m == Some(1) { 0.5 } else { 0.2 };
                let bonus = if k == 12 { 0.1 } else { 0.0 };
                Ok(make_score(base + bonus, 0.0))
            },
            |m, _| Ok(make_score(if m == 1 { 0.9 } else { 0.1 }, 0.0)),
        )
        .unwrap();
        assert_eq!(selection.winner_membership, Some(1));
        assert_eq!(selection.winner_budgets["a"], 12);
        assert_eq!(selection.winner_budgets["b"], 12);
    }

    #[test]
    fn primary_tie_is_broken_by_tiebreak_metric() {
        let groups = vec!["a".to_string()];
        let selection = two_stage_select(
            &groups,
            &[8, 12],
            1,
            |_, _, k| {
                // equal primary; budget 12 wins on the tiebreak level
                Ok(make_score(0.5, if k == 12 { 0.7 } else { 0.3 }))
            },
            |_, _| Ok(make_score(0.5, 0.5)),
        )
        .unwrap();
        assert_eq!(selection.winner_budgets["a"], 12);
    }

    #[test]
    fn full_tie_keeps_smallest_budget_and_first_membership() {
        let groups = vec!["a".to_string(), "b".to_string()];
        let selection = two_stage_select(
            &groups,
            &[16, 8, 12], // unsorted on purpose
            3,
            |_, _, _| Ok(make_score(0.4, 0.4)),
            |_, _| Ok(make_score(0.4, 0.4)),
        )
        .unwrap();
        assert_eq!(selection.winner_membership, Some(0));
        assert_eq!(selection.winner_budgets["a"], 8);
        assert_eq!(selection.winner_budgets["b"], 8);
    }

    #[test]
    fn stage1_choices_are_per_group() {
        let groups = vec!["a".to_string(), "b".to_string()];
        let selection = two_stage_select(
            &groups,
            &[8, 12],
            1,
            |_, g, k| {
                let good = if g == "a" { 8 } else { 12 };
                Ok(make_score(if k == good { 0.8 } else { 0.1 }, 0.0))
            },
            |_, _| Ok(make_score(0.5, 0.0)),
        )
        .unwrap();
        assert_eq!(selection.winner_budgets["a"], 8);
        assert_eq!(selection.winner_budgets["b"], 12);
    }

    #[test]
    fn no_membership_dimension_skips_stage_two() {
        let groups = vec!["a".to_string()];
        let mut stage2_called = false;
        let selection = two_stage_select(
            &groups,
            &[8, 12],
            0,
            |m, _, k| {
                assert_eq!(m, None);
                Ok(make_score(k as f64, 0.0))
            },
            |_, _| {
                stage2_called = true;
                Ok(make_score(0.0, 0.0))
            },
        )
        .unwrap();
        assert!(!stage2_called);
        assert_eq!(selection.winner_membership, None);
        assert_eq!(selection.winner_budgets["a"], 12);
        assert!(selection.stage2_scores.is_empty());
    }

    #[test]
    fn empty_grid_is_config_error() {
        let groups = vec!["a".to_string()];
        let err = two_stage_select(
            &groups,
            &[],
            0,
            |_, _, _| Ok(make_score(0.0, 0.0)),
            |_, _| Ok(make_score(0.0, 0.0)),
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn tiebreak_only_criterion_uses_the_lower_level() {
        let criterion = SelectionCriterion {
            primary_level: 0.94,
            tiebreak_level: 0.90,
            tiebreak_only: true,
        };
        // scores where spec@90 != spec@94
        let scores = [0.9, 0.8, 0.75, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1];
        let labels = [1, 1, 1, 1, 1, 1, 1, 1, 1, 0];
        let v = criterion.score(&scores, &labels).unwrap();
        assert_eq!(v.primary, v.tiebreak);
    }

    #[test]
    fn standard_grid_matches_protocol() {
        let grid = SelectionGrid::standard(Learner::Figs, Variant::GroupWeighted);
        assert_eq!(grid.max_splits, vec![8, 12, 16]);
        assert_eq!(
            grid.membership,
            vec![
                MembershipSpec::Logreg { c: 2.8 },
                MembershipSpec::Logreg { c: 0.1 },
                MembershipSpec::Gbt { n: 100 },
                MembershipSpec::Gbt { n: 50 },
            ]
        );
        assert!(grid.validate().is_ok());
        assert_eq!(grid.criterion.primary_level, 0.94);
        assert_eq!(grid.criterion.tiebreak_level, 0.90);
    }
}
