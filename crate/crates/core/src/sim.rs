//! Synthetic heterogeneous data: four Gaussian clusters along X1 forming
//! two meta-clusters that share an outcome rule on X2, plus the experiment
//! runner that compares pooled, per-group, and group-weighted learners on
//! fresh draws.
//!
//! Cluster c is centered at X1 in {0, 2, 4, 6}. The first meta-cluster
//! (clusters 0 and 1) uses the rule `Y = X2 > 0`; the second (2 and 3) uses
//! `Y = X2 > 2`, and each cluster's latent X2 is centered on its own rule
//! threshold so every cluster is class-balanced. Latent X1/X2 have unit
//! variance; observation noise of variance 2 is added to both, and ten
//! noise features are drawn with variance 2. Labels come from the latent
//! (pre-noise) X2.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::membership::{MembershipModel, MembershipSpec};
use crate::metrics::{accuracy, avg_precision, f1_score, roc_auc};
use crate::pipeline::{
    fit_pipeline_with_membership, GFigsModel, Learner, PipelineConfig, SplitBudget, Variant,
};
use crate::select::mean_se;

pub const CLUSTER_CENTERS_X1: [f64; 4] = [0.0, 2.0, 4.0, 6.0];
/// X2 rule threshold (and latent X2 mean) per meta-cluster.
pub const META_CLUSTER_X2_THRESHOLDS: [f64; 2] = [0.0, 2.0];
pub const N_NOISE_FEATURES: usize = 10;
const NOISE_STD: f64 = std::f64::consts::SQRT_2; // variance 2

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_per_cluster: usize,
    pub seed: u64,
    /// Fraction of each replicate held out for testing.
    pub test_fraction: f64,
    /// Inverse regularization strength of the logistic membership model.
    pub membership_c: f64,
    /// Split budget for the pooled models (per-group and weighted models
    /// use a single split).
    pub pooled_max_splits: usize,
    /// Offset of each cluster's latent X2 mean from its rule threshold,
    /// alternating sign within a meta-cluster. The two clusters sharing a
    /// rule are skewed in opposite directions, so the data stays
    /// class-balanced overall while each cluster alone sees its rule
    /// boundary mostly from one side.
    pub x2_mean_offset: f64,
    /// Apply inverse-prevalence class weights inside every fit.
    pub class_weighting: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_per_cluster: 36,
            seed: 0,
            test_fraction: 0.5,
            membership_c: 1.0,
            pooled_max_splits: 4,
            x2_mean_offset: 0.35,
            class_weighting: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_cluster < 20 {
            return Err(Error::Config("n_per_cluster must be at least 20".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config("test fraction must lie in (0, 1)".into()));
        }
        if self.membership_c <= 0.0 {
            return Err(Error::Config("membership C must be positive".into()));
        }
        if self.pooled_max_splits < 1 {
            return Err(Error::Config("pooled split budget must be at least 1".into()));
        }
        if !self.x2_mean_offset.is_finite() || self.x2_mean_offset < 0.0 {
            return Err(Error::Config("x2 mean offset must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Generate one draw of the four-cluster data with its group column.
pub fn gen_sim_data(cfg: &SimConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_features = 2 + N_NOISE_FEATURES;
    let n = 4 * cfg.n_per_cluster;

    let mut names = vec!["x1".to_string(), "x2".to_string()];
    for j in 1..=N_NOISE_FEATURES {
        names.push(format!("noise{j:02}"));
    }

    let mut x = Vec::with_capacity(n * n_features);
    let mut y = Vec::with_capacity(n);
    let mut group = Vec::with_capacity(n);
    for cluster in 0..4 {
        let center = CLUSTER_CENTERS_X1[cluster];
        let threshold = META_CLUSTER_X2_THRESHOLDS[cluster / 2];
        let x2_mean = if cluster % 2 == 0 {
            threshold + cfg.x2_mean_offset
        } else {
            threshold - cfg.x2_mean_offset
        };
        for _ in 0..cfg.n_per_cluster {
            let x1_latent = center + standard_normal(&mut rng);
            let x2_latent = x2_mean + standard_normal(&mut rng);
            y.push(u8::from(x2_latent > threshold));
            x.push(x1_latent + NOISE_STD * standard_normal(&mut rng));
            x.push(x2_latent + NOISE_STD * standard_normal(&mut rng));
            for _ in 0..N_NOISE_FEATURES {
                x.push(NOISE_STD * standard_normal(&mut rng));
            }
            group.push(cluster.to_string());
        }
    }
    Dataset::from_numeric(names, x, y, Some(group))
}

/// Row labels of the experiment table.
pub const SIM_METHODS: [&str; 6] = ["CART", "CART-SEP", "FIGS", "FIGS-SEP", "G-CART", "G-FIGS"];
pub const SIM_METRICS: [&str; 4] = ["ROC AUC", "APS", "Accuracy", "F1"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimExperimentReport {
    pub config: SimConfig,
    pub replicates: usize,
    /// method -> [ROC AUC, APS, accuracy, F1] per replicate.
    pub per_replicate: Vec<BTreeMap<String, [f64; 4]>>,
}

impl SimExperimentReport {
    pub fn mean_se(&self, method: &str, metric_idx: usize) -> (f64, f64) {
        let values: Vec<f64> = self
            .per_replicate
            .iter()
            .map(|rep| rep[method][metric_idx])
            .collect();
        mean_se(&values)
    }

    /// Aligned table: methods as rows, metrics as columns, mean (se).
    /// G-CART and G-FIGS are shown as one row since they coincide at a
    /// single split.
    pub fn render(&self) -> String {
        let mut out = format!("{:<18}", "");
        for m in SIM_METRICS {
            out.push_str(&format!("{m:>16}"));
        }
        out.push('\n');
        let display_rows = [
            ("CART", "CART"),
            ("CART-SEP", "CART-SEP"),
            ("FIGS", "FIGS"),
            ("FIGS-SEP", "FIGS-SEP"),
            ("G-CART / G-FIGS", "G-FIGS"),
        ];
        for (label, key) in display_rows {
            out.push_str(&format!("{label:<18}"));
            for metric_idx in 0..SIM_METRICS.len() {
                let (mean, se) = self.mean_se(key, metric_idx);
                let cell = if metric_idx < 2 {
                    format!("{mean:.3} ({se:.2})")
                } else {
                    format!("{:.1} ({:.2})", mean * 100.0, se * 100.0)
                };
                out.push_str(&format!("{cell:>16}"));
            }
            out.push('\n');
        }
        out
    }

    /// Raw per-replicate metrics as CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("replicate,method,roc_auc,aps,accuracy,f1\n");
        for (r, rep) in self.per_replicate.iter().enumerate() {
            for method in SIM_METHODS {
                let v = rep[method];
                out.push_str(&format!(
                    "{r},{method},{},{},{},{}\n",
                    v[0], v[1], v[2], v[3]
                ));
            }
        }
        out
    }
}

/// Train/test split stratified by group and outcome, so every cluster
/// contributes its exact share of training rows and keeps both classes in
/// training whenever the draw itself has them.
fn two_way_split(data: &Dataset, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in data.group_labels() {
        let rows = data.group_rows(&label);
        for class in [0u8, 1u8] {
            let mut idx: Vec<usize> =
                rows.iter().copied().filter(|&i| data.y[i] == class).collect();
            idx.shuffle(&mut rng);
            let n_test = ((idx.len() as f64) * test_fraction).floor() as usize;
            test.extend_from_slice(&idx[..n_test]);
            train.extend_from_slice(&idx[n_test..]);
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

struct ReplicateModels {
    pooled_cart: GFigsModel,
    pooled_figs: GFigsModel,
    sep_cart: GFigsModel,
    sep_figs: GFigsModel,
    g_cart: GFigsModel,
    g_figs: GFigsModel,
}

fn fit_replicate(train: &Dataset, cfg: &SimConfig) -> Result<ReplicateModels> {
    let make = |learner: Learner, variant: Variant, budget: usize, membership: Option<MembershipSpec>| {
        PipelineConfig {
            learner,
            variant,
            max_splits: SplitBudget::Uniform(budget),
            membership,
            class_weighting: cfg.class_weighting,
            seed: cfg.seed,
        }
    };
    let spec = MembershipSpec::Logreg { c: cfg.membership_c };
    let membership = MembershipModel::fit(train, &spec)?;

    Ok(ReplicateModels {
        pooled_cart: fit_pipeline_with_membership(
            train,
            None,
            &make(Learner::Cart, Variant::Pooled, cfg.pooled_max_splits, None),
        )?,
        pooled_figs: fit_pipeline_with_membership(
            train,
            None,
            &make(Learner::Figs, Variant::Pooled, cfg.pooled_max_splits, None),
        )?,
        sep_cart: fit_pipeline_with_membership(
            train,
            None,
            &make(Learner::Cart, Variant::Separate, 1, None),
        )?,
        sep_figs: fit_pipeline_with_membership(
            train,
            None,
            &make(Learner::Figs, Variant::Separate, 1, None),
        )?,
        g_cart: fit_pipeline_with_membership(
            train,
            Some(membership.clone()),
            &make(Learner::Cart, Variant::GroupWeighted, 1, Some(spec)),
        )?,
        g_figs: fit_pipeline_with_membership(
            train,
            Some(membership),
            &make(Learner::Figs, Variant::GroupWeighted, 1, Some(spec)),
        )?,
    })
}

/// Test metrics over all rows' pooled scores and labels.
fn evaluate(model: &GFigsModel, test: &Dataset) -> Result<[f64; 4]> {
    let scores = model.predict_dataset(test)?;
    Ok([
        roc_auc(&scores, &test.y)?,
        avg_precision(&scores, &test.y)?,
        accuracy(&scores, &test.y)?,
        f1_score(&scores, &test.y)?,
    ])
}

/// Run the full experiment: fresh data per replicate, a train/test split,
/// all methods fitted and evaluated on pooled test predictions.
///
/// With a single split per weighted model, the greedy tree-sum and plain
/// tree learners coincide; every replicate asserts that the G-CART and
/// G-FIGS models (and the two per-group baselines) are identical.
pub fn run_sim_experiment(cfg: &SimConfig, replicates: usize) -> Result<SimExperimentReport> {
    cfg.validate()?;
    if replicates < 1 {
        return Err(Error::Config("need at least one replicate".into()));
    }
    let mut per_replicate = Vec::with_capacity(replicates);
    for r in 0..replicates {
        per_replicate.push(
            run_replicate(cfg, r as u64)
                .map_err(|e| Error::Validation(format!("replicate {r}: {e}")))?,
        );
    }
    Ok(SimExperimentReport { config: *cfg, replicates, per_replicate })
}

fn run_replicate(cfg: &SimConfig, replicate: u64) -> Result<BTreeMap<String, [f64; 4]>> {
    let mut draw_cfg = *cfg;
    draw_cfg.seed = cfg.seed.wrapping_add(replicate);
    let data = gen_sim_data(&draw_cfg)?;
    let split_seed = draw_cfg.seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
    let (train_rows, test_rows) = two_way_split(&data, cfg.test_fraction, split_seed);
    let train = data.subset(&train_rows);
    let test = data.subset(&test_rows);

    let models = fit_replicate(&train, &draw_cfg)?;
    if models.g_cart.groups != models.g_figs.groups {
        return Err(Error::Validation(
            "G-CART and G-FIGS differ at a single split; they must coincide".into(),
        ));
    }
    if models.sep_cart.groups != models.sep_figs.groups {
        return Err(Error::Validation(
            "CART-SEP and FIGS-SEP differ at a single split; they must coincide".into(),
        ));
    }

    let mut out = BTreeMap::new();
    out.insert("CART".to_string(), evaluate(&models.pooled_cart, &test)?);
    out.insert("CART-SEP".to_string(), evaluate(&models.sep_cart, &test)?);
    out.insert("FIGS".to_string(), evaluate(&models.pooled_figs, &test)?);
    out.insert("FIGS-SEP".to_string(), evaluate(&models.sep_figs, &test)?);
    out.insert("G-CART".to_string(), evaluate(&models.g_cart, &test)?);
    out.insert("G-FIGS".to_string(), evaluate(&models.g_figs, &test)?);
    Ok(out)
}
