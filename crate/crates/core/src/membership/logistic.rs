//! L2-regularized logistic regression fitted by damped Newton iterations
//! (iteratively reweighted least squares) on standardized features.

use crate::dataset::Features;
use crate::error::{Error, Result};

pub const GRADIENT_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 500;

/// Binary logistic model over standardized features. The penalty is
/// `(1/C) * ||beta||^2 / 2` on the coefficients; the intercept is free.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    /// Indices (into the input feature space) of retained features.
    pub features: Vec<usize>,
    /// Indices of features dropped for having zero variance.
    pub dropped: Vec<usize>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Coefficients in standardized feature space, aligned with `features`.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub c: f64,
}

impl LogisticModel {
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        let mut z = self.intercept;
        for (k, &j) in self.features.iter().enumerate() {
            let v = *x.get(j).ok_or_else(|| {
                Error::Schema(format!(
                    "row has {} features but the model references feature {}",
                    x.len(),
                    j
                ))
            })?;
            z += self.coefficients[k] * (v - self.means[k]) / self.stds[k];
        }
        Ok(sigmoid(z))
    }

    /// Coefficients and intercept expressed in the original feature space,
    /// index-aligned with `features`.
    pub fn destandardized(&self) -> (Vec<f64>, f64) {
        let mut raw = Vec::with_capacity(self.coefficients.len());
        let mut intercept = self.intercept;
        for (k, &coef) in self.coefficients.iter().enumerate() {
            raw.push(coef / self.stds[k]);
            intercept -= coef * self.means[k] / self.stds[k];
        }
        (raw, intercept)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(z)) - y*z`, computed stably.
fn logistic_loss(z: f64, y: f64) -> f64 {
    let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
    softplus - y * z
}

/// Penalized objective and its gradient over `theta = [beta..., intercept]`
/// for pre-standardized rows. Exposed so the analytic gradient can be
/// checked against finite differences.
pub fn objective_and_gradient(
    rows: &[Vec<f64>],
    labels: &[u8],
    c: f64,
    theta: &[f64],
) -> (f64, Vec<f64>) {
    let p = theta.len() - 1;
    let intercept = theta[p];
    let mut objective = 0.0;
    let mut grad = vec![0.0; p + 1];
    for (row, &y) in rows.iter().zip(labels) {
        let y = f64::from(y);
        let z = intercept + row.iter().zip(&theta[..p]).map(|(x, b)| x * b).sum::<f64>();
        objective += logistic_loss(z, y);
        let err = sigmoid(z) - y;
        for (g, x) in grad[..p].iter_mut().zip(row) {
            *g += err * x;
        }
        grad[p] += err;
    }
    for j in 0..p {
        objective += theta[j] * theta[j] / (2.0 * c);
        grad[j] += theta[j] / c;
    }
    (objective, grad)
}

/// Solve `A x = b` for a small dense symmetric positive-definite system by
/// Gaussian elimination with partial pivoting. `a` is row-major `n x n`.
fn solve_linear(mut a: Vec<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i * n + col].abs().partial_cmp(&a[j * n + col].abs()).unwrap()
        })?;
        if a[pivot * n + col].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / d;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row * n + k] * x[k];
        }
        x[row] = s / a[row * n + row];
    }
    Some(x)
}

/// Fit a binary logistic model; see [`fit_logistic_warm`] for warm starts.
pub fn fit_logistic(x: Features<'_>, labels: &[u8], c: f64) -> Result<LogisticModel> {
    fit_logistic_warm(x, labels, c, None)
}

/// Fit with an optional warm start `(coefficients, intercept)` given in
/// standardized space, aligned with the retained features of this data.
pub fn fit_logistic_warm(
    x: Features<'_>,
    labels: &[u8],
    c: f64,
    warm: Option<(&[f64], f64)>,
) -> Result<LogisticModel> {
    if c <= 0.0 || !c.is_finite() {
        return Err(Error::Config(format!("inverse regularization strength must be positive, got {c}")));
    }
    let n = x.n_rows();
    if labels.len() != n {
        return Err(Error::Validation("labels length mismatch".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    if n_pos == 0 || n_pos == n {
        return Err(Error::DegenerateClass("logistic regression needs both classes".into()));
    }

    // Standardize, dropping zero-variance columns.
    let mut features = Vec::new();
    let mut dropped = Vec::new();
    let mut means = Vec::new();
    let mut stds = Vec::new();
    for j in 0..x.n_cols() {
        let mean = (0..n).map(|i| x.get(i, j)).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (x.get(i, j) - mean).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        if std > 0.0 {
            features.push(j);
            means.push(mean);
            stds.push(std);
        } else {
            dropped.push(j);
        }
    }
    let p = features.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            features
                .iter()
                .enumerate()
                .map(|(k, &j)| (x.get(i, j) - means[k]) / stds[k])
                .collect()
        })
        .collect();

    // Initialize at the base-rate intercept unless warm-started.
    let base_rate = n_pos as f64 / n as f64;
    let mut theta = vec![0.0; p + 1];
    theta[p] = (base_rate / (1.0 - base_rate)).ln();
    if let Some((coefs, intercept)) = warm {
        if coefs.len() != p {
            return Err(Error::Validation("warm start length mismatch".into()));
        }
        theta[..p].copy_from_slice(coefs);
        theta[p] = intercept;
    }

    let (mut objective, mut grad) = objective_and_gradient(&rows, labels, c, &theta);
    for _ in 0..MAX_ITERATIONS {
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm <= GRADIENT_TOLERANCE {
            break;
        }

        // Newton system: (X'SX + diag(1/C, .., 1/C, 0)) d = -grad
        let dim = p + 1;
        let mut h = vec![0.0; dim * dim];
        for row in &rows {
            let z = theta[p] + row.iter().zip(&theta[..p]).map(|(x, b)| x * b).sum::<f64>();
            let pr = sigmoid(z);
            let s = (pr * (1.0 - pr)).max(1e-12);
            for a in 0..p {
                let sa = s * row[a];
                for b in a..p {
                    h[a * dim + b] += sa * row[b];
                }
                h[a * dim + p] += sa;
            }
            h[p * dim + p] += s;
        }
        for j in 0..p {
            h[j * dim + j] += 1.0 / c;
        }
        for a in 0..dim {
            for b in 0..a {
                h[a * dim + b] = h[b * dim + a];
            }
        }
        let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
        let direction = solve_linear(h, rhs)
            .ok_or_else(|| Error::Validation("singular system in logistic fit".into()))?;

        // Backtracking keeps each Newton step a descent step.
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> =
                theta.iter().zip(&direction).map(|(t, d)| t + step * d).collect();
            let (trial_obj, trial_grad) = objective_and_gradient(&rows, labels, c, &trial);
            if trial_obj <= objective {
                theta = trial;
                objective = trial_obj;
                grad = trial_grad;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    Ok(LogisticModel {
        features,
        dropped,
        means,
        stds,
        coefficients: theta[..p].to_vec(),
        intercept: theta[p],
        c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feats(x: &[f64], n_cols: usize) -> Features<'_> {
        Features::new(x, n_cols)
    }

    #[test]
    fn no_signal_shrinks_coefficients_to_zero() {
        // labels alternate within each block of constant feature value
        let x: Vec<f64> = (0..40).map(|i| (i / 10) as f64).collect();
        let y: Vec<u8> = (0..40).map(|i| (i % 2) as u8).collect();
        let m = fit_logistic(feats(&x, 1), &y, 1.0).unwrap();
        assert!(m.coefficients[0].abs() < 1e-6, "coef {}", m.coefficients[0]);
        // intercept near the base-rate log odds (rate 0.5 -> 0)
        assert!(m.intercept.abs() < 1e-6);
    }

    #[test]
    fn intercept_matches_base_rate_log_odds() {
        let x: Vec<f64> = (0..40).map(|i| (i % 4) as f64).collect();
        let y: Vec<u8> = (0..40).map(|i| u8::from(i % 4 == 0)).collect();
        let m = fit_logistic(feats(&x, 1), &y, 1.0).unwrap();
        // feature repeats identically across classes in blocks, some signal
        // may remain; check the fitted probabilities average the base rate
        let mean_p: f64 =
            (0..40).map(|i| m.predict_proba(&[(i % 4) as f64]).unwrap()).sum::<f64>() / 40.0;
        assert!((mean_p - 0.25).abs() < 1e-6);
    }

    #[test]
    fn separable_data_keeps_finite_coefficient_with_correct_sign() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<u8> = (0..20).map(|i| u8::from(i >= 10)).collect();
        let m = fit_logistic(feats(&x, 1), &y, 1.0).unwrap();
        assert!(m.coefficients[0].is_finite());
        assert!(m.coefficients[0] > 0.0);
        assert!(m.coefficients[0] < 50.0, "regularization should bound the coefficient");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let rows = vec![
            vec![0.5, -1.0],
            vec![-0.3, 0.2],
            vec![1.5, 0.7],
            vec![-1.1, -0.4],
            vec![0.2, 1.3],
        ];
        let labels = [1u8, 0, 1, 0, 1];
        let theta = [0.3, -0.7, 0.1];
        let c = 0.8;
        let (_, grad) = objective_and_gradient(&rows, &labels, c, &theta);
        let h = 1e-6;
        for j in 0..theta.len() {
            let mut plus = theta.to_vec();
            plus[j] += h;
            let mut minus = theta.to_vec();
            minus[j] -= h;
            let (fp, _) = objective_and_gradient(&rows, &labels, c, &plus);
            let (fm, _) = objective_and_gradient(&rows, &labels, c, &minus);
            let numeric = (fp - fm) / (2.0 * h);
            let denom = grad[j].abs().max(1.0);
            assert!(
                ((grad[j] - numeric) / denom).abs() < 1e-5,
                "component {j}: analytic {} vs numeric {numeric}",
                grad[j]
            );
        }
    }

    #[test]
    fn zero_variance_features_are_dropped() {
        let x: Vec<f64> = (0..10).flat_map(|i| vec![5.0, i as f64]).collect();
        let y: Vec<u8> = (0..10).map(|i| u8::from(i >= 5)).collect();
        let m = fit_logistic(feats(&x, 2), &y, 1.0).unwrap();
        assert_eq!(m.dropped, vec![0]);
        assert_eq!(m.features, vec![1]);
    }

    #[test]
    fn destandardized_predictions_match() {
        let x: Vec<f64> = (0..30)
            .flat_map(|i| vec![(i % 7) as f64 * 3.0 + 10.0, (i % 5) as f64 - 2.0])
            .collect();
        let y: Vec<u8> = (0..30).map(|i| u8::from((i * 13) % 30 >= 14)).collect();
        let m = fit_logistic(feats(&x, 2), &y, 2.0).unwrap();
        let (raw, b0) = m.destandardized();
        for i in 0..30 {
            let row = [x[i * 2], x[i * 2 + 1]];
            let z: f64 = b0
                + m.features
                    .iter()
                    .enumerate()
                    .map(|(k, &j)| raw[k] * row[j])
                    .sum::<f64>();
            let p_raw = sigmoid(z);
            let p_std = m.predict_proba(&row).unwrap();
            assert!((p_raw - p_std).abs() < 1e-10);
        }
    }

    #[test]
    fn weaker_regularization_does_not_raise_its_own_objective_when_warm_started() {
        let x: Vec<f64> = (0..24)
            .flat_map(|i| vec![((i * 7) % 12) as f64, ((i * 5) % 9) as f64])
            .collect();
        let y: Vec<u8> = (0..24).map(|i| u8::from((i * 11) % 24 >= 11)).collect();
        let small = fit_logistic(feats(&x, 2), &y, 0.5).unwrap();

        // objective at the big-C optimum must not exceed the objective of
        // the small-C solution measured under big C
        let big_c = 4.0;
        let big = fit_logistic_warm(
            feats(&x, 2),
            &y,
            big_c,
            Some((&small.coefficients, small.intercept)),
        )
        .unwrap();

        let n = 24;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                big.features
                    .iter()
                    .enumerate()
                    .map(|(k, &j)| (x[i * 2 + j] - big.means[k]) / big.stds[k])
                    .collect()
            })
            .collect();
        let mut warm_theta = small.coefficients.clone();
        warm_theta.push(small.intercept);
        let mut opt_theta = big.coefficients.clone();
        opt_theta.push(big.intercept);
        let (f_warm, _) = objective_and_gradient(&rows, &y, big_c, &warm_theta);
        let (f_opt, _) = objective_and_gradient(&rows, &y, big_c, &opt_theta);
        assert!(f_opt <= f_warm + 1e-6);
    }

    #[test]
    fn single_class_is_degenerate() {
        let x = [1.0, 2.0, 3.0];
        assert!(matches!(
            fit_logistic(feats(&x, 1), &[1, 1, 1], 1.0),
            Err(Error::DegenerateClass(_))
        ));
    }

    #[test]
    fn deterministic_fit() {
        let x: Vec<f64> = (0..40).map(|i| ((i * 17) % 19) as f64).collect();
        let y: Vec<u8> = (0..40).map(|i| u8::from((i * 3) % 7 < 3)).collect();
        let a = fit_logistic(feats(&x, 1), &y, 1.3).unwrap();
        let b = fit_logistic(feats(&x, 1), &y, 1.3).unwrap();
        assert_eq!(a, b);
    }
}
