//! Penalized linear models fitted by proximal coordinate descent.
//!
//! Objective: `(1/n) sum_i w_i loss(y_i, b + x_i.beta) + l1 |beta|_1 + l2 |beta|^2 / 2`
//! with `(l1, l2)` from [`LinearParams::strengths`]. The intercept is not
//! penalized. Each coordinate takes a proximal Newton step followed by a
//! backtracking line search, sweeping coordinates in column order.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::config::{Learner, LinearParams, ModelConfig};
use super::model::{LinearPayload, Payload, TrainedModel, TrainingMetadata};
use super::weights::ClassWeights;
use crate::cohort::FeatureMatrix;
use crate::stats::sigmoid;
use crate::{Error, Result};

/// Largest coefficient change per sweep at which the fit counts as converged.
pub const TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    Logistic,
    SquaredHinge,
}

impl Loss {
    /// Per-row loss, its first and second derivative with respect to the margin.
    #[inline]
    fn eval(self, y: u8, m: f64) -> (f64, f64, f64) {
        match self {
            Loss::Logistic => {
                let p = sigmoid(m);
                let softplus = if m > 0.0 { m + (-m).exp().ln_1p() } else { m.exp().ln_1p() };
                (softplus - f64::from(y) * m, p - f64::from(y), p * (1.0 - p))
            }
            Loss::SquaredHinge => {
                let s = if y == 1 { 1.0 } else { -1.0 };
                let slack = 1.0 - s * m;
                if slack > 0.0 {
                    (slack * slack, -2.0 * s * slack, 2.0)
                } else {
                    (0.0, 0.0, 0.0)
                }
            }
        }
    }

    #[inline]
    fn value(self, y: u8, m: f64) -> f64 {
        self.eval(y, m).0
    }

    /// Upper bound on the second derivative.
    fn curvature_bound(self) -> f64 {
        match self {
            Loss::Logistic => 0.25,
            Loss::SquaredHinge => 2.0,
        }
    }
}

fn margins(x: ArrayView2<f64>, beta: &[f64], intercept: f64) -> Vec<f64> {
    x.rows().into_iter().map(|r| intercept + r.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>()).collect()
}

/// Mean class-weighted loss without the penalty.
pub fn weighted_loss(
    loss: Loss,
    x: ArrayView2<f64>,
    labels: &[u8],
    weights: &ClassWeights,
    beta: &[f64],
    intercept: f64,
) -> f64 {
    let m = margins(x, beta, intercept);
    let total: f64 = labels.iter().zip(&m).map(|(&y, &mi)| weights.of(y) * loss.value(y, mi)).sum();
    total / labels.len() as f64
}

/// Gradient of [`weighted_loss`]: `(d/d beta, d/d intercept)`.
pub fn weighted_loss_gradient(
    loss: Loss,
    x: ArrayView2<f64>,
    labels: &[u8],
    weights: &ClassWeights,
    beta: &[f64],
    intercept: f64,
) -> (Vec<f64>, f64) {
    let n = labels.len() as f64;
    let m = margins(x, beta, intercept);
    let mut g = vec![0.0; beta.len()];
    let mut gb = 0.0;
    for (i, row) in x.rows().into_iter().enumerate() {
        let d = weights.of(labels[i]) * loss.eval(labels[i], m[i]).1 / n;
        gb += d;
        for (gj, xj) in g.iter_mut().zip(row) {
            *gj += d * xj;
        }
    }
    (g, gb)
}

/// Hessian of [`weighted_loss`] over `(beta, intercept)`, intercept last.
pub fn weighted_loss_hessian(
    loss: Loss,
    x: ArrayView2<f64>,
    labels: &[u8],
    weights: &ClassWeights,
    beta: &[f64],
    intercept: f64,
) -> Vec<Vec<f64>> {
    let n = labels.len() as f64;
    let p = beta.len();
    let m = margins(x, beta, intercept);
    let mut h = vec![vec![0.0; p + 1]; p + 1];
    for (i, row) in x.rows().into_iter().enumerate() {
        let d = weights.of(labels[i]) * loss.eval(labels[i], m[i]).2 / n;
        let xi: Vec<f64> = row.iter().copied().chain(std::iter::once(1.0)).collect();
        for a in 0..=p {
            for b in 0..=p {
                h[a][b] += d * xi[a] * xi[b];
            }
        }
    }
    h
}

/// Penalized objective minimized by the fit.
pub fn objective(
    loss: Loss,
    params: &LinearParams,
    x: ArrayView2<f64>,
    labels: &[u8],
    weights: &ClassWeights,
    beta: &[f64],
    intercept: f64,
) -> f64 {
    let (l1, l2) = params.strengths();
    weighted_loss(loss, x, labels, weights, beta, intercept)
        + l1 * beta.iter().map(|b| b.abs()).sum::<f64>()
        + 0.5 * l2 * beta.iter().map(|b| b * b).sum::<f64>()
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

pub(crate) struct LinearFit {
    pub beta: Vec<f64>,
    pub intercept: f64,
    pub converged: bool,
    pub epochs: usize,
}

pub(crate) fn coordinate_descent(
    loss: Loss,
    params: &LinearParams,
    x: ArrayView2<f64>,
    labels: &[u8],
    weights: &ClassWeights,
) -> LinearFit {
    let (n, p) = x.dim();
    let nf = n as f64;
    let (l1, l2) = params.strengths();
    let w: Vec<f64> = weights.per_row(labels);
    let cols: Vec<Vec<f64>> = (0..p).map(|j| x.column(j).to_vec()).collect();
    let ones = vec![1.0; n];
    let bounds: Vec<f64> = cols
        .iter()
        .chain(std::iter::once(&ones))
        .map(|c| loss.curvature_bound() * c.iter().zip(&w).map(|(v, wi)| wi * v * v).sum::<f64>() / nf)
        .collect();
    let mut beta = vec![0.0; p];
    let mut intercept = 0.0;
    let mut m = vec![0.0; n];
    let mut epochs = 0;
    let mut converged = false;

    // Coordinate p is the intercept.
    let restricted = |m: &[f64], col: &[f64], step: f64| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            s += w[i] * loss.value(labels[i], m[i] + step * col[i]);
        }
        s / nf
    };
    while epochs < params.max_epochs {
        epochs += 1;
        let mut max_change: f64 = 0.0;
        for j in 0..=p {
            let col: &[f64] = if j < p { &cols[j] } else { &ones };
            let (pen1, pen2, cur) = if j < p { (l1, l2, beta[j]) } else { (0.0, 0.0, intercept) };
            let (mut f0, mut g, mut h) = (0.0, 0.0, 0.0);
            for i in 0..n {
                let (v, d1, d2) = loss.eval(labels[i], m[i]);
                f0 += w[i] * v;
                g += w[i] * d1 * col[i];
                h += w[i] * d2 * col[i] * col[i];
            }
            g = g / nf + pen2 * cur;
            h = h / nf + pen2;
            if h < 1e-10 {
                h = bounds[j] + pen2;
            }
            if h <= 0.0 {
                continue;
            }
            let target = soft_threshold(cur - g / h, pen1 / h);
            let delta = target - cur;
            if delta == 0.0 {
                continue;
            }
            let base = f0 / nf + pen1 * cur.abs() + 0.5 * pen2 * cur * cur;
            let predicted = g * delta + pen1 * (target.abs() - cur.abs());
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let b = cur + t * delta;
                let f = restricted(&m, col, t * delta) + pen1 * b.abs() + 0.5 * pen2 * b * b;
                if f <= base + 1e-2 * t * predicted.min(0.0) {
                    accepted = Some(t * delta);
                    break;
                }
                t *= 0.5;
            }
            let Some(step) = accepted else { continue };
            for i in 0..n {
                m[i] += step * col[i];
            }
            if j < p {
                beta[j] += step;
            } else {
                intercept += step;
            }
            max_change = max_change.max(step.abs());
        }
        if max_change < TOLERANCE {
            converged = true;
            break;
        }
    }
    LinearFit { beta, intercept, converged, epochs }
}

const PLATT_RIDGE: f64 = 1e-4;

/// Logistic calibration `P(y = 1) = sigmoid(a * margin + b)` of decision values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Platt {
    pub a: f64,
    pub b: f64,
}

impl Platt {
    /// Minimizes mean log-loss on the 0/1 labels plus `PLATT_RIDGE/2 * a^2`.
    /// Both terms are per-row averages, so duplicating the training rows
    /// leaves the fit unchanged; the ridge keeps `a` finite on separable margins.
    pub fn fit(margins: &[f64], labels: &[u8]) -> Platt {
        let n = labels.len().max(1) as f64;
        let n_pos = labels.iter().filter(|&&y| y == 1).count() as f64;
        let t: Vec<f64> = labels.iter().map(|&y| f64::from(y)).collect();
        let nll = |a: f64, b: f64| -> f64 {
            let loss: f64 = margins
                .iter()
                .zip(&t)
                .map(|(&m, &ti)| {
                    let z = a * m + b;
                    let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
                    softplus - ti * z
                })
                .sum();
            loss / n + 0.5 * PLATT_RIDGE * a * a
        };
        let prior = ((n_pos + 0.5) / (n - n_pos + 0.5)).ln();
        let (mut a, mut b) = (1.0, prior);
        let mut f = nll(a, b);
        for _ in 0..100 {
            let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (&m, &ti) in margins.iter().zip(&t) {
                let p = sigmoid(a * m + b);
                let d = p - ti;
                let q = p * (1.0 - p);
                ga += d * m;
                gb += d;
                haa += q * m * m;
                hab += q * m;
                hbb += q;
            }
            let (ga, gb) = (ga / n + PLATT_RIDGE * a, gb / n);
            let (haa, hab, hbb) = (haa / n + PLATT_RIDGE, hab / n, hbb / n + 1e-12);
            if ga.abs() < 1e-12 && gb.abs() < 1e-12 {
                break;
            }
            let det = haa * hbb - hab * hab;
            let (da, db) = (-(hbb * ga - hab * gb) / det, -(haa * gb - hab * ga) / det);
            let mut step = 1.0;
            let mut moved = false;
            while step > 1e-10 {
                let (na, nb) = (a + step * da, b + step * db);
                let nf = nll(na, nb);
                if nf <= f + 1e-4 * step * (ga * da + gb * db) {
                    a = na;
                    b = nb;
                    f = nf;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        Platt { a, b }
    }

    pub fn log_odds(&self, margin: f64) -> f64 {
        self.a * margin + self.b
    }
}

fn check_inputs(x: &FeatureMatrix, labels: &[u8]) -> Result<()> {
    if labels.len() != x.n_rows() {
        return Err(Error::input(format!("{} labels for {} rows", labels.len(), x.n_rows())));
    }
    if x.n_rows() == 0 {
        return Err(Error::input("cannot fit on an empty matrix"));
    }
    if x.rows.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("design matrix contains non-finite values"));
    }
    Ok(())
}

fn fit_linear(
    loss: Loss,
    x: &FeatureMatrix,
    labels: &[u8],
    weights: &ClassWeights,
    config: &ModelConfig,
) -> Result<TrainedModel> {
    config.validate()?;
    check_inputs(x, labels)?;
    let params = config.linear_params()?;
    let fit = coordinate_descent(loss, &params, x.rows.view(), labels, weights);
    let mut warnings = Vec::new();
    if !fit.converged {
        let msg = format!(
            "{} did not converge within {} epochs (tolerance {TOLERANCE:e})",
            config.learner, params.max_epochs
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let platt = (loss == Loss::SquaredHinge).then(|| {
        let m = margins(x.rows.view(), &fit.beta, fit.intercept);
        Platt::fit(&m, labels)
    });
    Ok(TrainedModel::new(
        config.clone(),
        x.column_names(),
        fit.intercept,
        Payload::Linear(LinearPayload { coefficients: fit.beta, platt }),
        TrainingMetadata {
            n: x.n_rows(),
            p: x.n_cols(),
            class_weights: *weights,
            seed: config.seed,
            converged: fit.converged,
            epochs: Some(fit.epochs),
            oob_auc: None,
            warnings,
        },
    ))
}

/// Class-weighted logistic regression with l1, l2 or elastic-net penalty.
pub fn fit_logistic(
    x: &FeatureMatrix,
    labels: &[u8],
    weights: &ClassWeights,
    config: &ModelConfig,
) -> Result<TrainedModel> {
    if config.learner != Learner::Lr {
        return Err(Error::config("fit_logistic needs an lr config"));
    }
    fit_linear(Loss::Logistic, x, labels, weights, config)
}

/// Class-weighted linear SVM on the squared hinge loss.
pub fn fit_linear_svm(
    x: &FeatureMatrix,
    labels: &[u8],
    weights: &ClassWeights,
    config: &ModelConfig,
) -> Result<TrainedModel> {
    if config.learner != Learner::Svm {
        return Err(Error::config("fit_linear_svm needs an svm config"));
    }
    fit_linear(Loss::SquaredHinge, x, labels, weights, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Penalty;
    use ndarray::Array2;

    #[test]
    fn soft_threshold_shrinks() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
    }

    #[test]
    fn separable_data_stays_finite() {
        let x = Array2::from_shape_vec((6, 1), vec![-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]).unwrap();
        let labels = vec![0, 0, 0, 1, 1, 1];
        let m = FeatureMatrix::from_dense(x, labels.clone(), None);
        let model =
            fit_logistic(&m, &labels, &ClassWeights::UNIFORM, &ModelConfig::logistic(Penalty::L2, 1.0))
                .unwrap();
        let Payload::Linear(lin) = &model.payload else { panic!() };
        assert!(lin.coefficients[0].is_finite() && lin.coefficients[0] > 0.0);
        assert!(model.metadata.converged);
    }

    #[test]
    fn platt_is_increasing_for_informative_margins() {
        let m = [-2.0, -1.0, -0.5, 0.3, 1.0, 2.0];
        let y = [0, 0, 1, 0, 1, 1];
        let p = Platt::fit(&m, &y);
        assert!(p.a > 0.0);
    }
}
