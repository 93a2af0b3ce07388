//! Cox proportional hazards by damped Newton on the Efron partial likelihood.

use log::warn;
use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::cohort::FeatureMatrix;
use crate::stats::normal_two_sided;
use crate::{Error, Result};

pub const MAX_ITERATIONS: usize = 100;
/// Stop once the log partial likelihood improves by less than this.
pub const LOGLIK_TOLERANCE: f64 = 1e-9;
/// Standardized |beta| beyond which a still-rising likelihood means separation.
pub const SEPARATION_BETA: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxCoefficient {
    pub name: String,
    /// Log hazard ratio per unit of the covariate.
    pub beta: f64,
    pub se: f64,
    pub z: f64,
    pub p_value: f64,
    pub hazard_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxFit {
    pub coefficients: Vec<CoxCoefficient>,
    pub log_likelihood: f64,
    pub null_log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Monotone likelihood: some coefficient diverges.
    pub separation: bool,
    pub ties: String,
    pub n: usize,
    pub n_events: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl CoxFit {
    pub fn coefficient(&self, name: &str) -> Option<&CoxCoefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn p_value(&self, name: &str) -> Option<f64> {
        self.coefficient(name).map(|c| c.p_value)
    }
}

/// Fits on the clinical-unit values of `covariates`, so coefficients are per
/// unit of each column.
pub fn fit_cox(covariates: &FeatureMatrix, times: &[f64], events: &[u8]) -> Result<CoxFit> {
    fit_cox_dense(covariates.raw.view(), &covariates.column_names(), times, events)
}

pub fn fit_cox_dense(x: ArrayView2<f64>, names: &[String], times: &[f64], events: &[u8]) -> Result<CoxFit> {
    check_inputs(x, times, events)?;
    let (n, p) = x.dim();
    if names.len() != p {
        return Err(Error::input(format!("{} names for {p} covariates", names.len())));
    }
    if p == 0 {
        return Err(Error::input("Cox regression needs at least one covariate"));
    }
    // Centering leaves the partial likelihood unchanged and scaling is undone
    // below, so the reported fit is exactly equivariant to unit changes.
    let mut scale = Vec::with_capacity(p);
    let mut z = Array2::zeros((n, p));
    for (j, name) in names.iter().enumerate() {
        let col = x.column(j);
        let mean = col.sum() / n as f64;
        let sd = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt();
        if !(sd > 0.0) || col.iter().all(|&v| v == col[0]) {
            return Err(Error::input(format!(
                "covariate `{name}` is constant; its hazard ratio is not identifiable"
            )));
        }
        z.column_mut(j).assign(&col.mapv(|v| (v - mean) / sd));
        scale.push(sd);
    }
    let order = risk_order(times);
    let null_ll = efron(z.view(), &order, times, events, &vec![0.0; p], false).0;

    let mut beta = vec![0.0; p];
    let (mut ll, mut grad, mut info) = efron(z.view(), &order, times, events, &beta, true);
    let mut converged = false;
    let mut separation = false;
    let mut iterations = 0;
    let mut warnings = Vec::new();
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let step = newton_step(&info, &grad);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let (ll_t, g_t, i_t) = efron(z.view(), &order, times, events, &trial, true);
            if ll_t.is_finite() && ll_t >= ll - 1e-12 {
                accepted = Some((trial, ll_t, g_t, i_t));
                break;
            }
            t *= 0.5;
        }
        let Some((trial, ll_t, g_t, i_t)) = accepted else {
            // No ascent direction left: already at the optimum numerically.
            converged = true;
            break;
        };
        let gain = ll_t - ll;
        beta = trial;
        ll = ll_t;
        grad = g_t;
        info = i_t;
        if gain > 0.0 && beta.iter().any(|b| b.abs() > SEPARATION_BETA) {
            separation = true;
            break;
        }
        if gain.abs() < LOGLIK_TOLERANCE {
            converged = true;
            break;
        }
    }
    if separation {
        let msg =
            "monotone likelihood: a coefficient diverges (separation); estimates are unreliable".to_string();
        warn!("{msg}");
        warnings.push(msg);
    } else if !converged {
        let msg = format!("Cox fit did not converge in {MAX_ITERATIONS} iterations");
        warn!("{msg}");
        warnings.push(msg);
    }

    let cov = invert(&info);
    let coefficients = (0..p)
        .map(|j| {
            let se_std = cov.as_ref().map_or(f64::NAN, |c| c[(j, j)].max(0.0).sqrt());
            let z_stat = beta[j] / se_std;
            let b = beta[j] / scale[j];
            CoxCoefficient {
                name: names[j].clone(),
                beta: b,
                se: se_std / scale[j],
                z: z_stat,
                p_value: if z_stat.is_finite() { normal_two_sided(z_stat) } else { f64::NAN },
                hazard_ratio: b.exp(),
            }
        })
        .collect();
    Ok(CoxFit {
        coefficients,
        log_likelihood: ll,
        null_log_likelihood: null_ll,
        iterations,
        converged: converged && !separation,
        separation,
        ties: "efron".into(),
        n,
        n_events: events.iter().filter(|&&e| e == 1).count(),
        warnings,
    })
}

/// Efron log partial likelihood at `beta`.
pub fn cox_log_partial_likelihood(
    x: ArrayView2<f64>,
    times: &[f64],
    events: &[u8],
    beta: &[f64],
) -> Result<f64> {
    check_inputs(x, times, events)?;
    check_beta(x, beta)?;
    Ok(efron(x, &risk_order(times), times, events, beta, false).0)
}

/// Gradient of [`cox_log_partial_likelihood`].
pub fn cox_gradient(x: ArrayView2<f64>, times: &[f64], events: &[u8], beta: &[f64]) -> Result<Vec<f64>> {
    check_inputs(x, times, events)?;
    check_beta(x, beta)?;
    Ok(efron(x, &risk_order(times), times, events, beta, false).1)
}

fn check_beta(x: ArrayView2<f64>, beta: &[f64]) -> Result<()> {
    if beta.len() != x.ncols() {
        return Err(Error::input(format!("beta has {} entries for {} covariates", beta.len(), x.ncols())));
    }
    Ok(())
}

fn check_inputs(x: ArrayView2<f64>, times: &[f64], events: &[u8]) -> Result<()> {
    let n = x.nrows();
    if times.len() != n || events.len() != n {
        return Err(Error::input(format!(
            "{n} rows but {} times and {} event flags",
            times.len(),
            events.len()
        )));
    }
    if let Some(t) = times.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(Error::input(format!("survival times must be positive and finite, found {t}")));
    }
    if let Some(e) = events.iter().find(|&&e| e > 1) {
        return Err(Error::input(format!("event flags must be 0 or 1, found {e}")));
    }
    if !events.contains(&1) {
        return Err(Error::input("no events: the partial likelihood is undefined"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("covariates must be finite"));
    }
    Ok(())
}

/// Row indices by descending time.
fn risk_order(times: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[b].total_cmp(&times[a]).then(a.cmp(&b)));
    order
}

/// Log-likelihood, gradient and (optionally) observed information.
///
/// Rows are swept from the latest time backwards so the risk-set sums
/// `S0 = sum e^eta`, `S1 = sum e^eta x`, `S2 = sum e^eta x x'` accumulate.
/// For `d` tied events the Efron terms use `S - (l/d) D` for `l < d`, where
/// `D` sums over the tied events only.
fn efron(
    x: ArrayView2<f64>,
    order: &[usize],
    times: &[f64],
    events: &[u8],
    beta: &[f64],
    hessian: bool,
) -> (f64, Vec<f64>, Vec<f64>) {
    let p = x.ncols();
    let eta: Vec<f64> = (0..x.nrows()).map(|i| x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum()).collect();
    let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut ll = 0.0;
    let mut grad = vec![0.0; p];
    let mut info = vec![0.0; if hessian { p * p } else { 0 }];
    let (mut s0, mut s1, mut s2) = (0.0, vec![0.0; p], vec![0.0; if hessian { p * p } else { 0 }]);
    let mut k = 0;
    while k < order.len() {
        let t = times[order[k]];
        let mut end = k;
        while end < order.len() && times[order[end]] == t {
            end += 1;
        }
        let (mut d0, mut d1, mut d2) = (0.0, vec![0.0; p], vec![0.0; s2.len()]);
        let mut d = 0usize;
        for &i in &order[k..end] {
            let w = (eta[i] - shift).exp();
            let row = x.row(i);
            s0 += w;
            for a in 0..p {
                s1[a] += w * row[a];
            }
            if hessian {
                for a in 0..p {
                    for b in 0..p {
                        s2[a * p + b] += w * row[a] * row[b];
                    }
                }
            }
            if events[i] == 1 {
                d += 1;
                ll += eta[i];
                d0 += w;
                for a in 0..p {
                    grad[a] += row[a];
                    d1[a] += w * row[a];
                }
                if hessian {
                    for a in 0..p {
                        for b in 0..p {
                            d2[a * p + b] += w * row[a] * row[b];
                        }
                    }
                }
            }
        }
        for l in 0..d {
            let f = l as f64 / d as f64;
            let den = s0 - f * d0;
            ll -= den.ln() + shift;
            let mean: Vec<f64> = (0..p).map(|a| (s1[a] - f * d1[a]) / den).collect();
            for a in 0..p {
                grad[a] -= mean[a];
            }
            if hessian {
                for a in 0..p {
                    for b in 0..p {
                        info[a * p + b] += (s2[a * p + b] - f * d2[a * p + b]) / den - mean[a] * mean[b];
                    }
                }
            }
        }
        k = end;
    }
    (ll, grad, info)
}

fn newton_step(info: &[f64], grad: &[f64]) -> Vec<f64> {
    let p = grad.len();
    let m = DMatrix::from_row_slice(p, p, info);
    let g = DVector::from_column_slice(grad);
    let mut ridge = 0.0;
    for _ in 0..12 {
        let mut a = m.clone();
        for j in 0..p {
            a[(j, j)] += ridge;
        }
        if let Some(c) = a.cholesky() {
            return c.solve(&g).iter().copied().collect();
        }
        ridge = if ridge == 0.0 { 1e-10 * (1.0 + m.trace().abs()) } else { ridge * 100.0 };
    }
    grad.to_vec()
}

fn invert(info: &[f64]) -> Option<DMatrix<f64>> {
    let p = (info.len() as f64).sqrt() as usize;
    DMatrix::from_row_slice(p, p, info).cholesky().map(|c| c.inverse())
}
