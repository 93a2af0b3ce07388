use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::stats::chi_square_sf;
use crate::{Error, Result};

/// Discordant-pair count below which the exact binomial p-value is used.
pub const EXACT_BELOW: u64 = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McNemarMethod {
    ExactBinomial,
    ChiSquare,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    /// Rows where `a` is wrong and `b` is right.
    pub b: u64,
    /// Rows where `a` is right and `b` is wrong.
    pub c: u64,
    /// Continuity-corrected chi-square statistic `(|b - c| - 1)^2 / (b + c)`.
    pub statistic: f64,
    pub p_value: f64,
    pub method: McNemarMethod,
}

/// Continuity-corrected chi-square p-value with one degree of freedom.
pub fn mcnemar_chi_square_p(b: u64, c: u64) -> f64 {
    chi_square_sf(corrected_statistic(b, c), 1.0)
}

/// Two-sided exact binomial p-value of `min(b, c)` under `Bin(b + c, 1/2)`.
pub fn mcnemar_exact_p(b: u64, c: u64) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    let tail = Binomial::new(0.5, n).map(|d| d.cdf(b.min(c))).unwrap_or(1.0);
    (2.0 * tail).min(1.0)
}

fn corrected_statistic(b: u64, c: u64) -> f64 {
    if b + c == 0 {
        return 0.0;
    }
    let d = (b as f64 - c as f64).abs() - 1.0;
    d * d / (b + c) as f64
}

pub fn mcnemar_from_counts(b: u64, c: u64) -> McNemarResult {
    let statistic = corrected_statistic(b, c);
    let (p_value, method) = if b + c == 0 {
        (1.0, McNemarMethod::ExactBinomial)
    } else if b + c < EXACT_BELOW {
        (mcnemar_exact_p(b, c), McNemarMethod::ExactBinomial)
    } else {
        (chi_square_sf(statistic, 1.0), McNemarMethod::ChiSquare)
    };
    McNemarResult { b, c, statistic, p_value, method }
}

/// McNemar test on paired 0/1 predictions of two classifiers.
pub fn mcnemar_test(pred_a: &[u8], pred_b: &[u8], labels: &[u8]) -> Result<McNemarResult> {
    if pred_a.len() != labels.len() || pred_b.len() != labels.len() {
        return Err(Error::input("paired predictions must match the labels in length"));
    }
    let (mut b, mut c) = (0u64, 0u64);
    for ((&pa, &pb), &y) in pred_a.iter().zip(pred_b).zip(labels) {
        match (pa == y, pb == y) {
            (false, true) => b += 1,
            (true, false) => c += 1,
            _ => {}
        }
    }
    Ok(mcnemar_from_counts(b, c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn agreement_gives_unit_p() {
        let r = mcnemar_test(&[0, 1, 1], &[0, 1, 1], &[0, 0, 1]).unwrap();
        assert_eq!((r.b, r.c, r.statistic, r.p_value), (0, 0, 0.0, 1.0));
    }

    #[test]
    fn balanced_discordance() {
        let r = mcnemar_from_counts(15, 15);
        assert!((r.statistic - 1.0 / 30.0).abs() < 1e-12);
        assert!(r.p_value > 0.8);
        assert_eq!(r.method, McNemarMethod::ChiSquare);
    }
}
