//! Small statistical helpers shared across modules.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
pub fn sd(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

/// Two-sided p-value of a standard normal statistic.
pub fn normal_two_sided(z: f64) -> f64 {
    (2.0 * Normal::standard().sf(z.abs())).min(1.0)
}

/// Upper tail of the chi-square distribution.
pub fn chi_square_sf(stat: f64, df: f64) -> f64 {
    if stat <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(df).map(|d| d.sf(stat)).unwrap_or(f64::NAN)
}

/// Result of a hypothesis test that may be undefined for degenerate data.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TestOutcome {
    Value { statistic: f64, p_value: f64 },
    NotApplicable,
}

impl TestOutcome {
    pub fn p_value(&self) -> Option<f64> {
        match self {
            TestOutcome::Value { p_value, .. } => Some(*p_value),
            TestOutcome::NotApplicable => None,
        }
    }
}

/// Welch's unequal-variance two-sample t-test, two-sided.
///
/// Returns [`TestOutcome::NotApplicable`] when both samples have zero
/// variance (the statistic is undefined) or either sample has fewer than two
/// values.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> TestOutcome {
    if a.len() < 2 || b.len() < 2 {
        return TestOutcome::NotApplicable;
    }
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (variance(a), variance(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let se2 = va / na + vb / nb;
    if se2 <= 0.0 {
        return TestOutcome::NotApplicable;
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let p = match StudentsT::new(0.0, 1.0, df) {
        Ok(dist) => (2.0 * dist.sf(t.abs())).min(1.0),
        Err(_) => return TestOutcome::NotApplicable,
    };
    TestOutcome::Value { statistic: t, p_value: p }
}

/// Pearson chi-square test of independence on an r x k contingency table.
///
/// Rows or columns with a zero margin are dropped; fewer than two remaining
/// rows or columns make the test not applicable.
pub fn chi_square_independence(table: &[Vec<f64>]) -> TestOutcome {
    let rows: Vec<&Vec<f64>> = table.iter().filter(|r| r.iter().sum::<f64>() > 0.0).collect();
    if rows.len() < 2 {
        return TestOutcome::NotApplicable;
    }
    let k = rows[0].len();
    let cols: Vec<usize> = (0..k).filter(|&j| rows.iter().map(|r| r[j]).sum::<f64>() > 0.0).collect();
    if cols.len() < 2 {
        return TestOutcome::NotApplicable;
    }
    let total: f64 = rows.iter().map(|r| cols.iter().map(|&j| r[j]).sum::<f64>()).sum();
    let row_sums: Vec<f64> = rows.iter().map(|r| cols.iter().map(|&j| r[j]).sum()).collect();
    let col_sums: Vec<f64> = cols.iter().map(|&j| rows.iter().map(|r| r[j]).sum()).collect();
    let mut stat = 0.0;
    for (ri, r) in rows.iter().enumerate() {
        for (ci, &j) in cols.iter().enumerate() {
            let expected = row_sums[ri] * col_sums[ci] / total;
            stat += (r[j] - expected).powi(2) / expected;
        }
    }
    let df = ((rows.len() - 1) * (cols.len() - 1)) as f64;
    TestOutcome::Value { statistic: stat, p_value: chi_square_sf(stat, df) }
}

/// Percentile with linear interpolation between order statistics (type 7).
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
