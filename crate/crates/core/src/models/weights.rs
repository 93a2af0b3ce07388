use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Inverse-frequency class weights, `w_c = n / (2 n_c)`.
///
/// Each class then carries total weight `n / 2`, so the weighted loss of the
/// minority class counts as much as the majority's.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub w0: f64,
    pub w1: f64,
}

impl ClassWeights {
    /// `w0 = w1 = 1`, the unweighted loss.
    pub const UNIFORM: ClassWeights = ClassWeights { w0: 1.0, w1: 1.0 };

    pub fn of(&self, label: u8) -> f64 {
        if label == 1 {
            self.w1
        } else {
            self.w0
        }
    }

    pub fn per_row(&self, labels: &[u8]) -> Vec<f64> {
        labels.iter().map(|&y| self.of(y)).collect()
    }
}

pub fn class_weights(labels: &[u8]) -> Result<ClassWeights> {
    let n1 = labels.iter().filter(|&&y| y == 1).count();
    let n0 = labels.len() - n1;
    if n0 == 0 || n1 == 0 {
        return Err(Error::OneClass);
    }
    let n = labels.len() as f64;
    Ok(ClassWeights { w0: n / (2.0 * n0 as f64), w1: n / (2.0 * n1 as f64) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_labels_are_unweighted() {
        let labels: Vec<u8> = (0..100).map(|i| (i % 2) as u8).collect();
        assert_eq!(class_weights(&labels).unwrap(), ClassWeights::UNIFORM);
    }

    #[test]
    fn one_class_rejected() {
        let err = class_weights(&[1, 1, 1]).unwrap_err();
        assert_eq!(err.to_string(), "cannot weight a one-class problem");
        assert!(class_weights(&[]).is_err());
    }
}
