use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::{rng, Error, Result};

/// Repeated k-fold cross-validation plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvPlan {
    pub k: usize,
    pub repeats: usize,
    pub seed: u64,
    pub stratified: bool,
}

impl CvPlan {
    /// Ten repeats of stratified 5-fold cross-validation.
    pub fn standard(seed: u64) -> Self {
        CvPlan { k: 5, repeats: 10, seed, stratified: true }
    }
}

/// Validation row sets, indexed `[repeat][fold]`, each sorted ascending.
pub type Folds = Vec<Vec<Vec<usize>>>;

/// Partitions rows into folds for every repeat. Under stratification the
/// shuffled positives are dealt round-robin from fold 0 and the negatives
/// continue where the positives stopped, so class counts and fold sizes each
/// differ by at most one across folds.
pub fn stratified_folds(labels: &[u8], plan: &CvPlan) -> Result<Folds> {
    let n = labels.len();
    if plan.k < 2 {
        return Err(Error::config("cross-validation needs k >= 2"));
    }
    if plan.repeats == 0 {
        return Err(Error::config("cross-validation needs at least one repeat"));
    }
    if n < plan.k {
        return Err(Error::input(format!("{n} rows cannot fill {} folds", plan.k)));
    }
    let pos: Vec<usize> = (0..n).filter(|&i| labels[i] == 1).collect();
    let neg: Vec<usize> = (0..n).filter(|&i| labels[i] != 1).collect();
    if plan.stratified && (pos.len() < plan.k || neg.len() < plan.k) {
        return Err(Error::input(format!(
            "stratified {}-fold split needs at least {} rows of each class ({} positive, {} negative)",
            plan.k,
            plan.k,
            pos.len(),
            neg.len()
        )));
    }
    let mut out = Vec::with_capacity(plan.repeats);
    for r in 0..plan.repeats {
        let mut draw = rng::substream(plan.seed, "cv", r as u64);
        let mut folds = vec![Vec::new(); plan.k];
        if plan.stratified {
            let (mut p, mut q) = (pos.clone(), neg.clone());
            p.shuffle(&mut draw);
            q.shuffle(&mut draw);
            for (i, &row) in p.iter().enumerate() {
                folds[i % plan.k].push(row);
            }
            for (i, &row) in q.iter().enumerate() {
                folds[(p.len() + i) % plan.k].push(row);
            }
        } else {
            let mut all: Vec<usize> = (0..n).collect();
            all.shuffle(&mut draw);
            for (i, &row) in all.iter().enumerate() {
                folds[i % plan.k].push(row);
            }
        }
        for f in &mut folds {
            f.sort_unstable();
        }
        out.push(folds);
    }
    Ok(out)
}

/// Rows not in `validation`, ascending.
pub fn complement(n: usize, validation: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &i in validation {
        mask[i] = false;
    }
    (0..n).filter(|&i| mask[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize, pos: usize) -> Vec<u8> {
        (0..n).map(|i| u8::from(i < pos)).collect()
    }

    #[test]
    fn counting_example() {
        let y = labels(101, 10);
        let plan = CvPlan { k: 5, repeats: 1, seed: 3, stratified: true };
        let folds = stratified_folds(&y, &plan).unwrap();
        let sizes: Vec<usize> = folds[0].iter().map(Vec::len).collect();
        let pos: Vec<usize> = folds[0].iter().map(|f| f.iter().filter(|&&i| y[i] == 1).count()).collect();
        assert_eq!(sizes, vec![21, 20, 20, 20, 20]);
        assert_eq!(pos, vec![2; 5]);
    }

    #[test]
    fn too_few_positives() {
        let plan = CvPlan { k: 5, repeats: 1, seed: 0, stratified: true };
        assert!(stratified_folds(&labels(50, 4), &plan).is_err());
    }

    #[test]
    fn repeats_differ_but_reproduce() {
        let y = labels(100, 10);
        let plan = CvPlan { k: 5, repeats: 10, seed: 9, stratified: true };
        let a = stratified_folds(&y, &plan).unwrap();
        assert_eq!(a, stratified_folds(&y, &plan).unwrap());
        for r in 1..10 {
            assert_ne!(a[0], a[r]);
        }
    }
}
