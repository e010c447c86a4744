use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::corpus::Dataset;
use crate::rng;
use crate::{Error, Result};

/// Fold membership for every item plus the classes too small to appear in
/// every fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Folds {
    k: usize,
    fold_of: Vec<usize>,
    /// `(class, count)` for classes with fewer than `k` items.
    pub small_classes: Vec<(usize, usize)>,
}

impl Folds {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fold_of(&self) -> &[usize] {
        &self.fold_of
    }

    pub fn len(&self) -> usize {
        self.fold_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fold_of.is_empty()
    }

    pub fn test(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn train(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }
}

/// Stratified fold assignment over class labels. Each class is shuffled and
/// dealt round-robin, starting where the previous class stopped, so fold
/// sizes differ by at most one both per class and overall.
pub fn assign_folds(labels: &[usize], k: usize, seed: u64) -> Result<Folds> {
    if k < 2 {
        return Err(Error::invalid(format!("k must be at least 2, got {k}")));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in labels.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    let mut r = rng::stream(seed, "kfold");
    let mut fold_of = vec![0; labels.len()];
    let mut offset = 0;
    let mut small_classes = Vec::new();
    for (&class, members) in &mut by_class {
        members.shuffle(&mut r);
        for (j, &i) in members.iter().enumerate() {
            fold_of[i] = (offset + j) % k;
        }
        offset = (offset + members.len()) % k;
        if members.len() < k {
            small_classes.push((class, members.len()));
        }
    }
    Ok(Folds { k, fold_of, small_classes })
}

/// Stratified k folds over a dataset's classes (in code order).
pub fn k_fold_split(data: &Dataset, k: usize, seed: u64) -> Result<Folds> {
    let classes = data.classes();
    let labels: Vec<usize> = data
        .records()
        .iter()
        .map(|r| classes.binary_search(&r.hs_code).expect("class index covers every record"))
        .collect();
    assign_folds(&labels, k, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sizes(f: &Folds, labels: &[usize], class: usize) -> Vec<usize> {
        let mut s = vec![0; f.k()];
        for (i, &fold) in f.fold_of().iter().enumerate() {
            if labels[i] == class {
                s[fold] += 1;
            }
        }
        s
    }

    #[test]
    fn exact_and_remainder_division() {
        let labels = vec![0; 74];
        let f = assign_folds(&labels, 37, 1).unwrap();
        assert!(sizes(&f, &labels, 0).iter().all(|&s| s == 2));

        let labels = vec![0; 75];
        let f = assign_folds(&labels, 37, 1).unwrap();
        let s = sizes(&f, &labels, 0);
        assert_eq!(s.iter().filter(|&&n| n == 3).count(), 1);
        assert_eq!(s.iter().filter(|&&n| n == 2).count(), 36);
        assert!(f.small_classes.is_empty());
    }

    #[test]
    fn k_below_two_rejected() {
        assert!(assign_folds(&[0, 1], 1, 0).is_err());
        assert!(assign_folds(&[0, 1], 0, 0).is_err());
    }

    #[test]
    fn small_classes_flagged() {
        let labels = [0, 0, 0, 0, 0, 1, 1];
        let f = assign_folds(&labels, 4, 3).unwrap();
        assert_eq!(f.small_classes, vec![(1, 2)]);
    }

    #[test]
    fn deterministic_per_seed() {
        let labels: Vec<usize> = (0..200).map(|i| i % 7).collect();
        assert_eq!(assign_folds(&labels, 5, 9).unwrap(), assign_folds(&labels, 5, 9).unwrap());
        assert_ne!(assign_folds(&labels, 5, 9).unwrap(), assign_folds(&labels, 5, 10).unwrap());
    }

    proptest! {
        #[test]
        fn folds_partition_with_balance(labels in prop::collection::vec(0usize..6, 1..300), k in 2usize..12, seed: u64) {
            let f = assign_folds(&labels, k, seed).unwrap();
            let mut seen = vec![0; labels.len()];
            for fold in 0..k {
                for i in f.test(fold) {
                    seen[i] += 1;
                }
                prop_assert_eq!(f.test(fold).len() + f.train(fold).len(), labels.len());
            }
            prop_assert!(seen.iter().all(|&n| n == 1));
            for c in 0..6 {
                let s = sizes(&f, &labels, c);
                prop_assert!(s.iter().max().unwrap() - s.iter().min().unwrap() <= 1);
            }
        }
    }
}
