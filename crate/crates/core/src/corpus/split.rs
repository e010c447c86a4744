use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { test_fraction: 0.05, seed: 0 }
    }
}

/// Per-class train/test partition. Each class contributes
/// `max(1, round(n_c * test_fraction))` test records, capped so that at least
/// one record stays in train.
pub fn stratified_split(data: &Dataset, cfg: &SplitConfig) -> Result<(Dataset, Dataset)> {
    if !(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0) {
        return Err(Error::invalid(format!("test_fraction {} outside (0, 1)", cfg.test_fraction)));
    }
    let mut rng = rng::stream(cfg.seed, "stratified_split");
    let mut test_pos = Vec::new();
    let mut train_pos = Vec::new();
    for (class, positions) in data.class_index() {
        let n = positions.len();
        if n < 2 {
            return Err(Error::ClassTooSmall { class: class.to_string(), count: n, required: 2 });
        }
        let n_test = ((n as f64 * cfg.test_fraction).round() as usize).clamp(1, n - 1);
        let mut shuffled = positions.clone();
        shuffled.shuffle(&mut rng);
        test_pos.extend_from_slice(&shuffled[..n_test]);
        train_pos.extend_from_slice(&shuffled[n_test..]);
    }
    Ok((data.subset(&train_pos), data.subset(&test_pos)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::RawRecord;
    use proptest::prelude::*;

    fn dataset(counts: &[(&str, usize)]) -> Dataset {
        let mut recs = Vec::new();
        for (code, n) in counts {
            for i in 0..*n {
                recs.push(RawRecord::new(&format!("{code}-{i}"), "item", "", None, code, 4).unwrap());
            }
        }
        Dataset::new(recs).unwrap()
    }

    fn count(ds: &Dataset, code: &str) -> usize {
        ds.records().iter().filter(|r| r.hs_code.as_str() == code).count()
    }

    #[test]
    fn ninety_five_five() {
        let ds = dataset(&[("111111", 100)]);
        let (train, test) = stratified_split(&ds, &SplitConfig { test_fraction: 0.05, seed: 1 }).unwrap();
        assert_eq!((train.len(), test.len()), (95, 5));
    }

    #[test]
    fn two_records_split_one_one() {
        let ds = dataset(&[("111111", 2), ("222222", 40)]);
        let (train, test) = stratified_split(&ds, &SplitConfig { test_fraction: 0.05, seed: 1 }).unwrap();
        assert_eq!(count(&train, "111111"), 1);
        assert_eq!(count(&test, "111111"), 1);
        assert_eq!(count(&test, "222222"), 2);
    }

    #[test]
    fn singleton_class_rejected() {
        let ds = dataset(&[("111111", 1), ("222222", 10)]);
        assert!(matches!(
            stratified_split(&ds, &SplitConfig::default()),
            Err(Error::ClassTooSmall { count: 1, .. })
        ));
    }

    #[test]
    fn deterministic_for_seed() {
        let ds = dataset(&[("111111", 30), ("222222", 17)]);
        let cfg = SplitConfig { test_fraction: 0.2, seed: 9 };
        let a = stratified_split(&ds, &cfg).unwrap();
        let b = stratified_split(&ds, &cfg).unwrap();
        assert_eq!(a, b);
        let c = stratified_split(&ds, &SplitConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(a.1, c.1);
    }

    proptest! {
        #[test]
        fn split_is_stratified_partition(
            counts in proptest::collection::vec(2usize..60, 1..6),
            fraction in 0.01f64..0.99,
            seed in any::<u64>(),
        ) {
            let codes: Vec<String> = (0..counts.len()).map(|i| format!("{:06}", 100000 + i)).collect();
            let spec: Vec<(&str, usize)> = codes.iter().map(String::as_str).zip(counts.iter().copied()).collect();
            let ds = dataset(&spec);
            let (train, test) = stratified_split(&ds, &SplitConfig { test_fraction: fraction, seed }).unwrap();
            prop_assert_eq!(train.len() + test.len(), ds.len());
            let mut ids: Vec<_> = train.records().iter().chain(test.records()).map(|r| r.record_id.clone()).collect();
            ids.sort();
            ids.dedup();
            prop_assert_eq!(ids.len(), ds.len());
            for (code, n) in &spec {
                let t = count(&test, code);
                prop_assert!(t >= 1);
                prop_assert!((t as f64 - *n as f64 * fraction).abs() <= 1.0);
            }
        }
    }
}
