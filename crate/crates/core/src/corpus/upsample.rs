use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Dataset, RawRecord};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpsampleStrategy {
    Mean,
    Median,
}

/// Which class counts the target statistic is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpsampleBasis {
    #[default]
    MinorityClasses,
    AllClasses,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpsampleConfig {
    /// A class is a minority class when its share of all records is below this.
    pub minority_threshold: f64,
    pub strategy: UpsampleStrategy,
    pub basis: UpsampleBasis,
    pub seed: u64,
}

impl Default for UpsampleConfig {
    fn default() -> Self {
        UpsampleConfig {
            minority_threshold: 0.01,
            strategy: UpsampleStrategy::Mean,
            basis: UpsampleBasis::MinorityClasses,
            seed: 0,
        }
    }
}

fn target(counts: &[usize], strategy: UpsampleStrategy) -> usize {
    let mut v = counts.to_vec();
    v.sort_unstable();
    let stat = match strategy {
        UpsampleStrategy::Mean => v.iter().sum::<usize>() as f64 / v.len() as f64,
        UpsampleStrategy::Median => {
            let m = v.len() / 2;
            if v.len() % 2 == 1 {
                v[m] as f64
            } else {
                (v[m - 1] + v[m]) as f64 / 2.0
            }
        }
    };
    stat.ceil() as usize
}

/// Raises every minority class below the target count `T` by duplicating
/// random original records of that class. Originals are kept verbatim and in
/// place; duplicates are appended with `upsampled = true`.
pub fn stratified_upsample(data: &Dataset, cfg: &UpsampleConfig) -> Dataset {
    let total = data.len();
    if total == 0 {
        return data.clone();
    }
    let counts = data.class_counts();
    let minority: Vec<_> = counts
        .iter()
        .filter(|(_, &n)| (n as f64 / total as f64) < cfg.minority_threshold)
        .collect();
    if minority.is_empty() {
        return data.clone();
    }
    let basis: Vec<usize> = match cfg.basis {
        UpsampleBasis::MinorityClasses => minority.iter().map(|(_, &n)| n).collect(),
        UpsampleBasis::AllClasses => counts.values().copied().collect(),
    };
    let t = target(&basis, cfg.strategy);

    let mut rng = rng::stream(cfg.seed, "stratified_upsample");
    let mut records: Vec<RawRecord> = data.records().to_vec();
    for (class, &n) in minority {
        if n >= t {
            continue;
        }
        let originals: Vec<usize> = data.class_index()[class]
            .iter()
            .copied()
            .filter(|&i| !data.records()[i].upsampled)
            .collect();
        let pool = if originals.is_empty() { &data.class_index()[class] } else { &originals };
        for _ in n..t {
            let pick = pool[rng.gen_range(0..pool.len())];
            let mut dup = data.records()[pick].clone();
            dup.upsampled = true;
            records.push(dup);
        }
    }
    Dataset::from_trusted(records)
}
