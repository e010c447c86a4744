//! Seeded synthetic corpus: each class draws from its own keyword list, mixed
//! with a shared pool of noise tokens.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Dataset, RawRecord};
use crate::rng;
use crate::Result;

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ter", "zu", "ran", "vel", "do", "pex", "qui", "sor", "tam", "bri", "nok", "gal", "fen",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub keywords_per_class: usize,
    pub noise_vocabulary: usize,
    /// Probability that a token is drawn from the shared noise pool.
    pub noise_fraction: f64,
    pub min_tokens: usize,
    pub max_tokens: usize,
    /// Fraction of records given assurance level 1 or 2.
    pub low_assurance_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            classes: 10,
            per_class: 200,
            keywords_per_class: 12,
            noise_vocabulary: 40,
            noise_fraction: 0.2,
            min_tokens: 6,
            max_tokens: 12,
            low_assurance_fraction: 0.0,
            seed: 0,
        }
    }
}

fn word(index: usize, tag: &str) -> String {
    let mut w = String::from(tag);
    let mut n = index;
    loop {
        w.push_str(SYLLABLES[n % SYLLABLES.len()]);
        n /= SYLLABLES.len();
        if n == 0 {
            break;
        }
    }
    w
}

/// Class code for synthetic class `c`.
pub fn synthetic_code(c: usize) -> String {
    format!("{:06}", 840000 + c * 101)
}

pub fn generate(spec: &SyntheticSpec) -> Result<Dataset> {
    let mut rng = rng::stream(spec.seed, "synthetic");
    let noise: Vec<String> = (0..spec.noise_vocabulary).map(|i| word(i, "n")).collect();
    let mut records = Vec::with_capacity(spec.classes * spec.per_class);
    for c in 0..spec.classes {
        let tag = format!("k{}", word(c, ""));
        let keywords: Vec<String> = (0..spec.keywords_per_class).map(|j| word(j, &tag)).collect();
        for i in 0..spec.per_class {
            let len = rng.gen_range(spec.min_tokens..=spec.max_tokens.max(spec.min_tokens));
            let tokens: Vec<&str> = (0..len)
                .map(|_| {
                    if !noise.is_empty() && rng.gen::<f64>() < spec.noise_fraction {
                        noise.choose(&mut rng).unwrap().as_str()
                    } else {
                        keywords.choose(&mut rng).unwrap().as_str()
                    }
                })
                .collect();
            let split = (len / 2).max(1);
            let level = if rng.gen::<f64>() < spec.low_assurance_fraction { rng.gen_range(1..=2) } else { rng.gen_range(3..=4) };
            records.push(RawRecord::new(
                &format!("syn-{c}-{i}"),
                &tokens[..split].join(" "),
                &tokens[split..].join(" "),
                None,
                &synthetic_code(c),
                level,
            )?);
        }
    }
    records.shuffle(&mut rng);
    Dataset::new(records)
}
