use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Upper end of the neuron budget range; `neuron_pct` is a fraction of it.
pub const NEURON_BUDGET_SCALE: f64 = 5000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Dnn,
    TextCnn,
}

impl Architecture {
    pub fn as_str(&self) -> &'static str {
        match self {
            Architecture::Dnn => "dnn",
            Architecture::TextCnn => "text_cnn",
        }
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dnn" => Ok(Architecture::Dnn),
            "text_cnn" | "textcnn" | "text-cnn" => Ok(Architecture::TextCnn),
            other => Err(Error::invalid(format!("unknown architecture {other:?} (expected dnn or text_cnn)"))),
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Feed-forward network hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DnnConfig {
    /// Width of the first hidden layer.
    pub initial_neurons: usize,
    /// Fraction of [`NEURON_BUDGET_SCALE`] available to all hidden layers together.
    pub neuron_pct: f64,
    /// Each subsequent layer is this fraction of the previous one.
    pub neuron_shrink: f64,
    pub dropout: f64,
    pub embedding_dim: usize,
    pub n_layer_cap: usize,
}

impl DnnConfig {
    /// Tuned values for the data before up-sampling (integers rounded).
    pub fn paper_base() -> Self {
        DnnConfig { initial_neurons: 11, neuron_pct: 0.44, neuron_shrink: 0.31, dropout: 0.37, embedding_dim: 66, n_layer_cap: 15 }
    }

    /// Tuned values for the up-sampled data (integers rounded).
    pub fn paper_upsampled() -> Self {
        DnnConfig { initial_neurons: 168, neuron_pct: 0.95, neuron_shrink: 0.466, dropout: 0.1, embedding_dim: 43, n_layer_cap: 15 }
    }

    /// Structural validity; any positive sizes are accepted.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.initial_neurons == 0 || self.embedding_dim == 0 || self.n_layer_cap == 0 {
            return bad(format!("dnn sizes must be positive: {self:?}"));
        }
        if !(self.neuron_pct > 0.0 && self.neuron_pct <= 1.0) {
            return bad(format!("neuron_pct {} outside (0, 1]", self.neuron_pct));
        }
        if !(self.neuron_shrink > 0.0 && self.neuron_shrink < 1.0) {
            return bad(format!("neuron_shrink {} outside (0, 1)", self.neuron_shrink));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    /// Checks the values lie inside the tuning ranges.
    pub fn validate_ranges(&self) -> Result<()> {
        self.validate()?;
        let ok = (11..=174).contains(&self.initial_neurons)
            && (0.35..=1.0).contains(&self.neuron_pct)
            && (0.25..=0.95).contains(&self.neuron_shrink)
            && (0.10..=0.75).contains(&self.dropout)
            && (11..=87).contains(&self.embedding_dim)
            && (1..=15).contains(&self.n_layer_cap);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("dnn config outside tuning ranges: {self:?}")))
        }
    }
}

/// Text-CNN hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextCnnConfig {
    pub kernel_sizes: Vec<usize>,
    pub filters_per_kernel: usize,
    pub embedding_dim: usize,
    pub dropout: f64,
    /// Stacked conv + ReLU blocks per branch before pooling.
    pub n_conv_blocks: usize,
}

impl TextCnnConfig {
    /// Finalized tuned values: one kernel of width 5, 128 filters, D = 100.
    pub fn paper_final() -> Self {
        TextCnnConfig { kernel_sizes: vec![5], filters_per_kernel: 128, embedding_dim: 100, dropout: 0.5, n_conv_blocks: 1 }
    }

    /// Parallel tri-, four- and five-gram branches.
    pub fn prose_345() -> Self {
        TextCnnConfig { kernel_sizes: vec![3, 4, 5], ..Self::paper_final() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.kernel_sizes.is_empty() || self.kernel_sizes.contains(&0) {
            return bad(format!("kernel sizes must be non-empty and positive: {:?}", self.kernel_sizes));
        }
        if self.filters_per_kernel == 0 || self.embedding_dim == 0 || self.n_conv_blocks == 0 {
            return bad(format!("text-cnn sizes must be positive: {self:?}"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    pub fn validate_ranges(&self) -> Result<()> {
        self.validate()?;
        let ok = self.kernel_sizes.iter().all(|k| (1..=10).contains(k))
            && [64, 128, 256].contains(&self.filters_per_kernel)
            && (50..=150).contains(&self.embedding_dim)
            && (1..=5).contains(&self.n_conv_blocks);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("text-cnn config outside tuning ranges: {self:?}")))
        }
    }

    /// Shortest input length every branch can process.
    pub fn min_len(&self) -> usize {
        let k = self.kernel_sizes.iter().copied().max().unwrap_or(1);
        self.n_conv_blocks * (k - 1) + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "architecture", content = "config", rename_all = "snake_case")]
pub enum ArchitectureConfig {
    Dnn(DnnConfig),
    TextCnn(TextCnnConfig),
}

impl ArchitectureConfig {
    pub fn architecture(&self) -> Architecture {
        match self {
            ArchitectureConfig::Dnn(_) => Architecture::Dnn,
            ArchitectureConfig::TextCnn(_) => Architecture::TextCnn,
        }
    }
}

/// Layer widths from first width, shrink factor, total budget and layer cap.
///
/// Layers are emitted while the cumulative width stays within `budget`, the
/// count stays within `cap` and the width is at least 2. The first layer is
/// always emitted.
pub fn plan_layers(initial: usize, shrink: f64, budget: usize, cap: usize) -> Vec<usize> {
    let mut widths = vec![initial];
    let mut total = initial;
    let mut w = initial;
    while widths.len() < cap {
        w = ((w as f64 * shrink).round() as usize).max(1);
        if w < 2 || total + w > budget {
            break;
        }
        total += w;
        widths.push(w);
    }
    widths
}

pub fn dnn_layer_plan(cfg: &DnnConfig) -> Vec<usize> {
    let budget = (cfg.neuron_pct * NEURON_BUDGET_SCALE).round() as usize;
    plan_layers(cfg.initial_neurons, cfg.neuron_shrink, budget, cfg.n_layer_cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn plan_examples() {
        assert_eq!(plan_layers(100, 0.5, 175, 15), vec![100, 50, 25]);
        assert_eq!(plan_layers(100, 0.5, 40, 15), vec![100]);
        assert_eq!(plan_layers(25, 0.95, 5000, 3), vec![25, 24, 23]);
        assert_eq!(plan_layers(1, 0.5, 5000, 15), vec![1]);
    }

    #[test]
    fn paper_presets() {
        assert_eq!(dnn_layer_plan(&DnnConfig::paper_base()), vec![11, 3]);
        DnnConfig::paper_base().validate_ranges().unwrap();
        DnnConfig::paper_upsampled().validate_ranges().unwrap();
        let tc = TextCnnConfig::paper_final();
        tc.validate_ranges().unwrap();
        assert_eq!((tc.kernel_sizes.as_slice(), tc.filters_per_kernel, tc.embedding_dim, tc.n_conv_blocks), (&[5][..], 128, 100, 1));
        assert_eq!(TextCnnConfig::prose_345().kernel_sizes, vec![3, 4, 5]);
    }

    #[test]
    fn config_json_is_tagged() {
        let c = ArchitectureConfig::TextCnn(TextCnnConfig::prose_345());
        let j = serde_json::to_value(&c).unwrap();
        assert_eq!(j["architecture"], "text_cnn");
        assert_eq!(serde_json::from_value::<ArchitectureConfig>(j).unwrap(), c);
    }

    proptest! {
        #[test]
        fn plan_monotone_within_budget_and_cap(
            initial in 11usize..175,
            pct in 0.35f64..1.0,
            shrink in 0.25f64..0.95,
            cap in 1usize..16,
        ) {
            let cfg = DnnConfig { initial_neurons: initial, neuron_pct: pct, neuron_shrink: shrink, dropout: 0.2, embedding_dim: 20, n_layer_cap: cap };
            let plan = dnn_layer_plan(&cfg);
            let budget = (pct * NEURON_BUDGET_SCALE).round() as usize;
            prop_assert!(!plan.is_empty() && plan.len() <= cap);
            prop_assert!(plan.windows(2).all(|w| w[1] <= w[0]));
            prop_assert!(plan.iter().sum::<usize>() <= budget.max(initial));
        }
    }
}
