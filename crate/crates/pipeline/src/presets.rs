use hscls_core::models::{Architecture, ArchitectureConfig, DnnConfig, TextCnnConfig};

use crate::error::{PipelineError, Result};

pub const DNN_PRESETS: [&str; 3] = ["paper_base", "paper_upsampled", "paper_final"];
pub const TEXT_CNN_PRESETS: [&str; 2] = ["paper_final", "prose_345"];

/// Named hyperparameter sets. For the DNN `paper_final` is the model tuned
/// on up-sampled data, the configuration the final comparison used.
pub fn preset(arch: Architecture, name: &str) -> Result<ArchitectureConfig> {
    match (arch, name) {
        (Architecture::Dnn, "paper_base") => Ok(ArchitectureConfig::Dnn(DnnConfig::paper_base())),
        (Architecture::Dnn, "paper_upsampled" | "paper_final") => Ok(ArchitectureConfig::Dnn(DnnConfig::paper_upsampled())),
        (Architecture::TextCnn, "paper_final") => Ok(ArchitectureConfig::TextCnn(TextCnnConfig::paper_final())),
        (Architecture::TextCnn, "prose_345") => Ok(ArchitectureConfig::TextCnn(TextCnnConfig::prose_345())),
        (a, n) => {
            let known = match a {
                Architecture::Dnn => DNN_PRESETS.join(", "),
                Architecture::TextCnn => TEXT_CNN_PRESETS.join(", "),
            };
            Err(PipelineError::Config(format!("unknown {a} preset {n:?} (expected one of {known})")))
        }
    }
}
