//! Ingestion, validation, normalization, tokenization, splitting and
//! rebalancing of labeled product descriptions.

mod record;
mod split;
pub mod synthetic;
mod text;
mod upsample;
mod vocab;

pub use record::{
    read_dataset, read_descriptions, write_dataset, Dataset, DescriptionRow, HsCode, RawRecord,
    CSV_HEADER,
};
pub use split::{stratified_split, SplitConfig};
pub use text::{combined_text, normalize_text, StopWords, DEFAULT_STOPWORDS};
pub use upsample::{stratified_upsample, UpsampleBasis, UpsampleConfig, UpsampleStrategy};
pub use vocab::{build_vocabulary, tokenize, TokenSequence, Vocabulary, OOV_ID, PAD_ID};

/// Default maximum sequence length (tokens).
pub const DEFAULT_MAX_LEN: usize = 64;

/// Result of [`filter_by_assurance`].
#[derive(Debug, Clone)]
pub struct Filtered {
    pub dataset: Dataset,
    pub dropped: usize,
    pub warning: Option<String>,
}

/// Keeps records whose assurance level is at least `min_level`, preserving order.
pub fn filter_by_assurance(data: &Dataset, min_level: u8) -> Filtered {
    let kept: Vec<RawRecord> = data
        .records()
        .iter()
        .filter(|r| r.assurance_level >= min_level)
        .cloned()
        .collect();
    let dropped = data.len() - kept.len();
    let dataset = Dataset::from_trusted(kept);
    let warning = if dataset.is_empty() {
        let msg = format!("assurance filter (min level {min_level}) removed every record");
        log::warn!("{msg}");
        Some(msg)
    } else {
        None
    };
    Filtered { dataset, dropped, warning }
}

/// Normalizes every record and maps it onto the vocabulary and class list.
pub fn encode_dataset(
    data: &Dataset,
    vocab: &Vocabulary,
    classes: &[HsCode],
    max_len: usize,
    stopwords: &StopWords,
) -> crate::Result<Vec<TokenSequence>> {
    data.records()
        .iter()
        .map(|r| {
            let label_id = classes.iter().position(|c| c == &r.hs_code).ok_or_else(|| {
                crate::Error::invalid(format!(
                    "record {} has class {} which is not in the class list",
                    r.record_id, r.hs_code
                ))
            })?;
            let text = combined_text(&r.short_description, &r.medium_description, r.etim.as_deref(), stopwords);
            Ok(TokenSequence {
                ids: tokenize(&text, vocab, max_len),
                label_id,
                original_record_id: r.record_id.clone(),
            })
        })
        .collect()
}
