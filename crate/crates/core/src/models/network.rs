use super::{Architecture, ArchitectureConfig, Dnn, TextCnn};
use crate::corpus::TokenSequence;
use crate::nn::{IdBatch, Parameter, Tensor};
use crate::{Result, Scalar};

/// A trainable sequence classifier producing one logit per class.
///
/// New architectures plug in by implementing this trait and adding a
/// [`Model`] variant.
pub trait Network<T: Scalar>: Send + Sync {
    fn architecture(&self) -> Architecture;

    fn max_len(&self) -> usize;

    fn n_classes(&self) -> usize;

    fn vocab_size(&self) -> usize;

    /// Inference-mode forward pass (dropout off), N×C logits.
    fn logits(&self, ids: &IdBatch) -> Result<Tensor<T>>;

    /// Training forward + backward for the mean cross-entropy of the batch.
    /// Gradients are added to the parameters' accumulators; the loss is
    /// returned. `dropout_seed = None` disables dropout.
    fn accumulate_gradients(&mut self, ids: &IdBatch, labels: &[usize], dropout_seed: Option<u64>) -> Result<T>;

    /// Mean cross-entropy of the batch under the same dropout masks that
    /// [`Network::accumulate_gradients`] would draw for `dropout_seed`.
    fn training_loss(&self, ids: &IdBatch, labels: &[usize], dropout_seed: Option<u64>) -> Result<T>;

    fn parameters(&self) -> Vec<&Parameter<T>>;

    fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model<T> {
    Dnn(Dnn<T>),
    TextCnn(TextCnn<T>),
}

impl<T: Scalar> Model<T> {
    fn inner(&self) -> &dyn Network<T> {
        match self {
            Model::Dnn(m) => m,
            Model::TextCnn(m) => m,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Network<T> {
        match self {
            Model::Dnn(m) => m,
            Model::TextCnn(m) => m,
        }
    }

    pub fn config(&self) -> ArchitectureConfig {
        match self {
            Model::Dnn(m) => ArchitectureConfig::Dnn(m.config().clone()),
            Model::TextCnn(m) => ArchitectureConfig::TextCnn(m.config().clone()),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    /// Inference-mode class probabilities, N×C.
    pub fn probabilities(&self, ids: &IdBatch) -> Result<Tensor<T>> {
        Ok(crate::nn::softmax(&self.logits(ids)?))
    }

    /// Inference-mode mean cross-entropy.
    pub fn loss(&self, ids: &IdBatch, labels: &[usize]) -> Result<T> {
        self.training_loss(ids, labels, None)
    }
}

impl<T: Scalar> Network<T> for Model<T> {
    fn architecture(&self) -> Architecture {
        self.inner().architecture()
    }
    fn max_len(&self) -> usize {
        self.inner().max_len()
    }
    fn n_classes(&self) -> usize {
        self.inner().n_classes()
    }
    fn vocab_size(&self) -> usize {
        self.inner().vocab_size()
    }
    fn logits(&self, ids: &IdBatch) -> Result<Tensor<T>> {
        self.inner().logits(ids)
    }
    fn accumulate_gradients(&mut self, ids: &IdBatch, labels: &[usize], dropout_seed: Option<u64>) -> Result<T> {
        self.inner_mut().accumulate_gradients(ids, labels, dropout_seed)
    }
    fn training_loss(&self, ids: &IdBatch, labels: &[usize], dropout_seed: Option<u64>) -> Result<T> {
        self.inner().training_loss(ids, labels, dropout_seed)
    }
    fn parameters(&self) -> Vec<&Parameter<T>> {
        self.inner().parameters()
    }
    fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        self.inner_mut().parameters_mut()
    }
}

/// Packs token sequences into an id batch plus label vector.
pub fn batch_of(seqs: &[&TokenSequence]) -> Result<(IdBatch, Vec<usize>)> {
    let rows: Vec<&[usize]> = seqs.iter().map(|s| s.ids.as_slice()).collect();
    let labels = seqs.iter().map(|s| s.label_id).collect();
    Ok((IdBatch::from_rows(&rows)?, labels))
}

/// Builds either architecture from its configuration record.
pub fn build_model<T: Scalar>(
    config: &ArchitectureConfig,
    vocab_size: usize,
    n_classes: usize,
    max_len: usize,
    seed: u64,
) -> Result<Model<T>> {
    match config {
        ArchitectureConfig::Dnn(c) => super::build_dnn(c, vocab_size, n_classes, max_len, seed),
        ArchitectureConfig::TextCnn(c) => super::build_text_cnn(c, vocab_size, n_classes, max_len, seed),
    }
}
