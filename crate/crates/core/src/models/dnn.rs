use super::{dnn_layer_plan, Architecture, DnnConfig, Model, Network};
use crate::nn::{
    cross_entropy_loss, dropout, dropout_backward, one_hot, relu, relu_backward, softmax,
    softmax_cross_entropy_grad, Dense, DropoutMask, Embedding, IdBatch, Parameter, Tensor,
};
use crate::rng;
use crate::{Error, Result, Scalar};

/// Embedding → flatten → [dense + ReLU + dropout]* → dense → softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct Dnn<T> {
    config: DnnConfig,
    max_len: usize,
    embedding: Embedding<T>,
    hidden: Vec<Dense<T>>,
    output: Dense<T>,
}

struct HiddenTrace<T> {
    input: Tensor<T>,
    pre: Tensor<T>,
    mask: Option<DropoutMask<T>>,
}

struct Trace<T> {
    hidden: Vec<HiddenTrace<T>>,
    last: Tensor<T>,
}

pub fn build_dnn<T: Scalar>(cfg: &DnnConfig, vocab_size: usize, n_classes: usize, max_len: usize, seed: u64) -> Result<Model<T>> {
    Dnn::new(cfg, vocab_size, n_classes, max_len, seed).map(Model::Dnn)
}

impl<T: Scalar> Dnn<T> {
    pub fn new(cfg: &DnnConfig, vocab_size: usize, n_classes: usize, max_len: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if vocab_size < 2 || n_classes < 1 || max_len < 1 {
            return Err(Error::invalid(format!("dnn needs V ≥ 2, C ≥ 1, L ≥ 1 (got {vocab_size}, {n_classes}, {max_len})")));
        }
        let mut rng = rng::stream(seed, "dnn.init");
        let embedding = Embedding::new("embedding", vocab_size, cfg.embedding_dim, &mut rng);
        let mut inputs = max_len * cfg.embedding_dim;
        let mut hidden = Vec::new();
        for (i, w) in dnn_layer_plan(cfg).into_iter().enumerate() {
            hidden.push(Dense::new(&format!("hidden{i}"), inputs, w, &mut rng));
            inputs = w;
        }
        let output = Dense::new("output", inputs, n_classes, &mut rng);
        Ok(Dnn { config: cfg.clone(), max_len, embedding, hidden, output })
    }

    pub fn config(&self) -> &DnnConfig {
        &self.config
    }

    pub fn layer_widths(&self) -> Vec<usize> {
        self.hidden.iter().map(Dense::outputs).collect()
    }

    fn check_batch(&self, ids: &IdBatch) -> Result<()> {
        if ids.len != self.max_len {
            return Err(Error::shape(format!("dnn expects sequences of length {}, got {}", self.max_len, ids.len)));
        }
        Ok(())
    }

    fn forward(&self, ids: &IdBatch, dropout_seed: Option<u64>) -> Result<(Tensor<T>, Trace<T>)> {
        self.check_batch(ids)?;
        let flat_width = self.max_len * self.embedding.dim();
        let mut x = self.embedding.forward(ids)?.reshape(&[ids.batch, flat_width])?;
        let mut hidden = Vec::with_capacity(self.hidden.len());
        for (i, layer) in self.hidden.iter().enumerate() {
            let pre = layer.forward(&x)?;
            let act = relu(&pre);
            let (out, mask) = match dropout_seed {
                Some(seed) => dropout(&act, self.config.dropout, true, rng::derive_indexed(seed, "dnn.dropout", i as u64))?,
                None => (act, None),
            };
            hidden.push(HiddenTrace { input: x, pre, mask });
            x = out;
        }
        let logits = self.output.forward(&x)?;
        Ok((logits, Trace { hidden, last: x }))
    }
}

impl<T: Scalar> Network<T> for Dnn<T> {
    fn architecture(&self) -> Architecture {
        Architecture::Dnn
    }

    fn max_len(&self) -> usize {
        self.max_len
    }

    fn n_classes(&self) -> usize {
        self.output.outputs()
    }

    fn vocab_size(&self) -> usize {
        self.embedding.vocab_size()
    }

    fn logits(&self, ids: &IdBatch) -> Result<Tensor<T>> {
        Ok(self.forward(ids, None)?.0)
    }

    fn accumulate_gradients(&mut self, ids: &IdBatch, labels: &[usize], dropout_seed: Option<u64>) -> Result<T> {
        let (logits, trace) = self.forward(ids, dropout_seed)?;
        let probs = softmax(&logits);
        let y = one_hot(labels, self.n_classes())?;
        let loss = cross_entropy_loss(&probs, &y)?;
        let mut g = softmax_cross_entropy_grad(&probs, &y)?;
        g = self.output.backward(&trace.last, &g);
        for (layer, t) in self.hidden.iter_mut().zip(trace.hidden.iter()).rev() {
            g = dropout_backward(t.mask.as_ref(), g);
            g = relu_backward(&t.pre, &g);
            g = layer.backward(&t.input, &g);
        }
        let g = g.reshape(&[ids.batch, ids.len, self.embedding.dim()])?;
        self.embedding.backward(ids, &g);
        Ok(loss)
    }

    fn training_loss(&self, ids: &IdBatch, labels: &[usize], dropout_seed: Option<u64>) -> Result<T> {
        let (logits, _) = self.forward(ids, dropout_seed)?;
        cross_entropy_loss(&softmax(&logits), &one_hot(labels, self.n_classes())?)
    }

    fn parameters(&self) -> Vec<&Parameter<T>> {
        let mut v = vec![&self.embedding.table];
        for l in &self.hidden {
            v.push(&l.weight);
            v.push(&l.bias);
        }
        v.push(&self.output.weight);
        v.push(&self.output.bias);
        v
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut v = vec![&mut self.embedding.table];
        for l in &mut self.hidden {
            v.push(&mut l.weight);
            v.push(&mut l.bias);
        }
        v.push(&mut self.output.weight);
        v.push(&mut self.output.bias);
        v
    }
}
