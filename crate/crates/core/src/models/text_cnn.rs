use super::{Architecture, Model, Network, TextCnnConfig};
use crate::nn::{
    concat_features, cross_entropy_loss, dropout, dropout_backward, max_pool_backward,
    max_pool_over_time, one_hot, relu, relu_backward, softmax, softmax_cross_entropy_grad,
    split_features, Conv1d, Dense, DropoutMask, Embedding, IdBatch, Parameter, PoolIndices, Tensor,
};
use crate::rng;
use crate::{Error, Result, Scalar};

/// Embedding → parallel {conv → ReLU (× blocks) → max-over-time pool} per
/// kernel size → concat → dropout → dense → softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct TextCnn<T> {
    config: TextCnnConfig,
    max_len: usize,
    embedding: Embedding<T>,
    branches: Vec<Vec<Conv1d<T>>>,
    output: Dense<T>,
}

struct BlockTrace<T> {
    input: Tensor<T>,
    pre: Tensor<T>,
}

struct BranchTrace<T> {
    blocks: Vec<BlockTrace<T>>,
    pool: PoolIndices,
}

struct Trace<T> {
    branches: Vec<BranchTrace<T>>,
    mask: Option<DropoutMask<T>>,
    features: Tensor<T>,
}

pub fn build_text_cnn<T: Scalar>(
    cfg: &TextCnnConfig,
    vocab_size: usize,
    n_classes: usize,
    max_len: usize,
    seed: u64,
) -> Result<Model<T>> {
    TextCnn::new(cfg, vocab_size, n_classes, max_len, seed).map(Model::TextCnn)
}

impl<T: Scalar> TextCnn<T> {
    pub fn new(cfg: &TextCnnConfig, vocab_size: usize, n_classes: usize, max_len: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if vocab_size < 2 || n_classes < 1 {
            return Err(Error::invalid(format!("text-cnn needs V ≥ 2 and C ≥ 1 (got {vocab_size}, {n_classes})")));
        }
        if max_len < cfg.min_len() {
            return Err(Error::invalid(format!(
                "kernel sizes {:?} with {} block(s) need sequences of at least {} tokens, max_len is {max_len}",
                cfg.kernel_sizes,
                cfg.n_conv_blocks,
                cfg.min_len()
            )));
        }
        let mut rng = rng::stream(seed, "text_cnn.init");
        let embedding = Embedding::new("embedding", vocab_size, cfg.embedding_dim, &mut rng);
        let f = cfg.filters_per_kernel;
        let branches = cfg
            .kernel_sizes
            .iter()
            .enumerate()
            .map(|(b, &h)| {
                (0..cfg.n_conv_blocks)
                    .map(|k| {
                        let cin = if k == 0 { cfg.embedding_dim } else { f };
                        Conv1d::new(&format!("conv{b}_k{h}.block{k}"), cin, h, f, &mut rng)
                    })
                    .collect()
            })
            .collect();
        let output = Dense::new("output", f * cfg.kernel_sizes.len(), n_classes, &mut rng);
        Ok(TextCnn { config: cfg.clone(), max_len, embedding, branches, output })
    }

    pub fn config(&self) -> &TextCnnConfig {
        &self.config
    }

    /// Width of the concatenated pooled feature vector (K · F).
    pub fn feature_width(&self) -> usize {
        self.config.kernel_sizes.len() * self.config.filters_per_kernel
    }

    fn forward(&self, ids: &IdBatch, dropout_seed: Option<u64>) -> Result<(Tensor<T>, Trace<T>)> {
        if ids.len != self.max_len {
            return Err(Error::shape(format!("text-cnn expects sequences of length {}, got {}", self.max_len, ids.len)));
        }
        let embedded = self.embedding.forward(ids)?;
        let mut pooled = Vec::with_capacity(self.branches.len());
        let mut traces = Vec::with_capacity(self.branches.len());
        for branch in &self.branches {
            let mut x = embedded.clone();
            let mut blocks = Vec::with_capacity(branch.len());
            for conv in branch {
                let pre = conv.forward(&x)?;
                let act = relu(&pre);
                blocks.push(BlockTrace { input: x, pre });
                x = act;
            }
            let (p, pool) = max_pool_over_time(&x)?;
            pooled.push(p);
            traces.push(BranchTrace { blocks, pool });
        }
        let refs: Vec<&Tensor<T>> = pooled.iter().collect();
        let concat = concat_features(&refs)?;
        let (features, mask) = match dropout_seed {
            Some(seed) => dropout(&concat, self.config.dropout, true, rng::derive_seed(seed, "text_cnn.dropout"))?,
            None => (concat, None),
        };
        let logits = self.output.forward(&features)?;
        Ok((logits, Trace { branches: traces, mask, features }))
    }
}

impl<T: Scalar> Network<T> for TextCnn<T> {
    fn architecture(&self) -> Architecture {
        Architecture::TextCnn
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
        let g = softmax_cross_entropy_grad(&probs, &y)?;
        let g = self.output.backward(&trace.features, &g);
        let g = dropout_backward(trace.mask.as_ref(), g);
        let widths = vec![self.config.filters_per_kernel; self.branches.len()];
        let mut d_embedded: Option<Tensor<T>> = None;
        for ((branch, bt), gb) in self.branches.iter_mut().zip(&trace.branches).zip(split_features(&g, &widths)) {
            let mut g = max_pool_backward(&bt.pool, &gb);
            for (conv, blk) in branch.iter_mut().zip(&bt.blocks).rev() {
                g = relu_backward(&blk.pre, &g);
                g = conv.backward(&blk.input, &g);
            }
            match &mut d_embedded {
                None => d_embedded = Some(g),
                Some(acc) => acc.data_mut().iter_mut().zip(g.data()).for_each(|(a, &b)| *a += b),
            }
        }
        if let Some(d) = d_embedded {
            self.embedding.backward(ids, &d);
        }
        Ok(loss)
    }

    fn training_loss(&self, ids: &IdBatch, labels: &[usize], dropout_seed: Option<u64>) -> Result<T> {
        let (logits, _) = self.forward(ids, dropout_seed)?;
        cross_entropy_loss(&softmax(&logits), &one_hot(labels, self.n_classes())?)
    }

    fn parameters(&self) -> Vec<&Parameter<T>> {
        let mut v = vec![&self.embedding.table];
        for conv in self.branches.iter().flatten() {
            v.push(&conv.weight);
            v.push(&conv.bias);
        }
        v.push(&self.output.weight);
        v.push(&self.output.bias);
        v
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut v = vec![&mut self.embedding.table];
        for conv in self.branches.iter_mut().flatten() {
            v.push(&mut conv.weight);
            v.push(&mut conv.bias);
        }
        v.push(&mut self.output.weight);
        v.push(&mut self.output.bias);
        v
    }
}
