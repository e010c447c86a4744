use rand::Rng as _;

use super::init::glorot_uniform;
use super::{IdBatch, Parameter, Tensor};
use crate::rng::{self, Rng};
use crate::{Error, Result, Scalar};

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

// ---------------------------------------------------------------- embedding

/// Row lookup: `out[n, l, :] = table[ids[n, l], :]`.
pub fn embedding_forward<T: Scalar>(ids: &IdBatch, table: &Tensor<T>) -> Result<Tensor<T>> {
    if table.rank() != 2 {
        return Err(Error::shape(format!("embedding table must be V×D, got {:?}", table.shape())));
    }
    let (vocab, dim) = (table.dim(0), table.dim(1));
    let mut out = Vec::with_capacity(ids.ids.len() * dim);
    for &id in &ids.ids {
        if id >= vocab {
            return Err(Error::TokenOutOfRange { id, vocab_size: vocab });
        }
        out.extend_from_slice(table.row(id));
    }
    Ok(Tensor::from_parts(vec![ids.batch, ids.len, dim], out))
}

/// Scatter-adds output-gradient rows into the looked-up table rows.
pub fn embedding_backward<T: Scalar>(ids: &IdBatch, grad_out: &Tensor<T>, table_grad: &mut Tensor<T>) {
    let dim = table_grad.dim(1);
    let g = grad_out.data();
    let tg = table_grad.data_mut();
    for (pos, &id) in ids.ids.iter().enumerate() {
        axpy(T::one(), &g[pos * dim..(pos + 1) * dim], &mut tg[id * dim..(id + 1) * dim]);
    }
}

// -------------------------------------------------------------------- conv1d

/// Valid 1-D convolution over time. `x`: N×L×Din, `w`: F×h×Din, `b`: F.
/// Output N×(L−h+1)×F holds the pre-activations
/// `c[n, i, f] = <w[f], x[n, i..i+h, :]> + b[f]`.
pub fn conv1d_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if x.rank() != 3 || w.rank() != 3 {
        return Err(Error::shape(format!("conv1d expects N×L×D input and F×h×D filters, got {:?} and {:?}", x.shape(), w.shape())));
    }
    let (n, len, din) = (x.dim(0), x.dim(1), x.dim(2));
    let (filters, h, wd) = (w.dim(0), w.dim(1), w.dim(2));
    if wd != din || b.len() != filters {
        return Err(Error::shape(format!("conv1d channel mismatch: input D={din}, filter D={wd}, bias {}", b.len())));
    }
    if len < h {
        return Err(Error::invalid(format!("sequence length {len} shorter than kernel size {h}")));
    }
    let out_len = len - h + 1;
    let window = h * din;
    let xd = x.data();
    let wdata = w.data();
    let bd = b.data();
    let mut out = vec![T::zero(); n * out_len * filters];
    for s in 0..n {
        let xs = &xd[s * len * din..(s + 1) * len * din];
        for i in 0..out_len {
            let win = &xs[i * din..i * din + window];
            let o = &mut out[(s * out_len + i) * filters..(s * out_len + i + 1) * filters];
            for (f, of) in o.iter_mut().enumerate() {
                *of = dot(&wdata[f * window..(f + 1) * window], win) + bd[f];
            }
        }
    }
    Ok(Tensor::from_parts(vec![n, out_len, filters], out))
}

/// Accumulates filter and bias gradients and returns the input gradient.
pub fn conv1d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    grad_out: &Tensor<T>,
    w_grad: &mut Tensor<T>,
    b_grad: &mut Tensor<T>,
) -> Tensor<T> {
    let (n, len, din) = (x.dim(0), x.dim(1), x.dim(2));
    let (filters, h) = (w.dim(0), w.dim(1));
    let out_len = len - h + 1;
    let window = h * din;
    let xd = x.data();
    let wdata = w.data();
    let g = grad_out.data();
    let mut dx = vec![T::zero(); xd.len()];
    let wg = w_grad.data_mut();
    let bg = b_grad.data_mut();
    for s in 0..n {
        let base = s * len * din;
        for i in 0..out_len {
            let start = base + i * din;
            let go = &g[(s * out_len + i) * filters..(s * out_len + i + 1) * filters];
            for (f, &gf) in go.iter().enumerate() {
                if gf == T::zero() {
                    continue;
                }
                bg[f] += gf;
                axpy(gf, &xd[start..start + window], &mut wg[f * window..(f + 1) * window]);
                axpy(gf, &wdata[f * window..(f + 1) * window], &mut dx[start..start + window]);
            }
        }
    }
    Tensor::from_parts(x.shape().to_vec(), dx)
}

// ---------------------------------------------------------------------- relu

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient passes where the pre-activation is strictly positive.
pub fn relu_backward<T: Scalar>(pre: &Tensor<T>, grad: &Tensor<T>) -> Tensor<T> {
    let data = pre
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&p, &g)| if p > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_parts(pre.shape().to_vec(), data)
}

// ------------------------------------------------------------------ max pool

/// Argmax time index per (example, filter), plus the pooled time length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndices {
    pub argmax: Vec<usize>,
    pub time_len: usize,
}

/// Max over the time axis: N×T×F → N×F. Ties resolve to the first index.
pub fn max_pool_over_time<T: Scalar>(c: &Tensor<T>) -> Result<(Tensor<T>, PoolIndices)> {
    if c.rank() != 3 || c.dim(1) == 0 {
        return Err(Error::shape(format!("max pool expects N×T×F with T ≥ 1, got {:?}", c.shape())));
    }
    let (n, t, f) = (c.dim(0), c.dim(1), c.dim(2));
    let d = c.data();
    let mut out = Vec::with_capacity(n * f);
    let mut argmax = Vec::with_capacity(n * f);
    for s in 0..n {
        for k in 0..f {
            let mut best = d[s * t * f + k];
            let mut at = 0;
            for i in 1..t {
                let v = d[(s * t + i) * f + k];
                if v > best {
                    best = v;
                    at = i;
                }
            }
            out.push(best);
            argmax.push(at);
        }
    }
    Ok((Tensor::from_parts(vec![n, f], out), PoolIndices { argmax, time_len: t }))
}

/// Routes each pooled gradient back to its argmax position.
pub fn max_pool_backward<T: Scalar>(idx: &PoolIndices, grad: &Tensor<T>) -> Tensor<T> {
    let (n, f) = (grad.dim(0), grad.dim(1));
    let t = idx.time_len;
    let mut out = vec![T::zero(); n * t * f];
    for s in 0..n {
        for k in 0..f {
            let at = idx.argmax[s * f + k];
            out[(s * t + at) * f + k] = grad.data()[s * f + k];
        }
    }
    Tensor::from_parts(vec![n, t, f], out)
}

// -------------------------------------------------------------------- concat

/// Concatenates N×F_k blocks along the feature axis, in argument order.
pub fn concat_features<T: Scalar>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts.first().ok_or_else(|| Error::invalid("nothing to concatenate"))?;
    let n = first.dim(0);
    if parts.iter().any(|p| p.rank() != 2 || p.dim(0) != n) {
        return Err(Error::shape("concat inputs must all be N×F_k with the same N".to_string()));
    }
    let total: usize = parts.iter().map(|p| p.dim(1)).sum();
    let mut out = Vec::with_capacity(n * total);
    for s in 0..n {
        for p in parts {
            out.extend_from_slice(p.row(s));
        }
    }
    Ok(Tensor::from_parts(vec![n, total], out))
}

/// Inverse of [`concat_features`] for gradients.
pub fn split_features<T: Scalar>(grad: &Tensor<T>, widths: &[usize]) -> Vec<Tensor<T>> {
    let n = grad.dim(0);
    let mut parts: Vec<Vec<T>> = widths.iter().map(|w| Vec::with_capacity(n * w)).collect();
    for s in 0..n {
        let row = grad.row(s);
        let mut off = 0;
        for (p, &w) in parts.iter_mut().zip(widths) {
            p.extend_from_slice(&row[off..off + w]);
            off += w;
        }
    }
    parts.into_iter().zip(widths).map(|(d, &w)| Tensor::from_parts(vec![n, w], d)).collect()
}

// --------------------------------------------------------------------- dense

/// `out[n] = w · z[n] + b` with `z`: N×M, `w`: C×M, `b`: C.
pub fn dense_forward<T: Scalar>(z: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if z.rank() != 2 || w.rank() != 2 || z.dim(1) != w.dim(1) || b.len() != w.dim(0) {
        return Err(Error::shape(format!(
            "dense: input {:?}, weight {:?}, bias {:?}",
            z.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let (n, c) = (z.dim(0), w.dim(0));
    let mut out = Vec::with_capacity(n * c);
    for s in 0..n {
        let zr = z.row(s);
        for k in 0..c {
            out.push(dot(w.row(k), zr) + b.data()[k]);
        }
    }
    Ok(Tensor::from_parts(vec![n, c], out))
}

/// Accumulates `dW += gᵀz`, `db += Σ_n g` and returns `dz = g·W`.
pub fn dense_backward<T: Scalar>(
    z: &Tensor<T>,
    w: &Tensor<T>,
    grad: &Tensor<T>,
    w_grad: &mut Tensor<T>,
    b_grad: &mut Tensor<T>,
) -> Tensor<T> {
    let (n, m, c) = (z.dim(0), z.dim(1), w.dim(0));
    let mut dz = vec![T::zero(); n * m];
    for s in 0..n {
        let zr = z.row(s);
        let gr = grad.row(s);
        for k in 0..c {
            let g = gr[k];
            if g == T::zero() {
                continue;
            }
            b_grad.data_mut()[k] += g;
            axpy(g, zr, &mut w_grad.data_mut()[k * m..(k + 1) * m]);
            axpy(g, w.row(k), &mut dz[s * m..(s + 1) * m]);
        }
    }
    Tensor::from_parts(vec![n, m], dz)
}

// ------------------------------------------------------------------- dropout

/// Multipliers applied by a training-mode dropout pass (0 or `1/(1-rate)`).
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask<T>(pub Vec<T>);

/// Inverted dropout. In inference mode (or at rate 0) the input is returned
/// unchanged and no mask is produced.
pub fn dropout<T: Scalar>(x: &Tensor<T>, rate: f64, training: bool, seed: u64) -> Result<(Tensor<T>, Option<DropoutMask<T>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let mut rng: Rng = rng::seeded(seed);
    let scale = T::lit(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..x.len())
        .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { scale })
        .collect();
    let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    Ok((Tensor::from_parts(x.shape().to_vec(), data), Some(DropoutMask(mask))))
}

pub fn dropout_backward<T: Scalar>(mask: Option<&DropoutMask<T>>, grad: Tensor<T>) -> Tensor<T> {
    match mask {
        None => grad,
        Some(m) => {
            let data = grad.data().iter().zip(&m.0).map(|(&g, &k)| g * k).collect();
            Tensor::from_parts(grad.shape().to_vec(), data)
        }
    }
}

// ---------------------------------------------------------- stateful layers

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T> {
    pub table: Parameter<T>,
}

impl<T: Scalar> Embedding<T> {
    pub fn new(name: &str, vocab_size: usize, dim: usize, rng: &mut Rng) -> Self {
        let table = glorot_uniform(&[vocab_size, dim], vocab_size, dim, rng);
        Embedding { table: Parameter::new(format!("{name}.table"), table) }
    }

    pub fn vocab_size(&self) -> usize {
        self.table.value.dim(0)
    }

    pub fn dim(&self) -> usize {
        self.table.value.dim(1)
    }

    pub fn forward(&self, ids: &IdBatch) -> Result<Tensor<T>> {
        embedding_forward(ids, &self.table.value)
    }

    pub fn backward(&mut self, ids: &IdBatch, grad: &Tensor<T>) {
        embedding_backward(ids, grad, &mut self.table.grad);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d<T> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
}

impl<T: Scalar> Conv1d<T> {
    pub fn new(name: &str, in_channels: usize, kernel: usize, filters: usize, rng: &mut Rng) -> Self {
        let w = glorot_uniform(&[filters, kernel, in_channels], kernel * in_channels, kernel * filters, rng);
        Conv1d {
            weight: Parameter::new(format!("{name}.weight"), w),
            bias: Parameter::new(format!("{name}.bias"), Tensor::zeros(&[filters])),
        }
    }

    pub fn kernel(&self) -> usize {
        self.weight.value.dim(1)
    }

    pub fn filters(&self) -> usize {
        self.weight.value.dim(0)
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv1d_forward(x, &self.weight.value, &self.bias.value)
    }

    pub fn backward(&mut self, x: &Tensor<T>, grad: &Tensor<T>) -> Tensor<T> {
        conv1d_backward(x, &self.weight.value, grad, &mut self.weight.grad, &mut self.bias.grad)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(name: &str, inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        Dense {
            weight: Parameter::new(format!("{name}.weight"), glorot_uniform(&[outputs, inputs], inputs, outputs, rng)),
            bias: Parameter::new(format!("{name}.bias"), Tensor::zeros(&[outputs])),
        }
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.dim(0)
    }

    pub fn forward(&self, z: &Tensor<T>) -> Result<Tensor<T>> {
        dense_forward(z, &self.weight.value, &self.bias.value)
    }

    pub fn backward(&mut self, z: &Tensor<T>, grad: &Tensor<T>) -> Tensor<T> {
        dense_backward(z, &self.weight.value, grad, &mut self.weight.grad, &mut self.bias.grad)
    }
}
