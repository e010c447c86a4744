use super::Tensor;
use crate::{Error, Result, Scalar};

/// Probabilities are clamped to at least this before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Row-wise softmax with max-subtraction.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let c = logits.dim(logits.rank() - 1);
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks(c) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let start = out.len();
        let mut sum = T::zero();
        for &v in row {
            let e = (v - m).exp();
            sum += e;
            out.push(e);
        }
        out[start..].iter_mut().for_each(|e| *e /= sum);
    }
    Tensor::from_parts(logits.shape().to_vec(), out)
}

pub fn one_hot<T: Scalar>(labels: &[usize], classes: usize) -> Result<Tensor<T>> {
    let mut out = vec![T::zero(); labels.len() * classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::invalid(format!("label {l} out of range for {classes} classes")));
        }
        out[i * classes + l] = T::one();
    }
    Ok(Tensor::from_parts(vec![labels.len(), classes], out))
}

fn true_classes<T: Scalar>(yhat: &Tensor<T>, y: &Tensor<T>) -> Result<Vec<usize>> {
    if yhat.shape() != y.shape() || yhat.rank() != 2 {
        return Err(Error::shape(format!("predictions {:?} vs targets {:?}", yhat.shape(), y.shape())));
    }
    let c = y.dim(1);
    y.data()
        .chunks(c)
        .enumerate()
        .map(|(i, row)| {
            let ones: Vec<usize> = row.iter().enumerate().filter(|(_, &v)| v == T::one()).map(|(k, _)| k).collect();
            let zeros = row.iter().filter(|&&v| v == T::zero()).count();
            if ones.len() == 1 && zeros == c - 1 {
                Ok(ones[0])
            } else {
                Err(Error::invalid(format!("target row {i} is not one-hot")))
            }
        })
        .collect()
}

/// Mean categorical cross-entropy over the batch.
pub fn cross_entropy_loss<T: Scalar>(yhat: &Tensor<T>, y: &Tensor<T>) -> Result<T> {
    let labels = true_classes(yhat, y)?;
    let c = y.dim(1);
    let floor = T::lit(PROB_FLOOR);
    let total: T = labels.iter().enumerate().map(|(i, &l)| -(yhat.data()[i * c + l].max(floor)).ln()).sum();
    Ok(total / T::from_usize_lossy(labels.len().max(1)))
}

/// Gradient of the mean softmax cross-entropy with respect to the logits:
/// `(ŷ − y) / N`.
pub fn softmax_cross_entropy_grad<T: Scalar>(yhat: &Tensor<T>, y: &Tensor<T>) -> Result<Tensor<T>> {
    true_classes(yhat, y)?;
    let n = T::from_usize_lossy(yhat.dim(0).max(1));
    let data = yhat.data().iter().zip(y.data()).map(|(&p, &t)| (p - t) / n).collect();
    Ok(Tensor::from_parts(yhat.shape().to_vec(), data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&t(&[1, 2], &[0., 0.])).data(), &[0.5, 0.5]);
        let p = softmax(&t(&[1, 2], &[2f64.ln(), 0.]));
        assert!((p.data()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.data()[1] - 1.0 / 3.0).abs() < 1e-15);
        let p = softmax(&t(&[1, 2], &[1000., 0.]));
        assert!(p.is_finite());
        assert!((p.data()[0] - 1.0).abs() < 1e-15 && p.data()[1] < 1e-300);
    }

    #[test]
    fn cross_entropy_examples() {
        let y = one_hot::<f64>(&[0], 2).unwrap();
        assert_eq!(cross_entropy_loss(&t(&[1, 2], &[1., 0.]), &y).unwrap(), 0.0);
        let half = t(&[1, 2], &[0.5, 0.5]);
        assert!((cross_entropy_loss(&half, &y).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softmax_cross_entropy_grad(&half, &y).unwrap().data(), &[-0.5, 0.5]);
        // clamped: zero probability on the true class stays finite
        let l = cross_entropy_loss(&t(&[1, 2], &[0., 1.]), &y).unwrap();
        assert!((l - (-(1e-12f64).ln())).abs() < 1e-9);
    }

    #[test]
    fn non_one_hot_rejected() {
        let yhat = t(&[1, 3], &[0.2, 0.3, 0.5]);
        assert!(cross_entropy_loss(&yhat, &t(&[1, 3], &[0.5, 0.5, 0.])).is_err());
        assert!(cross_entropy_loss(&yhat, &t(&[1, 3], &[1., 1., 0.])).is_err());
        assert!(cross_entropy_loss(&yhat, &t(&[1, 3], &[0., 0., 0.])).is_err());
        assert!(one_hot::<f64>(&[3], 3).is_err());
    }

    #[test]
    fn fused_gradient_matches_finite_differences() {
        let logits = [0.3, -1.2, 2.0, 0.7, 0.1, -0.4];
        let labels = [2, 0];
        let y = one_hot::<f64>(&labels, 3).unwrap();
        let loss_at = |o: &[f64]| cross_entropy_loss(&softmax(&t(&[2, 3], o)), &y).unwrap();
        let g = softmax_cross_entropy_grad(&softmax(&t(&[2, 3], &logits)), &y).unwrap();
        let h = 1e-6;
        for i in 0..logits.len() {
            let mut p = logits;
            let mut m = logits;
            p[i] += h;
            m[i] -= h;
            let fd = (loss_at(&p) - loss_at(&m)) / (2.0 * h);
            assert!((fd - g.data()[i]).abs() < 1e-10, "coord {i}: {fd} vs {}", g.data()[i]);
        }
    }

    proptest! {
        #[test]
        fn softmax_rows_and_shift_invariance(
            row in proptest::collection::vec(-50.0f64..50.0, 1..12),
            shift in -100.0f64..100.0,
        ) {
            let c = row.len();
            let p = softmax(&t(&[1, c], &row));
            prop_assert!((p.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let shifted: Vec<f64> = row.iter().map(|v| v + shift).collect();
            let q = softmax(&t(&[1, c], &shifted));
            for (a, b) in p.data().iter().zip(q.data()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
