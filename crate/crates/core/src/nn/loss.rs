use crate::error::{invalid, Error, Result};
use crate::nn::tensor::{Scalar, Tensor};

/// Probability clamp applied before taking logarithms.
pub const BCE_CLAMP: f64 = 1e-7;

fn same_shape<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("prediction {:?} vs target {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Mean squared error over all elements and its gradient `2 (p - t) / N`.
pub fn loss_mse<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    same_shape(pred, target)?;
    let n = pred.len() as f64;
    let mut grad = pred.clone();
    let mut sum = 0.0;
    for (g, &t) in grad.data_mut().iter_mut().zip(target.data()) {
        let d = g.as_f64() - t.as_f64();
        sum += d * d;
        *g = T::from_f64(2.0 * d / n);
    }
    Ok((sum / n, grad))
}

/// Mean binary cross-entropy of probabilities against {0, 1} targets.
pub fn loss_bce<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    same_shape(pred, target)?;
    let n = pred.len() as f64;
    let mut grad = pred.clone();
    let mut sum = 0.0;
    for (g, &t) in grad.data_mut().iter_mut().zip(target.data()) {
        let p = g.as_f64().clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        let t = t.as_f64();
        sum -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
        *g = T::from_f64((p - t) / (p * (1.0 - p)) / n);
    }
    Ok((sum / n, grad))
}

/// Mean softmax cross-entropy of `(batch, classes)` logits against labels.
pub fn loss_softmax_ce<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<(f64, Tensor<T>)> {
    if logits.rank() != 2 || logits.shape()[0] != labels.len() {
        return Err(Error::Shape(format!("logits {:?} vs {} labels", logits.shape(), labels.len())));
    }
    let c = logits.shape()[1];
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return invalid(format!("label {bad} outside {c} classes"));
    }
    let b = labels.len() as f64;
    let mut grad = logits.clone();
    let mut sum = 0.0;
    for (row, &label) in grad.data_mut().chunks_mut(c).zip(labels) {
        let probs = softmax(&row.iter().map(|v| v.as_f64()).collect::<Vec<_>>());
        sum -= probs[label].max(f64::MIN_POSITIVE).ln();
        for (k, g) in row.iter_mut().enumerate() {
            let onehot = if k == label { 1.0 } else { 0.0 };
            *g = T::from_f64((probs[k] - onehot) / b);
        }
    }
    Ok((sum / b, grad))
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(vec![1, v.len()], v).unwrap()
    }

    #[test]
    fn mse_values() {
        assert_eq!(loss_mse(&t(&[1.0, 2.0]), &t(&[1.0, 2.0])).unwrap().0, 0.0);
        let (l, g) = loss_mse(&t(&[2.0, 3.0, 4.0]), &t(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(l, 1.0);
        assert!(g.data().iter().all(|&v| (v - 2.0 / 3.0).abs() < 1e-15));
        assert!(loss_mse(&t(&[1.0]), &t(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn bce_values() {
        let (l, _) = loss_bce(&t(&[0.5; 4]), &t(&[0.0, 1.0, 1.0, 0.0])).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        let (l, _) = loss_bce(&t(&[1.0 - 1e-9, 1e-9]), &t(&[1.0, 0.0])).unwrap();
        assert!(l < 1e-6);
        assert!(loss_bce(&t(&[0.0, 1.0]), &t(&[1.0, 0.0])).unwrap().0.is_finite());
    }

    #[test]
    fn softmax_ce_values() {
        let (l, g) = loss_softmax_ce(&t(&[0.0, 0.0, 0.0, 0.0]), &[2]).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);
        assert!((g.data()[2] + 0.75).abs() < 1e-12);
        assert!(loss_softmax_ce(&t(&[0.0, 0.0]), &[2]).is_err());
        assert!(loss_softmax_ce(&t(&[0.0, 0.0]), &[0, 1]).is_err());
    }
}
