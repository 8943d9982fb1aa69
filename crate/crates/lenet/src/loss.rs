use crate::error::{LeNetError, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Row-wise softmax of a `[batch][classes]` tensor, max-subtracted.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Tensor<T> {
    let k = logits.shape()[1];
    let mut out = logits.clone();
    for row in out.data_mut().chunks_exact_mut(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        row.iter_mut().for_each(|v| *v = *v / sum);
    }
    out
}

/// Mean softmax cross-entropy over the batch and its gradient with respect to
/// the logits.
pub fn softmax_cross_entropy<T: Real>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(T, Tensor<T>)> {
    let (b, k) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != b {
        return Err(LeNetError::Shape {
            layer: "loss",
            expected: format!("{b} labels"),
            actual: format!("{} labels", labels.len()),
        });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= k) {
        return Err(LeNetError::Label { label, classes: k });
    }
    let scale = T::one() / T::cast(b as f64);
    let mut grad = logits.clone();
    let mut loss = T::zero();
    for (row, &label) in grad.data_mut().chunks_exact_mut(k).zip(labels) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let log_sum = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        loss = loss - (row[label] - max - log_sum);
        for v in row.iter_mut() {
            *v = (*v - max - log_sum).exp() * scale;
        }
        row[label] = row[label] - scale;
    }
    Ok((loss * scale, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln5() {
        let logits = Tensor::from_vec(&[2, 5], vec![0.3f64; 10]).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, &[0, 4]).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-12);
        assert!((loss - 1.6094).abs() < 1e-4);
    }

    #[test]
    fn dominant_true_logit_saturates() {
        let mut data = vec![0.0f64; 5];
        data[2] = 1e3;
        let logits = Tensor::from_vec(&[1, 5], data).unwrap();
        let (loss, grad) = softmax_cross_entropy(&logits, &[2]).unwrap();
        assert!(loss.abs() < 1e-12);
        assert!(grad.data().iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn out_of_range_label_rejected() {
        let logits = Tensor::from_vec(&[1, 5], vec![0.0f64; 5]).unwrap();
        assert!(matches!(
            softmax_cross_entropy(&logits, &[5]),
            Err(LeNetError::Label {
                label: 5,
                classes: 5
            })
        ));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let labels = [1usize, 3, 0];
        let data: Vec<f64> = (0..15)
            .map(|i| ((i * 7 % 11) as f64 - 5.0) * 0.31)
            .collect();
        let logits = Tensor::from_vec(&[3, 5], data.clone()).unwrap();
        let (_, grad) = softmax_cross_entropy(&logits, &labels).unwrap();
        let h = 1e-5;
        for i in 0..15 {
            let mut plus = data.clone();
            plus[i] += h;
            let mut minus = data.clone();
            minus[i] -= h;
            let lp = softmax_cross_entropy(&Tensor::from_vec(&[3, 5], plus).unwrap(), &labels)
                .unwrap()
                .0;
            let lm = softmax_cross_entropy(&Tensor::from_vec(&[3, 5], minus).unwrap(), &labels)
                .unwrap()
                .0;
            let numeric = (lp - lm) / (2.0 * h);
            let analytic = grad.data()[i];
            let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-8);
            assert!(rel < 1e-5, "logit {i}: {analytic} vs {numeric}");
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let logits = Tensor::from_vec(
            &[2, 5],
            vec![1.0f32, -2.0, 3.0, 0.5, 9.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        )
        .unwrap();
        let p = softmax(&logits);
        for row in p.data().chunks(5) {
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        }
    }
}
