use crate::error::{Error, Result};
use crate::nn::{Real, Tensor};

/// Row-wise softmax of `[batch, classes]` logits, shifted by the row maximum.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, c) = logits.dims2()?;
    let mut out = logits.clone();
    for row in out.data_mut().chunks_exact_mut(c) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(out)
}

/// Mean categorical cross-entropy and its gradient `(softmax - onehot) / batch`.
pub fn softmax_cross_entropy<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    let (n, c) = logits.dims2()?;
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for a batch of {n}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::Label {
            label: bad,
            num_classes: c,
        });
    }
    let mut grad = logits.clone();
    let batch = T::from_usize_lossy(n);
    let mut loss = T::zero();
    for (row, &label) in grad.data_mut().chunks_exact_mut(c).zip(labels) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let log_sum = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        loss += log_sum - (row[label] - max);
        for v in row.iter_mut() {
            *v = (*v - max - log_sum).exp() / batch;
        }
        row[label] -= T::one() / batch;
    }
    Ok((loss / batch, grad))
}
