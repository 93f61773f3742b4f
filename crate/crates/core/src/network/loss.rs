//! Losses and the top-level error signal `dE/dx^(L+1)`.

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Mean softmax cross-entropy over the batch.
    SoftmaxCrossEntropy,
    /// No loss; the top gradient is a fresh standard Gaussian matrix.
    InjectedGaussian,
}

/// What a loss needs beyond the network outputs.
pub enum Target<'a, R: Rng + ?Sized> {
    Labels(&'a [usize]),
    Noise(&'a mut R),
}

/// `(E, dE/d outputs)`; `E` is `None` for [`LossKind::InjectedGaussian`].
pub fn loss_and_top_gradient<R: Rng + ?Sized>(
    kind: LossKind,
    outputs: &Array2<f64>,
    target: Target<'_, R>,
) -> Result<(Option<f64>, Array2<f64>)> {
    match (kind, target) {
        (LossKind::SoftmaxCrossEntropy, Target::Labels(labels)) => {
            let (loss, grad) = softmax_cross_entropy(outputs, labels)?;
            Ok((Some(loss), grad))
        }
        (LossKind::InjectedGaussian, Target::Noise(rng)) => Ok((
            None,
            injected_gaussian(outputs.nrows(), outputs.ncols(), rng),
        )),
        (LossKind::SoftmaxCrossEntropy, _) => Err(Error::invalid("cross-entropy needs labels")),
        (LossKind::InjectedGaussian, _) => {
            Err(Error::invalid("injected gradient needs a random stream"))
        }
    }
}

/// Mean cross-entropy of `softmax(logits)` against `labels`, and its gradient.
pub fn softmax_cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    if labels.len() != logits.nrows() {
        return Err(Error::DimensionMismatch {
            what: "labels",
            expected: logits.nrows(),
            got: labels.len(),
        });
    }
    let classes = logits.ncols();
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            classes,
        });
    }
    let n = logits.nrows() as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut total = 0.0;
    for ((row, mut g), &label) in logits
        .axis_iter(Axis(0))
        .zip(grad.axis_iter_mut(Axis(0)))
        .zip(labels)
    {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut sum = 0.0;
        for (gi, &z) in g.iter_mut().zip(row.iter()) {
            *gi = (z - max).exp();
            sum += *gi;
        }
        total += sum.ln() + max - row[label];
        g.mapv_inplace(|p| p / sum / n);
        g[label] -= 1.0 / n;
    }
    Ok((total / n, grad))
}

pub fn injected_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Index of the largest logit in each row.
pub fn argmax_rows(logits: &Array2<f64>) -> Vec<usize> {
    logits
        .axis_iter(Axis(0))
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                    if v > bv {
                        (i, v)
                    } else {
                        (bi, bv)
                    }
                })
                .0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;
    use ndarray::array;

    #[test]
    fn uniform_logits_give_log_classes() {
        let logits = Array2::zeros((3, 10));
        let (loss, grad) = softmax_cross_entropy(&logits, &[0, 4, 9]).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
        assert!(grad.sum().abs() < 1e-15);
    }

    #[test]
    fn confident_correct_logits_give_zero_loss() {
        let logits = array![[500.0, 0.0, 0.0], [0.0, -200.0, 300.0]];
        let (loss, _) = softmax_cross_entropy(&logits, &[0, 2]).unwrap();
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let logits = array![[0.3, -1.2, 2.0], [1.1, 0.4, -0.7]];
        let labels = [2, 0];
        let (_, grad) = softmax_cross_entropy(&logits, &labels).unwrap();
        let eps = 1e-6;
        for i in 0..2 {
            for j in 0..3 {
                let mut p = logits.clone();
                p[[i, j]] += eps;
                let mut m = logits.clone();
                m[[i, j]] -= eps;
                let fd = (softmax_cross_entropy(&p, &labels).unwrap().0
                    - softmax_cross_entropy(&m, &labels).unwrap().0)
                    / (2.0 * eps);
                assert!((fd - grad[[i, j]]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn rejects_bad_labels() {
        let logits = Array2::zeros((2, 3));
        assert!(matches!(
            softmax_cross_entropy(&logits, &[0, 3]),
            Err(Error::LabelOutOfRange {
                label: 3,
                classes: 3
            })
        ));
        assert!(softmax_cross_entropy(&logits, &[0]).is_err());
    }

    #[test]
    fn injected_gradient_is_chi_square_concentrated() {
        let seeds = SeedStream::new(99);
        let outputs = Array2::zeros((1, 500));
        let mut inside = 0;
        for i in 0..1000 {
            let mut rng = seeds.derive("g_top", i);
            let (loss, g) = loss_and_top_gradient(
                LossKind::InjectedGaussian,
                &outputs,
                Target::Noise(&mut rng),
            )
            .unwrap();
            assert!(loss.is_none());
            let r = g.mapv(|v| v * v).sum() / 500.0;
            inside += usize::from((0.8..=1.2).contains(&r));
        }
        assert!(inside >= 990, "{inside}");
    }

    #[test]
    fn argmax() {
        assert_eq!(
            argmax_rows(&array![[0.1, 0.5, 0.2], [3.0, -1.0, 2.9]]),
            vec![1, 0]
        );
    }
}
