//! Categorical cross-entropy, `-sum(y_i * ln(p_i))`.
//!
//! Predictions are rescaled to sum to one before the log, as the reference
//! toolkit does; this is a no-op for softmax outputs and makes the loss
//! well-defined for the two-unit sigmoid head of the binary classifier.
//! Probabilities are clamped to `[1e-12, 1]`.

use super::layer::Activation;
use super::network::OutputGrad;
use super::Real;

pub const PROB_CLAMP: f64 = 1e-12;

fn clamp<T: Real>(p: T) -> (T, bool) {
    let lo = T::from_f64(PROB_CLAMP);
    if p < lo {
        (lo, true)
    } else if p > T::one() {
        (T::one(), true)
    } else {
        (p, false)
    }
}

/// Loss of a single prediction against a (one-hot) target.
pub fn categorical_cross_entropy<T: Real>(predicted: &[T], target: &[T]) -> T {
    assert_eq!(predicted.len(), target.len());
    let sum: T = predicted.iter().cloned().sum();
    let sum = if sum > T::zero() { sum } else { T::one() };
    predicted
        .iter()
        .zip(target)
        .filter(|(_, &y)| y != T::zero())
        .map(|(&p, &y)| -y * clamp(p / sum).0.ln())
        .sum()
}

/// Mean loss over a batch and its gradient, ready for
/// [`Network::backward`](super::Network::backward).
///
/// With a softmax head the gradient is taken w.r.t. the logits directly,
/// `(p - y) / batch`.
pub fn batch_loss_and_grad<T: Real>(output: &[T], targets: &[T], classes: usize, head: Activation) -> (T, OutputGrad<T>) {
    assert_eq!(output.len(), targets.len());
    let batch = output.len() / classes;
    let inv_b = T::one() / T::from_f64(batch as f64);
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); output.len()];
    for ((p, y), g) in output.chunks(classes).zip(targets.chunks(classes)).zip(grad.chunks_mut(classes)) {
        loss += categorical_cross_entropy(p, y);
        if head == Activation::Softmax {
            for ((gi, &pi), &yi) in g.iter_mut().zip(p).zip(y) {
                *gi = (pi - yi) * inv_b;
            }
        } else {
            // L = -sum_i y_i ln(p_i / S)  =>  dL/dp_j = (-y_j/q_j + sum_unclamped y_i) / S
            let s: T = p.iter().cloned().sum();
            let s = if s > T::zero() { s } else { T::one() };
            let mut ysum = T::zero();
            for (gi, (&pi, &yi)) in g.iter_mut().zip(p.iter().zip(y)) {
                let (q, clamped) = clamp(pi / s);
                if !clamped && yi != T::zero() {
                    *gi = -yi / q;
                    ysum += yi;
                }
            }
            for gi in g.iter_mut() {
                *gi = (*gi + ysum) / s * inv_b;
            }
        }
    }
    let grad = if head == Activation::Softmax {
        OutputGrad::PreActivation(grad)
    } else {
        OutputGrad::Output(grad)
    };
    (loss * inv_b, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        assert_eq!(categorical_cross_entropy(&[1.0f64, 0.0], &[1.0, 0.0]), 0.0);
        assert!((categorical_cross_entropy(&[0.5f64, 0.5], &[1.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
        assert!((categorical_cross_entropy(&[0.9f64, 0.1], &[0.0, 1.0]) - (-(0.1f64).ln())).abs() < 1e-12);
    }

    #[test]
    fn uniform_prediction_costs_ln_c() {
        for c in [2usize, 5, 23] {
            let p = vec![1.0 / c as f64; c];
            let mut y = vec![0.0; c];
            y[c / 2] = 1.0;
            assert!((categorical_cross_entropy(&p, &y) - (c as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_probability_is_clamped() {
        let l = categorical_cross_entropy(&[1.0f64, 0.0], &[0.0, 1.0]);
        assert!((l - (-(1e-12f64).ln())).abs() < 1e-9);
    }

    #[test]
    fn sigmoid_head_gradient_matches_differences() {
        let p = [0.7f64, 0.4];
        let y = [0.0, 1.0];
        let (_, g) = batch_loss_and_grad(&p, &y, 2, Activation::Sigmoid);
        let OutputGrad::Output(g) = g else { panic!() };
        let h = 1e-6;
        for j in 0..2 {
            let mut a = p;
            let mut b = p;
            a[j] += h;
            b[j] -= h;
            let fd = (categorical_cross_entropy(&a, &y) - categorical_cross_entropy(&b, &y)) / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-8, "{fd} vs {}", g[j]);
        }
    }
}
