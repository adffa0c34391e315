//! Softmax, cross-entropy and mean squared error.

use super::Scalar;

/// Max-subtracted softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| a.max(b));
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-ln p[target]`, with the probability floored at the smallest positive
/// normal value so a fully confident wrong answer stays finite.
pub fn cross_entropy<T: Scalar>(probs: &[T], target: usize) -> T {
    -probs[target].max(T::min_positive_value()).ln()
}

/// Gradient of `cross_entropy(softmax(z), target)` w.r.t. the logits `z`.
pub fn softmax_cross_entropy_grad<T: Scalar>(probs: &[T], target: usize) -> Vec<T> {
    let mut g = probs.to_vec();
    g[target] -= T::one();
    g
}

/// `mean((pred - target)^2)` and its gradient w.r.t. `pred`.
pub fn mse<T: Scalar>(pred: &[T], target: &[T]) -> (T, Vec<T>) {
    let n = T::from_usize(pred.len()).expect("len fits");
    let two = T::one() + T::one();
    let mut loss = T::zero();
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let d = p - t;
            loss += d * d;
            two * d / n
        })
        .collect();
    (loss / n, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_uniform_probs() {
        let p = softmax(&[0.3f64; 7]);
        for v in p {
            assert!((v - 1.0 / 7.0).abs() < 1e-15);
        }
    }

    #[test]
    fn shift_invariance() {
        let z = [2.0f64, -1.0, 0.5, 3.25];
        let shifted: Vec<f64> = z.iter().map(|v| v + 123.456).collect();
        for (a, b) in softmax(&z).iter().zip(softmax(&shifted)) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn known_values() {
        // exp(2), exp(1), exp(0.1) normalized, evaluated with mpmath at 30 digits:
        // 0.6590011388..., 0.2424329707..., 0.0985658904...
        let p = softmax(&[2.0f64, 1.0, 0.1]);
        let want = [0.659_001_138_9, 0.242_432_970_7, 0.098_565_890_4];
        for (a, b) in p.iter().zip(want) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        let p32 = softmax(&[2.0f32, 1.0, 0.1]);
        assert!((p32.iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn huge_logits_stay_finite() {
        let p = softmax(&[1e30f32, -1e30, 0.0]);
        assert!(p.iter().all(|v| v.is_finite()));
        assert_eq!(p[0], 1.0);
        assert!(cross_entropy(&p, 1).is_finite());
    }

    #[test]
    fn cross_entropy_of_certain_answer_is_zero() {
        assert_eq!(cross_entropy(&[0.0f64, 1.0], 1), 0.0);
    }
}
