use super::{NeuralError, Rng, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted dropout. Returns the output and the multiplicative mask applied
/// (`0` or `1/(1-p)` per element; all ones in eval mode), which is also the
/// backward map.
pub fn dropout<T: Scalar>(
    input: &Tensor<T>,
    p: f64,
    mode: Mode,
    rng: &mut Rng,
) -> Result<(Tensor<T>, Vec<T>), NeuralError> {
    if !(0.0..1.0).contains(&p) {
        return Err(NeuralError::InvalidP(p));
    }
    if mode == Mode::Eval || p == 0.0 {
        return Ok((input.clone(), vec![T::one(); input.len()]));
    }
    let keep = T::from_f64_lossy(1.0 / (1.0 - p));
    let mask: Vec<T> = (0..input.len())
        .map(|_| if rng.bernoulli(p) { T::zero() } else { keep })
        .collect();
    let mut out = input.clone();
    for (v, &m) in out.data_mut().iter_mut().zip(&mask) {
        *v *= m;
    }
    Ok((out, mask))
}

pub fn dropout_backward<T: Scalar>(grad_out: &Tensor<T>, mask: &[T]) -> Tensor<T> {
    let mut g = grad_out.clone();
    for (v, &m) in g.data_mut().iter_mut().zip(mask) {
        *v *= m;
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> Tensor<f64> {
        Tensor::from_vec(&[n], (0..n).map(|i| i as f64 + 1.0).collect()).unwrap()
    }

    #[test]
    fn zero_p_is_identity() {
        let x = ramp(50);
        let mut rng = Rng::seed(0);
        for mode in [Mode::Train, Mode::Eval] {
            assert_eq!(dropout(&x, 0.0, mode, &mut rng).unwrap().0, x);
        }
    }

    #[test]
    fn eval_mode_is_identity() {
        let x = ramp(50);
        let mut rng = Rng::seed(0);
        assert_eq!(dropout(&x, 0.5, Mode::Eval, &mut rng).unwrap().0, x);
    }

    #[test]
    fn p_one_rejected() {
        let mut rng = Rng::seed(0);
        assert!(matches!(
            dropout(&ramp(3), 1.0, Mode::Train, &mut rng),
            Err(NeuralError::InvalidP(_))
        ));
    }

    #[test]
    fn half_dropout_zero_fraction_and_scaling() {
        let n = 100_000;
        let x = Tensor::<f64>::filled(&[n], 1.0);
        let mut rng = Rng::seed(42);
        let (y, _) = dropout(&x, 0.5, Mode::Train, &mut rng).unwrap();
        let zeros = y.data().iter().filter(|&&v| v == 0.0).count();
        let frac = zeros as f64 / n as f64;
        // σ of the fraction is 0.5/sqrt(n) ≈ 0.0016; 0.01 is > 6σ
        assert!((frac - 0.5).abs() < 0.01, "zero fraction {frac}");
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }
}
