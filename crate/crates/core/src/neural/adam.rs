use super::param::Parameterized;
use super::{NeuralError, Param, Scalar};

/// Adam with bias-corrected first and second moments. Moments live in each
/// [`Param`]; the step counter lives here.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
        }
    }

    /// Apply one update to every parameter of `module` from its accumulated
    /// gradients.
    pub fn step<T: Scalar, M: Parameterized<T> + ?Sized>(&mut self, module: &mut M) {
        self.t += 1;
        for (_, p) in module.params_mut() {
            self.update(p);
        }
    }

    /// Single-parameter update with an externally supplied gradient.
    pub fn step_param<T: Scalar>(
        &mut self,
        param: &mut Param<T>,
        grad: &[T],
    ) -> Result<(), NeuralError> {
        if grad.len() != param.len() {
            return Err(NeuralError::ShapeMismatch {
                expected: param.shape().to_vec(),
                found: vec![grad.len()],
            });
        }
        param.grad.data_mut().copy_from_slice(grad);
        self.t += 1;
        self.update(param);
        Ok(())
    }

    fn update<T: Scalar>(&self, p: &mut Param<T>) {
        let b1 = T::from_f64_lossy(self.beta1);
        let b2 = T::from_f64_lossy(self.beta2);
        let one = T::one();
        let c1 = T::from_f64_lossy(1.0 - self.beta1.powi(self.t as i32));
        let c2 = T::from_f64_lossy(1.0 - self.beta2.powi(self.t as i32));
        let lr = T::from_f64_lossy(self.lr);
        let eps = T::from_f64_lossy(self.eps);
        let Param { value, grad, m, v } = p;
        for (((w, &g), m), v) in value
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Tensor;

    fn scalar(v: f64) -> Param<f64> {
        Param::new(Tensor::vector(vec![v]))
    }

    #[test]
    fn zero_grad_leaves_params() {
        let mut p = scalar(0.75);
        let mut adam = Adam::new(1e-3);
        for _ in 0..10 {
            adam.step_param(&mut p, &[0.0]).unwrap();
        }
        assert_eq!(p.value.data()[0], 0.75);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m̂ = 1, v̂ = 1  =>  Δ = lr · 1 / (1 + 1e-8)
        let mut p = scalar(0.0);
        let mut adam = Adam::new(0.01);
        adam.step_param(&mut p, &[1.0]).unwrap();
        let want = -0.01 / (1.0 + 1e-8);
        assert!((p.value.data()[0] - want).abs() < 1e-15);
    }

    #[test]
    fn constant_grad_step_tends_to_lr_sign() {
        let mut p = scalar(0.0);
        let mut adam = Adam::new(0.001);
        let mut prev = 0.0;
        let mut last_step = 0.0;
        for _ in 0..5000 {
            adam.step_param(&mut p, &[-3.0]).unwrap();
            last_step = p.value.data()[0] - prev;
            prev = p.value.data()[0];
        }
        assert!((last_step - 0.001).abs() < 1e-6, "step {last_step}");
    }

    #[test]
    fn wrong_grad_length() {
        let mut p = scalar(0.0);
        assert!(Adam::new(0.1).step_param(&mut p, &[1.0, 2.0]).is_err());
    }
}
