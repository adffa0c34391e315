use super::param::Parameterized;
use super::{Activation, NeuralError, Param, Rng, Scalar, Tensor};

/// Fully connected layer `y = act(x W^T + b)` over a batch of row vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    /// `[out, in]`
    pub weight: Param<T>,
    /// `[out]`
    pub bias: Param<T>,
    pub activation: Activation,
}

/// Values kept from the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct DenseCache<T> {
    input: Tensor<T>,
    output: Tensor<T>,
}

impl<T: Scalar> DenseCache<T> {
    pub fn output(&self) -> &Tensor<T> {
        &self.output
    }
}

impl<T: Scalar> Dense<T> {
    pub fn new(inputs: usize, outputs: usize, activation: Activation, rng: &mut Rng) -> Self {
        Self {
            weight: Param::xavier(&[outputs, inputs], inputs, outputs, rng),
            bias: Param::zeros(&[outputs]),
            activation,
        }
    }

    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            weight: Param::zeros(&[outputs, inputs]),
            bias: Param::zeros(&[outputs]),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    /// Accepts `[in]` (treated as a batch of one) or `[batch, in]`.
    pub fn forward(&self, input: &Tensor<T>) -> Result<(Tensor<T>, DenseCache<T>), NeuralError> {
        let (batch, input) = self.as_batch(input)?;
        let (n_in, n_out) = (self.inputs(), self.outputs());
        let mut out = vec![T::zero(); batch * n_out];
        for row in out.chunks_mut(n_out) {
            row.copy_from_slice(self.bias.value.data());
        }
        T::gemm(
            false,
            true,
            batch,
            n_out,
            n_in,
            T::one(),
            input.data(),
            self.weight.value.data(),
            T::one(),
            &mut out,
        );
        let act = self.activation;
        out.iter_mut().for_each(|v| *v = act.eval(*v));
        let output = Tensor::from_vec(&[batch, n_out], out)?;
        Ok((
            output.clone(),
            DenseCache {
                input,
                output,
            },
        ))
    }

    /// Accumulates parameter gradients; returns the gradient w.r.t. the input
    /// in `[batch, in]` layout.
    pub fn backward(
        &mut self,
        cache: &DenseCache<T>,
        grad_out: &Tensor<T>,
    ) -> Result<Tensor<T>, NeuralError> {
        let batch = cache.output.shape()[0];
        let (n_in, n_out) = (self.inputs(), self.outputs());
        if grad_out.len() != batch * n_out {
            return Err(NeuralError::ShapeMismatch {
                expected: vec![batch, n_out],
                found: grad_out.shape().to_vec(),
            });
        }
        let grad_out = grad_out.clone().reshape(&[batch, n_out])?;
        let delta = self.activation.backward(&cache.output, &grad_out);

        // dW += delta^T x
        T::gemm(
            true,
            false,
            n_out,
            n_in,
            batch,
            T::one(),
            delta.data(),
            cache.input.data(),
            T::one(),
            self.weight.grad.data_mut(),
        );
        let db = self.bias.grad.data_mut();
        for row in delta.data().chunks(n_out) {
            for (b, &d) in db.iter_mut().zip(row) {
                *b += d;
            }
        }
        // dx = delta W
        let mut dx = vec![T::zero(); batch * n_in];
        T::gemm(
            false,
            false,
            batch,
            n_in,
            n_out,
            T::one(),
            delta.data(),
            self.weight.value.data(),
            T::zero(),
            &mut dx,
        );
        Tensor::from_vec(&[batch, n_in], dx)
    }

    fn as_batch(&self, input: &Tensor<T>) -> Result<(usize, Tensor<T>), NeuralError> {
        let n_in = self.inputs();
        match input.shape() {
            [n] if *n == n_in => Ok((1, input.clone().reshape(&[1, n_in])?)),
            [b, n] if *n == n_in => Ok((*b, input.clone())),
            other => Err(NeuralError::ShapeMismatch {
                expected: vec![n_in],
                found: other.to_vec(),
            }),
        }
    }
}

impl<T: Scalar> Parameterized<T> for Dense<T> {
    fn params(&self) -> Vec<(String, &Param<T>)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        vec![
            ("weight".into(), &mut self.weight),
            ("bias".into(), &mut self.bias),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_tanh_give_zero_output() {
        let layer = Dense::<f64>::zeros(4, 3, Activation::Tanh);
        let x = Tensor::from_f64(&[2, 4], &[1.0, -2.0, 3.0, 0.5, 9.0, 8.0, -7.0, 6.0]).unwrap();
        let (y, _) = layer.forward(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_grad_with_unit_upstream_is_input_column_sums() {
        let mut rng = Rng::seed(3);
        let mut layer = Dense::<f64>::new(3, 2, Activation::Identity, &mut rng);
        let x = Tensor::from_f64(&[2, 3], &[1.0, 2.0, 3.0, -1.0, 0.5, 4.0]).unwrap();
        let (_, cache) = layer.forward(&x).unwrap();
        layer.backward(&cache, &Tensor::filled(&[2, 2], 1.0)).unwrap();
        // dW[o][i] = sum_b x[b][i] for every output row
        let sums = [0.0, 2.5, 7.0];
        for o in 0..2 {
            for i in 0..3 {
                assert!((layer.weight.grad.data()[o * 3 + i] - sums[i]).abs() < 1e-12);
            }
        }
        assert_eq!(layer.bias.grad.data(), &[2.0, 2.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = Rng::seed(4);
        let mut layer = Dense::<f64>::new(3, 2, Activation::Tanh, &mut rng);
        let x = Tensor::from_f64(&[1, 3], &[0.3, -0.2, 0.9]).unwrap();
        let (_, cache) = layer.forward(&x).unwrap();
        let dx = layer.backward(&cache, &Tensor::zeros(&[1, 2])).unwrap();
        assert!(dx.data().iter().all(|&v| v == 0.0));
        assert!(layer.weight.grad.data().iter().all(|&v| v == 0.0));
        assert!(layer.bias.grad.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wrong_width_is_shape_mismatch() {
        let layer = Dense::<f32>::zeros(4, 3, Activation::Relu);
        let x = Tensor::<f32>::zeros(&[2, 5]);
        assert!(matches!(layer.forward(&x), Err(NeuralError::ShapeMismatch { .. })));
    }
}
