use super::param::Parameterized;
use super::{NeuralError, Param, Rng, Scalar, Tensor};

/// Token lookup table `[vocab, dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T> {
    pub table: Param<T>,
}

impl<T: Scalar> Embedding<T> {
    pub fn new(vocab: usize, dim: usize, rng: &mut Rng) -> Self {
        Self {
            table: Param::uniform(&[vocab, dim], 0.1, rng),
        }
    }

    pub fn vocab(&self) -> usize {
        self.table.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.table.shape()[1]
    }

    /// Rows for `tokens`, `[len, dim]`.
    pub fn forward(&self, tokens: &[usize]) -> Result<Tensor<T>, NeuralError> {
        let dim = self.dim();
        let mut out = Vec::with_capacity(tokens.len() * dim);
        for &t in tokens {
            if t >= self.vocab() {
                return Err(NeuralError::ShapeMismatch {
                    expected: vec![self.vocab()],
                    found: vec![t],
                });
            }
            out.extend_from_slice(self.table.value.row(t));
        }
        Tensor::from_vec(&[tokens.len(), dim], out)
    }

    pub fn backward(&mut self, tokens: &[usize], grad_out: &Tensor<T>) -> Result<(), NeuralError> {
        let dim = self.dim();
        grad_out.ensure_shape(&[tokens.len(), dim])?;
        let grad = self.table.grad.data_mut();
        for (row, &t) in tokens.iter().enumerate() {
            for (g, &d) in grad[t * dim..(t + 1) * dim]
                .iter_mut()
                .zip(grad_out.row(row))
            {
                *g += d;
            }
        }
        Ok(())
    }
}

impl<T: Scalar> Parameterized<T> for Embedding<T> {
    fn params(&self) -> Vec<(String, &Param<T>)> {
        vec![("table".into(), &self.table)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        vec![("table".into(), &mut self.table)]
    }
}
