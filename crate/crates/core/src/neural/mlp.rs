use super::param::{prefixed, prefixed_mut, Parameterized};
use super::{Activation, Dense, DenseCache, NeuralError, Param, Rng, Scalar, Tensor};

/// A stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<Dense<T>>,
}

impl<T: Scalar> Mlp<T> {
    /// `sizes = [in, h1, ..., out]`; `hidden` between layers, `output` on the last.
    pub fn new(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut Rng) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output } else { hidden };
                Dense::new(sizes[i], sizes[i + 1], act, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    /// Forward without keeping caches.
    pub fn predict(&self, input: &Tensor<T>) -> Result<Tensor<T>, NeuralError> {
        Ok(self.forward(input)?.0)
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<(Tensor<T>, Vec<DenseCache<T>>), NeuralError> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            let (y, cache) = layer.forward(&x)?;
            caches.push(cache);
            x = y;
        }
        Ok((x, caches))
    }

    pub fn backward(
        &mut self,
        caches: &[DenseCache<T>],
        grad_out: &Tensor<T>,
    ) -> Result<Tensor<T>, NeuralError> {
        let mut g = grad_out.clone();
        for (layer, cache) in self.layers.iter_mut().zip(caches).rev() {
            g = layer.backward(cache, &g)?;
        }
        Ok(g)
    }
}

impl<T: Scalar> Parameterized<T> for Mlp<T> {
    fn params(&self) -> Vec<(String, &Param<T>)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| prefixed(&format!("l{i}"), l.params()))
            .collect()
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, l)| prefixed_mut(&format!("l{i}"), l.params_mut()))
            .collect()
    }
}
