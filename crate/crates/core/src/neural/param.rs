use super::{Rng, Scalar, Tensor};

/// A trainable tensor with its accumulated gradient and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub m: Tensor<T>,
    pub v: Tensor<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let shape = value.shape().to_vec();
        Self {
            value,
            grad: Tensor::zeros(&shape),
            m: Tensor::zeros(&shape),
            v: Tensor::zeros(&shape),
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::new(Tensor::zeros(shape))
    }

    /// Xavier/Glorot uniform in `[-a, a]`, `a = sqrt(6 / (fan_in + fan_out))`.
    pub fn xavier(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Self::uniform(shape, bound, rng)
    }

    pub fn uniform(shape: &[usize], bound: f64, rng: &mut Rng) -> Self {
        let len: usize = shape.iter().product();
        let data = (0..len)
            .map(|_| T::from_f64_lossy(rng.uniform(-bound, bound)))
            .collect();
        Self::new(Tensor::from_vec(shape, data).expect("length matches shape"))
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn cast<U: Scalar>(&self) -> Param<U> {
        Param {
            value: self.value.cast(),
            grad: self.grad.cast(),
            m: self.m.cast(),
            v: self.v.cast(),
        }
    }
}

/// Anything that owns named parameters: layers and composed networks.
///
/// Names are stable and ordered; checkpoints, Adam and target-network
/// averaging all walk parameters in this order.
pub trait Parameterized<T: Scalar> {
    fn params(&self) -> Vec<(String, &Param<T>)>;
    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)>;

    fn param_count(&self) -> usize {
        self.params().iter().map(|(_, p)| p.len()).sum()
    }

    fn zero_grad(&mut self) {
        for (_, p) in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Multiply every accumulated gradient by `factor` (batch averaging).
    fn scale_grads(&mut self, factor: T) {
        for (_, p) in self.params_mut() {
            p.grad.scale(factor);
        }
    }
}

/// Prefix each parameter name of a sub-module.
pub fn prefixed<'a, T: Scalar>(
    prefix: &str,
    params: Vec<(String, &'a Param<T>)>,
) -> impl Iterator<Item = (String, &'a Param<T>)> + use<'a, T> {
    let prefix = prefix.to_string();
    params
        .into_iter()
        .map(move |(n, p)| (format!("{prefix}.{n}"), p))
}

pub fn prefixed_mut<'a, T: Scalar>(
    prefix: &str,
    params: Vec<(String, &'a mut Param<T>)>,
) -> impl Iterator<Item = (String, &'a mut Param<T>)> + use<'a, T> {
    let prefix = prefix.to_string();
    params
        .into_iter()
        .map(move |(n, p)| (format!("{prefix}.{n}"), p))
}
