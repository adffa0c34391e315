use super::activation::sigmoid;
use super::param::Parameterized;
use super::{NeuralError, Param, Rng, Scalar, Tensor};

/// Long short-term memory cell with gate order (input, forget, cell, output).
///
/// ```text
/// z  = W_ih x + W_hh h + b
/// i  = σ(z_i)   f = σ(z_f)   g = tanh(z_g)   o = σ(z_o)
/// c' = f ⊙ c + i ⊙ g
/// h' = o ⊙ tanh(c')
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell<T> {
    /// `[4H, in]`
    pub w_ih: Param<T>,
    /// `[4H, H]`
    pub w_hh: Param<T>,
    /// `[4H]`
    pub bias: Param<T>,
}

#[derive(Debug, Clone)]
pub struct LstmStepCache<T> {
    x: Vec<T>,
    h_prev: Vec<T>,
    c_prev: Vec<T>,
    /// Activated gates `[i, f, g, o]`, each of length H.
    gates: Vec<T>,
    tanh_c: Vec<T>,
}

impl<T: Scalar> LstmCell<T> {
    /// Weights uniform in `±1/sqrt(H)`, zero biases except the forget gate at +1.
    pub fn new(inputs: usize, hidden: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut bias = Param::zeros(&[4 * hidden]);
        for b in &mut bias.value.data_mut()[hidden..2 * hidden] {
            *b = T::one();
        }
        Self {
            w_ih: Param::uniform(&[4 * hidden, inputs], bound, rng),
            w_hh: Param::uniform(&[4 * hidden, hidden], bound, rng),
            bias,
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.shape()[1]
    }

    pub fn inputs(&self) -> usize {
        self.w_ih.shape()[1]
    }

    /// One recurrence step; returns `(h', c')`.
    pub fn step(
        &self,
        x: &[T],
        h: &[T],
        c: &[T],
    ) -> Result<(Vec<T>, Vec<T>, LstmStepCache<T>), NeuralError> {
        let hd = self.hidden();
        if x.len() != self.inputs() || h.len() != hd || c.len() != hd {
            return Err(NeuralError::ShapeMismatch {
                expected: vec![self.inputs(), hd, hd],
                found: vec![x.len(), h.len(), c.len()],
            });
        }
        let mut z = self.bias.value.data().to_vec();
        T::gemm(false, false, 4 * hd, 1, self.inputs(), T::one(), self.w_ih.value.data(), x, T::one(), &mut z);
        T::gemm(false, false, 4 * hd, 1, hd, T::one(), self.w_hh.value.data(), h, T::one(), &mut z);

        let mut gates = z;
        for (idx, v) in gates.iter_mut().enumerate() {
            *v = if (2 * hd..3 * hd).contains(&idx) {
                v.tanh()
            } else {
                sigmoid(*v)
            };
        }
        let (i, rest) = gates.split_at(hd);
        let (f, rest) = rest.split_at(hd);
        let (g, o) = rest.split_at(hd);

        let c_new: Vec<T> = (0..hd).map(|j| f[j] * c[j] + i[j] * g[j]).collect();
        let tanh_c: Vec<T> = c_new.iter().map(|v| v.tanh()).collect();
        let h_new: Vec<T> = (0..hd).map(|j| o[j] * tanh_c[j]).collect();
        let cache = LstmStepCache {
            x: x.to_vec(),
            h_prev: h.to_vec(),
            c_prev: c.to_vec(),
            gates,
            tanh_c,
        };
        Ok((h_new, c_new, cache))
    }

    /// Backward through one step; accumulates parameter gradients and
    /// returns `(dx, dh_prev, dc_prev)`.
    pub fn backward_step(
        &mut self,
        cache: &LstmStepCache<T>,
        dh: &[T],
        dc: &[T],
    ) -> Result<(Vec<T>, Vec<T>, Vec<T>), NeuralError> {
        let hd = self.hidden();
        if dh.len() != hd || dc.len() != hd {
            return Err(NeuralError::ShapeMismatch {
                expected: vec![hd, hd],
                found: vec![dh.len(), dc.len()],
            });
        }
        let (i, rest) = cache.gates.split_at(hd);
        let (f, rest) = rest.split_at(hd);
        let (g, o) = rest.split_at(hd);
        let one = T::one();

        let mut dz = vec![T::zero(); 4 * hd];
        let mut dc_prev = vec![T::zero(); hd];
        for j in 0..hd {
            let tc = cache.tanh_c[j];
            let d_o = dh[j] * tc;
            let d_c = dc[j] + dh[j] * o[j] * (one - tc * tc);
            let d_i = d_c * g[j];
            let d_g = d_c * i[j];
            let d_f = d_c * cache.c_prev[j];
            dc_prev[j] = d_c * f[j];
            dz[j] = d_i * i[j] * (one - i[j]);
            dz[hd + j] = d_f * f[j] * (one - f[j]);
            dz[2 * hd + j] = d_g * (one - g[j] * g[j]);
            dz[3 * hd + j] = d_o * o[j] * (one - o[j]);
        }

        let n_in = self.inputs();
        T::gemm(false, false, 4 * hd, n_in, 1, one, &dz, &cache.x, one, self.w_ih.grad.data_mut());
        T::gemm(false, false, 4 * hd, hd, 1, one, &dz, &cache.h_prev, one, self.w_hh.grad.data_mut());
        for (b, &d) in self.bias.grad.data_mut().iter_mut().zip(&dz) {
            *b += d;
        }
        let mut dx = vec![T::zero(); n_in];
        T::gemm(true, false, n_in, 1, 4 * hd, one, self.w_ih.value.data(), &dz, T::zero(), &mut dx);
        let mut dh_prev = vec![T::zero(); hd];
        T::gemm(true, false, hd, 1, 4 * hd, one, self.w_hh.value.data(), &dz, T::zero(), &mut dh_prev);
        Ok((dx, dh_prev, dc_prev))
    }
}

impl<T: Scalar> Parameterized<T> for LstmCell<T> {
    fn params(&self) -> Vec<(String, &Param<T>)> {
        vec![
            ("w_ih".into(), &self.w_ih),
            ("w_hh".into(), &self.w_hh),
            ("bias".into(), &self.bias),
        ]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        vec![
            ("w_ih".into(), &mut self.w_ih),
            ("w_hh".into(), &mut self.w_hh),
            ("bias".into(), &mut self.bias),
        ]
    }
}

/// An [`LstmCell`] unrolled over a `[steps, in]` sequence from zero state.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm<T> {
    pub cell: LstmCell<T>,
}

#[derive(Debug, Clone)]
pub struct LstmSequenceCache<T> {
    steps: Vec<LstmStepCache<T>>,
}

/// Outputs of an unrolled sequence.
#[derive(Debug, Clone)]
pub struct LstmOutput<T> {
    /// Hidden state after every step, `[steps, H]`.
    pub hidden: Tensor<T>,
    pub final_h: Vec<T>,
    pub final_c: Vec<T>,
}

impl<T: Scalar> Lstm<T> {
    pub fn new(inputs: usize, hidden: usize, rng: &mut Rng) -> Self {
        Self {
            cell: LstmCell::new(inputs, hidden, rng),
        }
    }

    pub fn forward(
        &self,
        xs: &Tensor<T>,
    ) -> Result<(LstmOutput<T>, LstmSequenceCache<T>), NeuralError> {
        let n_in = self.cell.inputs();
        let hd = self.cell.hidden();
        let steps = match xs.shape() {
            [l, n] if *n == n_in && *l > 0 => *l,
            other => {
                return Err(NeuralError::ShapeMismatch {
                    expected: vec![1, n_in],
                    found: other.to_vec(),
                })
            }
        };
        let mut h = vec![T::zero(); hd];
        let mut c = vec![T::zero(); hd];
        let mut hidden = Vec::with_capacity(steps * hd);
        let mut caches = Vec::with_capacity(steps);
        for t in 0..steps {
            let (h_new, c_new, cache) = self.cell.step(xs.row(t), &h, &c)?;
            hidden.extend_from_slice(&h_new);
            caches.push(cache);
            h = h_new;
            c = c_new;
        }
        Ok((
            LstmOutput {
                hidden: Tensor::from_vec(&[steps, hd], hidden)?,
                final_h: h,
                final_c: c,
            },
            LstmSequenceCache { steps: caches },
        ))
    }

    /// `d_hidden` is the gradient w.r.t. every per-step hidden output
    /// (`[steps, H]`, may be all zero); `d_final_c` w.r.t. the last cell state.
    /// The gradient w.r.t. the final hidden state belongs in the last row of
    /// `d_hidden`. Returns the input gradient `[steps, in]`.
    pub fn backward(
        &mut self,
        cache: &LstmSequenceCache<T>,
        d_hidden: &Tensor<T>,
        d_final_c: &[T],
    ) -> Result<Tensor<T>, NeuralError> {
        let hd = self.cell.hidden();
        let steps = cache.steps.len();
        d_hidden.ensure_shape(&[steps, hd])?;
        let n_in = self.cell.inputs();
        let mut dxs = vec![T::zero(); steps * n_in];
        let mut dh_next = vec![T::zero(); hd];
        let mut dc_next = d_final_c.to_vec();
        for t in (0..steps).rev() {
            let dh: Vec<T> = d_hidden
                .row(t)
                .iter()
                .zip(&dh_next)
                .map(|(&a, &b)| a + b)
                .collect();
            let (dx, dh_prev, dc_prev) = self.cell.backward_step(&cache.steps[t], &dh, &dc_next)?;
            dxs[t * n_in..(t + 1) * n_in].copy_from_slice(&dx);
            dh_next = dh_prev;
            dc_next = dc_prev;
        }
        Tensor::from_vec(&[steps, n_in], dxs)
    }
}

impl<T: Scalar> Parameterized<T> for Lstm<T> {
    fn params(&self) -> Vec<(String, &Param<T>)> {
        self.cell.params()
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        self.cell.params_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_gates_keep_hidden_near_zero() {
        let mut rng = Rng::seed(11);
        let mut cell = LstmCell::<f64>::new(3, 4, &mut rng);
        // Drive input, forget and output gate pre-activations to -40.
        for (idx, b) in cell.bias.value.data_mut().iter_mut().enumerate() {
            if !(8..12).contains(&idx) {
                *b = -40.0;
            }
        }
        let x = [0.9, -0.7, 0.4];
        let h = [0.5, -0.5, 0.25, 0.1];
        let c = [2.0, -1.0, 3.0, 0.5];
        let (h_new, c_new, _) = cell.step(&x, &h, &c).unwrap();
        // σ(-40 ± small) ≈ 4e-18; hand evaluation: c' ≈ f c + i g ≈ 0, h' = o tanh(c') ≈ 0
        for j in 0..4 {
            assert!(h_new[j].abs() < 1e-15, "h[{j}] = {}", h_new[j]);
            assert!(c_new[j].abs() < 1e-15);
        }
    }

    #[test]
    fn forget_bias_initialized_to_one() {
        let mut rng = Rng::seed(1);
        let cell = LstmCell::<f32>::new(2, 3, &mut rng);
        let b = cell.bias.value.data();
        assert_eq!(&b[0..3], &[0.0; 3]);
        assert_eq!(&b[3..6], &[1.0; 3]);
        assert_eq!(&b[6..12], &[0.0; 6]);
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let mut rng = Rng::seed(1);
        let lstm = Lstm::<f32>::new(2, 3, &mut rng);
        let xs = Tensor::<f32>::zeros(&[0, 2]);
        assert!(lstm.forward(&xs).is_err());
    }
}
