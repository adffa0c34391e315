use super::param::Parameterized;
use super::{NeuralError, Param, Rng, Scalar, Tensor};

/// 2-D convolution over a single `[channels, height, width]` sample,
/// computed as an im2col matrix product. No activation; compose with
/// [`Activation`](super::Activation).
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    /// `[out_channels, in_channels, k, k]`
    pub weight: Param<T>,
    /// `[out_channels]`
    pub bias: Param<T>,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone)]
pub struct ConvCache<T> {
    input_shape: [usize; 3],
    columns: Vec<T>,
    out_hw: (usize, usize),
}

impl<T: Scalar> Conv2d<T> {
    /// `padding = kernel / 2` gives "same" padding for odd kernels at stride 1.
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut Rng,
    ) -> Self {
        let k2 = kernel * kernel;
        Self {
            weight: Param::xavier(
                &[out_channels, in_channels, kernel, kernel],
                in_channels * k2,
                out_channels * k2,
                rng,
            ),
            bias: Param::zeros(&[out_channels]),
            stride: stride.max(1),
            padding,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn output_size(&self, height: usize, width: usize) -> (usize, usize) {
        let k = self.kernel();
        let oh = (height + 2 * self.padding).saturating_sub(k) / self.stride + 1;
        let ow = (width + 2 * self.padding).saturating_sub(k) / self.stride + 1;
        (oh, ow)
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<(Tensor<T>, ConvCache<T>), NeuralError> {
        let [c, h, w] = match input.shape() {
            [c, h, w] if *c == self.in_channels() => [*c, *h, *w],
            other => {
                return Err(NeuralError::ShapeMismatch {
                    expected: vec![self.in_channels(), 0, 0],
                    found: other.to_vec(),
                })
            }
        };
        let k = self.kernel();
        if h + 2 * self.padding < k || w + 2 * self.padding < k {
            return Err(NeuralError::ShapeMismatch {
                expected: vec![c, k, k],
                found: input.shape().to_vec(),
            });
        }
        let (oh, ow) = self.output_size(h, w);
        let positions = oh * ow;
        let rows = c * k * k;
        let columns = self.im2col(input.data(), [c, h, w], oh, ow);

        let oc = self.out_channels();
        let mut out = vec![T::zero(); oc * positions];
        for (o, chunk) in out.chunks_mut(positions).enumerate() {
            let b = self.bias.value.data()[o];
            chunk.iter_mut().for_each(|v| *v = b);
        }
        T::gemm(
            false,
            false,
            oc,
            positions,
            rows,
            T::one(),
            self.weight.value.data(),
            &columns,
            T::one(),
            &mut out,
        );
        Ok((
            Tensor::from_vec(&[oc, oh, ow], out)?,
            ConvCache {
                input_shape: [c, h, w],
                columns,
                out_hw: (oh, ow),
            },
        ))
    }

    pub fn backward(
        &mut self,
        cache: &ConvCache<T>,
        grad_out: &Tensor<T>,
    ) -> Result<Tensor<T>, NeuralError> {
        let (oh, ow) = cache.out_hw;
        let oc = self.out_channels();
        grad_out.ensure_shape(&[oc, oh, ow])?;
        let [c, h, w] = cache.input_shape;
        let k = self.kernel();
        let positions = oh * ow;
        let rows = c * k * k;

        // dW += G cols^T
        T::gemm(
            false,
            true,
            oc,
            rows,
            positions,
            T::one(),
            grad_out.data(),
            &cache.columns,
            T::one(),
            self.weight.grad.data_mut(),
        );
        for (b, chunk) in self
            .bias
            .grad
            .data_mut()
            .iter_mut()
            .zip(grad_out.data().chunks(positions))
        {
            *b += chunk.iter().copied().sum::<T>();
        }
        // dcols = W^T G
        let mut dcols = vec![T::zero(); rows * positions];
        T::gemm(
            true,
            false,
            rows,
            positions,
            oc,
            T::one(),
            self.weight.value.data(),
            grad_out.data(),
            T::zero(),
            &mut dcols,
        );
        let dx = self.col2im(&dcols, [c, h, w], oh, ow);
        Tensor::from_vec(&[c, h, w], dx)
    }

    fn im2col(&self, x: &[T], [c, h, w]: [usize; 3], oh: usize, ow: usize) -> Vec<T> {
        let k = self.kernel();
        let positions = oh * ow;
        let mut cols = vec![T::zero(); c * k * k * positions];
        for ch in 0..c {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (ch * k + ki) * k + kj;
                    let dst = &mut cols[row * positions..(row + 1) * positions];
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ki) as isize - self.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src_row = &x[(ch * h + iy as usize) * w..(ch * h + iy as usize + 1) * w];
                        for ox in 0..ow {
                            let ix = (ox * self.stride + kj) as isize - self.padding as isize;
                            if ix >= 0 && ix < w as isize {
                                dst[oy * ow + ox] = src_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[T], [c, h, w]: [usize; 3], oh: usize, ow: usize) -> Vec<T> {
        let k = self.kernel();
        let positions = oh * ow;
        let mut x = vec![T::zero(); c * h * w];
        for ch in 0..c {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (ch * k + ki) * k + kj;
                    let src = &cols[row * positions..(row + 1) * positions];
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ki) as isize - self.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let base = (ch * h + iy as usize) * w;
                        for ox in 0..ow {
                            let ix = (ox * self.stride + kj) as isize - self.padding as isize;
                            if ix >= 0 && ix < w as isize {
                                x[base + ix as usize] += src[oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
        x
    }
}

impl<T: Scalar> Parameterized<T> for Conv2d<T> {
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
