use super::{VqaConfig, VqaError};
use crate::neural::{
    dropout, dropout_backward, prefixed, prefixed_mut, softmax, Activation, ConvCache, Conv2d, Dense, DenseCache,
    Embedding, Lstm, LstmSequenceCache, Mode, NeuralError, Param, Parameterized, Rng, Scalar, Tensor,
};

/// Elementwise product of the image and question vectors.
pub fn fuse<T: Scalar>(image: &[T], question: &[T]) -> Result<Vec<T>, VqaError> {
    if image.len() != question.len() {
        return Err(NeuralError::ShapeMismatch {
            expected: vec![image.len()],
            found: vec![question.len()],
        }
        .into());
    }
    Ok(image.iter().zip(question).map(|(&a, &b)| a * b).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct VqaModel<T> {
    pub config: VqaConfig,
    pub convs: Vec<Conv2d<T>>,
    /// flattened conv output → E, ReLU
    pub image_fc: Dense<T>,
    /// E → F, tanh
    pub image_proj: Dense<T>,
    pub embedding: Embedding<T>,
    pub lstms: Vec<Lstm<T>>,
    /// final (h, c) of every layer → F, tanh
    pub question_proj: Dense<T>,
    pub classifier: Vec<Dense<T>>,
    /// → K logits
    pub output: Dense<T>,
}

struct ImageCache<T> {
    convs: Vec<(ConvCache<T>, Tensor<T>)>,
}

struct QuestionCache<T> {
    tokens: Vec<usize>,
    layers: Vec<LstmSequenceCache<T>>,
}

/// Everything the backward pass needs from one batch forward.
pub struct BatchCache<T> {
    images: Vec<ImageCache<T>>,
    image_fc: DenseCache<T>,
    image_proj: DenseCache<T>,
    questions: Vec<QuestionCache<T>>,
    question_proj: DenseCache<T>,
    classifier: Vec<(DenseCache<T>, Vec<T>)>,
    output: DenseCache<T>,
    /// `[B, K]` softmax outputs.
    pub probs: Tensor<T>,
}

impl<T: Scalar> VqaModel<T> {
    pub fn new(config: VqaConfig, rng: &mut Rng) -> Result<Self, VqaError> {
        config.validate()?;
        let mut convs = Vec::new();
        let mut c_in = config.channels;
        for &c in &config.conv_channels {
            convs.push(Conv2d::new(c_in, c, config.kernel, config.stride, config.padding, rng));
            c_in = c;
        }
        let flat: usize = config.conv_output().iter().product();
        let image_fc = Dense::new(flat, config.image_feature_dim, Activation::Relu, rng);
        let image_proj = Dense::new(config.image_feature_dim, config.fusion_dim, Activation::Tanh, rng);
        let embedding = Embedding::new(config.question_vocab, config.embed_dim, rng);
        let mut lstms = Vec::new();
        let mut n_in = config.embed_dim;
        for _ in 0..config.question_layers {
            lstms.push(Lstm::new(n_in, config.question_hidden, rng));
            n_in = config.question_hidden;
        }
        let question_proj = Dense::new(
            2 * config.question_layers * config.question_hidden,
            config.fusion_dim,
            Activation::Tanh,
            rng,
        );
        let mut classifier = Vec::new();
        let mut n_in = config.fusion_dim;
        for _ in 0..config.classifier_layers {
            classifier.push(Dense::new(n_in, config.classifier_hidden, Activation::Tanh, rng));
            n_in = config.classifier_hidden;
        }
        let output = Dense::new(n_in, config.answer_count, Activation::Identity, rng);
        Ok(Self {
            config,
            convs,
            image_fc,
            image_proj,
            embedding,
            lstms,
            question_proj,
            classifier,
            output,
        })
    }

    pub fn cast<U: Scalar>(&self) -> VqaModel<U> {
        let mut out = VqaModel::<U>::new(self.config.clone(), &mut Rng::seed(0)).expect("config already valid");
        for ((_, dst), (_, src)) in out.params_mut().into_iter().zip(self.params()) {
            *dst = src.cast();
        }
        out
    }

    fn image_shape(&self) -> [usize; 3] {
        [self.config.channels, self.config.height, self.config.width]
    }

    fn conv_forward(&self, image: &Tensor<T>) -> Result<(Vec<T>, ImageCache<T>), VqaError> {
        image.ensure_shape(&self.image_shape())?;
        let mut x = image.clone();
        let mut caches = Vec::with_capacity(self.convs.len());
        for conv in &self.convs {
            let (z, cache) = conv.forward(&x)?;
            let a = Activation::Relu.forward(&z);
            caches.push((cache, a.clone()));
            x = a;
        }
        Ok((x.into_data(), ImageCache { convs: caches }))
    }

    fn question_forward(&self, tokens: &[usize]) -> Result<(Vec<T>, QuestionCache<T>), VqaError> {
        if tokens.is_empty() {
            return Err(VqaError::EmptyQuestion);
        }
        let mut x = self.embedding.forward(tokens)?;
        let mut state = Vec::with_capacity(2 * self.lstms.len() * self.config.question_hidden);
        let mut layers = Vec::with_capacity(self.lstms.len());
        for lstm in &self.lstms {
            let (out, cache) = lstm.forward(&x)?;
            state.extend_from_slice(&out.final_h);
            state.extend_from_slice(&out.final_c);
            layers.push(cache);
            x = out.hidden;
        }
        Ok((
            state,
            QuestionCache {
                tokens: tokens.to_vec(),
                layers,
            },
        ))
    }

    /// Image vector `[F]` for a `[C, H, W]` image.
    pub fn encode_image(&self, image: &Tensor<T>) -> Result<Vec<T>, VqaError> {
        let (flat, _) = self.conv_forward(image)?;
        let e = self.image_fc.forward(&Tensor::vector(flat))?.0;
        Ok(self.image_proj.forward(&e)?.0.into_data())
    }

    /// Question vector `[F]` for encoded tokens.
    pub fn encode_question(&self, tokens: &[usize]) -> Result<Vec<T>, VqaError> {
        let (state, _) = self.question_forward(tokens)?;
        Ok(self.question_proj.forward(&Tensor::vector(state))?.0.into_data())
    }

    /// Answer distribution `[K]` for a fused vector.
    pub fn classify(&self, fused: &[T], mode: Mode, rng: &mut Rng) -> Result<Vec<T>, VqaError> {
        let mut x = Tensor::vector(fused.to_vec());
        for layer in &self.classifier {
            let (y, _) = layer.forward(&x)?;
            x = dropout(&y, self.config.dropout, mode, rng)?.0;
        }
        Ok(softmax(self.output.forward(&x)?.0.data()))
    }

    /// Eval-mode answer distribution for one image and question.
    pub fn predict(&self, image: &Tensor<T>, tokens: &[usize]) -> Result<Vec<T>, VqaError> {
        let (probs, _) = self.forward(&[image], &[tokens], Mode::Eval, &mut Rng::seed(0))?;
        Ok(probs.into_data())
    }

    /// Batched forward pass. Returns `[B, K]` probabilities.
    pub fn forward(
        &self,
        images: &[&Tensor<T>],
        questions: &[&[usize]],
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<(Tensor<T>, BatchCache<T>), VqaError> {
        let b = images.len();
        if questions.len() != b || b == 0 {
            return Err(NeuralError::ShapeMismatch {
                expected: vec![b],
                found: vec![questions.len()],
            }
            .into());
        }
        let mut flat = Vec::new();
        let mut image_caches = Vec::with_capacity(b);
        for img in images {
            let (f, c) = self.conv_forward(img)?;
            flat.extend_from_slice(&f);
            image_caches.push(c);
        }
        let flat = Tensor::from_vec(&[b, flat.len() / b], flat)?;
        let (e, image_fc) = self.image_fc.forward(&flat)?;
        let (v_i, image_proj) = self.image_proj.forward(&e)?;

        let mut states = Vec::new();
        let mut question_caches = Vec::with_capacity(b);
        for q in questions {
            let (s, c) = self.question_forward(q)?;
            states.extend_from_slice(&s);
            question_caches.push(c);
        }
        let states = Tensor::from_vec(&[b, states.len() / b], states)?;
        let (v_q, question_proj) = self.question_proj.forward(&states)?;

        let fused = fuse(v_i.data(), v_q.data())?;
        let mut x = Tensor::from_vec(&[b, self.config.fusion_dim], fused)?;
        let mut classifier = Vec::with_capacity(self.classifier.len());
        for layer in &self.classifier {
            let (y, cache) = layer.forward(&x)?;
            let (d, mask) = dropout(&y, self.config.dropout, mode, rng)?;
            classifier.push((cache, mask));
            x = d;
        }
        let (logits, output) = self.output.forward(&x)?;
        let k = self.config.answer_count;
        let mut probs = Vec::with_capacity(b * k);
        for row in logits.data().chunks(k) {
            probs.extend(softmax(row));
        }
        let probs = Tensor::from_vec(&[b, k], probs)?;
        Ok((
            probs.clone(),
            BatchCache {
                images: image_caches,
                image_fc,
                image_proj,
                questions: question_caches,
                question_proj,
                classifier,
                output,
                probs,
            },
        ))
    }

    /// Accumulate parameter gradients for `d_logits` (`[B, K]`).
    pub fn backward(&mut self, cache: &BatchCache<T>, d_logits: &Tensor<T>) -> Result<(), VqaError> {
        let b = cache.images.len();
        let f = self.config.fusion_dim;
        let mut g = self.output.backward(&cache.output, d_logits)?;
        for (layer, (dc, mask)) in self.classifier.iter_mut().zip(&cache.classifier).rev() {
            g = layer.backward(dc, &dropout_backward(&g, mask))?;
        }
        // product rule through the fusion
        let v_i = cache.image_proj.output().data();
        let v_q = cache.question_proj.output().data();
        let mut d_vi = Vec::with_capacity(b * f);
        let mut d_vq = Vec::with_capacity(b * f);
        for ((&gf, &a), &q) in g.data().iter().zip(v_i).zip(v_q) {
            d_vi.push(gf * q);
            d_vq.push(gf * a);
        }

        let d_e = self.image_proj.backward(&cache.image_proj, &Tensor::from_vec(&[b, f], d_vi)?)?;
        let d_flat = self.image_fc.backward(&cache.image_fc, &d_e)?;
        let [oc, oh, ow] = self.config.conv_output();
        for (i, img) in cache.images.iter().enumerate() {
            let row = d_flat.row(i).to_vec();
            let mut gx = Tensor::from_vec(&[oc, oh, ow], row)?;
            for (conv, (cc, out)) in self.convs.iter_mut().zip(&img.convs).rev() {
                let gz = Activation::Relu.backward(out, &gx);
                gx = conv.backward(cc, &gz)?;
            }
        }

        let d_state = self
            .question_proj
            .backward(&cache.question_proj, &Tensor::from_vec(&[b, f], d_vq)?)?;
        let hd = self.config.question_hidden;
        for (i, q) in cache.questions.iter().enumerate() {
            let ds = d_state.row(i);
            let steps = q.tokens.len();
            // gradient flowing into the current layer's per-step outputs
            let mut d_hidden = Tensor::zeros(&[steps, hd]);
            for (l, (lstm, lc)) in self.lstms.iter_mut().zip(&q.layers).enumerate().rev() {
                let dh = &ds[2 * l * hd..(2 * l + 1) * hd];
                let dc = &ds[(2 * l + 1) * hd..(2 * l + 2) * hd];
                for (g, &v) in d_hidden.data_mut()[(steps - 1) * hd..].iter_mut().zip(dh) {
                    *g += v;
                }
                d_hidden = lstm.backward(lc, &d_hidden, dc)?;
            }
            self.embedding.backward(&q.tokens, &d_hidden)?;
        }
        Ok(())
    }

    /// Reorder the answer classes: new class `j` is old class `perm[j]`.
    pub fn permute_answers(&mut self, perm: &[usize]) -> Result<(), VqaError> {
        let k = self.config.answer_count;
        let mut seen = vec![false; k];
        if perm.len() != k || perm.iter().any(|&p| p >= k || std::mem::replace(&mut seen[p], true)) {
            return Err(VqaError::InvalidConfig("not a permutation of the answer indices".into()));
        }
        let n_in = self.output.inputs();
        let permute = |p: &mut Param<T>, width: usize| {
            let old = p.value.data().to_vec();
            for (j, &src) in perm.iter().enumerate() {
                p.value.data_mut()[j * width..(j + 1) * width].copy_from_slice(&old[src * width..(src + 1) * width]);
            }
        };
        permute(&mut self.output.weight, n_in);
        permute(&mut self.output.bias, 1);
        Ok(())
    }
}

impl<T: Scalar> Parameterized<T> for VqaModel<T> {
    fn params(&self) -> Vec<(String, &Param<T>)> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            out.extend(prefixed(&format!("image.conv{i}"), c.params()));
        }
        out.extend(prefixed("image.fc", self.image_fc.params()));
        out.extend(prefixed("image.proj", self.image_proj.params()));
        out.extend(prefixed("question.embedding", self.embedding.params()));
        for (i, l) in self.lstms.iter().enumerate() {
            out.extend(prefixed(&format!("question.lstm{i}"), l.params()));
        }
        out.extend(prefixed("question.proj", self.question_proj.params()));
        for (i, d) in self.classifier.iter().enumerate() {
            out.extend(prefixed(&format!("classifier.l{i}"), d.params()));
        }
        out.extend(prefixed("classifier.out", self.output.params()));
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter_mut().enumerate() {
            out.extend(prefixed_mut(&format!("image.conv{i}"), c.params_mut()));
        }
        out.extend(prefixed_mut("image.fc", self.image_fc.params_mut()));
        out.extend(prefixed_mut("image.proj", self.image_proj.params_mut()));
        out.extend(prefixed_mut("question.embedding", self.embedding.params_mut()));
        for (i, l) in self.lstms.iter_mut().enumerate() {
            out.extend(prefixed_mut(&format!("question.lstm{i}"), l.params_mut()));
        }
        out.extend(prefixed_mut("question.proj", self.question_proj.params_mut()));
        for (i, d) in self.classifier.iter_mut().enumerate() {
            out.extend(prefixed_mut(&format!("classifier.l{i}"), d.params_mut()));
        }
        out.extend(prefixed_mut("classifier.out", self.output.params_mut()));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fuse_hand_product() {
        assert_eq!(fuse(&[1.0f64, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap(), vec![4.0, 10.0, 18.0]);
        assert!(fuse(&[1.0f32], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn desk_shapes() {
        let cfg = VqaConfig::desk(20, 100);
        assert_eq!(cfg.conv_output(), [32, 8, 8]);
        let m = VqaModel::<f32>::new(cfg, &mut Rng::seed(1)).unwrap();
        let img = Tensor::zeros(&[1, 64, 64]);
        assert_eq!(m.encode_image(&img).unwrap().len(), 128);
        assert_eq!(m.encode_question(&[2, 3, 4]).unwrap().len(), 128);
        let p = m.predict(&img, &[2, 3]).unwrap();
        assert_eq!(p.len(), 100);
        assert!((p.iter().sum::<f32>() - 1.0).abs() < 1e-5);
    }
}
