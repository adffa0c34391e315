use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Vqa, VqaConfig, VqaError, VqaModel};
use crate::dataset::{AnswerVocab, Manifest, QARecord, QuestionVocab, Split};
use crate::neural::{cross_entropy, softmax_cross_entropy_grad, Adam, Mode, Parameterized, Rng, Tensor};
use crate::render::{read_frame, Frame};

/// A decoded corpus frame with its annotation.
#[derive(Debug, Clone)]
pub struct Sample {
    pub frame: Frame,
    pub record: QARecord,
}

/// Decode every frame of `split` from a corpus directory.
pub fn load_samples(root: &Path, manifest: &Manifest, split: Split) -> Result<Vec<Sample>, VqaError> {
    manifest
        .split(split)
        .into_iter()
        .map(|r| {
            let mut frame = read_frame(&root.join(&r.frame_path))?;
            frame.meta.action_category.get_or_insert(r.category);
            Ok(Sample {
                frame,
                record: r.clone(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 32,
            epochs: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean cross-entropy over the epoch's batches (dropout active).
    pub loss: f64,
    /// Fraction of training samples whose argmax was right during the epoch.
    pub accuracy: f64,
}

pub struct TrainOutput {
    pub vqa: Vqa,
    pub history: Vec<EpochStats>,
}

/// Minimize cross-entropy of the correct answer with Adam on shuffled
/// minibatches. `config`'s vocabulary sizes are taken from the vocabularies.
pub fn train_vqa(
    samples: &[Sample],
    questions: &QuestionVocab,
    answers: &AnswerVocab,
    config: &VqaConfig,
    tc: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutput, VqaError> {
    if samples.is_empty() {
        return Err(VqaError::NoSamples("train on"));
    }
    if tc.batch_size == 0 || !(tc.lr > 0.0) {
        return Err(VqaError::InvalidConfig("batch size and learning rate must be positive".into()));
    }
    let config = VqaConfig {
        question_vocab: questions.len(),
        answer_count: answers.len(),
        ..config.clone()
    };
    let mut vqa = Vqa {
        model: VqaModel::new(config, &mut Rng::stream(tc.seed, 0))?,
        questions: questions.clone(),
        answers: answers.clone(),
    };

    let mut images = Vec::with_capacity(samples.len());
    let mut tokens = Vec::with_capacity(samples.len());
    let mut targets = Vec::with_capacity(samples.len());
    for s in samples {
        targets.push(
            answers
                .index_of(&s.record.answer)
                .ok_or_else(|| VqaError::UnknownAnswer(s.record.answer.clone()))?,
        );
        tokens.push(vqa.encode_question(&s.record.question)?);
        images.push(vqa.image_tensor(&s.frame)?);
    }

    let mut shuffle_rng = Rng::stream(tc.seed, 1);
    let mut dropout_rng = Rng::stream(tc.seed, 2);
    let mut adam = Adam::new(tc.lr);
    let k = answers.len();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(tc.epochs);
    for epoch in 0..tc.epochs {
        shuffle_rng.shuffle(&mut order);
        let (mut loss_sum, mut batches, mut hits) = (0.0, 0, 0);
        for batch in order.chunks(tc.batch_size) {
            let imgs: Vec<&Tensor<f32>> = batch.iter().map(|&i| &images[i]).collect();
            let qs: Vec<&[usize]> = batch.iter().map(|&i| tokens[i].as_slice()).collect();
            let (probs, cache) = vqa.model.forward(&imgs, &qs, Mode::Train, &mut dropout_rng)?;
            let b = batch.len() as f32;
            let mut grad = Vec::with_capacity(batch.len() * k);
            let mut loss = 0.0;
            for (row, &i) in probs.data().chunks(k).zip(batch) {
                let t = targets[i];
                loss += cross_entropy(row, t) as f64;
                if argmax(row) == t {
                    hits += 1;
                }
                grad.extend(softmax_cross_entropy_grad(row, t).into_iter().map(|g| g / b));
            }
            vqa.model.zero_grad();
            vqa.model.backward(&cache, &Tensor::from_vec(&[batch.len(), k], grad)?)?;
            adam.step(&mut vqa.model);
            loss_sum += loss / batch.len() as f64;
            batches += 1;
        }
        let stats = EpochStats {
            epoch,
            loss: loss_sum / batches as f64,
            accuracy: hits as f64 / samples.len() as f64,
        };
        on_epoch(&stats);
        history.push(stats);
    }
    Ok(TrainOutput { vqa, history })
}

fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
