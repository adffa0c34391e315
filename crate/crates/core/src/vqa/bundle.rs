use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{VqaConfig, VqaError, VqaModel};
use crate::dataset::{answer_for, AnswerVocab, QuestionVocab};
use crate::neural::{checkpoint, NeuralError, Rng, Tensor};
use crate::render::Frame;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedAnswer {
    /// Position in the answer list.
    pub index: usize,
    pub text: String,
    pub prob: f64,
}

/// The `k` most probable answers, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub answers: Vec<RankedAnswer>,
}

impl Prediction {
    pub fn top(&self) -> &RankedAnswer {
        &self.answers[0]
    }
}

/// Indices of the `k` largest probabilities, descending; equal values keep
/// index order.
pub fn rank(probs: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
    idx.truncate(k);
    idx
}

/// Anything that scores the candidate answers for a frame and question.
pub trait AnswerModel: Send + Sync {
    fn answers(&self) -> &[String];

    /// Full distribution over [`answers`](Self::answers).
    fn distribution(&self, frame: &Frame, question: &str) -> Result<Vec<f64>, VqaError>;

    fn predict_topk(&self, frame: &Frame, question: &str, k: usize) -> Result<Prediction, VqaError> {
        let count = self.answers().len();
        if k == 0 || k > count {
            return Err(VqaError::InvalidK { k, count });
        }
        let probs = self.distribution(frame, question)?;
        Ok(Prediction {
            answers: rank(&probs, k)
                .into_iter()
                .map(|i| RankedAnswer {
                    index: i,
                    text: self.answers()[i].clone(),
                    prob: probs[i],
                })
                .collect(),
        })
    }
}

/// A trained network together with the vocabularies it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Vqa {
    pub model: VqaModel<f32>,
    pub questions: QuestionVocab,
    pub answers: AnswerVocab,
}

const CHECKPOINT: &str = "vqa.ckpt";
const CONFIG: &str = "vqa_config.json";
const QUESTION_VOCAB: &str = "question_vocab.json";
const ANSWER_VOCAB: &str = "answer_vocab.json";

impl Vqa {
    /// Files [`save`](Self::save) writes into a model directory.
    pub const FILES: [&'static str; 4] = [CHECKPOINT, CONFIG, QUESTION_VOCAB, ANSWER_VOCAB];

    /// Encoder input for a frame: `[C, H, W]`, standardized to zero mean and
    /// unit variance over the whole image.
    ///
    /// Frames are mostly flat road-and-grass with thin lane markings; raw
    /// intensities leave the image features nearly identical across frames
    /// and the network learns from the question alone.
    pub fn image_tensor(&self, frame: &Frame) -> Result<Tensor<f32>, VqaError> {
        let c = &self.model.config;
        let found = [frame.channels, frame.height, frame.width];
        if found != [c.channels, c.height, c.width] {
            return Err(NeuralError::ShapeMismatch {
                expected: vec![c.channels, c.height, c.width],
                found: found.to_vec(),
            }
            .into());
        }
        Ok(Tensor::from_vec(&found, standardize(frame.planar()))?)
    }

    pub fn encode_question(&self, question: &str) -> Result<Vec<usize>, VqaError> {
        let tokens = self.questions.encode(question);
        if tokens.is_empty() {
            return Err(VqaError::EmptyQuestion);
        }
        Ok(tokens)
    }

    /// Same network with the answer list reordered: new answer `j` is old
    /// answer `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, VqaError> {
        let mut out = self.clone();
        out.model.permute_answers(perm)?;
        out.answers.answers = perm.iter().map(|&i| self.answers.answers[i].clone()).collect();
        Ok(out)
    }

    pub fn save(&self, dir: &Path) -> Result<(), VqaError> {
        fs::create_dir_all(dir)?;
        checkpoint::save(&self.model, &dir.join(CHECKPOINT))?;
        let cfg = serde_json::to_string_pretty(&self.model.config).map_err(|e| VqaError::Format(e.to_string()))?;
        fs::write(dir.join(CONFIG), cfg)?;
        fs::write(dir.join(QUESTION_VOCAB), self.questions.to_json())?;
        fs::write(dir.join(ANSWER_VOCAB), self.answers.to_json())?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, VqaError> {
        let config: VqaConfig = serde_json::from_str(&fs::read_to_string(dir.join(CONFIG))?)
            .map_err(|e| VqaError::Format(format!("{CONFIG}: {e}")))?;
        let questions = QuestionVocab::from_json(&fs::read_to_string(dir.join(QUESTION_VOCAB))?)?;
        let answers = AnswerVocab::from_json(&fs::read_to_string(dir.join(ANSWER_VOCAB))?)?;
        if questions.len() != config.question_vocab || answers.len() != config.answer_count {
            return Err(VqaError::Format("vocabulary sizes disagree with the model config".into()));
        }
        let mut model = VqaModel::new(config, &mut Rng::seed(0))?;
        checkpoint::load(&mut model, &dir.join(CHECKPOINT))?;
        Ok(Self {
            model,
            questions,
            answers,
        })
    }
}

impl AnswerModel for Vqa {
    fn answers(&self) -> &[String] {
        &self.answers.answers
    }

    fn distribution(&self, frame: &Frame, question: &str) -> Result<Vec<f64>, VqaError> {
        let tokens = self.encode_question(question)?;
        let image = self.image_tensor(frame)?;
        Ok(self.model.predict(&image, &tokens)?.into_iter().map(f64::from).collect())
    }
}

fn standardize(mut x: Vec<f32>) -> Vec<f32> {
    let n = x.len() as f64;
    let mean = x.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = x.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    // a blank frame stays all zeros
    let scale = 1.0 / (var + 1e-6).sqrt();
    for v in &mut x {
        *v = ((*v as f64 - mean) * scale) as f32;
    }
    x
}

/// Answers from the ground-truth category stored in the frame metadata.
/// Used to check the evaluation protocol, not a model.
#[derive(Debug, Clone)]
pub struct OracleModel {
    pub answers: Vec<String>,
}

impl AnswerModel for OracleModel {
    fn answers(&self) -> &[String] {
        &self.answers
    }

    fn distribution(&self, frame: &Frame, _question: &str) -> Result<Vec<f64>, VqaError> {
        let cat = frame
            .meta
            .action_category
            .ok_or_else(|| VqaError::Format(format!("frame {} has no category", frame.meta.frame_id)))?;
        let truth = answer_for(cat);
        let k = self.answers.len();
        let i = self
            .answers
            .iter()
            .position(|a| a == truth)
            .ok_or_else(|| VqaError::UnknownAnswer(truth.to_string()))?;
        let rest = if k > 1 { 0.01 / (k - 1) as f64 } else { 0.0 };
        let mut p = vec![rest; k];
        p[i] = if k > 1 { 0.99 } else { 1.0 };
        Ok(p)
    }
}

/// Puts most of the mass on a uniformly random answer each call.
#[derive(Debug)]
pub struct RandomModel {
    pub answers: Vec<String>,
    rng: Mutex<Rng>,
}

impl RandomModel {
    pub fn new(answers: Vec<String>, rng: Rng) -> Self {
        Self {
            answers,
            rng: Mutex::new(rng),
        }
    }
}

impl AnswerModel for RandomModel {
    fn answers(&self) -> &[String] {
        &self.answers
    }

    fn distribution(&self, _frame: &Frame, _question: &str) -> Result<Vec<f64>, VqaError> {
        let k = self.answers.len();
        let i = self.rng.lock().expect("rng lock").below(k);
        let rest = if k > 1 { 0.5 / (k - 1) as f64 } else { 0.0 };
        let mut p = vec![rest; k];
        p[i] = if k > 1 { 0.5 } else { 1.0 };
        Ok(p)
    }
}
