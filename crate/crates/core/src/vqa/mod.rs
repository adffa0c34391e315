//! Visual question answering over rendered frames: a convolutional image
//! encoder and a recurrent question encoder, fused by elementwise product
//! and classified over a fixed list of candidate answers.

mod bundle;
mod eval;
mod model;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DatasetError;
use crate::neural::NeuralError;
use crate::render::RenderError;

pub use bundle::{rank, AnswerModel, OracleModel, Prediction, RandomModel, RankedAnswer, Vqa};
pub use eval::{evaluate, probe_questions, CategoryRow, EvalReport, QuestionProbe, OTHER_ANSWER};
pub use model::{fuse, BatchCache, VqaModel};
pub use train::{load_samples, train_vqa, EpochStats, Sample, TrainConfig, TrainOutput};

#[derive(Debug, Error)]
pub enum VqaError {
    #[error("question has no tokens")]
    EmptyQuestion,
    #[error("answer not in the candidate list: {0:?}")]
    UnknownAnswer(String),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("k = {k} exceeds the {count} candidate answers")]
    InvalidK { k: usize, count: usize },
    #[error("no samples to {0}")]
    NoSamples(&'static str),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed model file: {0}")]
    Format(String),
}

/// Network shape. `desk` is sized for 64×64 synthetic frames, `paper` for
/// full-resolution frames and a 1000-way answer list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VqaConfig {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// E: dense layer after the conv stack.
    pub image_feature_dim: usize,
    /// F: common size of image and question vectors.
    pub fusion_dim: usize,
    pub embed_dim: usize,
    /// H
    pub question_hidden: usize,
    pub question_layers: usize,
    pub classifier_hidden: usize,
    pub classifier_layers: usize,
    pub dropout: f64,
    pub question_vocab: usize,
    /// K
    pub answer_count: usize,
}

impl Default for VqaConfig {
    fn default() -> Self {
        Self::desk(0, 0)
    }
}

impl VqaConfig {
    pub fn desk(question_vocab: usize, answer_count: usize) -> Self {
        Self {
            channels: 1,
            height: 64,
            width: 64,
            conv_channels: vec![8, 16, 32],
            kernel: 3,
            stride: 2,
            padding: 1,
            image_feature_dim: 256,
            fusion_dim: 128,
            embed_dim: 32,
            question_hidden: 64,
            question_layers: 2,
            classifier_hidden: 128,
            classifier_layers: 2,
            dropout: 0.5,
            question_vocab,
            answer_count,
        }
    }

    pub fn paper(question_vocab: usize, answer_count: usize) -> Self {
        Self {
            channels: 3,
            height: 480,
            width: 640,
            conv_channels: vec![16, 32, 64, 128, 256],
            image_feature_dim: 4096,
            fusion_dim: 1024,
            embed_dim: 300,
            question_hidden: 512,
            classifier_hidden: 1000,
            ..Self::desk(question_vocab, answer_count)
        }
    }

    /// `[C, H, W]` at the end of the conv stack.
    pub fn conv_output(&self) -> [usize; 3] {
        let (mut h, mut w) = (self.height, self.width);
        for _ in &self.conv_channels {
            h = (h + 2 * self.padding).saturating_sub(self.kernel) / self.stride.max(1) + 1;
            w = (w + 2 * self.padding).saturating_sub(self.kernel) / self.stride.max(1) + 1;
        }
        [*self.conv_channels.last().unwrap_or(&self.channels), h, w]
    }

    pub fn validate(&self) -> Result<(), VqaError> {
        let dims = [
            ("channels", self.channels),
            ("height", self.height),
            ("width", self.width),
            ("kernel", self.kernel),
            ("stride", self.stride),
            ("image_feature_dim", self.image_feature_dim),
            ("fusion_dim", self.fusion_dim),
            ("embed_dim", self.embed_dim),
            ("question_hidden", self.question_hidden),
            ("question_layers", self.question_layers),
            ("classifier_hidden", self.classifier_hidden),
            ("question_vocab", self.question_vocab),
            ("answer_count", self.answer_count),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(VqaError::InvalidConfig(format!("{name} must be positive")));
        }
        if self.conv_channels.contains(&0) {
            return Err(VqaError::InvalidConfig("conv channel count of zero".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(VqaError::InvalidConfig(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        let (mut h, mut w) = (self.height, self.width);
        for _ in &self.conv_channels {
            if h + 2 * self.padding < self.kernel || w + 2 * self.padding < self.kernel {
                return Err(VqaError::InvalidConfig("image too small for the conv stack".into()));
            }
            h = (h + 2 * self.padding - self.kernel) / self.stride + 1;
            w = (w + 2 * self.padding - self.kernel) / self.stride + 1;
        }
        Ok(())
    }
}
