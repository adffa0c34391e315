//! Question/answer corpus built from recorded drives.

mod corpus;
mod qa;
mod record;
mod vocab;

use thiserror::Error;

use crate::ddpg::DdpgError;
use crate::render::RenderError;
use crate::sim::ActionCategory;

pub use corpus::{
    build_corpus, build_split, parse_overrides, uniform_indices, write_corpus, CorpusConfig, FrameRef, Manifest,
    Pools, QARecord, Split,
};
pub use qa::{answer_for, category_of_answer, category_title, question_for, GENERIC_QUESTION, QA_TABLE};
pub use record::{
    extract_segments, frame_id, record_drive, recording_dt, FrameRecord, Recording, Segment, CRASH_MARGIN_STEPS,
};
pub use vocab::{
    build_vocabs, default_distractors, generated_distractors, load_distractors, tokenize, AnswerVocab, QuestionVocab,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid dataset config: {0}")]
    InvalidConfig(String),
    #[error("recording drive failed: {0}")]
    RolloutFailed(String),
    #[error("not enough frames for `{category}`: need {needed}, have {available}")]
    InsufficientFrames {
        category: ActionCategory,
        needed: usize,
        available: usize,
    },
    #[error("malformed data: {0}")]
    Format(String),
    #[error(transparent)]
    Ddpg(#[from] DdpgError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
