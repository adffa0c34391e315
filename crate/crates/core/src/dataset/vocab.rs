use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetError, QARecord, QA_TABLE};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";

/// Lowercase, drop punctuation other than hyphens, split on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace() || *c == '-')
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Token → index map; index 0 is padding, 1 is the unknown token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionVocab {
    pub tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl QuestionVocab {
    pub const PAD_INDEX: usize = 0;
    pub const UNK_INDEX: usize = 1;

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let mut v = Self {
            tokens,
            index: HashMap::new(),
        };
        v.reindex();
        v
    }

    /// Vocabulary over the tokens of `questions`, in first-seen order.
    pub fn build<'a>(questions: impl IntoIterator<Item = &'a str>) -> Self {
        let mut tokens = vec![PAD.to_string(), UNK.to_string()];
        for q in questions {
            for t in tokenize(q) {
                if !tokens.contains(&t) {
                    tokens.push(t);
                }
            }
        }
        Self::from_tokens(tokens)
    }

    fn reindex(&mut self) {
        self.index = self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn encode(&self, question: &str) -> Vec<usize> {
        tokenize(question)
            .iter()
            .map(|t| self.get(t).unwrap_or(Self::UNK_INDEX))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("vocab serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, DatasetError> {
        let mut v: Self = serde_json::from_str(text).map_err(|e| DatasetError::Format(e.to_string()))?;
        v.reindex();
        Ok(v)
    }
}

/// Ordered candidate answers; the classifier predicts an index into this list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerVocab {
    pub answers: Vec<String>,
}

impl AnswerVocab {
    /// Distractors first, then the five action answers; duplicates dropped,
    /// first occurrence wins.
    pub fn build(distractors: &[String]) -> Self {
        let mut answers: Vec<String> = Vec::with_capacity(distractors.len() + 5);
        let targets = QA_TABLE.iter().map(|e| e.2.to_string());
        for a in distractors.iter().cloned().chain(targets) {
            if !answers.contains(&a) {
                answers.push(a);
            }
        }
        Self { answers }
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    pub fn index_of(&self, answer: &str) -> Option<usize> {
        self.answers.iter().position(|a| a == answer)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("vocab serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, DatasetError> {
        serde_json::from_str(text).map_err(|e| DatasetError::Format(e.to_string()))
    }
}

pub fn build_vocabs(records: &[QARecord], distractors: &[String]) -> (QuestionVocab, AnswerVocab) {
    (
        QuestionVocab::build(records.iter().map(|r| r.question.as_str())),
        AnswerVocab::build(distractors),
    )
}

/// The shipped list of 95 driving-domain sentences.
pub fn default_distractors() -> Vec<String> {
    include_str!("../../data/distractors.txt")
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn load_distractors(path: &Path) -> Result<Vec<String>, DatasetError> {
    Ok(std::fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

/// `n` distinct distractors: the shipped list, then deterministic
/// combinations of causes and places (for the 1000-candidate setting).
pub fn generated_distractors(n: usize) -> Vec<String> {
    const CAUSES: [&str; 20] = [
        "a pedestrian is waiting",
        "a cyclist is riding",
        "a truck is unloading",
        "a bus has stopped",
        "a car is parked",
        "a traffic cone was placed",
        "a dog is running",
        "the road is wet",
        "the lane is closed",
        "a police car is waiting",
        "an ambulance is passing",
        "a taxi is picking up passengers",
        "the asphalt is damaged",
        "a fallen branch lies",
        "a delivery robot is moving",
        "a motorcycle is overtaking",
        "a tractor is driving slowly",
        "snow has piled up",
        "a puddle has formed",
        "a scooter is parked",
    ];
    const PLACES: [&str; 10] = [
        "near the crosswalk",
        "on the shoulder",
        "in the next lane",
        "at the intersection",
        "behind the car",
        "in front of the car",
        "by the bus stop",
        "next to the curb",
        "on the bridge",
        "in the tunnel",
    ];
    const VERBS: [&str; 5] = [
        "Because",
        "Since",
        "The car reacts because",
        "The car waits because",
        "The car slows down because",
    ];
    let mut out = default_distractors();
    'outer: for verb in VERBS {
        for cause in CAUSES {
            for place in PLACES {
                if out.len() >= n {
                    break 'outer;
                }
                out.push(format!("{verb} {cause} {place}."));
            }
        }
    }
    out.truncate(n);
    out
}
