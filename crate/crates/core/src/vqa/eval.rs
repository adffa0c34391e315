use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{AnswerModel, Sample, VqaError};
use crate::dataset::{answer_for, category_of_answer, category_title, question_for, GENERIC_QUESTION};
use crate::sim::ActionCategory;

/// Confusion-matrix column for predictions outside the five action answers.
pub const OTHER_ANSWER: &str = "other";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: ActionCategory,
    pub title: String,
    pub correct: usize,
    pub total: usize,
    /// Mean probability of the rank-1 answer, right or wrong.
    pub mean_top1_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
    pub categories: Vec<CategoryRow>,
    /// Column labels: the five categories in table order, then [`OTHER_ANSWER`].
    pub confusion_labels: Vec<String>,
    /// `confusion[true][predicted]`, rows in category order.
    pub confusion: Vec<Vec<usize>>,
}

/// Exact-match accuracy of the rank-1 answer, broken down by category.
pub fn evaluate(model: &dyn AnswerModel, samples: &[Sample]) -> Result<EvalReport, VqaError> {
    if samples.is_empty() {
        return Err(VqaError::NoSamples("evaluate"));
    }
    let n = ActionCategory::ALL.len();
    let mut correct = vec![0usize; n];
    let mut total = vec![0usize; n];
    let mut prob_sum = vec![0.0f64; n];
    let mut confusion = vec![vec![0usize; n + 1]; n];
    for s in samples {
        let top = model.predict_topk(&s.frame, &s.record.question, 1)?.answers.remove(0);
        let row = s.record.category.index();
        total[row] += 1;
        prob_sum[row] += top.prob;
        if top.text == s.record.answer {
            correct[row] += 1;
        }
        let col = category_of_answer(&top.text).map_or(n, |c| c.index());
        confusion[row][col] += 1;
    }
    let categories = ActionCategory::ALL
        .iter()
        .map(|&c| {
            let i = c.index();
            CategoryRow {
                category: c,
                title: category_title(c).to_string(),
                correct: correct[i],
                total: total[i],
                mean_top1_prob: if total[i] > 0 { prob_sum[i] / total[i] as f64 } else { 0.0 },
            }
        })
        .collect();
    let hits: usize = correct.iter().sum();
    Ok(EvalReport {
        correct: hits,
        total: samples.len(),
        accuracy: hits as f64 / samples.len() as f64,
        categories,
        confusion_labels: ActionCategory::ALL
            .iter()
            .map(|c| c.as_str().to_string())
            .chain([OTHER_ANSWER.to_string()])
            .collect(),
        confusion,
    })
}

/// How much the rank-1 answer depends on the frame versus the question.
///
/// Every action has its own question, so a model can score perfectly
/// without looking at the image. This asks each frame two other questions
/// and counts where the answer comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionProbe {
    pub total: usize,
    /// Correct when asked [`GENERIC_QUESTION`] instead.
    pub generic_correct: usize,
    /// Asked the question of the next category in table order: the answer
    /// matches the frame, matches the question, or neither.
    pub swapped_follow_frame: usize,
    pub swapped_follow_question: usize,
    pub swapped_other: usize,
}

pub fn probe_questions(model: &dyn AnswerModel, samples: &[Sample]) -> Result<QuestionProbe, VqaError> {
    if samples.is_empty() {
        return Err(VqaError::NoSamples("probe"));
    }
    let top = |s: &Sample, q: &str| -> Result<String, VqaError> {
        Ok(model.predict_topk(&s.frame, q, 1)?.answers.remove(0).text)
    };
    let all = ActionCategory::ALL;
    let mut p = QuestionProbe {
        total: samples.len(),
        generic_correct: 0,
        swapped_follow_frame: 0,
        swapped_follow_question: 0,
        swapped_other: 0,
    };
    for s in samples {
        let truth = s.record.category;
        if top(s, GENERIC_QUESTION)? == answer_for(truth) {
            p.generic_correct += 1;
        }
        let asked = all[(truth.index() + 1) % all.len()];
        let a = top(s, question_for(asked))?;
        if a == answer_for(truth) {
            p.swapped_follow_frame += 1;
        } else if a == answer_for(asked) {
            p.swapped_follow_question += 1;
        } else {
            p.swapped_other += 1;
        }
    }
    Ok(p)
}

impl QuestionProbe {
    pub fn to_text(&self) -> String {
        format!(
            "generic question: {}/{} correct\nanother action's question: answer follows the frame {}, the question {}, neither {}\n",
            self.generic_correct, self.total, self.swapped_follow_frame, self.swapped_follow_question, self.swapped_other
        )
    }
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "accuracy: {:.4} ({}/{})", self.accuracy, self.correct, self.total);
        let _ = writeln!(s);
        let _ = writeln!(s, "Number of correct predictions for each action category");
        let _ = writeln!(s, "{:<26} {:>13}", "Action category", "Correct/Total");
        for r in &self.categories {
            let _ = writeln!(s, "{:<26} {:>13}", r.title, format!("{}/{}", r.correct, r.total));
        }
        let _ = writeln!(s, "{:<26} {:>13}", "Total", format!("{}/{}", self.correct, self.total));
        let _ = writeln!(s);
        let _ = writeln!(s, "Average top-1 softmax probability");
        for r in &self.categories {
            let _ = writeln!(s, "{:<26} {:>13.4}", r.title, r.mean_top1_prob);
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "Confusion matrix (rows: true category, columns: predicted answer)");
        let _ = write!(s, "{:<14}", "");
        for l in &self.confusion_labels {
            let _ = write!(s, "{l:>14}");
        }
        let _ = writeln!(s);
        for (r, row) in self.categories.iter().zip(&self.confusion) {
            let _ = write!(s, "{:<14}", r.category.as_str());
            for v in row {
                let _ = write!(s, "{v:>14}");
            }
            let _ = writeln!(s);
        }
        s
    }
}
