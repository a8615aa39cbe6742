//! LLM-as-judge scoring and the decision boundary turning 0-10 scores into
//! correct/incorrect verdicts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{CompletionRequest, Gateway, GatewayError, ModelSpec};
use crate::pipeline::FinalAnswer;
use crate::prompts::{PromptError, PromptLibrary};

pub const DEFAULT_THRESHOLD: u8 = 6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeScore {
    pub value: u8,
    pub judge_raw: String,
}

impl JudgeScore {
    pub fn new(value: u8, judge_raw: impl Into<String>) -> Self {
        debug_assert!(value <= 10);
        JudgeScore {
            value,
            judge_raw: judge_raw.into(),
        }
    }
}

/// Scores at or above the threshold count as correct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionBoundary {
    pub threshold: u8,
}

impl DecisionBoundary {
    pub fn new(threshold: u8) -> Result<Self, ScoringError> {
        if threshold > 10 {
            return Err(ScoringError::InvalidThreshold(threshold));
        }
        Ok(DecisionBoundary { threshold })
    }
}

impl Default for DecisionBoundary {
    fn default() -> Self {
        DecisionBoundary {
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub correct: bool,
    pub score: JudgeScore,
}

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("gateway error: {0}")]
    Gateway(#[from] GatewayError),
    #[error("prompt error: {0}")]
    Prompt(#[from] PromptError),
    #[error("no score found in judge response: {judge_raw:?}")]
    ScoreParseFailure { judge_raw: String },
    #[error("threshold {0} is out of range [0, 10]")]
    InvalidThreshold(u8),
}

/// Extract the judged score from a free-form response.
///
/// The last standalone integer in [0, 10] at or after the final "Score"
/// token wins; with no such token, the last in-range integer anywhere.
/// Digit runs are tokenized maximally, so "10" never reads as "1" then "0".
pub fn parse_score(text: &str) -> Result<u8, ScoringError> {
    let lower = text.to_ascii_lowercase();
    let scope = match lower.rfind("score") {
        Some(pos) => &text[pos..],
        None => text,
    };
    last_in_range_int(scope)
        .or_else(|| last_in_range_int(text))
        .ok_or_else(|| ScoringError::ScoreParseFailure {
            judge_raw: text.to_string(),
        })
}

fn last_in_range_int(text: &str) -> Option<u8> {
    let mut best = None;
    let mut digits = String::new();
    for c in text.chars().chain(std::iter::once(' ')) {
        if c.is_ascii_digit() {
            digits.push(c);
        } else if !digits.is_empty() {
            if let Ok(v) = digits.parse::<u32>() {
                if v <= 10 {
                    best = Some(v as u8);
                }
            }
            digits.clear();
        }
    }
    best
}

pub fn classify(score: JudgeScore, boundary: DecisionBoundary) -> Verdict {
    Verdict {
        correct: score.value >= boundary.threshold,
        score,
    }
}

/// Judge backed by a model through the gateway.
pub struct Judge<'a> {
    pub gateway: &'a Gateway,
    pub library: &'a PromptLibrary,
    pub model: &'a ModelSpec,
}

impl<'a> Judge<'a> {
    pub fn new(gateway: &'a Gateway, library: &'a PromptLibrary, model: &'a ModelSpec) -> Self {
        Judge {
            gateway,
            library,
            model,
        }
    }

    /// Score an answer against the gold answer. Unparseable answers score 0
    /// without calling the judge, keeping the denominator fixed.
    pub fn judge(
        &self,
        question: &str,
        answer: &FinalAnswer,
        gold: &str,
    ) -> Result<JudgeScore, ScoringError> {
        let answer = match answer.as_answer() {
            Some(a) => a,
            None => return Ok(JudgeScore::new(0, "")),
        };
        let prompt = self.library.render_scorer(question, answer, gold)?;
        let raw = self
            .gateway
            .complete(&CompletionRequest::new(self.model, &prompt))?;
        let value = parse_score(&raw).map_err(|_| ScoringError::ScoreParseFailure {
            judge_raw: raw.clone(),
        })?;
        Ok(JudgeScore::new(value, raw))
    }
}
