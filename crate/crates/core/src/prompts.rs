//! Prompt templates and rendering.
//!
//! The five published template bodies are stored as plain-text fixtures with
//! `${slot}` placeholders and shipped verbatim; rendering is plain slot
//! substitution so that deleting the slot values recovers the fixture bytes.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DatasetKind;

pub const SLOT_QUESTION: &str = "${question}";
pub const SLOT_ANSWER: &str = "${answer}";
pub const SLOT_CORRECT_ANSWER: &str = "${correctAnswer}";
pub const SLOT_RATIONALES: &str = "${rationales}";
pub const SLOT_INSTRUCTION: &str = "${instruction}";

const EXTRACTION_BODY: &str = include_str!("../prompts/autoreason_extraction.txt");
const BASE_STRATEGYQA_BODY: &str = include_str!("../prompts/base_strategyqa.txt");
const BASE_HOTPOTQA_BODY: &str = include_str!("../prompts/base_hotpotqa.txt");
const COT_BODY: &str = include_str!("../prompts/cot.txt");
const SCORER_BODY: &str = include_str!("../prompts/scorer.txt");
const FINAL_ANSWER_BODY: &str = include_str!("../prompts/final_answer.txt");

const INSTRUCTION_STRATEGYQA: &str = "You will answer the question with true or false.";
const INSTRUCTION_HOTPOTQA: &str = "You will answer the question with a short phrase.";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("question is blank")]
    EmptyQuestion,
    #[error("no reasoning traces supplied")]
    EmptyTraces,
    #[error("field `{0}` is blank")]
    EmptyField(&'static str),
    #[error("no reasoning traces found in model output")]
    NoRationales,
    #[error("template `{template}` missing declared slot {slot}")]
    MissingSlot { template: String, slot: String },
    #[error("template `{template}` contains slot {slot} more than once")]
    DuplicateSlot { template: String, slot: String },
    #[error("template `{template}` contains undeclared placeholder {marker}")]
    UndeclaredSlot { template: String, marker: String },
    #[error("cannot read template `{name}`: {source}")]
    TemplateUnreadable {
        name: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::System => write!(f, "system"),
            Role::User => write!(f, "user"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }
}

/// An ordered chat message list ready to send to a model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub messages: Vec<Message>,
}

impl RenderedPrompt {
    /// Concatenated content of all messages, for substring assertions and logs.
    pub fn joined_content(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Ordered sub-questions produced by the rationale-extraction step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningTraces(Vec<String>);

impl ReasoningTraces {
    pub fn new(traces: Vec<String>) -> Result<Self, PromptError> {
        if traces.is_empty() {
            return Err(PromptError::EmptyTraces);
        }
        Ok(ReasoningTraces(traces))
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    /// The "- " bullet list form used in the final-answer prompt.
    pub fn as_bullets(&self) -> String {
        self.0
            .iter()
            .map(|t| format!("- {t}"))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// A template body with named `${slot}` placeholders.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub name: String,
    pub body: String,
    pub slots: Vec<&'static str>,
}

impl PromptTemplate {
    fn new(name: &str, body: &str, slots: &[&'static str]) -> Result<Self, PromptError> {
        let template = PromptTemplate {
            name: name.to_string(),
            body: body.to_string(),
            slots: slots.to_vec(),
        };
        template.validate()?;
        Ok(template)
    }

    fn validate(&self) -> Result<(), PromptError> {
        for slot in &self.slots {
            match self.body.matches(*slot).count() {
                0 => {
                    return Err(PromptError::MissingSlot {
                        template: self.name.clone(),
                        slot: slot.to_string(),
                    })
                }
                1 => {}
                _ => {
                    return Err(PromptError::DuplicateSlot {
                        template: self.name.clone(),
                        slot: slot.to_string(),
                    })
                }
            }
        }
        let marker = regex::Regex::new(r"\$\{[^}]*\}").unwrap();
        for m in marker.find_iter(&self.body) {
            if !self.slots.contains(&m.as_str()) {
                return Err(PromptError::UndeclaredSlot {
                    template: self.name.clone(),
                    marker: m.as_str().to_string(),
                });
            }
        }
        Ok(())
    }

    fn render(&self, values: &[(&'static str, &str)]) -> String {
        let mut out = self.body.clone();
        for (slot, value) in values {
            out = out.replacen(slot, value, 1);
        }
        out
    }
}

/// The full set of templates the system sends.
#[derive(Debug, Clone)]
pub struct PromptLibrary {
    pub extraction: PromptTemplate,
    pub base_strategyqa: PromptTemplate,
    pub base_hotpotqa: PromptTemplate,
    pub cot: PromptTemplate,
    pub scorer: PromptTemplate,
    pub final_answer: PromptTemplate,
}

impl PromptLibrary {
    /// Library backed by the compiled-in fixture bodies.
    pub fn builtin() -> Self {
        Self::from_bodies(
            EXTRACTION_BODY,
            BASE_STRATEGYQA_BODY,
            BASE_HOTPOTQA_BODY,
            COT_BODY,
            SCORER_BODY,
            FINAL_ANSWER_BODY,
        )
        .expect("built-in templates are valid")
    }

    /// Load fixture files from a directory, falling back to nothing: every
    /// file must be present.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let read = |name: &str| -> Result<String, PromptError> {
            std::fs::read_to_string(dir.join(name)).map_err(|source| {
                PromptError::TemplateUnreadable {
                    name: name.to_string(),
                    source,
                }
            })
        };
        Self::from_bodies(
            &read("autoreason_extraction.txt")?,
            &read("base_strategyqa.txt")?,
            &read("base_hotpotqa.txt")?,
            &read("cot.txt")?,
            &read("scorer.txt")?,
            &read("final_answer.txt")?,
        )
    }

    fn from_bodies(
        extraction: &str,
        base_strategyqa: &str,
        base_hotpotqa: &str,
        cot: &str,
        scorer: &str,
        final_answer: &str,
    ) -> Result<Self, PromptError> {
        Ok(PromptLibrary {
            extraction: PromptTemplate::new("autoreason_extraction", extraction, &[SLOT_QUESTION])?,
            base_strategyqa: PromptTemplate::new("base_strategyqa", base_strategyqa, &[])?,
            base_hotpotqa: PromptTemplate::new("base_hotpotqa", base_hotpotqa, &[])?,
            cot: PromptTemplate::new("cot", cot, &[SLOT_QUESTION])?,
            scorer: PromptTemplate::new(
                "scorer",
                scorer,
                &[SLOT_QUESTION, SLOT_ANSWER, SLOT_CORRECT_ANSWER],
            )?,
            final_answer: PromptTemplate::new(
                "final_answer",
                final_answer,
                &[SLOT_QUESTION, SLOT_RATIONALES, SLOT_INSTRUCTION],
            )?,
        })
    }

    /// Rationale-extraction prompt for the strong model.
    pub fn render_autoreason_extraction(
        &self,
        question: &str,
    ) -> Result<RenderedPrompt, PromptError> {
        let question = non_blank(question, PromptError::EmptyQuestion)?;
        Ok(RenderedPrompt {
            messages: vec![Message::user(
                self.extraction.render(&[(SLOT_QUESTION, question)]),
            )],
        })
    }

    /// Direct-answer prompt: the published instruction block as a system
    /// message, the question as the user message.
    pub fn render_base(
        &self,
        kind: DatasetKind,
        question: &str,
    ) -> Result<RenderedPrompt, PromptError> {
        let question = non_blank(question, PromptError::EmptyQuestion)?;
        let template = match kind {
            DatasetKind::StrategyQa => &self.base_strategyqa,
            DatasetKind::HotpotQa => &self.base_hotpotqa,
        };
        Ok(RenderedPrompt {
            messages: vec![
                Message::system(template.body.clone()),
                Message::user(question),
            ],
        })
    }

    /// Few-shot chain-of-thought prompt; the body is shared across both
    /// dataset kinds (the published versions are identical).
    pub fn render_cot(
        &self,
        _kind: DatasetKind,
        question: &str,
    ) -> Result<RenderedPrompt, PromptError> {
        let question = non_blank(question, PromptError::EmptyQuestion)?;
        Ok(RenderedPrompt {
            messages: vec![Message::user(self.cot.render(&[(SLOT_QUESTION, question)]))],
        })
    }

    /// Second-stage prompt: answer the question by working through the
    /// extracted sub-questions, ending with a mechanical "Answer:" line.
    pub fn render_final_answer(
        &self,
        question: &str,
        traces: &ReasoningTraces,
        kind: DatasetKind,
    ) -> Result<RenderedPrompt, PromptError> {
        let question = non_blank(question, PromptError::EmptyQuestion)?;
        if traces.is_empty() {
            return Err(PromptError::EmptyTraces);
        }
        let instruction = match kind {
            DatasetKind::StrategyQa => INSTRUCTION_STRATEGYQA,
            DatasetKind::HotpotQa => INSTRUCTION_HOTPOTQA,
        };
        let content = self.final_answer.render(&[
            (SLOT_RATIONALES, &traces.as_bullets()),
            (SLOT_QUESTION, question),
            (SLOT_INSTRUCTION, instruction),
        ]);
        Ok(RenderedPrompt {
            messages: vec![Message::user(content)],
        })
    }

    /// Judge prompt scoring `answer` against `correct_answer` on 0-10.
    pub fn render_scorer(
        &self,
        question: &str,
        answer: &str,
        correct_answer: &str,
    ) -> Result<RenderedPrompt, PromptError> {
        let question = non_blank(question, PromptError::EmptyField("question"))?;
        let answer = non_blank(answer, PromptError::EmptyField("answer"))?;
        let correct_answer = non_blank(correct_answer, PromptError::EmptyField("correct_answer"))?;
        let content = self.scorer.render(&[
            (SLOT_QUESTION, question),
            (SLOT_ANSWER, answer),
            (SLOT_CORRECT_ANSWER, correct_answer),
        ]);
        Ok(RenderedPrompt {
            messages: vec![Message::user(content)],
        })
    }
}

fn non_blank<'a>(value: &'a str, err: PromptError) -> Result<&'a str, PromptError> {
    if value.trim().is_empty() {
        Err(err)
    } else {
        Ok(value)
    }
}

/// Pull the reasoning traces out of a raw extraction response.
///
/// Lines starting with "- " win; if the model dropped the bullets, fall back
/// to non-empty lines ending in "?". Surrounding prose is discarded.
pub fn parse_rationales(text: &str) -> Result<ReasoningTraces, PromptError> {
    let bullets: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter_map(|line| line.strip_prefix("- "))
        .map(|rest| rest.trim().to_string())
        .filter(|rest| !rest.is_empty())
        .collect();
    let traces = if !bullets.is_empty() {
        bullets
    } else {
        text.lines()
            .map(str::trim)
            .filter(|line| !line.is_empty() && line.ends_with('?'))
            .map(str::to_string)
            .collect()
    };
    ReasoningTraces::new(traces).map_err(|_| PromptError::NoRationales)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn library() -> PromptLibrary {
        PromptLibrary::builtin()
    }

    #[test]
    fn extraction_contains_exemplars_and_cue() {
        let rendered = library()
            .render_autoreason_extraction("Did Aristotle use a laptop?")
            .unwrap();
        assert_eq!(rendered.messages.len(), 1);
        assert_eq!(rendered.messages[0].role, Role::User);
        let content = &rendered.messages[0].content;
        assert!(content.contains("Who were the founders of Brazilian jiu-jitsu?"));
        assert!(content.contains("methane"));
        assert!(content.contains("Question: Did Aristotle use a laptop?"));
        // nothing after the trailing cue except the template's own whitespace
        let after = content.rsplit("Reasoning traces:").next().unwrap();
        assert!(after.trim().is_empty());
    }

    #[test]
    fn extraction_rejects_blank_question() {
        assert!(matches!(
            library().render_autoreason_extraction("   "),
            Err(PromptError::EmptyQuestion)
        ));
    }

    #[test]
    fn extraction_length_arithmetic() {
        let lib = library();
        let q = "Can a sloth outrun a snail?";
        let rendered = lib.render_autoreason_extraction(q).unwrap();
        assert_eq!(
            rendered.messages[0].content.len(),
            lib.extraction.body.len() - SLOT_QUESTION.len() + q.len()
        );
    }

    #[test]
    fn base_strategyqa_demands_true_false() {
        let rendered = library()
            .render_base(DatasetKind::StrategyQa, "Did Aristotle use a laptop?")
            .unwrap();
        assert_eq!(rendered.messages[0].role, Role::System);
        assert!(rendered.messages[0]
            .content
            .contains("You will answer the question with true or false"));
        assert_eq!(rendered.messages[1].content, "Did Aristotle use a laptop?");
    }

    #[test]
    fn base_hotpotqa_has_answer_format_rule() {
        let rendered = library()
            .render_base(DatasetKind::HotpotQa, "Who wrote Hamlet?")
            .unwrap();
        assert!(rendered.messages[0].content.contains("\"<answer>\""));
    }

    #[test]
    fn base_rejects_blank_question() {
        assert!(matches!(
            library().render_base(DatasetKind::StrategyQa, ""),
            Err(PromptError::EmptyQuestion)
        ));
    }

    #[test]
    fn cot_shared_body_and_exemplar_answers() {
        let lib = library();
        let a = lib
            .render_cot(DatasetKind::StrategyQa, "Did Aristotle use a laptop?")
            .unwrap();
        let b = lib
            .render_cot(DatasetKind::HotpotQa, "Did Aristotle use a laptop?")
            .unwrap();
        assert_eq!(a, b);
        assert!(a.messages[0].content.contains("Answer: no"));
    }

    #[test]
    fn cot_suffix_matches_fixture_tail() {
        let lib = library();
        let q = "Who wrote Hamlet?";
        let rendered = lib.render_cot(DatasetKind::HotpotQa, q).unwrap();
        let tail = lib.cot.body.rsplit(SLOT_QUESTION).next().unwrap();
        let expected_suffix = format!("Q: {q}{tail}");
        assert!(rendered.messages[0].content.ends_with(&expected_suffix));
    }

    #[test]
    fn final_answer_bullets_in_order() {
        let traces =
            ReasoningTraces::new(vec!["Who founded X?".into(), "When?".into()]).unwrap();
        let rendered = library()
            .render_final_answer("Who wrote Hamlet?", &traces, DatasetKind::HotpotQa)
            .unwrap();
        let content = &rendered.messages[0].content;
        let bullets = content
            .lines()
            .filter(|l| l.trim_start().starts_with("- "))
            .count();
        assert_eq!(bullets, 2);
        let a = content.find("- Who founded X?").unwrap();
        let b = content.find("- When?").unwrap();
        assert!(a < b);
        assert_eq!(content.matches("Who wrote Hamlet?").count(), 1);
    }

    #[test]
    fn final_answer_rejects_empty_traces() {
        assert!(matches!(
            ReasoningTraces::new(vec![]),
            Err(PromptError::EmptyTraces)
        ));
    }

    #[test]
    fn scorer_slots_and_trailing_cue() {
        let rendered = library()
            .render_scorer("Did Aristotle use a laptop?", "yes", "true")
            .unwrap();
        let content = &rendered.messages[0].content;
        assert!(content.contains("Question: Did Aristotle use a laptop?"));
        assert!(content.ends_with("Score: "));
    }

    #[test]
    fn scorer_names_blank_field() {
        match library().render_scorer("q?", " ", "true") {
            Err(PromptError::EmptyField(field)) => assert_eq!(field, "answer"),
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn scorer_inverse_substitution_recovers_fixture() {
        let lib = library();
        let (q, a, g) = ("Did Aristotle use a laptop?", "yes-indeed", "true-indeed");
        let rendered = lib.render_scorer(q, a, g).unwrap();
        let recovered = rendered.messages[0]
            .content
            .replacen(q, SLOT_QUESTION, 1)
            .replacen(a, SLOT_ANSWER, 1)
            .replacen(g, SLOT_CORRECT_ANSWER, 1);
        assert_eq!(recovered, lib.scorer.body);
    }

    #[test]
    fn parse_rationales_bullets() {
        let traces = parse_rationales(
            "- Who were the founders of Brazilian jiu-jitsu?\n- What is the number represented by the baker's dozen?",
        )
        .unwrap();
        assert_eq!(traces.len(), 2);
    }

    #[test]
    fn parse_rationales_filters_noise() {
        let traces = parse_rationales("Here are traces:\n- A?\nnoise\n- B?").unwrap();
        assert_eq!(traces.as_slice(), &["A?".to_string(), "B?".to_string()]);
    }

    #[test]
    fn parse_rationales_question_mark_fallback() {
        let traces = parse_rationales("Who founded X?\nsome prose\nWhen was it founded?").unwrap();
        assert_eq!(traces.len(), 2);
    }

    #[test]
    fn parse_rationales_empty_is_error() {
        assert!(matches!(parse_rationales(""), Err(PromptError::NoRationales)));
        assert!(matches!(
            parse_rationales("no questions here"),
            Err(PromptError::NoRationales)
        ));
    }

    #[test]
    fn parse_roundtrips_bullet_rendering() {
        let traces =
            ReasoningTraces::new(vec!["A?".into(), "B?".into(), "C?".into()]).unwrap();
        let parsed = parse_rationales(&traces.as_bullets()).unwrap();
        assert_eq!(parsed, traces);
    }

    #[test]
    fn no_slot_leakage() {
        let lib = library();
        let traces = ReasoningTraces::new(vec!["A?".into()]).unwrap();
        let rendered = [
            lib.render_autoreason_extraction("q?").unwrap(),
            lib.render_base(DatasetKind::StrategyQa, "q?").unwrap(),
            lib.render_cot(DatasetKind::HotpotQa, "q?").unwrap(),
            lib.render_final_answer("q?", &traces, DatasetKind::StrategyQa)
                .unwrap(),
            lib.render_scorer("q?", "a", "g").unwrap(),
        ];
        for prompt in &rendered {
            assert!(!prompt.joined_content().contains("${"));
        }
    }
}
