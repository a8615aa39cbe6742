//! Runs one question through a prompting strategy and records the full trace.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{normalize_answer, DatasetKind, QaRecord};
use crate::gateway::{CompletionRequest, Gateway, GatewayError, ModelSpec};
use crate::prompts::{parse_rationales, PromptError, PromptLibrary, RenderedPrompt, ReasoningTraces};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Base,
    Cot,
    Autoreason,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Base => "base",
            Strategy::Cot => "cot",
            Strategy::Autoreason => "autoreason",
        }
    }

    pub const ALL: [Strategy; 3] = [Strategy::Base, Strategy::Cot, Strategy::Autoreason];
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "base" => Ok(Strategy::Base),
            "cot" => Ok(Strategy::Cot),
            "autoreason" => Ok(Strategy::Autoreason),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

/// Model assignments for the three roles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub strong_model: ModelSpec,
    pub weak_model: ModelSpec,
    pub judge_model: ModelSpec,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        self.strong_model.validate()?;
        self.weak_model.validate()?;
        self.judge_model.validate()
    }
}

/// A parsed final answer, or the marker for outputs nothing could be made of.
/// Unparseable answers stay in the run (scored as incorrect).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalAnswer {
    Answer(String),
    Unparseable,
}

impl FinalAnswer {
    pub fn as_answer(&self) -> Option<&str> {
        match self {
            FinalAnswer::Answer(a) => Some(a),
            FinalAnswer::Unparseable => None,
        }
    }
}

/// Full provenance of one pipeline run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerTrace {
    pub record_id: String,
    pub strategy: Strategy,
    pub rationales: Option<ReasoningTraces>,
    pub prompts_sent: Vec<RenderedPrompt>,
    pub raw_responses: Vec<String>,
    pub final_answer: FinalAnswer,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("prompt error: {0}")]
    Prompt(#[from] PromptError),
    #[error("gateway error during {step}: {source}")]
    Gateway {
        step: &'static str,
        source: GatewayError,
    },
}

/// Executes strategies against a gateway with a fixed prompt library.
pub struct StrategyRunner<'a> {
    pub gateway: &'a Gateway,
    pub library: &'a PromptLibrary,
    pub config: &'a PipelineConfig,
}

impl<'a> StrategyRunner<'a> {
    pub fn new(gateway: &'a Gateway, library: &'a PromptLibrary, config: &'a PipelineConfig) -> Self {
        StrategyRunner {
            gateway,
            library,
            config,
        }
    }

    pub fn run_strategy(
        &self,
        strategy: Strategy,
        record: &QaRecord,
    ) -> Result<AnswerTrace, PipelineError> {
        match strategy {
            Strategy::Base => self.run_base(record),
            Strategy::Cot => self.run_cot(record),
            Strategy::Autoreason => self.run_autoreason(record),
        }
    }

    /// Direct answer from the weak model, no reasoning scaffold.
    pub fn run_base(&self, record: &QaRecord) -> Result<AnswerTrace, PipelineError> {
        let prompt = self.library.render_base(record.kind, &record.question)?;
        let response = self.complete(&self.config.weak_model, &prompt, "base answer")?;
        let final_answer = parse_final(&response, record.kind);
        Ok(AnswerTrace {
            record_id: record.id.clone(),
            strategy: Strategy::Base,
            rationales: None,
            prompts_sent: vec![prompt],
            raw_responses: vec![response],
            final_answer,
        })
    }

    /// Few-shot chain-of-thought; the answer is taken from the response's
    /// last "Answer:" line, falling back to the whole response.
    pub fn run_cot(&self, record: &QaRecord) -> Result<AnswerTrace, PipelineError> {
        let prompt = self.library.render_cot(record.kind, &record.question)?;
        let response = self.complete(&self.config.weak_model, &prompt, "cot answer")?;
        let final_answer = parse_final(&extract_answer_line(&response), record.kind);
        Ok(AnswerTrace {
            record_id: record.id.clone(),
            strategy: Strategy::Cot,
            rationales: None,
            prompts_sent: vec![prompt],
            raw_responses: vec![response],
            final_answer,
        })
    }

    /// Two-step flow: the strong model decomposes the question into
    /// sub-questions, the weak model answers with them. Extraction failure
    /// yields an Unparseable trace without calling the weak model.
    pub fn run_autoreason(&self, record: &QaRecord) -> Result<AnswerTrace, PipelineError> {
        let extraction_prompt = self.library.render_autoreason_extraction(&record.question)?;
        let extraction_response =
            self.complete(&self.config.strong_model, &extraction_prompt, "rationale extraction")?;

        let traces = match parse_rationales(&extraction_response) {
            Ok(traces) => traces,
            Err(PromptError::NoRationales) => {
                return Ok(AnswerTrace {
                    record_id: record.id.clone(),
                    strategy: Strategy::Autoreason,
                    rationales: None,
                    prompts_sent: vec![extraction_prompt],
                    raw_responses: vec![extraction_response],
                    final_answer: FinalAnswer::Unparseable,
                })
            }
            Err(e) => return Err(e.into()),
        };

        let answer_prompt =
            self.library
                .render_final_answer(&record.question, &traces, record.kind)?;
        let answer_response =
            self.complete(&self.config.weak_model, &answer_prompt, "final answer")?;
        let final_answer = parse_final(&extract_answer_line(&answer_response), record.kind);

        Ok(AnswerTrace {
            record_id: record.id.clone(),
            strategy: Strategy::Autoreason,
            rationales: Some(traces),
            prompts_sent: vec![extraction_prompt, answer_prompt],
            raw_responses: vec![extraction_response, answer_response],
            final_answer,
        })
    }

    fn complete(
        &self,
        spec: &ModelSpec,
        prompt: &RenderedPrompt,
        step: &'static str,
    ) -> Result<String, PipelineError> {
        self.gateway
            .complete(&CompletionRequest::new(spec, prompt))
            .map_err(|source| PipelineError::Gateway { step, source })
    }
}

/// Last "Answer:" line wins; a response without one is used whole.
fn extract_answer_line(response: &str) -> String {
    let lower = response.to_ascii_lowercase();
    match lower.rfind("answer:") {
        Some(pos) => {
            let rest = &response[pos + "answer:".len()..];
            rest.lines().next().unwrap_or("").trim().to_string()
        }
        None => response.trim().to_string(),
    }
}

fn parse_final(text: &str, kind: DatasetKind) -> FinalAnswer {
    match normalize_answer(text, kind) {
        Ok(answer) if !answer.is_empty() => FinalAnswer::Answer(answer),
        _ => FinalAnswer::Unparseable,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{
        request_digest, Gateway, MockBackend, RetryPolicy, ScriptedReply,
    };
    use std::sync::Arc;

    fn config() -> PipelineConfig {
        PipelineConfig {
            strong_model: ModelSpec::new("strong"),
            weak_model: ModelSpec::new("weak"),
            judge_model: ModelSpec::new("judge"),
        }
    }

    fn record(kind: DatasetKind) -> QaRecord {
        QaRecord {
            id: "r1".into(),
            question: "Did Aristotle use a laptop?".into(),
            gold_answer: match kind {
                DatasetKind::StrategyQa => "false".into(),
                DatasetKind::HotpotQa => "no".into(),
            },
            kind,
        }
    }

    fn script_for(
        library: &PromptLibrary,
        spec: &ModelSpec,
        prompt: &RenderedPrompt,
        response: &str,
    ) -> (String, ScriptedReply) {
        let _ = library;
        (
            request_digest(&CompletionRequest::new(spec, prompt)),
            ScriptedReply::Response(response.to_string()),
        )
    }

    #[test]
    fn autoreason_two_step_replay() {
        let library = PromptLibrary::builtin();
        let config = config();
        let record = record(DatasetKind::StrategyQa);

        let extraction = library
            .render_autoreason_extraction(&record.question)
            .unwrap();
        let traces = parse_rationales("- A?\n- B?").unwrap();
        let answering = library
            .render_final_answer(&record.question, &traces, record.kind)
            .unwrap();

        let backend = Arc::new(MockBackend::new(vec![
            script_for(&library, &config.strong_model, &extraction, "- A?\n- B?"),
            script_for(&library, &config.weak_model, &answering, "Answer: true"),
        ]));
        let gateway = Gateway::new(backend.clone(), None, RetryPolicy::immediate(1));
        let runner = StrategyRunner::new(&gateway, &library, &config);

        let trace = runner.run_autoreason(&record).unwrap();
        assert_eq!(
            trace.rationales.as_ref().unwrap().as_slice(),
            &["A?".to_string(), "B?".to_string()]
        );
        assert_eq!(trace.final_answer, FinalAnswer::Answer("true".into()));
        assert_eq!(trace.prompts_sent.len(), 2);
        assert_eq!(trace.raw_responses.len(), 2);

        // strong then weak, in order
        let log = backend.call_log();
        assert_eq!(
            log.iter().map(|c| c.model_id.as_str()).collect::<Vec<_>>(),
            vec!["strong", "weak"]
        );
    }

    #[test]
    fn autoreason_extraction_failure_skips_weak_model() {
        let library = PromptLibrary::builtin();
        let config = config();
        let record = record(DatasetKind::StrategyQa);
        let extraction = library
            .render_autoreason_extraction(&record.question)
            .unwrap();
        let backend = Arc::new(MockBackend::new(vec![script_for(
            &library,
            &config.strong_model,
            &extraction,
            "I cannot decompose this.",
        )]));
        let gateway = Gateway::new(backend.clone(), None, RetryPolicy::immediate(1));
        let runner = StrategyRunner::new(&gateway, &library, &config);

        let trace = runner.run_autoreason(&record).unwrap();
        assert_eq!(trace.final_answer, FinalAnswer::Unparseable);
        assert_eq!(trace.prompts_sent.len(), 1);
        assert_eq!(backend.calls_for_model("weak"), 0);
    }

    #[test]
    fn base_answers_directly() {
        let library = PromptLibrary::builtin();
        let config = config();
        let record = record(DatasetKind::StrategyQa);
        let prompt = library.render_base(record.kind, &record.question).unwrap();
        let backend = Arc::new(MockBackend::new(vec![script_for(
            &library,
            &config.weak_model,
            &prompt,
            "true",
        )]));
        let gateway = Gateway::new(backend.clone(), None, RetryPolicy::immediate(1));
        let runner = StrategyRunner::new(&gateway, &library, &config);

        let trace = runner.run_base(&record).unwrap();
        assert_eq!(trace.final_answer, FinalAnswer::Answer("true".into()));
        assert!(trace.rationales.is_none());
        assert_eq!(backend.calls_for_model("strong"), 0);
    }

    #[test]
    fn base_normalizes_hotpot_answer() {
        let library = PromptLibrary::builtin();
        let config = config();
        let record = record(DatasetKind::HotpotQa);
        let prompt = library.render_base(record.kind, &record.question).unwrap();
        let backend = Arc::new(MockBackend::new(vec![script_for(
            &library,
            &config.weak_model,
            &prompt,
            "I think <Paris>",
        )]));
        let gateway = Gateway::new(backend, None, RetryPolicy::immediate(1));
        let runner = StrategyRunner::new(&gateway, &library, &config);
        let trace = runner.run_base(&record).unwrap();
        assert_eq!(trace.final_answer, FinalAnswer::Answer("Paris".into()));
    }

    #[test]
    fn cot_answer_line_extraction() {
        let library = PromptLibrary::builtin();
        let config = config();
        let record = record(DatasetKind::StrategyQa);
        let prompt = library.render_cot(record.kind, &record.question).unwrap();
        let backend = Arc::new(MockBackend::new(vec![script_for(
            &library,
            &config.weak_model,
            &prompt,
            "Aristotle died long before laptops.\nAnswer: no",
        )]));
        let gateway = Gateway::new(backend, None, RetryPolicy::immediate(1));
        let runner = StrategyRunner::new(&gateway, &library, &config);
        let trace = runner.run_cot(&record).unwrap();
        assert_eq!(trace.final_answer, FinalAnswer::Answer("false".into()));
        assert_eq!(trace.prompts_sent.len(), 1);
    }

    #[test]
    fn cot_bare_answer_fallback() {
        assert_eq!(extract_answer_line("yes"), "yes");
    }

    #[test]
    fn cot_last_answer_line_wins() {
        let text = "Answer: yes\nwait, reconsidering\nAnswer: no";
        assert_eq!(extract_answer_line(text), "no");
    }

    #[test]
    fn dispatch_matches_direct_call() {
        let library = PromptLibrary::builtin();
        let config = config();
        let record = record(DatasetKind::StrategyQa);
        let prompt = library.render_base(record.kind, &record.question).unwrap();
        let script = script_for(&library, &config.weak_model, &prompt, "false");
        let make_gateway = |entries: Vec<(String, ScriptedReply)>| {
            Gateway::new(
                Arc::new(MockBackend::new(entries)),
                None,
                RetryPolicy::immediate(1),
            )
        };
        let gw1 = make_gateway(vec![script.clone()]);
        let gw2 = make_gateway(vec![script]);
        let direct = StrategyRunner::new(&gw1, &library, &config)
            .run_base(&record)
            .unwrap();
        let dispatched = StrategyRunner::new(&gw2, &library, &config)
            .run_strategy(Strategy::Base, &record)
            .unwrap();
        assert_eq!(direct, dispatched);
    }
}
