//! Iterative parse-check-revise loop: a parser model proposes a tree, a
//! validity checker and a faithfulness checker report problems, and the
//! parser is asked again with that feedback.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError, CompletionRequest};
use crate::faithfulness::{check_faithfulness, FaithfulnessError, FaithfulnessReport, UnfaithfulKind};
use crate::linearize::{decode_payload, Strategy};
use crate::prompting::{
    build_checker_prompt, default_exemplars, fill, joined, CheckerRole, ExemplarKind, PromptContext,
    PromptError, PromptMode,
};
use crate::tree::{parse_bracketed, render_bracketed, Token};
use crate::validity::{check_validity, tree_region, InvalidKind, ValidityError, ValidityReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckerMode {
    #[default]
    RuleBased,
    LlmBased,
}

impl std::str::FromStr for CheckerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "rule" | "rule_based" | "rules" => Ok(CheckerMode::RuleBased),
            "llm" | "llm_based" | "model" => Ok(CheckerMode::LlmBased),
            other => Err(format!("unknown checker mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PmcConfig {
    pub max_rounds: usize,
    pub checker_mode: CheckerMode,
    pub stop_on_clean: bool,
}

impl Default for PmcConfig {
    fn default() -> Self {
        PmcConfig {
            max_rounds: 3,
            checker_mode: CheckerMode::RuleBased,
            stop_on_clean: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: usize,
    pub prompt: String,
    pub raw_output: String,
    pub validity: ValidityReport,
    pub faithfulness: FaithfulnessReport,
}

impl RoundTrace {
    pub fn is_clean(&self) -> bool {
        self.validity.valid && self.faithfulness.faithful
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PmcSession {
    pub sentence: Vec<String>,
    pub rounds: Vec<RoundTrace>,
    /// The last clean output, or the last output when no round was clean.
    pub final_output: Option<String>,
    /// `final_output` as a bracketed tree; `None` when it does not parse.
    pub final_tree: Option<String>,
    pub converged: bool,
}

#[derive(Debug, Error)]
pub enum PmcError {
    #[error("max_rounds must be at least 1")]
    NoRounds,
    #[error("the parsing loop takes a plain zero- or few-shot prompt mode")]
    UnsupportedMode,
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("backend failed in round {}: {source}", .partial.rounds.len() + 1)]
    Backend {
        source: BackendError,
        partial: Box<PmcSession>,
    },
}

/// Turns raw model output into bracketed text. Non-bracket strategies are
/// decoded first; `Err` carries the decoding failure.
pub fn to_bracketed(raw: &str, strategy: Strategy) -> Result<String, String> {
    match strategy {
        Strategy::Bracket => Ok(raw.to_string()),
        _ => decode_payload(raw.trim(), strategy)
            .map(|t| render_bracketed(&t))
            .map_err(|e| e.to_string()),
    }
}

/// Reports for an output that could not be decoded at all.
pub fn undecodable_reports(reason: &str) -> (ValidityReport, FaithfulnessReport) {
    (
        ValidityReport::from_errors(vec![ValidityError::new(
            InvalidKind::Other,
            None,
            format!("The output could not be decoded: {reason}"),
        )]),
        FaithfulnessReport::from_errors(vec![FaithfulnessError {
            kind: UnfaithfulKind::PredictionFailure,
            detail: crate::faithfulness::FAILURE_MESSAGE.to_string(),
            positions: Vec::new(),
        }]),
    )
}

pub fn rule_based_feedback(tree_raw: &str, sentence: &[Token]) -> (ValidityReport, FaithfulnessReport) {
    (check_validity(tree_raw), check_faithfulness(tree_raw, sentence))
}

fn json_object(reply: &str) -> Option<&str> {
    let start = reply.find('{')?;
    let end = reply.rfind('}')?;
    (start < end).then(|| &reply[start..=end])
}

fn ask<T: serde::de::DeserializeOwned>(backend: &dyn Backend, prompt: String) -> Option<T> {
    let reply = backend.complete(&CompletionRequest::new(prompt)).ok()?;
    serde_json::from_str(json_object(&reply.text)?).ok()
}

/// Validity and faithfulness reports for one output. In LLM mode each
/// checker is a model prompt; a reply that fails to parse (or a missing
/// backend) falls back to the rule-based report.
pub fn checker_feedback(
    tree_raw: &str,
    sentence: &[Token],
    mode: CheckerMode,
    backend: Option<&dyn Backend>,
    ctx: &PromptContext,
) -> (ValidityReport, FaithfulnessReport) {
    let (rule_v, rule_f) = rule_based_feedback(tree_raw, sentence);
    let backend = match (mode, backend) {
        (CheckerMode::LlmBased, Some(b)) => b,
        _ => return (rule_v, rule_f),
    };
    let text = joined(sentence);
    let demos = |kind| -> Vec<_> {
        let pool = if ctx.exemplars.is_empty() {
            default_exemplars()
        } else {
            ctx.exemplars.clone()
        };
        pool.into_iter().filter(|e| e.kind == kind).collect()
    };
    let prompt = |role, kind| build_checker_prompt(role, tree_raw, &text, &demos(kind), &ctx.templates).ok();
    let validity = prompt(CheckerRole::Validity, ExemplarKind::Invalid)
        .and_then(|p| ask::<ValidityReport>(backend, p))
        .map(|r| ValidityReport::from_errors(r.errors))
        .unwrap_or(rule_v);
    let faithfulness = prompt(CheckerRole::Faithfulness, ExemplarKind::Unfaithful)
        .and_then(|p| ask::<FaithfulnessReport>(backend, p))
        .map(|r| FaithfulnessReport::from_errors(r.errors))
        .unwrap_or(rule_f);
    (validity, faithfulness)
}

fn bullets(lines: impl IntoIterator<Item = String>) -> String {
    let lines: Vec<String> = lines.into_iter().map(|l| format!("- {l}")).collect();
    if lines.is_empty() {
        "- No problems found.".to_string()
    } else {
        lines.join("\n")
    }
}

/// The feedback section embedded in a round's prompt.
pub fn feedback_text(ctx: &PromptContext, previous: Option<&RoundTrace>) -> Result<String, PromptError> {
    let t = &ctx.templates;
    let Some(prev) = previous else {
        return fill(
            "feedback",
            &t.feedback,
            &[("validity_feedback", "(none)"), ("faithfulness_feedback", "(none)")],
        );
    };
    let v = bullets(prev.validity.errors.iter().map(|e| e.message.clone()));
    let f = bullets(prev.faithfulness.errors.iter().map(|e| e.detail.clone()));
    let feedback = fill(
        "feedback",
        &t.feedback,
        &[("validity_feedback", &v), ("faithfulness_feedback", &f)],
    )?;
    fill(
        "revision",
        &t.revision,
        &[
            ("previous_output", prev.raw_output.trim_end()),
            ("feedback", feedback.trim_end()),
        ],
    )
}

/// Runs the loop for one preprocessed sentence. `checker` is only used in
/// LLM checker mode.
pub fn run_pmc(
    sentence: &[Token],
    ctx: &PromptContext,
    mode: PromptMode,
    parser: &dyn Backend,
    checker: Option<&dyn Backend>,
    config: &PmcConfig,
) -> Result<PmcSession, PmcError> {
    if config.max_rounds == 0 {
        return Err(PmcError::NoRounds);
    }
    if mode.les {
        return Err(PmcError::UnsupportedMode);
    }
    let base = ctx.spec(mode, sentence)?;
    let mut session = PmcSession {
        sentence: sentence.iter().map(|t| t.surface.clone()).collect(),
        rounds: Vec::new(),
        final_output: None,
        final_tree: None,
        converged: false,
    };
    let mut last_clean: Option<usize> = None;
    for round in 1..=config.max_rounds {
        let mut spec = base.clone();
        spec.feedback = Some(feedback_text(ctx, session.rounds.last())?);
        let prompt = spec.render();
        let raw = match parser.complete(&CompletionRequest::new(prompt.clone())) {
            Ok(r) => r.text,
            Err(source) => {
                finish(&mut session, last_clean, ctx.strategy);
                return Err(PmcError::Backend {
                    source,
                    partial: Box::new(session),
                });
            }
        };
        let (validity, faithfulness) = match to_bracketed(&raw, ctx.strategy) {
            Ok(text) => checker_feedback(&text, sentence, config.checker_mode, checker, ctx),
            Err(reason) => undecodable_reports(&reason),
        };
        let trace = RoundTrace {
            round,
            prompt,
            raw_output: raw,
            validity,
            faithfulness,
        };
        let clean = trace.is_clean();
        session.rounds.push(trace);
        if clean {
            last_clean = Some(round - 1);
            if config.stop_on_clean {
                break;
            }
        }
    }
    finish(&mut session, last_clean, ctx.strategy);
    Ok(session)
}

fn finish(session: &mut PmcSession, last_clean: Option<usize>, strategy: Strategy) {
    session.converged = session.rounds.last().is_some_and(RoundTrace::is_clean);
    let chosen = last_clean.or(session.rounds.len().checked_sub(1));
    session.final_output = chosen.map(|i| session.rounds[i].raw_output.clone());
    session.final_tree = session
        .final_output
        .as_deref()
        .and_then(|raw| to_bracketed(raw, strategy).ok())
        .and_then(|text| {
            let (_, region) = tree_region(&text)?;
            parse_bracketed(region).ok()
        })
        .map(|t| render_bracketed(&t));
}
