//! PARSEVAL-style labeled bracket scoring with an explicit policy for
//! invalid predictions, valid-only vs overall F1, and relative F1 reduction.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::faithfulness::check_faithfulness;
use crate::tree::{parse_bracketed, Label, LabeledSpan, Node, Tree};
use crate::validity::{check_validity, tree_region};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("cannot score an empty corpus")]
    EmptyCorpus,
    #[error("division by zero: the in-domain F1 is 0")]
    DivisionByZero,
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What an invalid prediction contributes to corpus totals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidPolicy {
    /// Count the sentence with no predicted and no matched brackets; its
    /// gold brackets still count toward recall.
    #[default]
    ZeroCounts,
    /// Leave the sentence out of the totals, as standard evalb does.
    SkipInvalid,
}

impl std::str::FromStr for InvalidPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "zero" | "zero_counts" | "zerocounts" => Ok(InvalidPolicy::ZeroCounts),
            "skip" | "skip_invalid" | "skipinvalid" => Ok(InvalidPolicy::SkipInvalid),
            other => Err(format!("unknown invalid policy '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Constituents with these labels are not counted (their children are).
    pub delete_labels: BTreeSet<String>,
    /// Words under these tags are removed before span positions are computed.
    pub punctuation_pos: BTreeSet<String>,
    pub invalid_policy: InvalidPolicy,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            delete_labels: ["TOP", "ROOT", "-NONE-"].map(String::from).into(),
            punctuation_pos: [",", ":", "``", "''", "."].map(String::from).into(),
            invalid_policy: InvalidPolicy::ZeroCounts,
        }
    }
}

impl EvalConfig {
    /// Reads `KEY=value` (or evalb-style `KEY value`) lines. Keys:
    /// `DELETE_LABEL`, `PUNCT_POS` (both repeatable, one value per line;
    /// the first occurrence replaces the default set) and `INVALID_POLICY`.
    /// Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<EvalConfig, ScoreError> {
        let mut config = EvalConfig::default();
        let mut seen_delete = false;
        let mut seen_punct = false;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = match line.split_once('=') {
                Some((k, v)) if !k.trim().is_empty() && !k.contains(char::is_whitespace) => {
                    (k.trim(), v.trim())
                }
                _ => line
                    .split_once(char::is_whitespace)
                    .map(|(k, v)| (k, v.trim()))
                    .ok_or_else(|| ScoreError::Config {
                        line: i + 1,
                        message: format!("expected KEY=value, got '{line}'"),
                    })?,
            };
            if value.is_empty() {
                return Err(ScoreError::Config {
                    line: i + 1,
                    message: format!("{key} has no value"),
                });
            }
            match key.to_ascii_uppercase().as_str() {
                "DELETE_LABEL" => {
                    if !seen_delete {
                        config.delete_labels.clear();
                        seen_delete = true;
                    }
                    config.delete_labels.insert(value.to_string());
                }
                "PUNCT_POS" => {
                    if !seen_punct {
                        config.punctuation_pos.clear();
                        seen_punct = true;
                    }
                    config.punctuation_pos.insert(value.to_string());
                }
                "INVALID_POLICY" => {
                    config.invalid_policy = value.parse().map_err(|message| ScoreError::Config {
                        line: i + 1,
                        message,
                    })?;
                }
                other => {
                    return Err(ScoreError::Config {
                        line: i + 1,
                        message: format!("unknown key '{other}'"),
                    })
                }
            }
        }
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<EvalConfig, ScoreError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Per-sentence bracket counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SentenceCounts {
    pub matched: usize,
    pub predicted: usize,
    pub gold: usize,
    pub invalid: bool,
    pub unfaithful: bool,
}

impl SentenceCounts {
    pub fn f1(&self) -> f64 {
        let (p, r) = (
            ratio(self.matched, self.predicted),
            ratio(self.matched, self.gold),
        );
        f1(p, r)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        if num == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        num as f64 / den as f64
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Spans counted by the scorer: preterminals excluded, deleted labels
/// skipped, punctuation words removed from the position space, and spans
/// left empty by that removal dropped.
pub fn eval_spans(tree: &Tree, config: &EvalConfig) -> Vec<LabeledSpan> {
    fn go(
        node: &Node,
        config: &EvalConfig,
        next: &mut usize,
        out: &mut Vec<LabeledSpan>,
    ) -> Option<(usize, usize)> {
        match node {
            Node::Word { tag, .. } => {
                if config.punctuation_pos.contains(tag.as_str()) {
                    None
                } else {
                    *next += 1;
                    Some((*next - 1, *next))
                }
            }
            Node::Phrase { label, children } => {
                let slot = out.len();
                let mut range: Option<(usize, usize)> = None;
                for child in children {
                    if let Some((s, e)) = go(child, config, next, out) {
                        range = Some(range.map_or((s, e), |(rs, _)| (rs, e)));
                    }
                }
                if let Some((start, end)) = range {
                    if !config.delete_labels.contains(label.as_str()) {
                        out.insert(
                            slot,
                            LabeledSpan {
                                label: label.clone(),
                                start,
                                end,
                            },
                        );
                    }
                }
                range
            }
        }
    }
    let mut out = Vec::new();
    go(tree.root(), config, &mut 0, &mut out);
    out
}

/// Size of the multiset intersection of two span lists.
pub fn matched_spans(gold: &[LabeledSpan], pred: &[LabeledSpan]) -> usize {
    let mut counts: HashMap<(&Label, usize, usize), usize> = HashMap::new();
    for s in gold {
        *counts.entry((&s.label, s.start, s.end)).or_default() += 1;
    }
    let mut matched = 0;
    for s in pred {
        if let Some(c) = counts.get_mut(&(&s.label, s.start, s.end)) {
            if *c > 0 {
                *c -= 1;
                matched += 1;
            }
        }
    }
    matched
}

/// Counts for a structurally valid prediction.
pub fn score_trees(gold: &Tree, pred: &Tree, config: &EvalConfig) -> SentenceCounts {
    let g = eval_spans(gold, config);
    let p = eval_spans(pred, config);
    SentenceCounts {
        matched: matched_spans(&g, &p),
        predicted: p.len(),
        gold: g.len(),
        invalid: false,
        unfaithful: gold.words() != pred.words(),
    }
}

/// Scores a raw bracketed prediction against its gold tree. Invalid
/// predictions get no predicted or matched brackets.
pub fn score_sentence(gold: &Tree, pred: &str, config: &EvalConfig) -> SentenceCounts {
    let unfaithful = !check_faithfulness(pred, &gold.tokens()).faithful;
    let parsed = check_validity(pred)
        .valid
        .then(|| tree_region(pred).and_then(|(_, r)| parse_bracketed(r).ok()))
        .flatten();
    match parsed {
        Some(tree) => SentenceCounts {
            unfaithful,
            ..score_trees(gold, &tree, config)
        },
        None => SentenceCounts {
            matched: 0,
            predicted: 0,
            gold: eval_spans(gold, config).len(),
            invalid: true,
            unfaithful,
        },
    }
}

/// Scores many (gold, prediction) pairs.
pub fn score_batch(
    pairs: &[(Tree, String)],
    config: &EvalConfig,
    exec: Execution,
) -> Vec<SentenceCounts> {
    exec.map(pairs, |(gold, pred)| score_sentence(gold, pred, config))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub sentences: usize,
    pub matched: usize,
    pub predicted: usize,
    pub gold: usize,
    /// Labeled precision, recall and F1 under the configured policy (0..1).
    pub lp: f64,
    pub lr: f64,
    pub f1: f64,
    /// Percentages of sentences.
    pub invalid_rate: f64,
    pub unfaithful_rate: f64,
    /// F1 over sentences with valid predictions only.
    pub valid_f1: f64,
    /// F1 over every sentence with invalid predictions counted as zero.
    pub overall_f1: f64,
    /// Mean of per-sentence F1, invalid sentences scoring 0.
    pub macro_f1: f64,
}

#[derive(Default)]
struct Totals {
    matched: usize,
    predicted: usize,
    gold: usize,
    sentences: usize,
}

impl Totals {
    fn add(&mut self, c: &SentenceCounts) {
        self.matched += c.matched;
        self.predicted += c.predicted;
        self.gold += c.gold;
        self.sentences += 1;
    }

    fn prf(&self) -> (f64, f64, f64) {
        let p = ratio(self.matched, self.predicted);
        let r = ratio(self.matched, self.gold);
        (p, r, f1(p, r))
    }
}

/// Micro-averaged corpus scores.
pub fn score_corpus(counts: &[SentenceCounts], config: &EvalConfig) -> Result<ScoreReport, ScoreError> {
    if counts.is_empty() {
        return Err(ScoreError::EmptyCorpus);
    }
    let mut all = Totals::default();
    let mut valid = Totals::default();
    let mut invalid = 0;
    let mut unfaithful = 0;
    for c in counts {
        let zeroed = if c.invalid {
            SentenceCounts {
                matched: 0,
                predicted: 0,
                ..*c
            }
        } else {
            *c
        };
        all.add(&zeroed);
        if c.invalid {
            invalid += 1;
        } else {
            valid.add(c);
        }
        if c.unfaithful {
            unfaithful += 1;
        }
    }
    let (_, _, overall_f1) = all.prf();
    let valid_f1 = if valid.sentences == 0 {
        0.0
    } else {
        valid.prf().2
    };
    let chosen = match config.invalid_policy {
        InvalidPolicy::ZeroCounts => &all,
        InvalidPolicy::SkipInvalid => &valid,
    };
    let (lp, lr, f) = if chosen.sentences == 0 {
        (0.0, 0.0, 0.0)
    } else {
        chosen.prf()
    };
    let n = counts.len() as f64;
    let macro_f1 = counts
        .iter()
        .map(|c| if c.invalid { 0.0 } else { c.f1() })
        .sum::<f64>()
        / n;
    Ok(ScoreReport {
        sentences: counts.len(),
        matched: chosen.matched,
        predicted: chosen.predicted,
        gold: chosen.gold,
        lp,
        lr,
        f1: f,
        invalid_rate: 100.0 * invalid as f64 / n,
        unfaithful_rate: 100.0 * unfaithful as f64 / n,
        valid_f1,
        overall_f1,
        macro_f1,
    })
}

/// Relative F1 reduction from in-domain to out-of-domain, in percent.
pub fn reduction_rate(f1_in_domain: f64, f1_out_avg: f64) -> Result<f64, ScoreError> {
    if f1_in_domain == 0.0 {
        return Err(ScoreError::DivisionByZero);
    }
    Ok(100.0 * (f1_in_domain - f1_out_avg) / f1_in_domain)
}

impl fmt::Display for ScoreReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows = [
            ("Sentences", format!("{}", self.sentences)),
            ("Matched brackets", format!("{}", self.matched)),
            ("Predicted brackets", format!("{}", self.predicted)),
            ("Gold brackets", format!("{}", self.gold)),
            ("Labeled precision", format!("{:.2}", 100.0 * self.lp)),
            ("Labeled recall", format!("{:.2}", 100.0 * self.lr)),
            ("F1", format!("{:.2}", 100.0 * self.f1)),
            ("Valid F1", format!("{:.2}", 100.0 * self.valid_f1)),
            ("Overall F1", format!("{:.2}", 100.0 * self.overall_f1)),
            ("Macro F1", format!("{:.2}", 100.0 * self.macro_f1)),
            ("Invalid rate (%)", format!("{:.2}", self.invalid_rate)),
            ("Unfaithful rate (%)", format!("{:.2}", self.unfaithful_rate)),
        ];
        for (name, value) in rows {
            writeln!(f, "{name:<22}{value:>10}")?;
        }
        Ok(())
    }
}
