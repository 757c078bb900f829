//! Faithfulness of predicted trees to the input sentence: over-generation
//! (with its repetition / continue-writing / other subkinds), word mismatch
//! and prediction failure, plus synonym-substitution sample generation.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::synth;
use crate::tree::{lex, Lexeme, Node, Token, Tree};
use crate::validity::{tree_region, CorruptError, Corruption};

/// Subkinds of over-generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverGenKind {
    Repetition,
    ContinueWriting,
    Other,
}

impl OverGenKind {
    pub fn name(self) -> &'static str {
        match self {
            OverGenKind::Repetition => "repetition",
            OverGenKind::ContinueWriting => "continue_writing",
            OverGenKind::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnfaithfulKind {
    OverGeneration(OverGenKind),
    WordMismatch,
    PredictionFailure,
}

impl UnfaithfulKind {
    pub fn name(self) -> &'static str {
        match self {
            UnfaithfulKind::OverGeneration(_) => "over_generation",
            UnfaithfulKind::WordMismatch => "word_mismatch",
            UnfaithfulKind::PredictionFailure => "prediction_failure",
        }
    }

    pub fn sub(self) -> Option<OverGenKind> {
        match self {
            UnfaithfulKind::OverGeneration(sub) => Some(sub),
            _ => None,
        }
    }
}

impl fmt::Display for UnfaithfulKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sub() {
            Some(sub) => write!(f, "{}/{}", self.name(), sub.name()),
            None => f.write_str(self.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "WireError", into = "WireError")]
pub struct FaithfulnessError {
    pub kind: UnfaithfulKind,
    pub detail: String,
    pub positions: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct WireError {
    kind: String,
    #[serde(default)]
    sub: Option<OverGenKind>,
    detail: String,
    #[serde(default)]
    positions: Vec<usize>,
}

impl From<FaithfulnessError> for WireError {
    fn from(e: FaithfulnessError) -> Self {
        WireError {
            kind: e.kind.name().to_string(),
            sub: e.kind.sub(),
            detail: e.detail,
            positions: e.positions,
        }
    }
}

impl TryFrom<WireError> for FaithfulnessError {
    type Error = String;

    fn try_from(w: WireError) -> Result<Self, Self::Error> {
        let kind = match (w.kind.as_str(), w.sub) {
            ("over_generation", Some(sub)) => UnfaithfulKind::OverGeneration(sub),
            ("over_generation", None) => UnfaithfulKind::OverGeneration(OverGenKind::Other),
            ("word_mismatch", None) => UnfaithfulKind::WordMismatch,
            ("prediction_failure", None) => UnfaithfulKind::PredictionFailure,
            (k, Some(_)) if k != "over_generation" => {
                return Err(format!("'{k}' errors take no subkind"))
            }
            (k, _) => return Err(format!("unknown unfaithful kind '{k}'")),
        };
        Ok(FaithfulnessError {
            kind,
            detail: w.detail,
            positions: w.positions,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaithfulnessReport {
    pub faithful: bool,
    pub errors: Vec<FaithfulnessError>,
}

impl FaithfulnessReport {
    pub fn from_errors(errors: Vec<FaithfulnessError>) -> Self {
        FaithfulnessReport {
            faithful: errors.is_empty(),
            errors,
        }
    }

    pub fn clean() -> Self {
        Self::from_errors(Vec::new())
    }

    pub fn primary_kind(&self) -> Option<UnfaithfulKind> {
        self.errors.first().map(|e| e.kind)
    }
}

pub fn mismatch_message(predicted: &str, position: usize, gold: &[String]) -> String {
    if gold.iter().any(|g| g == predicted) {
        format!(
            "'{predicted}' appears at position {position}, where the original input sentence has '{}'.",
            gold[position]
        )
    } else {
        format!("'{predicted}' does not exist in the original input sentence.")
    }
}

pub const FAILURE_MESSAGE: &str = "The output contains no constituency tree for the input sentence.";

/// Words of a raw prediction: every atom that is not a label (the atom right
/// after an opening bracket). `None` when the output holds no tree or no
/// words at all.
pub fn predicted_words(raw: &str) -> Option<Vec<String>> {
    let (_, region) = tree_region(raw)?;
    let lexemes = lex(region);
    let words: Vec<String> = lexemes
        .iter()
        .enumerate()
        .filter_map(|(i, lx)| match lx {
            Lexeme::Atom(_, a) if !matches!(lexemes.get(i.wrapping_sub(1)), Some(Lexeme::Open(_))) => {
                Some(a.to_string())
            }
            _ => None,
        })
        .collect();
    (!words.is_empty()).then_some(words)
}

pub fn check_faithfulness(raw: &str, sentence: &[Token]) -> FaithfulnessReport {
    let gold: Vec<String> = sentence.iter().map(|t| t.surface.clone()).collect();
    match predicted_words(raw) {
        Some(pred) => compare_words(&pred, &gold),
        None => FaithfulnessReport::from_errors(vec![FaithfulnessError {
            kind: UnfaithfulKind::PredictionFailure,
            detail: FAILURE_MESSAGE.to_string(),
            positions: Vec::new(),
        }]),
    }
}

/// Compares a predicted yield with the sentence. Length is checked first, so
/// a prediction that both changes length and alters words counts as
/// over-generation only.
pub fn compare_words(pred: &[String], gold: &[String]) -> FaithfulnessReport {
    if pred.len() != gold.len() {
        return FaithfulnessReport::from_errors(vec![overgeneration_error(pred, gold)]);
    }
    let errors = pred
        .iter()
        .zip(gold)
        .enumerate()
        .filter(|(_, (p, g))| p != g)
        .map(|(i, (p, _))| FaithfulnessError {
            kind: UnfaithfulKind::WordMismatch,
            detail: mismatch_message(p, i, gold),
            positions: vec![i],
        })
        .collect();
    FaithfulnessReport::from_errors(errors)
}

fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    needle.is_empty() || haystack.windows(needle.len()).any(|w| w == needle)
}

/// Smallest repeated block: a run of at least three words that `pred`
/// emits twice in a row and `gold` never does. Returns (start, block length).
pub fn find_repetition(pred: &[String], gold: &[String]) -> Option<(usize, usize)> {
    for len in 3..=pred.len() / 2 {
        for start in 0..=pred.len() - 2 * len {
            let first = &pred[start..start + len];
            if first == &pred[start + len..start + 2 * len]
                && !contains_run(gold, &pred[start..start + 2 * len])
            {
                return Some((start, len));
            }
        }
    }
    None
}

pub fn classify_overgeneration(pred: &[String], gold: &[String]) -> OverGenKind {
    if find_repetition(pred, gold).is_some() {
        OverGenKind::Repetition
    } else if pred.len() > gold.len() && pred.starts_with(gold) {
        OverGenKind::ContinueWriting
    } else {
        OverGenKind::Other
    }
}

fn overgeneration_error(pred: &[String], gold: &[String]) -> FaithfulnessError {
    let sub = classify_overgeneration(pred, gold);
    let (detail, positions) = match sub {
        OverGenKind::Repetition => {
            let (start, len) = find_repetition(pred, gold).expect("classified as repetition");
            (
                format!(
                    "The phrase '{}' is generated twice in a row, which the original input sentence does not do.",
                    pred[start..start + len].join(" ")
                ),
                (start + len..start + 2 * len).collect(),
            )
        }
        OverGenKind::ContinueWriting => (
            format!(
                "The tree continues past the end of the original input sentence with '{}'.",
                pred[gold.len()..].join(" ")
            ),
            (gold.len()..pred.len()).collect(),
        ),
        OverGenKind::Other => {
            let first_diff = pred
                .iter()
                .zip(gold)
                .position(|(p, g)| p != g)
                .unwrap_or(pred.len().min(gold.len()));
            (
                format!(
                    "The tree contains {} words but the original input sentence contains {}.",
                    pred.len(),
                    gold.len()
                ),
                vec![first_diff],
            )
        }
    };
    FaithfulnessError {
        kind: UnfaithfulKind::OverGeneration(sub),
        detail,
        positions,
    }
}

// ---------------------------------------------------------------------------
// Substitution corruption

/// Word substitutions used to build unfaithful samples.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubstitutionTable(BTreeMap<String, String>);

const BUILTIN_PAIRS: &[(&str, &str)] = &[
    ("located", "situated"),
    ("big", "large"),
    ("large", "big"),
    ("small", "little"),
    ("little", "small"),
    ("begin", "start"),
    ("start", "begin"),
    ("buy", "purchase"),
    ("sell", "vend"),
    ("rise", "climb"),
    ("fell", "dropped"),
    ("said", "stated"),
    ("says", "states"),
    ("company", "firm"),
    ("firm", "company"),
    ("market", "exchange"),
    ("orders", "requests"),
    ("huge", "enormous"),
    ("quickly", "rapidly"),
    ("old", "aged"),
    ("new", "novel"),
    ("house", "home"),
    ("home", "house"),
    ("cat", "kitten"),
    ("dog", "puppy"),
    ("runs", "sprints"),
    ("see", "observe"),
    ("very", "really"),
    ("happy", "glad"),
    ("sad", "unhappy"),
    ("price", "cost"),
    ("prices", "costs"),
    ("shares", "stocks"),
    ("profit", "gain"),
    ("year", "annum"),
    ("the", "a"),
    ("a", "the"),
    ("in", "inside"),
    ("and", "plus"),
    ("of", "from"),
    ("with", "alongside"),
    ("is", "was"),
    ("not", "never"),
    ("84", "81"),
    ("81", "84"),
    ("1", "7"),
    ("2", "3"),
    ("10", "100"),
    ("1989", "1998"),
    ("50", "15"),
];

impl SubstitutionTable {
    pub fn new(pairs: impl IntoIterator<Item = (String, String)>) -> Self {
        SubstitutionTable(pairs.into_iter().filter(|(a, b)| a != b).collect())
    }

    pub fn builtin() -> Self {
        Self::new(
            BUILTIN_PAIRS
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string())),
        )
    }

    pub fn get(&self, word: &str) -> Option<&str> {
        self.0.get(word).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// An unfaithful sample: one word replaced through the table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Substitution {
    #[serde(flatten)]
    pub sample: Corruption,
    pub position: usize,
    pub original: String,
    pub replacement: String,
}

pub fn corrupt_faithfulness(
    tree: &Tree,
    table: &SubstitutionTable,
    seed: u64,
) -> Result<Substitution, CorruptError> {
    let words = tree.words();
    let candidates: Vec<usize> = words
        .iter()
        .enumerate()
        .filter(|(_, w)| table.get(w).is_some())
        .map(|(i, _)| i)
        .collect();
    let mut rng = synth::rng(seed);
    let &position = candidates
        .choose(&mut rng)
        .ok_or_else(|| CorruptError::Inapplicable("no word of the tree is in the table".into()))?;
    let replacement = table.get(words[position]).expect("candidate").to_string();
    let root = replace_leaf(tree.root(), &mut 0, position, &replacement);
    let gold: Vec<String> = words.iter().map(|w| w.to_string()).collect();
    Ok(Substitution {
        sample: Corruption {
            text: root.to_string(),
            annotation: mismatch_message(&replacement, position, &gold),
        },
        position,
        original: words[position].to_string(),
        replacement,
    })
}

fn replace_leaf(node: &Node, next: &mut usize, target: usize, word: &str) -> Node {
    match node {
        Node::Word { tag, word: w } => {
            let i = *next;
            *next += 1;
            Node::word(tag.clone(), if i == target { word } else { w.as_str() })
        }
        Node::Phrase { label, children } => Node::phrase(
            label.clone(),
            children
                .iter()
                .map(|c| replace_leaf(c, next, target, word))
                .collect(),
        ),
    }
}
