//! Structural validity of predicted trees: detection, classification into
//! the four invalid-tree kinds, and rule-based generation of invalid samples.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::synth;
use crate::tree::{first_unmatched_bracket, lex, Lexeme, Node, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidKind {
    MoreThanOneWord,
    MissingWord,
    BracketUnmatched,
    Other,
}

impl InvalidKind {
    pub const ALL: [InvalidKind; 4] = [
        InvalidKind::MoreThanOneWord,
        InvalidKind::MissingWord,
        InvalidKind::BracketUnmatched,
        InvalidKind::Other,
    ];

    /// Lower ranks win when several kinds apply.
    pub fn precedence(self) -> u8 {
        match self {
            InvalidKind::BracketUnmatched => 0,
            InvalidKind::MissingWord => 1,
            InvalidKind::MoreThanOneWord => 2,
            InvalidKind::Other => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            InvalidKind::MoreThanOneWord => "more_than_one_word",
            InvalidKind::MissingWord => "missing_word",
            InvalidKind::BracketUnmatched => "bracket_unmatched",
            InvalidKind::Other => "other",
        }
    }
}

impl fmt::Display for InvalidKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for InvalidKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        InvalidKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| format!("unknown invalid-tree kind '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityError {
    pub kind: InvalidKind,
    /// Offending constituent text, or `offset N` for bracket errors. Absent
    /// only for `Other` errors that have no position.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
    pub message: String,
    #[serde(skip)]
    offset: usize,
}

impl ValidityError {
    pub fn new(kind: InvalidKind, location: Option<String>, message: String) -> Self {
        ValidityError {
            kind,
            location,
            message,
            offset: 0,
        }
    }

    fn at(kind: InvalidKind, offset: usize, location: Option<String>, message: String) -> Self {
        ValidityError {
            kind,
            location,
            message,
            offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub valid: bool,
    pub errors: Vec<ValidityError>,
}

impl ValidityReport {
    pub fn from_errors(mut errors: Vec<ValidityError>) -> Self {
        errors.sort_by_key(|e| (e.kind.precedence(), e.offset));
        ValidityReport {
            valid: errors.is_empty(),
            errors,
        }
    }

    pub fn clean() -> Self {
        Self::from_errors(Vec::new())
    }

    /// The kind that classifies the whole output, by precedence.
    pub fn primary_kind(&self) -> Option<InvalidKind> {
        self.errors.first().map(|e| e.kind)
    }
}

pub fn missing_word_message(label: &str) -> String {
    format!("The constituent ({label}) lacks a word.")
}

pub fn more_than_one_word_message(label: &str, words: &[&str]) -> String {
    format!(
        "The constituent ({label} {}) contains more than one word.",
        words.join(" ")
    )
}

pub fn bracket_message(opens: usize, closes: usize, offset: usize) -> String {
    if opens != closes {
        format!(
            "The brackets are unmatched: the tree has {opens} opening and {closes} closing brackets."
        )
    } else {
        format!("The closing bracket at offset {offset} has no matching opening bracket.")
    }
}

pub const NO_TREE_MESSAGE: &str = "The output does not contain a constituency tree.";

/// The part of a raw model output that holds the tree: from the first `(`
/// to the last `)` (or to the end when no `)` follows). Returns the byte
/// offset of the region within `raw`.
pub fn tree_region(raw: &str) -> Option<(usize, &str)> {
    let start = raw.find('(')?;
    let end = raw[start..]
        .rfind(')')
        .map_or(raw.len(), |i| start + i + 1);
    Some((start, &raw[start..end]))
}

/// Classifies every structural problem in a predicted tree.
///
/// Bracket balance is checked over the whole tree region; word-level
/// constituents are checked on innermost bracket groups, which stay
/// reliable even when the global balance is off; the remaining structural
/// problems are only diagnosed on balanced text.
pub fn check_validity(raw: &str) -> ValidityReport {
    let Some((base, region)) = tree_region(raw) else {
        return ValidityReport::from_errors(vec![ValidityError::new(
            InvalidKind::Other,
            None,
            NO_TREE_MESSAGE.to_string(),
        )]);
    };
    let lexemes = lex(region);
    let mut errors = Vec::new();

    let opens = lexemes
        .iter()
        .filter(|l| matches!(l, Lexeme::Open(_)))
        .count();
    let closes = lexemes
        .iter()
        .filter(|l| matches!(l, Lexeme::Close(_)))
        .count();
    let unmatched = first_unmatched_bracket(&lexemes);
    if let Some(offset) = unmatched {
        errors.push(ValidityError::at(
            InvalidKind::BracketUnmatched,
            base + offset,
            Some(format!("offset {}", base + offset)),
            bracket_message(opens, closes, base + offset),
        ));
    }

    for (i, lx) in lexemes.iter().enumerate() {
        let Lexeme::Open(open) = *lx else { continue };
        let atoms: Vec<&str> = lexemes[i + 1..]
            .iter()
            .map_while(|l| match l {
                Lexeme::Atom(_, a) => Some(*a),
                _ => None,
            })
            .collect();
        let Some(Lexeme::Close(_)) = lexemes.get(i + 1 + atoms.len()) else {
            continue;
        };
        match atoms.split_first() {
            None => errors.push(ValidityError::at(
                InvalidKind::Other,
                base + open,
                Some("()".to_string()),
                "An empty pair of brackets has neither a label nor a word.".to_string(),
            )),
            Some((label, [])) => errors.push(ValidityError::at(
                InvalidKind::MissingWord,
                base + open,
                Some(format!("({label} )")),
                missing_word_message(label),
            )),
            Some((_, [_])) => {}
            Some((label, words)) => errors.push(ValidityError::at(
                InvalidKind::MoreThanOneWord,
                base + open,
                Some(format!("({label} {})", words.join(" "))),
                more_than_one_word_message(label, words),
            )),
        }
    }

    if unmatched.is_none() {
        structural_errors(&lexemes, base, &mut errors);
    }
    ValidityReport::from_errors(errors)
}

enum Loose<'a> {
    Node {
        open: usize,
        label: Option<&'a str>,
        children: Vec<Loose<'a>>,
    },
    Word(usize, &'a str),
}

fn loose_forest<'a>(lexemes: &[Lexeme<'a>]) -> Vec<Loose<'a>> {
    // Balanced input is guaranteed by the caller.
    let mut stack: Vec<(usize, Option<&'a str>, Vec<Loose<'a>>)> = Vec::new();
    let mut top: Vec<Loose<'a>> = Vec::new();
    for (i, lx) in lexemes.iter().enumerate() {
        match *lx {
            Lexeme::Open(o) => stack.push((o, None, Vec::new())),
            Lexeme::Atom(o, a) => {
                let labeled_here = matches!(lexemes.get(i.wrapping_sub(1)), Some(Lexeme::Open(_)));
                match stack.last_mut() {
                    Some(frame) if labeled_here && frame.1.is_none() && frame.2.is_empty() => {
                        frame.1 = Some(a)
                    }
                    Some(frame) => frame.2.push(Loose::Word(o, a)),
                    None => top.push(Loose::Word(o, a)),
                }
            }
            Lexeme::Close(_) => {
                let (open, label, children) = stack.pop().expect("balanced");
                let node = Loose::Node {
                    open,
                    label,
                    children,
                };
                match stack.last_mut() {
                    Some(frame) => frame.2.push(node),
                    None => top.push(node),
                }
            }
        }
    }
    top
}

fn structural_errors(lexemes: &[Lexeme<'_>], base: usize, errors: &mut Vec<ValidityError>) {
    let forest = loose_forest(lexemes);
    let roots: Vec<&Loose> = forest
        .iter()
        .filter(|n| matches!(n, Loose::Node { .. }))
        .collect();
    if roots.len() > 1 {
        errors.push(ValidityError::new(
            InvalidKind::Other,
            None,
            format!("The output contains {} trees instead of one.", roots.len()),
        ));
    }
    let Some(mut root) = roots.first().copied() else {
        return;
    };
    // An unlabeled wrapper around a single constituent is transparent.
    if let Loose::Node {
        label: None,
        children,
        ..
    } = root
    {
        if let [only @ Loose::Node { .. }] = children.as_slice() {
            root = only;
        }
    }
    if let Loose::Node { children, .. } = root {
        if !children.iter().any(|c| matches!(c, Loose::Node { .. })) && children.len() == 1 {
            errors.push(ValidityError::new(
                InvalidKind::Other,
                None,
                "The output has no phrase-level root constituent.".to_string(),
            ));
        }
    }
    walk_structure(root, base, errors);
}

fn walk_structure(node: &Loose<'_>, base: usize, errors: &mut Vec<ValidityError>) {
    let Loose::Node {
        open,
        label,
        children,
    } = node
    else {
        return;
    };
    let has_subnodes = children.iter().any(|c| matches!(c, Loose::Node { .. }));
    if label.is_none() && has_subnodes {
        errors.push(ValidityError::at(
            InvalidKind::Other,
            base + open,
            Some(format!("offset {}", base + open)),
            format!("The constituent at offset {} has no label.", base + open),
        ));
    }
    if has_subnodes {
        for child in children {
            if let Loose::Word(o, w) = child {
                errors.push(ValidityError::at(
                    InvalidKind::Other,
                    base + o,
                    Some((*w).to_string()),
                    format!("The word '{w}' is not enclosed in a word-level constituent."),
                ));
            }
        }
    }
    children.iter().for_each(|c| walk_structure(c, base, errors));
}

// ---------------------------------------------------------------------------
// Rule-based corruption

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorruptError {
    #[error("corruption not applicable: {0}")]
    Inapplicable(String),
}

/// An erroneous sample with its gold annotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corruption {
    pub text: String,
    pub annotation: String,
}

/// Injects exactly one error of `kind` into the rendering of `tree`.
pub fn corrupt_validity(
    tree: &Tree,
    kind: InvalidKind,
    seed: u64,
) -> Result<Corruption, CorruptError> {
    let mut rng = synth::rng(seed);
    match kind {
        InvalidKind::Other => Err(CorruptError::Inapplicable(
            "'other' errors have no injection rule".to_string(),
        )),
        InvalidKind::MissingWord => {
            let target = rng.gen_range(0..tree.len());
            let mut label = String::new();
            let root = rewrite_leaves(tree.root(), &mut 0, &mut |i, tag, word| {
                if i == target {
                    label = tag.to_string();
                    Some(String::new())
                } else {
                    Some(word.to_string())
                }
            })
            .expect("root kept");
            Ok(Corruption {
                text: root.to_string(),
                annotation: missing_word_message(&label),
            })
        }
        InvalidKind::MoreThanOneWord => {
            if tree.len() < 2 {
                return Err(CorruptError::Inapplicable(
                    "merging words needs at least two leaves".to_string(),
                ));
            }
            let target = rng.gen_range(0..tree.len() - 1);
            let words = tree.words();
            let merged = format!("{} {}", words[target], words[target + 1]);
            let mut label = String::new();
            let root = rewrite_leaves(tree.root(), &mut 0, &mut |i, tag, word| {
                if i == target {
                    label = tag.to_string();
                    Some(merged.clone())
                } else if i == target + 1 {
                    None
                } else {
                    Some(word.to_string())
                }
            })
            .expect("root kept");
            Ok(Corruption {
                text: root.to_string(),
                annotation: more_than_one_word_message(
                    &label,
                    &[words[target], words[target + 1]],
                ),
            })
        }
        InvalidKind::BracketUnmatched => {
            let text = tree.to_string();
            let closes: Vec<usize> = text.match_indices(')').map(|(i, _)| i).collect();
            let drop = *closes.choose(&mut rng).expect("trees have brackets");
            let mut out = String::with_capacity(text.len());
            out.push_str(&text[..drop]);
            out.push_str(&text[drop + 1..]);
            let opens = closes.len();
            Ok(Corruption {
                text: out,
                annotation: bracket_message(opens, opens - 1, 0),
            })
        }
    }
}

/// Rebuilds `node`, letting `f` replace or delete each leaf's word.
/// Phrases left without children are pruned.
fn rewrite_leaves(
    node: &Node,
    next: &mut usize,
    f: &mut dyn FnMut(usize, &str, &str) -> Option<String>,
) -> Option<Node> {
    match node {
        Node::Word { tag, word } => {
            let i = *next;
            *next += 1;
            f(i, tag.as_str(), word).map(|w| Node::word(tag.clone(), w))
        }
        Node::Phrase { label, children } => {
            let kept: Vec<Node> = children
                .iter()
                .filter_map(|c| rewrite_leaves(c, next, f))
                .collect();
            (!kept.is_empty()).then(|| Node::phrase(label.clone(), kept))
        }
    }
}
