//! Sentence preprocessing, prompt rendering and fine-tune record export.
//!
//! Prompts are assembled from plain-text templates with `{name}`
//! placeholders. The bundled set lives in `templates/` and any file can be
//! overridden from a directory.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::faithfulness::check_faithfulness;
use crate::linearize::{encode, Strategy};
use crate::tree::{tokens_from, Token, Tree, TreeError};
use crate::validity::{check_validity, missing_word_message};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("{needed} demonstrations requested but only {available} available")]
    MissingDemonstrations { needed: usize, available: usize },
    #[error("error-avoiding prompts need at least one {0} exemplar")]
    MissingExemplars(ExemplarKind),
    #[error("template '{template}' uses unknown placeholder {{{name}}}")]
    UnknownPlaceholder { template: String, name: String },
    #[error("no trees to export")]
    EmptyTreebank,
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Punctuation tokens and their placeholders.
pub const PUNCTUATION: [(&str, &str); 10] = [
    (".", "_PERIOD_"),
    (",", "_COMMA_"),
    (":", "_COLON_"),
    (";", "_SEMICOLON_"),
    ("?", "_QMARK_"),
    ("!", "_EMARK_"),
    ("\"", "_QUOTE_"),
    ("'", "_APOS_"),
    ("(", "-LRB-"),
    (")", "-RRB-"),
];

pub fn map_punct(word: &str) -> &str {
    PUNCTUATION
        .iter()
        .find(|(p, _)| *p == word)
        .map_or(word, |(_, m)| m)
}

pub fn unmap_punct(word: &str) -> &str {
    PUNCTUATION
        .iter()
        .find(|(_, m)| *m == word)
        .map_or(word, |(p, _)| p)
}

const LEADING: [char; 2] = ['"', '('];
const TRAILING: [char; 8] = ['.', ',', ':', ';', '?', '!', '"', ')'];

/// Whitespace tokenization that also splits leading quotes/parentheses and
/// trailing punctuation off words. A final period stays attached when the
/// word already contains one ("U.S.").
pub fn tokenize(sentence: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in sentence.split_whitespace() {
        let mut s = chunk;
        while s.chars().count() > 1 && s.starts_with(LEADING) {
            out.push(s[..1].to_string());
            s = &s[1..];
        }
        let mut trail = Vec::new();
        while s.chars().count() > 1 && s.ends_with(TRAILING) {
            let body = &s[..s.len() - 1];
            if s.ends_with('.') && body.contains('.') {
                break;
            }
            trail.push(s[s.len() - 1..].to_string());
            s = body;
        }
        out.push(s.to_string());
        out.extend(trail.into_iter().rev());
    }
    out
}

/// Tokenizes and replaces punctuation tokens with placeholders.
pub fn preprocess(sentence: &str) -> Vec<Token> {
    let words: Vec<String> = tokenize(sentence)
        .iter()
        .map(|w| map_punct(w).to_string())
        .collect();
    tokens_from(&words)
}

pub fn postprocess(tokens: &[Token]) -> Vec<String> {
    tokens
        .iter()
        .map(|t| unmap_punct(&t.surface).to_string())
        .collect()
}

/// Replaces punctuation words in a gold tree so it matches preprocessed input.
pub fn preprocess_tree(tree: &Tree) -> Result<Tree, TreeError> {
    tree.map_words(|w| map_punct(w).to_string())
}

pub fn joined(tokens: &[Token]) -> String {
    tokens
        .iter()
        .map(|t| t.surface.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

/// The template set used for every prompt the toolkit renders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    pub task_introduction: String,
    pub instruction: String,
    pub format_bracket: String,
    pub format_transition: String,
    pub format_span: String,
    pub error_avoiding: String,
    pub exemplar: String,
    pub demonstration: String,
    pub task_input: String,
    pub feedback: String,
    pub revision: String,
    pub checker_validity: String,
    pub checker_faithfulness: String,
    pub checker_demo: String,
    pub finetune_instruction: String,
}

macro_rules! bundled {
    ($($field:ident),* $(,)?) => {
        impl Default for Templates {
            fn default() -> Self {
                Templates {
                    $($field: include_str!(concat!("../templates/", stringify!($field), ".txt")).to_string(),)*
                }
            }
        }

        impl Templates {
            /// File stems of every template.
            pub const NAMES: &'static [&'static str] = &[$(stringify!($field)),*];

            /// Bundled templates, with any `<name>.txt` found in `dir`
            /// taking precedence.
            pub fn from_dir(dir: &Path) -> Result<Templates, PromptError> {
                let mut t = Templates::default();
                $(
                    let path = dir.join(concat!(stringify!($field), ".txt"));
                    if path.is_file() {
                        t.$field = std::fs::read_to_string(path)?;
                    }
                )*
                Ok(t)
            }
        }
    };
}

bundled!(
    task_introduction,
    instruction,
    format_bracket,
    format_transition,
    format_span,
    error_avoiding,
    exemplar,
    demonstration,
    task_input,
    feedback,
    revision,
    checker_validity,
    checker_faithfulness,
    checker_demo,
    finetune_instruction,
);

impl Templates {
    pub fn format(&self, strategy: Strategy) -> &str {
        match strategy {
            Strategy::Bracket => &self.format_bracket,
            Strategy::Transition => &self.format_transition,
            Strategy::Span => &self.format_span,
        }
    }
}

/// Substitutes `{name}` placeholders. Braces not enclosing a lowercase
/// identifier are copied through, so JSON examples need no escaping.
pub fn fill(template_name: &str, template: &str, vars: &[(&str, &str)]) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let ident_len = after
            .find(|c: char| !(c.is_ascii_lowercase() || c == '_'))
            .unwrap_or(after.len());
        if ident_len > 0 && after[ident_len..].starts_with('}') {
            let name = &after[..ident_len];
            let value = vars
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| PromptError::UnknownPlaceholder {
                    template: template_name.to_string(),
                    name: name.to_string(),
                })?;
            out.push_str(value);
            rest = &after[ident_len + 1..];
        } else {
            out.push('{');
            rest = after;
        }
    }
    out.push_str(rest);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub sentence: String,
    pub tree: String,
}

impl Demonstration {
    /// A demonstration from a gold tree, punctuation preprocessed.
    pub fn from_tree(tree: &Tree, strategy: Strategy) -> Result<Demonstration, TreeError> {
        let tree = preprocess_tree(tree)?;
        Ok(Demonstration {
            sentence: tree.sentence(),
            tree: encode(&tree, strategy).payload,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExemplarKind {
    Invalid,
    Unfaithful,
}

impl fmt::Display for ExemplarKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExemplarKind::Invalid => "invalid",
            ExemplarKind::Unfaithful => "unfaithful",
        })
    }
}

/// An erroneous output paired with a description of what is wrong.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorExemplar {
    pub sentence: String,
    pub erroneous_tree: String,
    pub annotation: String,
    pub kind: ExemplarKind,
}

impl ErrorExemplar {
    /// Annotates `tree` with the rule-based checkers. Returns `None` when
    /// the tree has nothing wrong with it.
    pub fn annotated(sentence: &str, tree: &str) -> Option<ErrorExemplar> {
        let validity = check_validity(tree);
        let (kind, messages): (_, Vec<String>) = if !validity.valid {
            (
                ExemplarKind::Invalid,
                validity.errors.into_iter().map(|e| e.message).collect(),
            )
        } else {
            let words: Vec<&str> = sentence.split_whitespace().collect();
            let faith = check_faithfulness(tree, &tokens_from(&words));
            if faith.faithful {
                return None;
            }
            (
                ExemplarKind::Unfaithful,
                faith.errors.into_iter().map(|e| e.detail).collect(),
            )
        };
        Some(ErrorExemplar {
            sentence: sentence.to_string(),
            erroneous_tree: tree.to_string(),
            annotation: messages.join(" "),
            kind,
        })
    }
}

/// Two invalid and two unfaithful exemplars.
pub fn default_exemplars() -> Vec<ErrorExemplar> {
    let cases = [
        (
            "Singapore is located in Asia",
            "(S (NP (NNP )) (VP (VBZ is) (VP (VBN located) (PP (IN in) (NP (NNP Asia))))))",
        ),
        (
            "China had been putting in huge orders",
            "(S (NP (NNP China)) (VP (VBD had been putting) (PRT (RP in)) (NP (JJ huge) (NNS orders))))",
        ),
        (
            "Singapore is located in Asia",
            "(S (NP (NNP Singapore)) (VP (VBZ is) (VP (VBN situated) (PP (IN in) (NP (NNP Asia))))))",
        ),
        (
            "The index fell 84 points",
            "(S (NP (DT The) (NN index)) (VP (VBD fell) (NP (CD 81) (NNS points))))",
        ),
    ];
    let out: Vec<ErrorExemplar> = cases
        .iter()
        .filter_map(|(s, t)| ErrorExemplar::annotated(s, t))
        .collect();
    debug_assert_eq!(out.len(), 4);
    debug_assert_eq!(out[0].annotation, missing_word_message("NNP"));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PromptMode {
    /// Number of demonstrations; 0 is zero-shot.
    pub shots: usize,
    /// Adds the error-avoiding section.
    pub les: bool,
}

impl PromptMode {
    pub const fn zero_shot() -> Self {
        PromptMode { shots: 0, les: false }
    }

    pub const fn few_shot(k: usize) -> Self {
        PromptMode { shots: k, les: false }
    }

    pub const fn with_les(self) -> Self {
        PromptMode { les: true, ..self }
    }
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.shots {
            0 => f.write_str("zero-shot")?,
            k => write!(f, "{k}-shot")?,
        }
        if self.les {
            f.write_str(" + error-avoiding")?;
        }
        Ok(())
    }
}

/// The filled-in sections of one parsing prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub task_introduction: String,
    pub instruction: String,
    pub error_avoiding: Option<String>,
    pub demonstrations: Vec<String>,
    pub feedback: Option<String>,
    pub task_input: String,
}

impl PromptSpec {
    pub fn sections(&self) -> Vec<(&'static str, String)> {
        let mut out = vec![
            ("Task Introduction", self.task_introduction.clone()),
            ("Instruction", self.instruction.clone()),
        ];
        if let Some(e) = &self.error_avoiding {
            out.push(("Error-Avoiding Instruction", e.clone()));
        }
        if !self.demonstrations.is_empty() {
            out.push(("Demonstrations", self.demonstrations.join("\n")));
        }
        if let Some(f) = &self.feedback {
            out.push(("Feedback", f.clone()));
        }
        out.push(("Task Input", self.task_input.clone()));
        out
    }

    pub fn render(&self) -> String {
        self.sections()
            .iter()
            .map(|(name, body)| format!("### {name}\n{}\n", body.trim_end()))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Everything a parsing prompt is built from besides the input sentence.
#[derive(Debug, Clone)]
pub struct PromptContext {
    pub templates: Templates,
    pub strategy: Strategy,
    pub demonstrations: Vec<Demonstration>,
    pub exemplars: Vec<ErrorExemplar>,
}

impl PromptContext {
    pub fn new(strategy: Strategy) -> Self {
        PromptContext {
            templates: Templates::default(),
            strategy,
            demonstrations: Vec::new(),
            exemplars: default_exemplars(),
        }
    }

    pub fn spec(&self, mode: PromptMode, sentence: &[Token]) -> Result<PromptSpec, PromptError> {
        let t = &self.templates;
        if mode.shots > self.demonstrations.len() {
            return Err(PromptError::MissingDemonstrations {
                needed: mode.shots,
                available: self.demonstrations.len(),
            });
        }
        let demonstrations = self.demonstrations[..mode.shots]
            .iter()
            .map(|d| {
                fill(
                    "demonstration",
                    &t.demonstration,
                    &[("sentence", &d.sentence), ("tree", &d.tree)],
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        let error_avoiding = if mode.les {
            for kind in [ExemplarKind::Invalid, ExemplarKind::Unfaithful] {
                if !self.exemplars.iter().any(|e| e.kind == kind) {
                    return Err(PromptError::MissingExemplars(kind));
                }
            }
            let rendered = self
                .exemplars
                .iter()
                .map(|e| {
                    fill(
                        "exemplar",
                        &t.exemplar,
                        &[
                            ("sentence", &e.sentence),
                            ("tree", &e.erroneous_tree),
                            ("annotation", &e.annotation),
                        ],
                    )
                })
                .collect::<Result<Vec<_>, _>>()?
                .join("\n");
            Some(fill(
                "error_avoiding",
                &t.error_avoiding,
                &[("exemplars", rendered.trim_end())],
            )?)
        } else {
            None
        };
        Ok(PromptSpec {
            task_introduction: fill("task_introduction", &t.task_introduction, &[])?,
            instruction: fill(
                "instruction",
                &t.instruction,
                &[("format", t.format(self.strategy).trim_end())],
            )?,
            error_avoiding,
            demonstrations,
            feedback: None,
            task_input: fill(
                "task_input",
                &t.task_input,
                &[("sentence", &joined(sentence))],
            )?,
        })
    }

    pub fn build(&self, mode: PromptMode, sentence: &[Token]) -> Result<String, PromptError> {
        Ok(self.spec(mode, sentence)?.render())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckerRole {
    Validity,
    Faithfulness,
}

/// A prompt asking a model to review `tree` and reply with a JSON report.
/// Each demo is shown with the rule-based report for it.
pub fn build_checker_prompt(
    role: CheckerRole,
    tree: &str,
    sentence: &str,
    demos: &[ErrorExemplar],
    templates: &Templates,
) -> Result<String, PromptError> {
    let report = |tree: &str, sentence: &str| -> String {
        match role {
            CheckerRole::Validity => serde_json::to_string(&check_validity(tree)),
            CheckerRole::Faithfulness => {
                let words: Vec<&str> = sentence.split_whitespace().collect();
                serde_json::to_string(&check_faithfulness(tree, &tokens_from(&words)))
            }
        }
        .expect("reports serialize")
    };
    let mut shown = Vec::with_capacity(demos.len());
    for d in demos {
        shown.push(fill(
            "checker_demo",
            &templates.checker_demo,
            &[
                ("tree", &d.erroneous_tree),
                ("sentence", &d.sentence),
                ("report", &report(&d.erroneous_tree, &d.sentence)),
            ],
        )?);
    }
    let (name, template) = match role {
        CheckerRole::Validity => ("checker_validity", &templates.checker_validity),
        CheckerRole::Faithfulness => ("checker_faithfulness", &templates.checker_faithfulness),
    };
    fill(
        name,
        template,
        &[
            ("demonstrations", shown.join("").trim_end()),
            ("tree", tree),
            ("sentence", sentence),
        ],
    )
}

/// One supervised training example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinetuneRecord {
    pub instruction: String,
    pub input: String,
    pub output: String,
}

impl FinetuneRecord {
    /// The full training sequence: instruction, input, then the tree.
    pub fn sequence(&self) -> String {
        format!("{}\n{}\n{}", self.instruction, self.input, self.output)
    }

    /// Length of the sequence in whitespace-separated pieces.
    pub fn len(&self) -> usize {
        self.sequence().split_whitespace().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn export_finetune_records(
    trees: &[Tree],
    strategy: Strategy,
    templates: &Templates,
) -> Result<Vec<FinetuneRecord>, PromptError> {
    if trees.is_empty() {
        return Err(PromptError::EmptyTreebank);
    }
    let instruction = fill(
        "finetune_instruction",
        &templates.finetune_instruction,
        &[("format", templates.format(strategy).trim_end())],
    )?
    .trim_end()
    .to_string();
    trees
        .iter()
        .map(|tree| {
            let demo = Demonstration::from_tree(tree, strategy)?;
            Ok(FinetuneRecord {
                instruction: instruction.clone(),
                input: demo.sentence,
                output: demo.tree,
            })
        })
        .collect()
}
