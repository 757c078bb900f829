//! Tree-isomorphic linearizations: bracket strings, top-down transition
//! sequences, and span template sentences ("A is a B."), each with a decoder
//! that restores the original tree.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tree::{is_valid_word, parse_bracketed, Label, Node, Tree, TreeError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinearizeError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("malformed action at offset {offset}: '{text}'")]
    MalformedAction { offset: usize, text: String },
    #[error("REDUCE at step {step} with no open constituent")]
    StackUnderflow { step: usize },
    #[error("{open} constituent(s) left open at the end of the action sequence")]
    DanglingNt { open: usize },
    #[error("REDUCE at step {step} closes ({label}) which has no children")]
    EmptyConstituent { step: usize, label: String },
    #[error("the action sequence builds no root constituent")]
    NoRootConstituent,
    #[error("action at step {step} follows the completed root constituent")]
    MultipleRoots { step: usize },
    #[error("{remaining} buffer word(s) left unconsumed")]
    UnconsumedBuffer { remaining: usize },
    #[error("SHIFT at step {step} takes '{found}' but the buffer holds '{expected}'")]
    BufferMismatch {
        step: usize,
        expected: String,
        found: String,
    },
    #[error("line {line} is not a span sentence: '{text}'")]
    MalformedSpanLine { line: usize, text: String },
    #[error("line {line}: cannot place phrase '{phrase}': {reason}")]
    UnresolvableSpan {
        line: usize,
        phrase: String,
        reason: String,
    },
    #[error("line {line}: phrase '{phrase}' crosses the boundary of its enclosing constituent")]
    CrossingSpans { line: usize, phrase: String },
    #[error("span lines admit more than one tree")]
    AmbiguousSpans,
}

/// Which linearization a payload uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Bracket,
    Transition,
    Span,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Bracket, Strategy::Transition, Strategy::Span];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Bracket => "bracket",
            Strategy::Transition => "transition",
            Strategy::Span => "span",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bracket" => Ok(Strategy::Bracket),
            "transition" => Ok(Strategy::Transition),
            "span" => Ok(Strategy::Span),
            other => Err(format!("unknown strategy '{other}'")),
        }
    }
}

/// A serialized tree tagged with its strategy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearizedTree {
    pub strategy: Strategy,
    pub payload: String,
}

pub fn encode(tree: &Tree, strategy: Strategy) -> LinearizedTree {
    let payload = match strategy {
        Strategy::Bracket => tree.to_string(),
        Strategy::Transition => render_actions(&oracle_transitions(tree)),
        Strategy::Span => encode_span(tree).join("\n"),
    };
    LinearizedTree { strategy, payload }
}

pub fn decode(lin: &LinearizedTree) -> Result<Tree, LinearizeError> {
    decode_payload(&lin.payload, lin.strategy)
}

pub fn decode_payload(payload: &str, strategy: Strategy) -> Result<Tree, LinearizeError> {
    match strategy {
        Strategy::Bracket => Ok(parse_bracketed(payload)?),
        Strategy::Transition => execute_transitions(&parse_actions(payload)?),
        Strategy::Span => decode_span(payload),
    }
}

// ---------------------------------------------------------------------------
// Transition system

/// One action of the top-down transition system.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Action {
    /// Open a phrase-level constituent.
    Nt(Label),
    /// Take the next word from the buffer as a preterminal with this tag.
    Shift { tag: Label, word: String },
    /// Close the most recently opened constituent.
    Reduce,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Nt(label) => write!(f, "NT({label})"),
            Action::Shift { tag, word } => write!(f, "SHIFT({tag} {word})"),
            Action::Reduce => f.write_str("REDUCE"),
        }
    }
}

pub fn render_actions(actions: &[Action]) -> String {
    actions
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Parses `NT(LABEL) SHIFT(POS word) REDUCE ...`.
pub fn parse_actions(text: &str) -> Result<Vec<Action>, LinearizeError> {
    let mut actions = Vec::new();
    let mut rest = text;
    let mut offset = 0;
    loop {
        let trimmed = rest.trim_start();
        offset += rest.len() - trimmed.len();
        rest = trimmed;
        if rest.is_empty() {
            break;
        }
        let malformed = |rest: &str, offset| LinearizeError::MalformedAction {
            offset,
            text: rest.split_whitespace().next().unwrap_or("").to_string(),
        };
        let (action, used) = if let Some(body) = rest.strip_prefix("NT(") {
            let close = body.find(')').ok_or_else(|| malformed(rest, offset))?;
            let label =
                Label::new(body[..close].trim()).map_err(|_| malformed(rest, offset))?;
            (Action::Nt(label), 3 + close + 1)
        } else if let Some(body) = rest.strip_prefix("SHIFT(") {
            let close = body.find(')').ok_or_else(|| malformed(rest, offset))?;
            let mut parts = body[..close].split_whitespace();
            let (Some(tag), Some(word), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(malformed(rest, offset));
            };
            let tag = Label::new(tag).map_err(|_| malformed(rest, offset))?;
            (
                Action::Shift {
                    tag,
                    word: word.to_string(),
                },
                6 + close + 1,
            )
        } else if rest.starts_with("REDUCE")
            && rest[6..].chars().next().is_none_or(char::is_whitespace)
        {
            (Action::Reduce, 6)
        } else {
            return Err(malformed(rest, offset));
        };
        actions.push(action);
        rest = &rest[used..];
        offset += used;
    }
    Ok(actions)
}

/// The top-down oracle: a preorder walk emitting `NT` on entry to a phrase,
/// `SHIFT` for each preterminal and `REDUCE` on exit.
pub fn oracle_transitions(tree: &Tree) -> Vec<Action> {
    fn go(node: &Node, out: &mut Vec<Action>) {
        match node {
            Node::Word { tag, word } => out.push(Action::Shift {
                tag: tag.clone(),
                word: word.clone(),
            }),
            Node::Phrase { label, children } => {
                out.push(Action::Nt(label.clone()));
                children.iter().for_each(|c| go(c, out));
                out.push(Action::Reduce);
            }
        }
    }
    let mut out = Vec::with_capacity(2 * tree.root().phrase_count() + tree.len());
    go(tree.root(), &mut out);
    out
}

/// Stack/buffer machine state. The buffer is optional: without one, SHIFT
/// takes its word from the action itself.
#[derive(Debug)]
pub struct TransitionMachine<'a> {
    stack: Vec<(Label, Vec<Node>)>,
    buffer: Option<&'a [String]>,
    consumed: usize,
    done: Option<Node>,
    step: usize,
}

impl<'a> TransitionMachine<'a> {
    pub fn new(buffer: Option<&'a [String]>) -> Self {
        TransitionMachine {
            stack: Vec::new(),
            buffer,
            consumed: 0,
            done: None,
            step: 0,
        }
    }

    pub fn stack_depth(&self) -> usize {
        self.stack.len()
    }

    pub fn consumed(&self) -> usize {
        self.consumed
    }

    pub fn apply(&mut self, action: &Action) -> Result<(), LinearizeError> {
        let step = self.step;
        self.step += 1;
        if self.done.is_some() {
            return Err(match action {
                Action::Reduce => LinearizeError::StackUnderflow { step },
                _ => LinearizeError::MultipleRoots { step },
            });
        }
        match action {
            Action::Nt(label) => self.stack.push((label.clone(), Vec::new())),
            Action::Shift { tag, word } => {
                if !is_valid_word(word) {
                    return Err(TreeError::InvalidWord(word.clone()).into());
                }
                if let Some(buffer) = self.buffer {
                    match buffer.get(self.consumed) {
                        Some(expected) if expected == word => {}
                        Some(expected) => {
                            return Err(LinearizeError::BufferMismatch {
                                step,
                                expected: expected.clone(),
                                found: word.clone(),
                            })
                        }
                        None => {
                            return Err(LinearizeError::BufferMismatch {
                                step,
                                expected: String::new(),
                                found: word.clone(),
                            })
                        }
                    }
                }
                let Some((_, children)) = self.stack.last_mut() else {
                    return Err(LinearizeError::NoRootConstituent);
                };
                children.push(Node::word(tag.clone(), word.clone()));
                self.consumed += 1;
            }
            Action::Reduce => {
                let (label, children) = self
                    .stack
                    .pop()
                    .ok_or(LinearizeError::StackUnderflow { step })?;
                if children.is_empty() {
                    return Err(LinearizeError::EmptyConstituent {
                        step,
                        label: label.to_string(),
                    });
                }
                let node = Node::phrase(label, children);
                match self.stack.last_mut() {
                    Some((_, siblings)) => siblings.push(node),
                    None => self.done = Some(node),
                }
            }
        }
        Ok(())
    }

    pub fn finish(self) -> Result<Tree, LinearizeError> {
        if !self.stack.is_empty() {
            return Err(LinearizeError::DanglingNt {
                open: self.stack.len(),
            });
        }
        let root = self.done.ok_or(LinearizeError::NoRootConstituent)?;
        if let Some(buffer) = self.buffer {
            if self.consumed < buffer.len() {
                return Err(LinearizeError::UnconsumedBuffer {
                    remaining: buffer.len() - self.consumed,
                });
            }
        }
        Ok(Tree::new(root)?)
    }
}

pub fn execute_transitions(actions: &[Action]) -> Result<Tree, LinearizeError> {
    let mut machine = TransitionMachine::new(None);
    for action in actions {
        machine.apply(action)?;
    }
    machine.finish()
}

/// Runs the actions against a buffer holding `sentence`; every SHIFT must
/// take the next buffer word and the buffer must be emptied.
pub fn execute_with_buffer(
    actions: &[Action],
    sentence: &[String],
) -> Result<Tree, LinearizeError> {
    let mut machine = TransitionMachine::new(Some(sentence));
    for action in actions {
        machine.apply(action)?;
    }
    machine.finish()
}

// ---------------------------------------------------------------------------
// Span templates

const COPULA: &str = " is a ";

/// One template sentence per node in preorder, preterminals included.
pub fn encode_span(tree: &Tree) -> Vec<String> {
    fn go(node: &Node, out: &mut Vec<String>) {
        let words = node.words().join(" ");
        out.push(format!("{words}{COPULA}{}.", node.label()));
        node.children().iter().for_each(|c| go(c, out));
    }
    let mut out = Vec::with_capacity(tree.root().node_count());
    go(tree.root(), &mut out);
    out
}

#[derive(Debug, Clone)]
struct SpanLine {
    line: usize,
    words: Vec<String>,
    label: Label,
}

fn parse_span_line(line: usize, text: &str) -> Result<SpanLine, LinearizeError> {
    let malformed = || LinearizeError::MalformedSpanLine {
        line,
        text: text.to_string(),
    };
    let body = text.trim().strip_suffix('.').ok_or_else(malformed)?;
    let (phrase, label) = body.rsplit_once(COPULA).ok_or_else(malformed)?;
    let label = Label::new(label.trim()).map_err(|_| malformed())?;
    let words: Vec<String> = phrase.split_whitespace().map(str::to_string).collect();
    if words.is_empty() {
        return Err(malformed());
    }
    Ok(SpanLine { line, words, label })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Phrase,
    Preterminal,
}

#[derive(Debug, Clone, Copy)]
struct Frame {
    end: usize,
    children: usize,
}

struct SpanSearch<'a> {
    lines: &'a [SpanLine],
    sentence: &'a [String],
    solutions: Vec<Vec<Role>>,
    deepest: Option<(usize, LinearizeError)>,
    steps: usize,
}

const SPAN_SEARCH_BUDGET: usize = 1_000_000;

impl SpanSearch<'_> {
    fn fail(&mut self, at: usize, err: LinearizeError) {
        if self.deepest.as_ref().is_none_or(|(d, _)| at > *d) {
            self.deepest = Some((at, err));
        }
    }

    fn unresolvable(&self, idx: usize, cursor: usize) -> LinearizeError {
        let line = &self.lines[idx];
        let n = line.words.len();
        let later = (cursor + 1..=self.sentence.len().saturating_sub(n))
            .filter(|&p| self.sentence[p..p + n] == line.words[..])
            .count();
        let reason = match later {
            0 => format!("not found at or after token {cursor}"),
            1 => format!("not at token {cursor}; its only later match would leave tokens uncovered"),
            k => format!("not at token {cursor}; {k} later matches would leave tokens uncovered"),
        };
        LinearizeError::UnresolvableSpan {
            line: line.line,
            phrase: line.words.join(" "),
            reason,
        }
    }

    /// Depth-first search over the one real choice: whether a single-word
    /// line is a preterminal or a phrase dominating a single word. Every
    /// span starts at the leftmost token not yet covered by a preterminal.
    fn search(&mut self, idx: usize, cursor: usize, stack: &mut Vec<Frame>, roles: &mut Vec<Role>) {
        if self.solutions.len() > 1 {
            return;
        }
        self.steps += 1;
        if self.steps > SPAN_SEARCH_BUDGET {
            return;
        }
        let popped_from = stack.len();
        let mut saved = Vec::new();
        while let Some(top) = stack.last() {
            if top.end > cursor {
                break;
            }
            let top = stack.pop().expect("non-empty");
            saved.push(top);
            if top.children == 0 {
                let line = self.lines[idx.saturating_sub(1)].line;
                self.fail(
                    idx,
                    LinearizeError::UnresolvableSpan {
                        line,
                        phrase: String::new(),
                        reason: "a constituent is left without children".to_string(),
                    },
                );
                restore(stack, saved, popped_from);
                return;
            }
        }

        if idx == self.lines.len() {
            if stack.iter().any(|f| f.children == 0) || cursor != self.sentence.len() {
                let last = self.lines.last().map_or(0, |l| l.line);
                self.fail(
                    idx,
                    LinearizeError::UnresolvableSpan {
                        line: last,
                        phrase: String::new(),
                        reason: format!(
                            "only {cursor} of {} tokens are covered by word-level lines",
                            self.sentence.len()
                        ),
                    },
                );
            } else {
                self.solutions.push(roles.clone());
            }
            restore(stack, saved, popped_from);
            return;
        }

        let line = &self.lines[idx];
        let n = line.words.len();
        if cursor + n > self.sentence.len() || self.sentence[cursor..cursor + n] != line.words[..]
        {
            let err = self.unresolvable(idx, cursor);
            self.fail(idx, err);
            restore(stack, saved, popped_from);
            return;
        }
        let Some(top) = stack.last_mut() else {
            let err = LinearizeError::UnresolvableSpan {
                line: line.line,
                phrase: line.words.join(" "),
                reason: "it lies outside the root constituent".to_string(),
            };
            self.fail(idx, err);
            restore(stack, saved, popped_from);
            return;
        };
        if top.end < cursor + n {
            let err = LinearizeError::CrossingSpans {
                line: line.line,
                phrase: line.words.join(" "),
            };
            self.fail(idx, err);
            restore(stack, saved, popped_from);
            return;
        }
        top.children += 1;

        if n == 1 {
            roles.push(Role::Preterminal);
            self.search(idx + 1, cursor + 1, stack, roles);
            roles.pop();
        }
        roles.push(Role::Phrase);
        stack.push(Frame {
            end: cursor + n,
            children: 0,
        });
        self.search(idx + 1, cursor, stack, roles);
        stack.pop();
        roles.pop();

        stack.last_mut().expect("parent frame").children -= 1;
        restore(stack, saved, popped_from);
    }
}

fn restore(stack: &mut Vec<Frame>, mut saved: Vec<Frame>, len: usize) {
    while let Some(f) = saved.pop() {
        stack.push(f);
    }
    debug_assert_eq!(stack.len(), len);
}

/// Rebuilds a tree from template sentences.
///
/// The first line must cover the whole sentence. Each following line is
/// placed at the leftmost token not yet covered by a word-level line. A
/// single-word line may be either a preterminal or a phrase over one word;
/// when more than one reading yields a complete tree the payload is
/// rejected as ambiguous rather than guessed.
pub fn decode_span(payload: &str) -> Result<Tree, LinearizeError> {
    let lines: Vec<SpanLine> = payload
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_span_line(i + 1, l))
        .collect::<Result<_, _>>()?;
    let Some(root) = lines.first() else {
        return Err(LinearizeError::NoRootConstituent);
    };
    let sentence = root.words.clone();
    let mut search = SpanSearch {
        lines: &lines[1..],
        sentence: &sentence,
        solutions: Vec::new(),
        deepest: None,
        steps: 0,
    };
    let mut stack = vec![Frame {
        end: sentence.len(),
        children: 0,
    }];
    search.search(0, 0, &mut stack, &mut Vec::new());
    if search.steps > SPAN_SEARCH_BUDGET || search.solutions.len() > 1 {
        return Err(LinearizeError::AmbiguousSpans);
    }
    let Some(roles) = search.solutions.pop() else {
        return Err(search
            .deepest
            .map(|(_, e)| e)
            .unwrap_or(LinearizeError::NoRootConstituent));
    };
    build_span_tree(root, &lines[1..], &roles)
}

fn build_span_tree(
    root: &SpanLine,
    lines: &[SpanLine],
    roles: &[Role],
) -> Result<Tree, LinearizeError> {
    let mut stack: Vec<(Label, usize, Vec<Node>)> =
        vec![(root.label.clone(), root.words.len(), Vec::new())];
    let mut cursor = 0;
    let close = |stack: &mut Vec<(Label, usize, Vec<Node>)>, cursor: usize| {
        while stack.len() > 1 && stack.last().is_some_and(|f| f.1 <= cursor) {
            let (label, _, children) = stack.pop().expect("non-empty");
            stack
                .last_mut()
                .expect("parent")
                .2
                .push(Node::phrase(label, children));
        }
    };
    for (line, role) in lines.iter().zip(roles) {
        close(&mut stack, cursor);
        match role {
            Role::Preterminal => {
                stack
                    .last_mut()
                    .expect("open frame")
                    .2
                    .push(Node::word(line.label.clone(), line.words[0].clone()));
                cursor += 1;
            }
            Role::Phrase => stack.push((line.label.clone(), cursor + line.words.len(), Vec::new())),
        }
    }
    close(&mut stack, usize::MAX);
    let (label, _, children) = stack.pop().expect("root frame");
    Ok(Tree::new(Node::phrase(label, children))?)
}
