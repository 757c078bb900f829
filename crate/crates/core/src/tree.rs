//! Constituency trees: the data model, the bracketed reader and writer, and
//! labeled span extraction.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while reading a bracketed tree.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("no tree found in input")]
    Empty,
    #[error("unmatched bracket at offset {offset}")]
    BracketUnmatched { offset: usize },
    #[error("the constituent ({label}) lacks a word (offset {offset})")]
    MissingWord { label: String, offset: usize },
    #[error("the constituent ({label} {}) contains more than one word (offset {offset})", words.join(" "))]
    MoreThanOneWord {
        label: String,
        words: Vec<String>,
        offset: usize,
    },
    #[error("constituent without a label at offset {offset}")]
    EmptyLabel { offset: usize },
    #[error("word '{word}' at offset {offset} is not enclosed in a word-level constituent")]
    StrayWord { word: String, offset: usize },
    #[error("the tree has no phrase-level root constituent")]
    NoRootConstituent,
    #[error("unexpected input after the tree at offset {offset}")]
    TrailingInput { offset: usize },
    #[error("invalid label '{0}'")]
    InvalidLabel(String),
    #[error("invalid word '{0}'")]
    InvalidWord(String),
}

/// Granularity of a constituent tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelLevel {
    Clause,
    Phrase,
    Word,
}

const CLAUSE_TAGS: &[&str] = &["S", "SBAR", "SBARQ", "SINV", "SQ"];

const WORD_TAGS: &[&str] = &[
    "CC", "CD", "DT", "EX", "FW", "IN", "JJ", "JJR", "JJS", "LS", "MD", "NN", "NNS", "NNP",
    "NNPS", "PDT", "POS", "PRP", "PRP$", "RB", "RBR", "RBS", "RP", "SYM", "TO", "UH", "VB",
    "VBD", "VBG", "VBN", "VBP", "VBZ", "WDT", "WP", "WP$", "WRB", "#", "$", ".", ",", ":", "``",
    "''", "-LRB-", "-RRB-", "-NONE-",
];

/// A constituent tag such as `S`, `NP` or `NNP`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Label(String);

impl Label {
    pub fn new(name: impl Into<String>) -> Result<Self, TreeError> {
        let name = name.into();
        if name.is_empty() {
            return Err(TreeError::InvalidLabel(name));
        }
        if name
            .chars()
            .any(|c| c.is_whitespace() || c == '(' || c == ')')
        {
            return Err(TreeError::InvalidLabel(name));
        }
        Ok(Label(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Classifies the tag by name using the Penn Treebank tag inventory.
    pub fn level(&self) -> LabelLevel {
        if CLAUSE_TAGS.contains(&self.0.as_str()) {
            LabelLevel::Clause
        } else if WORD_TAGS.contains(&self.0.as_str()) {
            LabelLevel::Word
        } else {
            LabelLevel::Phrase
        }
    }

    /// Strips function tags and co-indexing (`NP-SBJ-1` becomes `NP`).
    /// Tags that start with `-` (`-LRB-`, `-NONE-`) are left alone.
    pub fn without_function_tags(&self) -> Label {
        if self.0.starts_with('-') {
            return self.clone();
        }
        match self.0.find(['-', '=']) {
            Some(i) if i > 0 => Label(self.0[..i].to_string()),
            _ => self.clone(),
        }
    }
}

impl TryFrom<String> for Label {
    type Error = TreeError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Label::new(value)
    }
}

impl From<Label> for String {
    fn from(label: Label) -> String {
        label.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One word of a sentence with its 0-based position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub index: usize,
}

impl Token {
    pub fn new(surface: impl Into<String>, index: usize) -> Self {
        Token {
            surface: surface.into(),
            index,
        }
    }
}

/// Builds an indexed token list from surface strings.
pub fn tokens_from<S: AsRef<str>>(words: &[S]) -> Vec<Token> {
    words
        .iter()
        .enumerate()
        .map(|(i, w)| Token::new(w.as_ref(), i))
        .collect()
}

/// A word is valid when it is non-empty and contains no whitespace or brackets.
pub fn is_valid_word(word: &str) -> bool {
    !word.is_empty()
        && !word
            .chars()
            .any(|c| c.is_whitespace() || c == '(' || c == ')')
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Node {
    /// A clause- or phrase-level constituent.
    Phrase { label: Label, children: Vec<Node> },
    /// A preterminal: a word-level tag over exactly one word.
    Word { tag: Label, word: String },
}

impl Node {
    pub fn phrase(label: Label, children: Vec<Node>) -> Node {
        Node::Phrase { label, children }
    }

    pub fn word(tag: Label, word: impl Into<String>) -> Node {
        Node::Word {
            tag,
            word: word.into(),
        }
    }

    pub fn label(&self) -> &Label {
        match self {
            Node::Phrase { label, .. } => label,
            Node::Word { tag, .. } => tag,
        }
    }

    pub fn is_preterminal(&self) -> bool {
        matches!(self, Node::Word { .. })
    }

    pub fn children(&self) -> &[Node] {
        match self {
            Node::Phrase { children, .. } => children,
            Node::Word { .. } => &[],
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            Node::Word { .. } => 1,
            Node::Phrase { children, .. } => children.iter().map(Node::leaf_count).sum(),
        }
    }

    /// Number of nodes in the subtree, preterminals included.
    pub fn node_count(&self) -> usize {
        1 + self.children().iter().map(Node::node_count).sum::<usize>()
    }

    pub fn phrase_count(&self) -> usize {
        match self {
            Node::Word { .. } => 0,
            Node::Phrase { children, .. } => {
                1 + children.iter().map(Node::phrase_count).sum::<usize>()
            }
        }
    }

    pub fn depth(&self) -> usize {
        1 + self.children().iter().map(Node::depth).max().unwrap_or(0)
    }

    fn collect_words<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Node::Word { word, .. } => out.push(word),
            Node::Phrase { children, .. } => children.iter().for_each(|c| c.collect_words(out)),
        }
    }

    pub fn words(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_words(&mut out);
        out
    }

    fn check(&self) -> Result<(), TreeError> {
        match self {
            Node::Word { tag, word } => {
                if word.is_empty() {
                    return Err(TreeError::MissingWord {
                        label: tag.to_string(),
                        offset: 0,
                    });
                }
                if !is_valid_word(word) {
                    return Err(TreeError::InvalidWord(word.clone()));
                }
                Ok(())
            }
            Node::Phrase { label, children } => {
                if children.is_empty() {
                    return Err(TreeError::MissingWord {
                        label: label.to_string(),
                        offset: 0,
                    });
                }
                children.iter().try_for_each(Node::check)
            }
        }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Word { tag, word } => write!(f, "({tag} {word})"),
            Node::Phrase { label, children } => {
                write!(f, "({label}")?;
                for child in children {
                    write!(f, " {child}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// A labeled constituent span over token positions, `start` inclusive and
/// `end` exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabeledSpan {
    pub label: Label,
    pub start: usize,
    pub end: usize,
}

impl LabeledSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    /// True when the two spans overlap without one containing the other.
    pub fn crosses(&self, other: &LabeledSpan) -> bool {
        (self.start < other.start && other.start < self.end && self.end < other.end)
            || (other.start < self.start && self.start < other.end && other.end < self.end)
    }
}

impl fmt::Display for LabeledSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({},{})", self.label, self.start, self.end)
    }
}

/// A validated constituency tree. Immutable once built.
///
/// The root is always a phrase-level node, every phrase has at least one
/// child, and every leaf is a preterminal carrying exactly one word.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Tree {
    root: Node,
}

impl Tree {
    pub fn new(root: Node) -> Result<Tree, TreeError> {
        if root.is_preterminal() {
            return Err(TreeError::NoRootConstituent);
        }
        root.check()?;
        Ok(Tree { root })
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn into_root(self) -> Node {
        self.root
    }

    pub fn len(&self) -> usize {
        self.root.leaf_count()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn words(&self) -> Vec<&str> {
        self.root.words()
    }

    /// The sentence at the leaves, left to right.
    pub fn tokens(&self) -> Vec<Token> {
        tokens_from(&self.words())
    }

    pub fn sentence(&self) -> String {
        self.words().join(" ")
    }

    /// Labeled spans in preorder. Unary chains yield one span per node.
    pub fn spans(&self, include_preterminals: bool) -> Vec<LabeledSpan> {
        let mut out = Vec::new();
        collect_spans(&self.root, 0, include_preterminals, &mut out);
        out
    }

    /// Treebank normalization: strips an outer `TOP`/`ROOT` wrapper, drops
    /// function tags, and removes `-NONE-` elements together with any
    /// constituent left empty by their removal.
    pub fn normalized(&self) -> Result<Tree, TreeError> {
        let mut root = strip_empty_elements(&self.root).ok_or(TreeError::NoRootConstituent)?;
        loop {
            match root {
                Node::Phrase {
                    ref label,
                    ref mut children,
                } if (label.as_str() == "TOP" || label.as_str() == "ROOT")
                    && children.len() == 1
                    && !children[0].is_preterminal() =>
                {
                    root = children.pop().expect("one child");
                }
                _ => break,
            }
        }
        Tree::new(root)
    }

    /// Replaces every word via `f`, keeping structure.
    pub fn map_words(&self, f: impl Fn(&str) -> String) -> Result<Tree, TreeError> {
        fn go(node: &Node, f: &dyn Fn(&str) -> String) -> Node {
            match node {
                Node::Word { tag, word } => Node::word(tag.clone(), f(word)),
                Node::Phrase { label, children } => Node::phrase(
                    label.clone(),
                    children.iter().map(|c| go(c, f)).collect(),
                ),
            }
        }
        Tree::new(go(&self.root, &f))
    }
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

impl std::str::FromStr for Tree {
    type Err = TreeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_bracketed(s)
    }
}

fn collect_spans(node: &Node, start: usize, pre: bool, out: &mut Vec<LabeledSpan>) -> usize {
    match node {
        Node::Word { tag, .. } => {
            if pre {
                out.push(LabeledSpan {
                    label: tag.clone(),
                    start,
                    end: start + 1,
                });
            }
            start + 1
        }
        Node::Phrase { label, children } => {
            let slot = out.len();
            out.push(LabeledSpan {
                label: label.clone(),
                start,
                end: start,
            });
            let mut end = start;
            for child in children {
                end = collect_spans(child, end, pre, out);
            }
            out[slot].end = end;
            end
        }
    }
}

fn strip_empty_elements(node: &Node) -> Option<Node> {
    match node {
        Node::Word { tag, word } => {
            if tag.as_str() == "-NONE-" {
                None
            } else {
                Some(Node::word(tag.without_function_tags(), word.clone()))
            }
        }
        Node::Phrase { label, children } => {
            let kept: Vec<Node> = children.iter().filter_map(strip_empty_elements).collect();
            if kept.is_empty() {
                None
            } else {
                Some(Node::phrase(label.without_function_tags(), kept))
            }
        }
    }
}

/// Lexical item of bracketed text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Lexeme<'a> {
    Open(usize),
    Close(usize),
    Atom(usize, &'a str),
}

impl Lexeme<'_> {
    pub(crate) fn offset(&self) -> usize {
        match *self {
            Lexeme::Open(o) | Lexeme::Close(o) | Lexeme::Atom(o, _) => o,
        }
    }
}

pub(crate) fn lex(text: &str) -> Vec<Lexeme<'_>> {
    let mut out = Vec::new();
    let mut atom_start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c == '(' || c == ')' || c.is_whitespace() {
            if let Some(s) = atom_start.take() {
                out.push(Lexeme::Atom(s, &text[s..i]));
            }
            if c == '(' {
                out.push(Lexeme::Open(i));
            } else if c == ')' {
                out.push(Lexeme::Close(i));
            }
        } else if atom_start.is_none() {
            atom_start = Some(i);
        }
    }
    if let Some(s) = atom_start {
        out.push(Lexeme::Atom(s, &text[s..]));
    }
    out
}

/// Returns the offset of the first unmatched bracket, if any: a `)` with no
/// open partner, or else the outermost `(` left unclosed.
pub(crate) fn first_unmatched_bracket(lexemes: &[Lexeme<'_>]) -> Option<usize> {
    let mut open = Vec::new();
    for lx in lexemes {
        match *lx {
            Lexeme::Open(o) => open.push(o),
            Lexeme::Close(o) => {
                if open.pop().is_none() {
                    return Some(o);
                }
            }
            Lexeme::Atom(..) => {}
        }
    }
    open.first().copied()
}

/// Reads one bracketed tree.
///
/// An unlabeled outer wrapper `( ... )` around a single constituent is
/// stripped. Everything else must be a well-formed tree: bracket balance is
/// checked first, then each constituent.
pub fn parse_bracketed(text: &str) -> Result<Tree, TreeError> {
    let lexemes = lex(text);
    if lexemes.is_empty() {
        return Err(TreeError::Empty);
    }
    if let Some(offset) = first_unmatched_bracket(&lexemes) {
        return Err(TreeError::BracketUnmatched { offset });
    }
    let mut parser = Parser {
        lexemes: &lexemes,
        pos: 0,
    };
    let root = match parser.node(true)? {
        Parsed::Node(node) => node,
        Parsed::Atom(word, offset) => return Err(TreeError::StrayWord { word, offset }),
    };
    if let Some(lx) = lexemes.get(parser.pos) {
        return Err(TreeError::TrailingInput {
            offset: lx.offset(),
        });
    }
    Tree::new(root)
}

enum Parsed {
    Node(Node),
    Atom(String, usize),
}

struct Parser<'a, 'b> {
    lexemes: &'b [Lexeme<'a>],
    pos: usize,
}

impl Parser<'_, '_> {
    fn node(&mut self, is_root: bool) -> Result<Parsed, TreeError> {
        let open = match self.lexemes.get(self.pos) {
            Some(Lexeme::Open(o)) => *o,
            Some(Lexeme::Atom(o, a)) => {
                self.pos += 1;
                return Ok(Parsed::Atom(a.to_string(), *o));
            }
            Some(Lexeme::Close(o)) => return Err(TreeError::BracketUnmatched { offset: *o }),
            None => return Err(TreeError::Empty),
        };
        self.pos += 1;
        let label = match self.lexemes.get(self.pos) {
            Some(Lexeme::Atom(_, a)) => {
                self.pos += 1;
                Some(Label::new(*a)?)
            }
            _ => None,
        };
        let mut nodes = Vec::new();
        let mut words: Vec<(String, usize)> = Vec::new();
        loop {
            match self.lexemes.get(self.pos) {
                Some(Lexeme::Close(_)) => {
                    self.pos += 1;
                    break;
                }
                Some(Lexeme::Open(_)) => match self.node(false)? {
                    Parsed::Node(n) => nodes.push(n),
                    Parsed::Atom(..) => unreachable!("an open bracket starts a node"),
                },
                Some(Lexeme::Atom(o, a)) => {
                    words.push((a.to_string(), *o));
                    self.pos += 1;
                }
                None => return Err(TreeError::BracketUnmatched { offset: open }),
            }
        }
        let Some(label) = label else {
            if is_root && nodes.len() == 1 && words.is_empty() {
                return Ok(Parsed::Node(nodes.pop().expect("one child")));
            }
            return Err(TreeError::EmptyLabel { offset: open });
        };
        if nodes.is_empty() {
            return match words.len() {
                0 => Err(TreeError::MissingWord {
                    label: label.to_string(),
                    offset: open,
                }),
                1 => {
                    let (word, _) = words.pop().expect("one word");
                    Ok(Parsed::Node(Node::word(label, word)))
                }
                _ => Err(TreeError::MoreThanOneWord {
                    label: label.to_string(),
                    words: words.into_iter().map(|(w, _)| w).collect(),
                    offset: open,
                }),
            };
        }
        if let Some((word, offset)) = words.into_iter().next() {
            return Err(TreeError::StrayWord { word, offset });
        }
        Ok(Parsed::Node(Node::phrase(label, nodes)))
    }
}

/// Writes the tree as a single-line, fully parenthesized bracket string.
pub fn render_bracketed(tree: &Tree) -> String {
    tree.to_string()
}

pub fn yield_tokens(tree: &Tree) -> Vec<Token> {
    tree.tokens()
}

pub fn extract_spans(tree: &Tree, include_preterminals: bool) -> Vec<LabeledSpan> {
    tree.spans(include_preterminals)
}

/// Splits treebank text into top-level bracketed expressions by tracking
/// paren depth, so one-tree-per-line files and multi-line `.mrg` layouts
/// both work. Each item carries the 1-based line where the expression starts.
///
/// Text outside any expression is returned as an `Err` item with its line so
/// the caller can decide whether to skip it.
pub fn split_expressions(text: &str) -> Vec<Result<(usize, String), (usize, String)>> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut current = String::new();
    let mut start_line = 0;
    let mut stray = String::new();
    let mut stray_line = 0;
    for (line_idx, line) in text.lines().enumerate() {
        let line_no = line_idx + 1;
        for c in line.chars() {
            if depth == 0 {
                if c == '(' {
                    if !stray.trim().is_empty() {
                        out.push(Err((stray_line, std::mem::take(&mut stray))));
                    }
                    stray.clear();
                    depth = 1;
                    start_line = line_no;
                    current.push(c);
                } else if !c.is_whitespace() {
                    if stray.is_empty() {
                        stray_line = line_no;
                    }
                    stray.push(c);
                }
                continue;
            }
            current.push(c);
            if c == '(' {
                depth += 1;
            } else if c == ')' {
                depth -= 1;
                if depth == 0 {
                    out.push(Ok((start_line, std::mem::take(&mut current))));
                }
            }
        }
        if depth > 0 {
            current.push(' ');
        }
    }
    if depth > 0 {
        out.push(Err((start_line, current)));
    } else if !stray.trim().is_empty() {
        out.push(Err((stray_line, stray)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SINGAPORE: &str =
        "(S (NP (NNP Singapore)) (VP (VBZ is) (VP (VBN located) (PP (IN in) (NP (NNP Asia))))))";

    fn span(label: &str, start: usize, end: usize) -> LabeledSpan {
        LabeledSpan {
            label: Label::new(label).unwrap(),
            start,
            end,
        }
    }

    #[test]
    fn parses_singapore() {
        let tree = parse_bracketed(SINGAPORE).unwrap();
        assert_eq!(tree.words(), ["Singapore", "is", "located", "in", "Asia"]);
        assert_eq!(render_bracketed(&tree), SINGAPORE);
    }

    #[test]
    fn minimal_tree() {
        let tree = parse_bracketed("(X (A a))").unwrap();
        assert_eq!(tree.root().depth(), 2);
        assert_eq!(tree.words(), ["a"]);
        assert_eq!(tree.to_string(), "(X (A a))");
        assert_eq!(tree.spans(false), vec![span("X", 0, 1)]);
    }

    #[test]
    fn missing_word_is_reported_at_the_empty_constituent() {
        let text =
            "(S (NP (NNP Singapore)) (VP (VBZ is) (VP (VBN located) (PP (IN in) (NP (NNP ))))))";
        match parse_bracketed(text) {
            Err(TreeError::MissingWord { label, offset }) => {
                assert_eq!(label, "NNP");
                assert_eq!(&text[offset..offset + 6], "(NNP )");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reader_errors() {
        assert!(matches!(
            parse_bracketed("(S (NP (NNP"),
            Err(TreeError::BracketUnmatched { .. })
        ));
        assert!(matches!(
            parse_bracketed("(S (A a)))"),
            Err(TreeError::BracketUnmatched { offset: 9 })
        ));
        assert!(matches!(
            parse_bracketed("(S (VBD had been putting))"),
            Err(TreeError::MoreThanOneWord { .. })
        ));
        assert!(matches!(
            parse_bracketed("(S ( (A a)))"),
            Err(TreeError::EmptyLabel { offset: 3 })
        ));
        assert!(matches!(
            parse_bracketed("(S the (A a))"),
            Err(TreeError::StrayWord { .. })
        ));
        assert!(matches!(
            parse_bracketed("(A a)"),
            Err(TreeError::NoRootConstituent)
        ));
        assert!(matches!(
            parse_bracketed("(S (A a)) (S (B b))"),
            Err(TreeError::TrailingInput { .. })
        ));
        assert!(matches!(parse_bracketed("   "), Err(TreeError::Empty)));
    }

    #[test]
    fn unlabeled_wrapper_is_stripped() {
        let tree = parse_bracketed("( (S (A a)) )").unwrap();
        assert_eq!(tree.to_string(), "(S (A a))");
    }

    #[test]
    fn whitespace_is_normalized() {
        let tree = parse_bracketed("(S\n  (NP (DT the)\t(NN cat))\n  (VP (VBZ sleeps)))").unwrap();
        assert_eq!(
            tree.to_string(),
            "(S (NP (DT the) (NN cat)) (VP (VBZ sleeps)))"
        );
    }

    #[test]
    fn singapore_spans() {
        let tree = parse_bracketed(SINGAPORE).unwrap();
        assert_eq!(
            tree.spans(false),
            vec![
                span("S", 0, 5),
                span("NP", 0, 1),
                span("VP", 1, 5),
                span("VP", 2, 5),
                span("PP", 3, 5),
                span("NP", 4, 5),
            ]
        );
        assert_eq!(tree.spans(true).len(), 6 + 5);
    }

    #[test]
    fn unary_chains_are_kept() {
        let tree = parse_bracketed("(S (VP (VB go)))").unwrap();
        assert_eq!(tree.spans(false), vec![span("S", 0, 1), span("VP", 0, 1)]);
    }

    #[test]
    fn normalization() {
        let tree = parse_bracketed(
            "(TOP (S (NP-SBJ-1 (NNP John)) (VP (VBD left) (NP (-NONE- *T*-1))) (. .)))",
        )
        .unwrap();
        assert_eq!(
            tree.normalized().unwrap().to_string(),
            "(S (NP (NNP John)) (VP (VBD left)) (. .))"
        );
        let brackets = parse_bracketed("(S (NP (-LRB- -LRB-) (NN x) (-RRB- -RRB-)))").unwrap();
        assert_eq!(brackets.normalized().unwrap(), brackets);
    }

    #[test]
    fn label_levels() {
        assert_eq!(Label::new("S").unwrap().level(), LabelLevel::Clause);
        assert_eq!(Label::new("NP").unwrap().level(), LabelLevel::Phrase);
        assert_eq!(Label::new("NNP").unwrap().level(), LabelLevel::Word);
        assert!(Label::new("N P").is_err());
        assert!(Label::new("").is_err());
    }

    #[test]
    fn splits_multiline_and_single_line_layouts() {
        let text = "( (S (NP (DT the)\n  (NN cat))\n  (VP (VBZ sleeps))) )\n(S (A a))\n(S (B b))";
        let items = split_expressions(text);
        assert_eq!(items.len(), 3);
        let (line, first) = items[0].clone().unwrap();
        assert_eq!(line, 1);
        assert_eq!(
            parse_bracketed(&first).unwrap().to_string(),
            "(S (NP (DT the) (NN cat)) (VP (VBZ sleeps)))"
        );
        assert_eq!(items[2].clone().unwrap().0, 5);
        let broken = split_expressions("(S (A a)\n");
        assert!(broken[0].is_err());
    }
}
