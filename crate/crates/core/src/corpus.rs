//! Treebank loading, experiment runs persisted as JSONL, and reports.
//!
//! Treebank files hold bracketed trees, either one per line or spread over
//! several lines as in the PTB `.mrg` layout.

use std::collections::{BTreeMap, HashSet};
use std::fmt::{self, Write as _};
use std::io::{self, BufRead, Write};
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, CompletionRequest};
use crate::exec::with_workers;
use crate::faithfulness::{check_faithfulness, FaithfulnessError, UnfaithfulKind};
use crate::linearize::Strategy;
use crate::pmc::{run_pmc, to_bracketed, undecodable_reports, PmcConfig, PmcError};
use crate::prompting::{joined, preprocess_tree, Demonstration, PromptContext, PromptError, PromptMode};
use crate::scoring::{
    eval_spans, matched_spans, reduction_rate, score_corpus, score_sentence, EvalConfig, ScoreError,
    SentenceCounts,
};
use crate::synth::rng;
use crate::tree::{parse_bracketed, split_expressions, Tree};
use crate::validity::{check_validity, tree_region, ValidityError};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("treebank contains no trees")]
    EmptyTreebank,
    #[error("no records to report")]
    EmptyInput,
    #[error("record line {line}: {message}")]
    Record { line: usize, message: String },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Pmc(#[from] PmcError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

impl SplitName {
    pub fn name(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Dev => "dev",
            SplitName::Test => "test",
        }
    }
}

impl std::str::FromStr for SplitName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(SplitName::Train),
            "dev" | "valid" | "validation" => Ok(SplitName::Dev),
            "test" => Ok(SplitName::Test),
            other => Err(format!("unknown split '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreebankSplit {
    pub name: SplitName,
    pub domain: String,
    pub trees: Vec<Tree>,
}

impl TreebankSplit {
    pub fn id(&self, index: usize) -> String {
        format!("{}-{}-{index:06}", self.domain, self.name.name())
    }
}

/// A tree that failed to load under lenient loading.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Skipped {
    pub line: usize,
    pub message: String,
}

/// Parses and normalizes every tree in `text`. Malformed trees are fatal
/// unless `lenient`, in which case they are returned as skipped.
pub fn parse_treebank(
    text: &str,
    name: SplitName,
    domain: &str,
    lenient: bool,
) -> Result<(TreebankSplit, Vec<Skipped>), CorpusError> {
    let mut trees = Vec::new();
    let mut skipped = Vec::new();
    for item in split_expressions(text) {
        let (line, result) = match item {
            Ok((line, expr)) => (
                line,
                parse_bracketed(&expr)
                    .and_then(|t| t.normalized())
                    .map_err(|e| e.to_string()),
            ),
            Err((line, junk)) => (
                line,
                Err(format!("not a bracketed tree: '{}'", junk.trim())),
            ),
        };
        match result {
            Ok(tree) => trees.push(tree),
            Err(message) if lenient => skipped.push(Skipped { line, message }),
            Err(message) => return Err(CorpusError::ParseError { line, message }),
        }
    }
    if trees.is_empty() {
        return Err(CorpusError::EmptyTreebank);
    }
    Ok((
        TreebankSplit {
            name,
            domain: domain.to_string(),
            trees,
        },
        skipped,
    ))
}

pub fn load_treebank(
    path: &Path,
    name: SplitName,
    domain: &str,
    lenient: bool,
) -> Result<(TreebankSplit, Vec<Skipped>), CorpusError> {
    let text = read_existing(path)?;
    parse_treebank(&text, name, domain, lenient)
}

fn read_existing(path: &Path) -> Result<String, CorpusError> {
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => CorpusError::FileNotFound(path.to_path_buf()),
        _ => CorpusError::Io(e),
    })
}

/// Which numbered PTB sections make up each split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PtbLayout {
    pub train: RangeInclusive<u32>,
    pub dev: RangeInclusive<u32>,
    pub test: RangeInclusive<u32>,
}

impl Default for PtbLayout {
    fn default() -> Self {
        PtbLayout {
            train: 2..=21,
            dev: 22..=22,
            test: 23..=23,
        }
    }
}

impl PtbLayout {
    pub fn sections(&self, split: SplitName) -> RangeInclusive<u32> {
        match split {
            SplitName::Train => self.train.clone(),
            SplitName::Dev => self.dev.clone(),
            SplitName::Test => self.test.clone(),
        }
    }
}

/// Loads a split from a PTB `parsed/mrg/wsj` style directory: two-digit
/// section directories holding `.mrg` files, read in name order.
pub fn load_ptb_split(
    root: &Path,
    split: SplitName,
    layout: &PtbLayout,
    lenient: bool,
) -> Result<(TreebankSplit, Vec<Skipped>), CorpusError> {
    if !root.is_dir() {
        return Err(CorpusError::FileNotFound(root.to_path_buf()));
    }
    let mut trees = Vec::new();
    let mut skipped = Vec::new();
    for section in layout.sections(split) {
        let dir = root.join(format!("{section:02}"));
        if !dir.is_dir() {
            return Err(CorpusError::FileNotFound(dir));
        }
        let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("mrg")))
            .collect();
        files.sort();
        for file in files {
            let text = read_existing(&file)?;
            match parse_treebank(&text, split, "news", lenient) {
                Ok((part, skip)) => {
                    trees.extend(part.trees);
                    skipped.extend(skip);
                }
                Err(CorpusError::EmptyTreebank) => {}
                Err(CorpusError::ParseError { line, message }) => {
                    return Err(CorpusError::ParseError {
                        line,
                        message: format!("{}: {message}", file.display()),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }
    if trees.is_empty() {
        return Err(CorpusError::EmptyTreebank);
    }
    Ok((
        TreebankSplit {
            name: split,
            domain: "news".into(),
            trees,
        },
        skipped,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreebankStats {
    pub trees: usize,
    pub tokens: usize,
    pub mean_length: f64,
    pub max_length: usize,
    pub max_depth: usize,
    pub constituents: usize,
    pub labels: BTreeMap<String, usize>,
}

pub fn treebank_stats(trees: &[Tree]) -> TreebankStats {
    let mut labels = BTreeMap::new();
    let mut constituents = 0;
    for t in trees {
        for s in t.spans(false) {
            *labels.entry(s.label.to_string()).or_insert(0) += 1;
            constituents += 1;
        }
    }
    let tokens: usize = trees.iter().map(Tree::len).sum();
    TreebankStats {
        trees: trees.len(),
        tokens,
        mean_length: if trees.is_empty() {
            0.0
        } else {
            tokens as f64 / trees.len() as f64
        },
        max_length: trees.iter().map(Tree::len).max().unwrap_or(0),
        max_depth: trees.iter().map(|t| t.root().depth()).max().unwrap_or(0),
        constituents,
        labels,
    }
}

/// Picks `k` demonstrations from `pool` with a seeded draw.
pub fn select_demonstrations(
    pool: &[Tree],
    k: usize,
    seed: u64,
    strategy: Strategy,
) -> Result<Vec<Demonstration>, CorpusError> {
    if k > pool.len() {
        return Err(PromptError::MissingDemonstrations {
            needed: k,
            available: pool.len(),
        }
        .into());
    }
    let mut r = rng(seed);
    sample(&mut r, pool.len(), k)
        .into_iter()
        .map(|i| Demonstration::from_tree(&pool[i], strategy).map_err(|e| PromptError::from(e).into()))
        .collect()
}

/// Outcome of one sentence in an experiment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub id: String,
    pub domain: String,
    pub sentence: String,
    pub gold: Option<String>,
    /// Raw model output; absent when the backend failed.
    pub prediction_raw: Option<String>,
    /// The prediction as a bracketed tree, when it decodes and parses.
    #[serde(default)]
    pub prediction_tree: Option<String>,
    pub valid: bool,
    pub validity_errors: Vec<ValidityError>,
    pub faithful: bool,
    pub faithfulness_errors: Vec<FaithfulnessError>,
    pub pmc_rounds: Option<usize>,
    pub counts: Option<SentenceCounts>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend_error: Option<String>,
}

impl ResultRecord {
    pub fn failed(&self) -> bool {
        self.backend_error.is_some()
    }

    pub fn input_length(&self) -> usize {
        self.sentence.split_whitespace().count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: PromptMode,
    /// Runs the parse-check-revise loop instead of a single completion.
    pub pmc: Option<PmcConfig>,
    pub eval: EvalConfig,
    /// Worker count; 1 runs sequentially with stable output order.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: PromptMode::zero_shot(),
            pmc: None,
            eval: EvalConfig::default(),
            workers: 1,
        }
    }
}

/// Runs the pipeline for one gold tree and builds its record.
pub fn process_sentence(
    id: String,
    domain: &str,
    gold: &Tree,
    ctx: &PromptContext,
    parser: &dyn Backend,
    checker: Option<&dyn Backend>,
    config: &ExperimentConfig,
) -> Result<ResultRecord, CorpusError> {
    let gold = preprocess_tree(gold).map_err(PromptError::from)?;
    let tokens = gold.tokens();
    let mut record = ResultRecord {
        id,
        domain: domain.to_string(),
        sentence: joined(&tokens),
        gold: Some(gold.to_string()),
        prediction_raw: None,
        prediction_tree: None,
        valid: false,
        validity_errors: Vec::new(),
        faithful: false,
        faithfulness_errors: Vec::new(),
        pmc_rounds: None,
        counts: None,
        backend_error: None,
    };
    let raw = match &config.pmc {
        Some(pmc) => match run_pmc(&tokens, ctx, config.mode, parser, checker, pmc) {
            Ok(session) => {
                record.pmc_rounds = Some(session.rounds.len());
                session.final_output.unwrap_or_default()
            }
            Err(PmcError::Backend { source, partial }) => {
                record.pmc_rounds = Some(partial.rounds.len());
                record.backend_error = Some(source.to_string());
                return Ok(record);
            }
            Err(e) => return Err(e.into()),
        },
        None => {
            let prompt = ctx.build(config.mode, &tokens)?;
            match parser.complete(&CompletionRequest::new(prompt)) {
                Ok(r) => r.text,
                Err(e) => {
                    record.backend_error = Some(e.to_string());
                    return Ok(record);
                }
            }
        }
    };
    let gold_brackets = eval_spans(&gold, &config.eval).len();
    match to_bracketed(&raw, ctx.strategy) {
        Ok(text) => {
            let v = check_validity(&text);
            let f = check_faithfulness(&text, &tokens);
            if v.valid {
                record.prediction_tree = tree_region(&text)
                    .and_then(|(_, r)| parse_bracketed(r).ok())
                    .map(|t| t.to_string());
            }
            record.counts = Some(score_sentence(&gold, &text, &config.eval));
            (record.valid, record.validity_errors) = (v.valid, v.errors);
            (record.faithful, record.faithfulness_errors) = (f.faithful, f.errors);
        }
        Err(reason) => {
            let (v, f) = undecodable_reports(&reason);
            record.counts = Some(SentenceCounts {
                matched: 0,
                predicted: 0,
                gold: gold_brackets,
                invalid: true,
                unfaithful: true,
            });
            record.validity_errors = v.errors;
            record.faithfulness_errors = f.errors;
        }
    }
    record.prediction_raw = Some(raw);
    Ok(record)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct RunSummary {
    pub written: usize,
    pub resumed: usize,
    pub backend_failures: usize,
}

/// Runs every tree of `split` not in `completed` and appends one JSON line
/// per record to `out` as soon as it is ready.
pub fn run_experiment<W: Write + Send>(
    split: &TreebankSplit,
    ctx: &PromptContext,
    parser: &dyn Backend,
    checker: Option<&dyn Backend>,
    config: &ExperimentConfig,
    completed: &HashSet<String>,
    out: W,
) -> Result<RunSummary, CorpusError> {
    let todo: Vec<usize> = (0..split.trees.len())
        .filter(|&i| !completed.contains(&split.id(i)))
        .collect();
    let sink = Mutex::new((out, RunSummary {
        resumed: split.trees.len() - todo.len(),
        ..RunSummary::default()
    }));
    let results = with_workers(config.workers, |exec| {
        exec.map(&todo, |&i| -> Result<(), CorpusError> {
            let record = process_sentence(split.id(i), &split.domain, &split.trees[i], ctx, parser, checker, config)?;
            let line = serde_json::to_string(&record).expect("records serialize");
            let mut guard = sink.lock().unwrap_or_else(|p| p.into_inner());
            let (w, summary) = &mut *guard;
            writeln!(w, "{line}")?;
            w.flush()?;
            summary.written += 1;
            if record.failed() {
                summary.backend_failures += 1;
            }
            Ok(())
        })
    });
    results.into_iter().collect::<Result<(), _>>()?;
    Ok(sink.into_inner().unwrap_or_else(|p| p.into_inner()).1)
}

/// Reads a record file.
pub fn read_records(reader: impl BufRead) -> Result<Vec<ResultRecord>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CorpusError::Record {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn read_records_file(path: &Path) -> Result<Vec<ResultRecord>, CorpusError> {
    let text = read_existing(path)?;
    read_records(text.as_bytes())
}

/// Readies `path` for appending and returns the ids already recorded. A
/// trailing partial line left by an interrupted run is cut off.
pub fn prepare_resume(path: &Path) -> Result<HashSet<String>, CorpusError> {
    if !path.exists() {
        return Ok(HashSet::new());
    }
    let text = std::fs::read_to_string(path)?;
    let keep = match text.rfind('\n') {
        Some(i) => i + 1,
        None => 0,
    };
    if keep < text.len() {
        let f = std::fs::OpenOptions::new().write(true).open(path)?;
        f.set_len(keep as u64)?;
    }
    let mut ids = HashSet::new();
    for r in read_records(&text.as_bytes()[..keep])? {
        ids.insert(r.id);
    }
    Ok(ids)
}

/// One row of a report: a domain, an input-length bucket or a span-length
/// bucket. F1 values and rates are percentages.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub key: String,
    pub sentences: usize,
    pub backend_failures: usize,
    pub lp: f64,
    pub lr: f64,
    pub f1: f64,
    pub valid_f1: f64,
    pub overall_f1: f64,
    pub invalid_rate: f64,
    pub unfaithful_rate: f64,
    pub over_generation_rate: f64,
    pub word_mismatch_rate: f64,
    pub failure_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpanBucketRow {
    pub key: String,
    pub gold: usize,
    pub predicted: usize,
    pub matched: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Primary error kinds among invalid and unfaithful outputs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ErrorDistribution {
    pub invalid: BTreeMap<String, usize>,
    pub unfaithful: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub domains: Vec<ReportRow>,
    pub total: ReportRow,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_f1: Option<f64>,
    /// Relative reduction from the reference to the mean F1 of the other
    /// domains.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub average_delta_f1: Option<f64>,
    pub errors: ErrorDistribution,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub by_input_length: Vec<ReportRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub by_span_length: Vec<SpanBucketRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    /// Use this domain's F1 as the in-domain reference.
    Domain(String),
    /// A fixed F1 in percent.
    Value(f64),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportOptions {
    pub eval: EvalConfig,
    pub reference: Option<Reference>,
    pub by_input_length: bool,
    /// Bucket width for the span-length breakdown.
    pub span_bucket_width: Option<usize>,
}

pub const INPUT_LENGTH_BUCKETS: [(usize, usize, &str); 5] = [
    (0, 10, "<=10"),
    (11, 20, "11-20"),
    (21, 30, "21-30"),
    (31, 40, "31-40"),
    (41, usize::MAX, ">40"),
];

fn row(key: &str, records: &[&ResultRecord], eval: &EvalConfig) -> Result<ReportRow, CorpusError> {
    let scored: Vec<SentenceCounts> = records
        .iter()
        .filter(|r| !r.failed())
        .filter_map(|r| r.counts)
        .collect();
    let failures = records.iter().filter(|r| r.failed()).count();
    let mut out = ReportRow {
        key: key.to_string(),
        sentences: records.len(),
        backend_failures: failures,
        lp: 0.0,
        lr: 0.0,
        f1: 0.0,
        valid_f1: 0.0,
        overall_f1: 0.0,
        invalid_rate: 0.0,
        unfaithful_rate: 0.0,
        over_generation_rate: 0.0,
        word_mismatch_rate: 0.0,
        failure_rate: 0.0,
        delta_f1: None,
    };
    if scored.is_empty() {
        return Ok(out);
    }
    let s = score_corpus(&scored, eval)?;
    let answered: Vec<&&ResultRecord> = records.iter().filter(|r| !r.failed()).collect();
    let n = answered.len() as f64;
    let rate = |pred: &dyn Fn(UnfaithfulKind) -> bool| {
        100.0
            * answered
                .iter()
                .filter(|r| r.faithfulness_errors.first().is_some_and(|e| pred(e.kind)))
                .count() as f64
            / n
    };
    out.lp = 100.0 * s.lp;
    out.lr = 100.0 * s.lr;
    out.f1 = 100.0 * s.f1;
    out.valid_f1 = 100.0 * s.valid_f1;
    out.overall_f1 = 100.0 * s.overall_f1;
    out.invalid_rate = 100.0 * answered.iter().filter(|r| !r.valid).count() as f64 / n;
    out.unfaithful_rate = 100.0 * answered.iter().filter(|r| !r.faithful).count() as f64 / n;
    out.over_generation_rate = rate(&|k| matches!(k, UnfaithfulKind::OverGeneration(_)));
    out.word_mismatch_rate = rate(&|k| k == UnfaithfulKind::WordMismatch);
    out.failure_rate = rate(&|k| k == UnfaithfulKind::PredictionFailure);
    Ok(out)
}

fn span_buckets(records: &[&ResultRecord], width: usize, eval: &EvalConfig) -> Vec<SpanBucketRow> {
    let width = width.max(1);
    let mut acc: BTreeMap<usize, (usize, usize, usize)> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.failed()) {
        let Some(gold) = r.gold.as_deref().and_then(|g| parse_bracketed(g).ok()) else {
            continue;
        };
        let gold_spans = eval_spans(&gold, eval);
        let pred_spans = r
            .prediction_tree
            .as_deref()
            .and_then(|p| parse_bracketed(p).ok())
            .map(|p| eval_spans(&p, eval))
            .unwrap_or_default();
        let bucket = |len: usize| (len.max(1) - 1) / width;
        let mut buckets: BTreeMap<usize, (Vec<_>, Vec<_>)> = BTreeMap::new();
        for s in gold_spans {
            buckets.entry(bucket(s.len())).or_default().0.push(s);
        }
        for s in pred_spans {
            buckets.entry(bucket(s.len())).or_default().1.push(s);
        }
        for (b, (g, p)) in buckets {
            let e = acc.entry(b).or_default();
            e.0 += g.len();
            e.1 += p.len();
            e.2 += matched_spans(&g, &p);
        }
    }
    acc.into_iter()
        .map(|(b, (gold, predicted, matched))| {
            let precision = if predicted == 0 { 0.0 } else { matched as f64 / predicted as f64 };
            let recall = if gold == 0 { 0.0 } else { matched as f64 / gold as f64 };
            SpanBucketRow {
                key: format!("{}-{}", b * width + 1, (b + 1) * width),
                gold,
                predicted,
                matched,
                precision: 100.0 * precision,
                recall: 100.0 * recall,
                f1: 100.0 * crate::scoring::f1(precision, recall),
            }
        })
        .collect()
}

/// Aggregates records by domain, in order of first appearance.
pub fn report(records: &[ResultRecord], options: &ReportOptions) -> Result<Report, CorpusError> {
    if records.is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    let mut order: Vec<&str> = Vec::new();
    for r in records {
        if !order.contains(&r.domain.as_str()) {
            order.push(&r.domain);
        }
    }
    let all: Vec<&ResultRecord> = records.iter().collect();
    let mut domains = order
        .iter()
        .map(|d| {
            let rs: Vec<&ResultRecord> = records.iter().filter(|r| r.domain == *d).collect();
            row(d, &rs, &options.eval)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let total = row("all", &all, &options.eval)?;

    let (reference_f1, reference_domain) = match &options.reference {
        Some(Reference::Value(v)) => (Some(*v), None),
        Some(Reference::Domain(d)) => (
            domains.iter().find(|r| &r.key == d).map(|r| r.f1),
            Some(d.as_str()),
        ),
        None => (None, None),
    };
    let mut average_delta_f1 = None;
    if let Some(reference) = reference_f1 {
        let mut others = Vec::new();
        for r in domains.iter_mut().filter(|r| Some(r.key.as_str()) != reference_domain) {
            r.delta_f1 = reduction_rate(reference, r.f1).ok();
            others.push(r.f1);
        }
        if !others.is_empty() {
            let mean = others.iter().sum::<f64>() / others.len() as f64;
            average_delta_f1 = reduction_rate(reference, mean).ok();
        }
    }

    let mut errors = ErrorDistribution::default();
    for r in records.iter().filter(|r| !r.failed()) {
        if let Some(e) = r.validity_errors.first() {
            *errors.invalid.entry(e.kind.to_string()).or_insert(0) += 1;
        }
        if let Some(e) = r.faithfulness_errors.first() {
            *errors.unfaithful.entry(e.kind.to_string()).or_insert(0) += 1;
        }
    }

    let by_input_length = if options.by_input_length {
        INPUT_LENGTH_BUCKETS
            .iter()
            .filter_map(|&(lo, hi, key)| {
                let rs: Vec<&ResultRecord> = records
                    .iter()
                    .filter(|r| (lo..=hi).contains(&r.input_length()))
                    .collect();
                (!rs.is_empty()).then(|| row(key, &rs, &options.eval))
            })
            .collect::<Result<Vec<_>, _>>()?
    } else {
        Vec::new()
    };
    let by_span_length = options
        .span_bucket_width
        .map(|w| span_buckets(&all, w, &options.eval))
        .unwrap_or_default();

    Ok(Report {
        domains,
        total,
        reference_f1,
        average_delta_f1,
        errors,
        by_input_length,
        by_span_length,
    })
}

const ROW_COLUMNS: [&str; 13] = [
    "sentences", "failed", "LP", "LR", "F1", "valid_F1", "overall_F1", "invalid%", "unfaithful%",
    "overgen%", "wordmis%", "failure%", "dF1%",
];

fn row_cells(r: &ReportRow) -> Vec<String> {
    let f = |x: f64| format!("{x:.2}");
    vec![
        r.sentences.to_string(),
        r.backend_failures.to_string(),
        f(r.lp),
        f(r.lr),
        f(r.f1),
        f(r.valid_f1),
        f(r.overall_f1),
        f(r.invalid_rate),
        f(r.unfaithful_rate),
        f(r.over_generation_rate),
        f(r.word_mismatch_rate),
        f(r.failure_rate),
        r.delta_f1.map_or_else(|| "-".to_string(), f),
    ]
}

fn table(out: &mut String, title: &str, header: &[&str], rows: &[(String, Vec<String>)]) {
    let mut widths: Vec<usize> = std::iter::once(title.len())
        .chain(header.iter().map(|h| h.len()))
        .collect();
    for (k, cells) in rows {
        widths[0] = widths[0].max(k.len());
        for (i, c) in cells.iter().enumerate() {
            widths[i + 1] = widths[i + 1].max(c.len());
        }
    }
    let _ = write!(out, "{title:<w$}", w = widths[0]);
    for (h, w) in header.iter().zip(&widths[1..]) {
        let _ = write!(out, "  {h:>w$}");
    }
    out.push('\n');
    for (k, cells) in rows {
        let _ = write!(out, "{k:<w$}", w = widths[0]);
        for (c, w) in cells.iter().zip(&widths[1..]) {
            let _ = write!(out, "  {c:>w$}");
        }
        out.push('\n');
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        let mut rows: Vec<(String, Vec<String>)> =
            self.domains.iter().map(|r| (r.key.clone(), row_cells(r))).collect();
        rows.push((self.total.key.clone(), row_cells(&self.total)));
        table(&mut out, "domain", &ROW_COLUMNS, &rows);
        if let Some(d) = self.average_delta_f1 {
            let _ = writeln!(out, "\naverage dF1 vs reference {:.2}: {d:.2}%", self.reference_f1.unwrap_or(0.0));
        }
        if !self.errors.invalid.is_empty() || !self.errors.unfaithful.is_empty() {
            out.push_str("\nerror kinds\n");
            for (k, n) in &self.errors.invalid {
                let _ = writeln!(out, "  invalid/{k}: {n}");
            }
            for (k, n) in &self.errors.unfaithful {
                let _ = writeln!(out, "  unfaithful/{k}: {n}");
            }
        }
        if !self.by_input_length.is_empty() {
            out.push('\n');
            let rows: Vec<_> = self
                .by_input_length
                .iter()
                .map(|r| (r.key.clone(), row_cells(r)))
                .collect();
            table(&mut out, "input length", &ROW_COLUMNS, &rows);
        }
        if !self.by_span_length.is_empty() {
            out.push('\n');
            let rows: Vec<_> = self
                .by_span_length
                .iter()
                .map(|r| {
                    (
                        r.key.clone(),
                        vec![
                            r.gold.to_string(),
                            r.predicted.to_string(),
                            r.matched.to_string(),
                            format!("{:.2}", r.precision),
                            format!("{:.2}", r.recall),
                            format!("{:.2}", r.f1),
                        ],
                    )
                })
                .collect();
            table(&mut out, "span length", &["gold", "pred", "matched", "P", "R", "F1"], &rows);
        }
        f.write_str(&out)
    }
}

impl Report {
    /// Every row as CSV with a leading `section` column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "section,key,sentences,failed,lp,lr,f1,valid_f1,overall_f1,invalid_rate,unfaithful_rate,over_generation_rate,word_mismatch_rate,failure_rate,delta_f1\n",
        );
        let mut push = |section: &str, r: &ReportRow| {
            let cells = row_cells(r);
            let delta = if cells[12] == "-" { "" } else { &cells[12] };
            let _ = writeln!(out, "{section},{},{},{delta}", r.key, cells[..12].join(","));
        };
        for r in &self.domains {
            push("domain", r);
        }
        push("total", &self.total);
        for r in &self.by_input_length {
            push("input_length", r);
        }
        if !self.by_span_length.is_empty() {
            out.push_str("\nsection,key,gold,predicted,matched,precision,recall,f1\n");
            for r in &self.by_span_length {
                let _ = writeln!(
                    out,
                    "span_length,{},{},{},{},{:.2},{:.2},{:.2}",
                    r.key, r.gold, r.predicted, r.matched, r.precision, r.recall, r.f1
                );
            }
        }
        out
    }
}
