use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use conparse::backend::{Backend, HttpBackend, ScriptedBackend, Throttled};
use conparse::corpus::{
    load_treebank, prepare_resume, read_records_file, report, run_experiment, select_demonstrations,
    treebank_stats, CorpusError, ExperimentConfig, Reference, ReportOptions, SplitName,
};
use conparse::faithfulness::{check_faithfulness, corrupt_faithfulness, SubstitutionTable};
use conparse::linearize::{decode_payload, encode, Strategy};
use conparse::pmc::{run_pmc, CheckerMode, PmcConfig, PmcError};
use conparse::prompting::{export_finetune_records, preprocess, PromptContext, PromptMode, Templates};
use conparse::scoring::{score_corpus, score_sentence, EvalConfig, InvalidPolicy};
use conparse::tree::Tree;
use conparse::validity::{check_validity, corrupt_validity, InvalidKind};

#[derive(Parser)]
#[command(name = "conparse", version, about = "Constituency parsing with text-completion models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Treebank statistics.
    Stats {
        treebank: PathBuf,
        #[arg(long)]
        lenient: bool,
        #[arg(long)]
        json: bool,
    },
    /// Linearize every tree of a treebank.
    Linearize {
        treebank: PathBuf,
        #[arg(long, default_value = "bracket")]
        strategy: Strategy,
        #[arg(long)]
        lenient: bool,
    },
    /// Decode linearized trees (one per line; span payloads separated by blank lines).
    Decode {
        /// Input file, or - for stdin.
        input: PathBuf,
        #[arg(long, default_value = "bracket")]
        strategy: Strategy,
    },
    /// Check predictions (one per line) for structural validity.
    Validate {
        input: PathBuf,
    },
    /// Check predictions (one per line) against the words of gold trees.
    Faithcheck {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
    },
    /// Generate erroneous trees with annotations.
    Corrupt {
        treebank: PathBuf,
        #[arg(long, value_enum)]
        kind: CorruptKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Tab-separated substitution pairs for word-mismatch samples.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long)]
        lenient: bool,
    },
    /// Score predictions (one per line) against gold trees.
    Score {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        invalid_policy: Option<InvalidPolicyArg>,
        /// evalb-style parameter file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Parse a treebank's sentences with a model and write JSONL records.
    Parse {
        treebank: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value = "zero")]
        mode: ModeArg,
        #[arg(long, default_value_t = 0)]
        shots: usize,
        /// Treebank the demonstrations are drawn from.
        #[arg(long)]
        demos: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "news")]
        domain: String,
        #[arg(long, default_value = "test")]
        split: SplitName,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        lenient: bool,
        #[arg(long)]
        invalid_policy: Option<InvalidPolicyArg>,
    },
    /// Run the parse-check-revise loop on one sentence and print its trace.
    Pmc {
        sentence: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Summarize JSONL records.
    Report {
        #[arg(required = true)]
        records: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Domain whose F1 is the in-domain reference.
        #[arg(long, conflicts_with = "reference_f1")]
        reference: Option<String>,
        #[arg(long)]
        reference_f1: Option<f64>,
        #[arg(long)]
        by_input_length: bool,
        #[arg(long)]
        by_span_length: bool,
        #[arg(long, default_value_t = 5)]
        span_width: usize,
        #[arg(long)]
        invalid_policy: Option<InvalidPolicyArg>,
    },
    /// Write instruction/input/output training records as JSONL.
    ExportFinetune {
        treebank: PathBuf,
        #[arg(long, default_value = "bracket")]
        strategy: Strategy,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        lenient: bool,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long, default_value = "bracket")]
    strategy: Strategy,
    #[arg(long, value_enum, default_value = "script")]
    backend: BackendArg,
    #[arg(long)]
    script: Option<PathBuf>,
    /// Worker count for sentences and in-flight requests.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    #[arg(long, default_value_t = 3)]
    pmc_rounds: usize,
    #[arg(long, value_enum, default_value = "rule")]
    checker_mode: CheckerArg,
    /// Directory of template overrides.
    #[arg(long)]
    templates: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Http,
    Script,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Zero,
    Few,
    Les,
    Pmc,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CheckerArg {
    Rule,
    Llm,
}

#[derive(Clone, Copy, ValueEnum)]
enum InvalidPolicyArg {
    Zero,
    Skip,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum CorruptKind {
    MissingWord,
    MoreThanOneWord,
    BracketUnmatched,
    WordMismatch,
}

enum Failure {
    Usage(String),
    Data(String),
    Backend(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Backend(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Backend(m) => m,
        }
    }
}

fn data(e: impl std::fmt::Display) -> Failure {
    Failure::Data(e.to_string())
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        data(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        data(e)
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn read_input(path: &Path) -> Result<String> {
    if path == Path::new("-") {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        return Ok(s);
    }
    std::fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn load(path: &Path, lenient: bool) -> Result<Vec<Tree>> {
    let (split, skipped) = load_treebank(path, SplitName::Test, "news", lenient)?;
    for s in &skipped {
        eprintln!("skipped tree at line {}: {}", s.line, s.message);
    }
    Ok(split.trees)
}

fn lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.trim().is_empty()).collect()
}

fn policy(config: Option<&Path>, arg: Option<InvalidPolicyArg>) -> Result<EvalConfig> {
    let mut eval = match config {
        Some(p) => EvalConfig::from_file(p).map_err(data)?,
        None => EvalConfig::default(),
    };
    if let Some(a) = arg {
        eval.invalid_policy = match a {
            InvalidPolicyArg::Zero => InvalidPolicy::ZeroCounts,
            InvalidPolicyArg::Skip => InvalidPolicy::SkipInvalid,
        };
    }
    Ok(eval)
}

fn json_line(out: &mut impl Write, value: &impl serde::Serialize) -> Result<()> {
    let line = serde_json::to_string(value).map_err(data)?;
    writeln!(out, "{line}")?;
    Ok(())
}

fn backend(args: &RunArgs) -> Result<Box<dyn Backend>> {
    let inner: Box<dyn Backend> = match args.backend {
        BackendArg::Script => {
            let path = args
                .script
                .as_deref()
                .ok_or_else(|| Failure::Usage("--backend script needs --script FILE".into()))?;
            Box::new(ScriptedBackend::load(path).map_err(data)?)
        }
        BackendArg::Http => Box::new(HttpBackend::from_env().map_err(|e| Failure::Backend(e.to_string()))?),
    };
    Ok(Box::new(Throttled::new(inner, args.parallel.max(1))))
}

fn context(args: &RunArgs) -> Result<PromptContext> {
    let mut ctx = PromptContext::new(args.strategy);
    if let Some(dir) = &args.templates {
        ctx.templates = Templates::from_dir(dir).map_err(data)?;
    }
    Ok(ctx)
}

fn pmc_config(args: &RunArgs) -> Result<PmcConfig> {
    if args.pmc_rounds == 0 {
        return Err(Failure::Usage("--pmc-rounds must be at least 1".into()));
    }
    Ok(PmcConfig {
        max_rounds: args.pmc_rounds,
        checker_mode: match args.checker_mode {
            CheckerArg::Rule => CheckerMode::RuleBased,
            CheckerArg::Llm => CheckerMode::LlmBased,
        },
        stop_on_clean: true,
    })
}

fn run(command: Command) -> Result<()> {
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    match command {
        Command::Stats { treebank, lenient, json } => {
            let stats = treebank_stats(&load(&treebank, lenient)?);
            if json {
                json_line(&mut out, &stats)?;
            } else {
                writeln!(out, "trees        {}", stats.trees)?;
                writeln!(out, "tokens       {}", stats.tokens)?;
                writeln!(out, "mean length  {:.2}", stats.mean_length)?;
                writeln!(out, "max length   {}", stats.max_length)?;
                writeln!(out, "max depth    {}", stats.max_depth)?;
                writeln!(out, "constituents {}", stats.constituents)?;
                for (label, n) in &stats.labels {
                    writeln!(out, "  {label:<8} {n}")?;
                }
            }
        }
        Command::Linearize { treebank, strategy, lenient } => {
            for (i, tree) in load(&treebank, lenient)?.iter().enumerate() {
                if strategy == Strategy::Span && i > 0 {
                    writeln!(out)?;
                }
                writeln!(out, "{}", encode(tree, strategy).payload)?;
            }
        }
        Command::Decode { input, strategy } => {
            let text = read_input(&input)?;
            let items: Vec<String> = if strategy == Strategy::Span {
                text.split("\n\n")
                    .map(str::trim)
                    .filter(|b| !b.is_empty())
                    .map(String::from)
                    .collect()
            } else {
                lines(&text).into_iter().map(String::from).collect()
            };
            for (i, item) in items.iter().enumerate() {
                let tree = decode_payload(item, strategy).map_err(|e| data(format!("item {}: {e}", i + 1)))?;
                writeln!(out, "{tree}")?;
            }
        }
        Command::Validate { input } => {
            let text = read_input(&input)?;
            let mut invalid = 0;
            for line in lines(&text) {
                let r = check_validity(line);
                invalid += usize::from(!r.valid);
                json_line(&mut out, &r)?;
            }
            eprintln!("{invalid} invalid of {}", lines(&text).len());
        }
        Command::Faithcheck { gold, pred } => {
            let gold = load(&gold, false)?;
            let text = read_input(&pred)?;
            let preds = lines(&text);
            if preds.len() != gold.len() {
                return Err(data(format!("{} predictions for {} gold trees", preds.len(), gold.len())));
            }
            for (g, p) in gold.iter().zip(preds) {
                json_line(&mut out, &check_faithfulness(p, &g.tokens()))?;
            }
        }
        Command::Corrupt { treebank, kind, seed, table, lenient } => {
            let table = match table {
                Some(p) => {
                    let text = read_input(&p)?;
                    let mut pairs = Vec::new();
                    for (i, l) in lines(&text).into_iter().enumerate() {
                        let (a, b) = l
                            .split_once('\t')
                            .ok_or_else(|| data(format!("{}: line {} is not tab-separated", p.display(), i + 1)))?;
                        pairs.push((a.trim().to_string(), b.trim().to_string()));
                    }
                    SubstitutionTable::new(pairs)
                }
                None => SubstitutionTable::builtin(),
            };
            let mut skipped = 0;
            for (i, tree) in load(&treebank, lenient)?.iter().enumerate() {
                let seed = seed.wrapping_add(i as u64);
                let result = match kind {
                    CorruptKind::MissingWord => corrupt_validity(tree, InvalidKind::MissingWord, seed).map(|c| serde_json::to_value(c)),
                    CorruptKind::MoreThanOneWord => {
                        corrupt_validity(tree, InvalidKind::MoreThanOneWord, seed).map(|c| serde_json::to_value(c))
                    }
                    CorruptKind::BracketUnmatched => {
                        corrupt_validity(tree, InvalidKind::BracketUnmatched, seed).map(|c| serde_json::to_value(c))
                    }
                    CorruptKind::WordMismatch => corrupt_faithfulness(tree, &table, seed).map(|c| serde_json::to_value(c)),
                };
                match result {
                    Ok(v) => {
                        let mut v = v.map_err(data)?;
                        v["sentence"] = tree.sentence().into();
                        v["gold"] = tree.to_string().into();
                        json_line(&mut out, &v)?;
                    }
                    Err(_) => skipped += 1,
                }
            }
            if skipped > 0 {
                eprintln!("{skipped} trees had no applicable corruption");
            }
        }
        Command::Score { gold, pred, invalid_policy, config, json } => {
            let eval = policy(config.as_deref(), invalid_policy)?;
            let gold = load(&gold, false)?;
            let text = read_input(&pred)?;
            let mut preds: Vec<&str> = text.lines().collect();
            while preds.last().is_some_and(|l| l.trim().is_empty()) {
                preds.pop();
            }
            if preds.len() != gold.len() {
                return Err(data(format!("{} predictions for {} gold trees", preds.len(), gold.len())));
            }
            let counts: Vec<_> = gold.iter().zip(&preds).map(|(g, p)| score_sentence(g, p, &eval)).collect();
            let r = score_corpus(&counts, &eval).map_err(data)?;
            if json {
                json_line(&mut out, &r)?;
            } else {
                write!(out, "{r}")?;
            }
        }
        Command::Parse {
            treebank,
            run,
            mode,
            shots,
            demos,
            seed,
            domain,
            split,
            out: out_path,
            lenient,
            invalid_policy,
        } => {
            let (mut data_split, skipped) = load_treebank(&treebank, split, &domain, lenient)?;
            for s in &skipped {
                eprintln!("skipped tree at line {}: {}", s.line, s.message);
            }
            data_split.domain = domain;
            let mut ctx = context(&run)?;
            let shots = match mode {
                ModeArg::Few if shots == 0 => return Err(Failure::Usage("--mode few needs --shots K".into())),
                _ => shots,
            };
            if shots > 0 {
                let pool_path = demos
                    .as_deref()
                    .ok_or_else(|| Failure::Usage("--shots needs --demos TREEBANK".into()))?;
                let pool = load(pool_path, lenient)?;
                ctx.demonstrations = select_demonstrations(&pool, shots, seed, run.strategy)?;
            }
            let config = ExperimentConfig {
                mode: PromptMode {
                    shots,
                    les: mode == ModeArg::Les,
                },
                pmc: (mode == ModeArg::Pmc).then(|| pmc_config(&run)).transpose()?,
                eval: policy(None, invalid_policy)?,
                workers: run.parallel.max(1),
            };
            let backend = backend(&run)?;
            let done = prepare_resume(&out_path)?;
            let file = OpenOptions::new().create(true).append(true).open(&out_path)?;
            let checker = (run.checker_mode == CheckerArg::Llm).then_some(&*backend);
            let summary = run_experiment(&data_split, &ctx, &*backend, checker, &config, &done, file)?;
            eprintln!(
                "wrote {} records ({} already present, {} backend failures)",
                summary.written, summary.resumed, summary.backend_failures
            );
            if summary.backend_failures > 0 {
                return Err(Failure::Backend(format!(
                    "{} sentences failed at the backend",
                    summary.backend_failures
                )));
            }
        }
        Command::Pmc { sentence, run } => {
            let ctx = context(&run)?;
            let backend = backend(&run)?;
            let checker = (run.checker_mode == CheckerArg::Llm).then_some(&*backend);
            match run_pmc(&preprocess(&sentence), &ctx, PromptMode::zero_shot(), &*backend, checker, &pmc_config(&run)?) {
                Ok(session) => {
                    let text = serde_json::to_string_pretty(&session).map_err(data)?;
                    writeln!(out, "{text}")?;
                }
                Err(PmcError::Backend { source, partial }) => {
                    let text = serde_json::to_string_pretty(&partial).map_err(data)?;
                    writeln!(out, "{text}")?;
                    return Err(Failure::Backend(source.to_string()));
                }
                Err(e) => return Err(data(e)),
            }
        }
        Command::Report {
            records,
            format,
            reference,
            reference_f1,
            by_input_length,
            by_span_length,
            span_width,
            invalid_policy,
        } => {
            let mut all = Vec::new();
            for path in &records {
                all.extend(read_records_file(path)?);
            }
            let options = ReportOptions {
                eval: policy(None, invalid_policy)?,
                reference: reference
                    .map(Reference::Domain)
                    .or(reference_f1.map(Reference::Value)),
                by_input_length,
                span_bucket_width: by_span_length.then_some(span_width),
            };
            let rep = report(&all, &options)?;
            match format {
                Format::Text => write!(out, "{rep}")?,
                Format::Json => {
                    let text = serde_json::to_string_pretty(&rep).map_err(data)?;
                    writeln!(out, "{text}")?;
                }
                Format::Csv => write!(out, "{}", rep.to_csv())?,
            }
        }
        Command::ExportFinetune { treebank, strategy, out: path, lenient } => {
            let trees = load(&treebank, lenient)?;
            let records = export_finetune_records(&trees, strategy, &Templates::default()).map_err(data)?;
            let mut sink: Box<dyn Write> = match &path {
                Some(p) => Box::new(BufWriter::new(File::create(p)?)),
                None => Box::new(&mut out),
            };
            for r in &records {
                json_line(&mut sink, r)?;
            }
            sink.flush()?;
            if path.is_some() {
                eprintln!("wrote {} records", records.len());
            }
        }
    }
    out.flush()?;
    Ok(())
}
