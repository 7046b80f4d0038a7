//! `thyropath` batch CLI: extract, classify, evaluate and generate.
//!
//! Exit codes: 0 success, 1 I/O, 2 schema or config, 3 internal invariant
//! violation. Logs go to stderr; data goes to files or stdout.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use thyropath::classifier::{classify, ClassifyError, Policy, RuleTable};
use thyropath::corpus_io::synth::{generate_synthetic, GeneratorConfig, NoiseConfig};
use thyropath::corpus_io::{self, CorpusError, RiskRecord};
use thyropath::evaluation::{
    classification_metrics, cohen_kappa, confusion, confusion_csv, error_frequency_csv,
    is_significant, match_mentions, metric_table, metrics_csv, metrics_json, CountTable,
    Discrepancy, MatchMode,
};
use thyropath::{
    default_lexicon, extract, load_lexicon, to_feature_record, DocumentMentions,
    ExtractionLexicon, FormatHint, GoldAnnotation, Mention, ReportDocument,
};

/// A failure carrying its process exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn io(error: impl Into<anyhow::Error>) -> Failure {
        Failure { code: 1, error: error.into() }
    }

    fn schema(error: impl Into<anyhow::Error>) -> Failure {
        Failure { code: 2, error: error.into() }
    }

    fn invariant(error: impl Into<anyhow::Error>) -> Failure {
        Failure { code: 3, error: error.into() }
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Failure {
        if e.is_io() {
            Failure::io(e)
        } else {
            Failure::schema(e)
        }
    }
}

type Outcome = Result<(), Failure>;

#[derive(Parser)]
#[command(name = "thyropath", version, about = "Feature extraction and risk classification for thyroid cancer pathology reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Auto,
    Structured,
    Unstructured,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Strict,
    Permissive,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Strict,
    Lenient,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Extract mentions and feature records from a corpus.
    Extract {
        #[arg(long)]
        input: PathBuf,
        /// Lexicon config; the built-in lexicon is used when absent.
        #[arg(long, env = "THYROPATH_LEXICON")]
        lexicon: Option<PathBuf>,
        /// Override every document's format hint.
        #[arg(long, value_enum, default_value = "auto")]
        format: FormatArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Per-document failures; defaults to errors.jsonl beside --out.
        #[arg(long)]
        errors: Option<PathBuf>,
    },
    /// Assign a risk tier to each feature record.
    Classify {
        #[arg(long)]
        features: PathBuf,
        /// Rules config (a lexicon file with a rules section, or the bare
        /// section). Falls back to THYROPATH_LEXICON, then the built-in ledger.
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "strict")]
        policy: PolicyArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predicted mentions against gold annotations.
    EvaluateExtraction {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        mode: ModeArg,
        /// CSV table; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Compare predicted risk tiers with gold tiers.
    EvaluateClassification {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Error frequency by (gold, predicted) pair.
        #[arg(long)]
        errors: Option<PathBuf>,
        /// One JSON line per misclassified document.
        #[arg(long)]
        discrepancies: Option<PathBuf>,
    },
    /// Write a synthetic corpus and its gold annotations.
    Generate {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        structured_frac: f64,
        /// `none` or `standard`.
        #[arg(long, default_value = "none")]
        noise: String,
        /// Writes PREFIX.corpus.jsonl and PREFIX.gold.jsonl.
        #[arg(long)]
        out_prefix: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Extract {
            input,
            lexicon,
            format,
            out,
            features,
            errors,
        } => run_extract(&input, lexicon.as_deref(), format, &out, &features, errors),
        Command::Classify {
            features,
            rules,
            policy,
            out,
        } => run_classify(&features, rules, policy, &out),
        Command::EvaluateExtraction {
            gold,
            pred,
            mode,
            out,
            json,
        } => run_evaluate_extraction(&gold, &pred, mode, out.as_deref(), json.as_deref()),
        Command::EvaluateClassification {
            gold,
            pred,
            out,
            errors,
            discrepancies,
        } => run_evaluate_classification(&gold, &pred, &out, errors.as_deref(), discrepancies.as_deref()),
        Command::Generate {
            seed,
            n,
            structured_frac,
            noise,
            out_prefix,
        } => run_generate(seed, n, structured_frac, &noise, &out_prefix),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn read_lexicon(path: Option<&Path>) -> Result<ExtractionLexicon, Failure> {
    match path {
        Some(p) => {
            let text = corpus_io::read_text(p)?;
            load_lexicon(&text).map_err(|e| Failure::schema(anyhow!("{}: {e}", p.display())))
        }
        None => Ok(default_lexicon()),
    }
}

#[derive(Serialize)]
struct ErrorLine {
    line: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    doc_id: Option<String>,
    error: String,
}

enum DocResult {
    Done(DocumentMentions, Box<thyropath::FeatureRecord>),
    Failed(ErrorLine),
}

fn check_spans(doc: &ReportDocument, mentions: &[Mention]) -> Result<(), Failure> {
    for m in mentions {
        m.validate_against(&doc.text)
            .map_err(|e| Failure::invariant(anyhow!("{}: extractor produced a bad span: {e}", doc.id)))?;
    }
    Ok(())
}

fn run_extract(
    input: &Path,
    lexicon: Option<&Path>,
    format: FormatArg,
    out: &Path,
    features: &Path,
    errors: Option<PathBuf>,
) -> Outcome {
    let lexicon = read_lexicon(lexicon)?;
    let text = corpus_io::read_text(input)?;
    let (docs, bad_lines) = corpus_io::parse_corpus_lenient(&text);
    let hint = match format {
        FormatArg::Auto => None,
        FormatArg::Structured => Some(FormatHint::Structured),
        FormatArg::Unstructured => Some(FormatHint::Unstructured),
    };
    let results: Vec<(usize, DocResult)> = docs
        .into_par_iter()
        .map(|(line, mut doc)| {
            if let Some(h) = hint {
                doc.format_hint = h;
            }
            let result = match extract(&doc, &lexicon) {
                Ok(mentions) => {
                    let record = to_feature_record(&doc, &mentions, &lexicon);
                    check_spans(&doc, &mentions)?;
                    DocResult::Done(
                        DocumentMentions {
                            doc_id: doc.id.clone(),
                            mentions,
                        },
                        Box::new(record),
                    )
                }
                Err(e) => DocResult::Failed(ErrorLine {
                    line,
                    doc_id: Some(doc.id.clone()),
                    error: e.to_string(),
                }),
            };
            Ok((line, result))
        })
        .collect::<Result<_, Failure>>()?;

    let mut failures: Vec<ErrorLine> = bad_lines
        .into_iter()
        .map(|(line, error)| ErrorLine {
            line,
            doc_id: None,
            error,
        })
        .collect();
    let mut mentions = Vec::new();
    let mut records = Vec::new();
    for (_, r) in results {
        match r {
            DocResult::Done(m, rec) => {
                mentions.push(m);
                records.push(*rec);
            }
            DocResult::Failed(e) => failures.push(e),
        }
    }
    failures.sort_by_key(|e| e.line);
    for e in &failures {
        warn!("line {}: {}", e.line, e.error);
    }

    corpus_io::write_mentions(out, &mentions)?;
    corpus_io::write_features(features, &records)?;
    let errors = errors.unwrap_or_else(|| out.with_file_name("errors.jsonl"));
    let body: String = failures
        .iter()
        .map(|e| serde_json::to_string(e).expect("error line serializes") + "\n")
        .collect();
    corpus_io::write_text(&errors, &body)?;
    info!(
        "extracted {} documents, {} failures logged to {}",
        records.len(),
        failures.len(),
        errors.display()
    );
    Ok(())
}

fn read_rules(path: Option<PathBuf>) -> Result<RuleTable, Failure> {
    let path = path.or_else(|| std::env::var_os("THYROPATH_LEXICON").map(PathBuf::from));
    match path {
        Some(p) => {
            let text = corpus_io::read_text(&p)?;
            RuleTable::from_config_str(&text).map_err(|e| Failure::schema(anyhow!("{}: {e}", p.display())))
        }
        None => Ok(RuleTable::standard()),
    }
}

fn run_classify(features: &Path, rules: Option<PathBuf>, policy: PolicyArg, out: &Path) -> Outcome {
    let table = read_rules(rules)?;
    let records = corpus_io::load_features(features)?;
    let policy = match policy {
        PolicyArg::Strict => Policy::Strict,
        PolicyArg::Permissive => Policy::Permissive,
    };
    let lines = records
        .par_iter()
        .map(|r| match classify(r, &table, policy) {
            Ok(a) if !a.is_consistent() => Err(Failure::invariant(anyhow!(
                "{}: assignment {:?} disagrees with its triggers",
                r.doc_id,
                a.risk
            ))),
            Ok(a) => Ok(RiskRecord::assigned(&r.doc_id, &a)),
            Err(e @ ClassifyError::InsufficientData { .. }) => {
                Ok(RiskRecord::unassigned(&r.doc_id, "insufficient_data", e.to_string()))
            }
            Err(e @ ClassifyError::Unclassifiable { .. }) => {
                Ok(RiskRecord::unassigned(&r.doc_id, "unclassifiable", e.to_string()))
            }
            Err(e @ ClassifyError::Config(_)) => Err(Failure::schema(e)),
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let unassigned = lines.iter().filter(|l| l.risk.is_none()).count();
    corpus_io::write_risks(out, &lines)?;
    info!("classified {} records, {unassigned} without a tier", lines.len() - unassigned);
    Ok(())
}

fn run_evaluate_extraction(
    gold: &Path,
    pred: &Path,
    mode: ModeArg,
    out: Option<&Path>,
    json: Option<&Path>,
) -> Outcome {
    let gold = corpus_io::load_gold(gold)?;
    let pred = corpus_io::load_mentions(pred)?;
    let mut by_id: HashMap<&str, &DocumentMentions> = HashMap::new();
    for p in &pred {
        if by_id.insert(p.doc_id.as_str(), p).is_some() {
            return Err(Failure::schema(anyhow!("duplicate prediction for {:?}", p.doc_id)));
        }
    }
    let modes: &[MatchMode] = match mode {
        ModeArg::Strict => &[MatchMode::Strict],
        ModeArg::Lenient => &[MatchMode::Lenient],
        ModeArg::Both => &[MatchMode::Strict, MatchMode::Lenient],
    };
    let mut tables = Vec::new();
    for &m in modes {
        let mut total = CountTable::default();
        for g in &gold {
            let empty;
            let p = match by_id.get(g.doc_id.as_str()) {
                Some(p) => *p,
                None => {
                    empty = DocumentMentions {
                        doc_id: g.doc_id.clone(),
                        mentions: Vec::new(),
                    };
                    &empty
                }
            };
            total.merge(&match_mentions(g, p, m).map_err(Failure::invariant)?);
        }
        // Predictions for documents without gold are all false positives.
        for p in &pred {
            if !gold.iter().any(|g| g.doc_id == p.doc_id) {
                let empty = GoldAnnotation {
                    doc_id: p.doc_id.clone(),
                    mentions: Vec::new(),
                    risk: None,
                };
                total.merge(&match_mentions(&empty, p, m).map_err(Failure::invariant)?);
            }
        }
        tables.push((m, total));
    }
    let entries = metric_table(&tables);
    let csv = metrics_csv(&entries);
    match out {
        Some(path) => corpus_io::write_text(path, &csv)?,
        None => print_stdout(&csv)?,
    }
    if let Some(path) = json {
        corpus_io::write_text(path, &metrics_json(&entries))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ClassificationSummary {
    documents: usize,
    scored: usize,
    unassigned: Vec<String>,
    overall_accuracy: f64,
    per_class_accuracy: [Option<f64>; 4],
    significant_discrepancies: usize,
    cohen_kappa: Option<f64>,
}

fn run_evaluate_classification(
    gold: &Path,
    pred: &Path,
    out: &Path,
    errors: Option<&Path>,
    discrepancies: Option<&Path>,
) -> Outcome {
    let gold = corpus_io::load_gold(gold)?;
    let pred = corpus_io::load_risks(pred)?;
    let by_id: HashMap<&str, &RiskRecord> = pred.iter().map(|r| (r.doc_id.as_str(), r)).collect();
    let mut g_labels = Vec::new();
    let mut p_labels = Vec::new();
    let mut unassigned = Vec::new();
    let mut misses = Vec::new();
    for g in &gold {
        let g_risk = g
            .risk
            .ok_or_else(|| Failure::schema(anyhow!("gold for {:?} has no risk label", g.doc_id)))?;
        match by_id.get(g.doc_id.as_str()).and_then(|p| p.risk.map(|r| (r, *p))) {
            Some((p_risk, p)) => {
                g_labels.push(g_risk);
                p_labels.push(p_risk);
                if p_risk != g_risk {
                    misses.push(Discrepancy {
                        doc_id: g.doc_id.clone(),
                        gold: g_risk,
                        predicted: p_risk,
                        triggers: p.triggers.clone(),
                    });
                }
            }
            None => unassigned.push(g.doc_id.clone()),
        }
    }
    let cm = confusion(&g_labels, &p_labels).map_err(Failure::invariant)?;
    let metrics = classification_metrics(&cm).map_err(Failure::schema)?;
    corpus_io::write_text(out, &confusion_csv(&cm))?;
    if let Some(path) = errors {
        corpus_io::write_text(path, &error_frequency_csv(&cm))?;
    }
    if let Some(path) = discrepancies {
        let body: String = misses
            .iter()
            .map(|d| serde_json::to_string(d).expect("discrepancy serializes") + "\n")
            .collect();
        corpus_io::write_text(path, &body)?;
    }
    let significant = misses.iter().filter(|d| is_significant(d.gold, d.predicted)).count();
    if significant != metrics.significant_discrepancies {
        return Err(Failure::invariant(anyhow!("significant discrepancy tally disagrees with the matrix")));
    }
    let summary = ClassificationSummary {
        documents: gold.len(),
        scored: g_labels.len(),
        unassigned,
        overall_accuracy: metrics.overall_accuracy,
        per_class_accuracy: metrics.per_class_accuracy,
        significant_discrepancies: metrics.significant_discrepancies,
        cohen_kappa: cohen_kappa(&g_labels, &p_labels).ok(),
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    print_stdout(&text)
}

fn run_generate(seed: u64, n: usize, structured_frac: f64, noise: &str, prefix: &Path) -> Outcome {
    let config = GeneratorConfig {
        seed,
        n,
        structured_fraction: structured_frac,
        noise: NoiseConfig::profile(noise).map_err(Failure::schema)?,
        ..GeneratorConfig::default()
    };
    let corpus = generate_synthetic(&config).map_err(Failure::schema)?;
    let corpus_path = suffixed(prefix, "corpus.jsonl");
    let gold_path = suffixed(prefix, "gold.jsonl");
    corpus_io::write_text(&corpus_path, &corpus.corpus_jsonl())?;
    corpus_io::write_text(&gold_path, &corpus.gold_jsonl())?;
    info!(
        "wrote {} documents to {} and {}",
        corpus.cases.len(),
        corpus_path.display(),
        gold_path.display()
    );
    Ok(())
}

fn suffixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

fn print_stdout(text: &str) -> Outcome {
    let mut stdout = std::io::stdout().lock();
    stdout
        .write_all(text.as_bytes())
        .and_then(|()| stdout.flush())
        .map_err(Failure::io)
}
