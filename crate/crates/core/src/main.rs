//! Command-line front end: bank inspection, retrieval, grounding, SQL
//! comparison, single-question parsing, and batch evaluation.
//!
//! Exit codes: 0 success (including a completed evaluation), 1 for a
//! `sqlmatch` mismatch or a question the parser cannot translate, 2 for
//! I/O, parse, or validation failures.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use formula_sql::bank::{abstraction_lint, load_bank};
use formula_sql::config::Config;
use formula_sql::ground::{ground, Resolution};
use formula_sql::knowledge::render_knowledge;
use formula_sql::pipeline::{
    evaluate, load_dataset, run_pipeline, DatasetExample, EvalConfig, Mode, PipelineConfig, Split,
};
use formula_sql::retrieve::retrieve;
use formula_sql::schema::SchemaGraph;
use formula_sql::sql::{exact_set_match, first_divergence, parse_sql, render_sql, SqlQuery};

/// `println!` that exits quietly when stdout's reader has gone away
/// (e.g. when the output is piped into `head`).
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write;
        if writeln!(std::io::stdout(), $($arg)*).is_err() {
            std::process::exit(0);
        }
    }};
}

/// `print!` counterpart of [`out!`].
macro_rules! out_raw {
    ($($arg:tt)*) => {{
        use std::io::Write;
        if write!(std::io::stdout(), $($arg)*).is_err() {
            std::process::exit(0);
        }
    }};
}

#[derive(Parser)]
#[command(
    name = "formula-sql",
    version,
    about = "Formula-aware text-to-SQL toolkit"
)]
struct Cli {
    /// TOML config file; command-line flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate or summarize a knowledge bank file.
    Bank {
        #[command(subcommand)]
        action: BankAction,
    },
    /// Rank bank items against a question and schema.
    Retrieve {
        #[arg(long, value_name = "FILE")]
        bank: PathBuf,
        #[arg(long, value_name = "FILE")]
        schema: PathBuf,
        #[arg(long, value_name = "TEXT")]
        question: String,
        /// Retrieval depth (top-k).
        #[arg(short, long, value_name = "N")]
        k: Option<usize>,
        /// Ranking function: bm25 or tfidf.
        #[arg(long, value_name = "NAME")]
        scorer: Option<String>,
        /// Emit a JSON array instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Ground one bank item's concepts onto schema columns.
    Ground {
        #[arg(long, value_name = "FILE")]
        bank: PathBuf,
        #[arg(long, value_name = "FILE")]
        schema: PathBuf,
        /// Id of the bank item to ground.
        #[arg(long, value_name = "ID")]
        item: String,
        /// Confidence threshold H in [0, 1].
        #[arg(long, value_name = "H")]
        threshold: Option<f64>,
        /// Similarity strategy: composite or fuzzy.
        #[arg(long, value_name = "NAME")]
        strategy: Option<String>,
        /// Emit JSON instead of readable lines.
        #[arg(long)]
        json: bool,
    },
    /// Compare two SQL files under exact set match (exit 1 on mismatch).
    Sqlmatch {
        /// File holding the reference query.
        gold: PathBuf,
        /// File holding the candidate query.
        pred: PathBuf,
        #[arg(long, value_name = "FILE")]
        schema: PathBuf,
        /// Emit a JSON verdict with the first diverging clause.
        #[arg(long)]
        json: bool,
    },
    /// Translate one question to SQL through retrieve → ground → fuse.
    Parse {
        #[arg(long, value_name = "FILE")]
        bank: PathBuf,
        #[arg(long, value_name = "FILE")]
        schema: PathBuf,
        #[arg(long, value_name = "TEXT")]
        question: String,
        /// Retrieval depth (top-k).
        #[arg(long = "top-k", value_name = "N")]
        top_k: Option<usize>,
        /// Confidence threshold H in [0, 1].
        #[arg(long, value_name = "H")]
        threshold: Option<f64>,
        /// Emit the execution trace; the only supported format is `json`.
        #[arg(long, value_name = "FORMAT")]
        trace: Option<String>,
    },
    /// Evaluate a dataset over the requested pipeline modes.
    Eval {
        #[arg(long, value_name = "FILE")]
        dataset: PathBuf,
        #[arg(long, value_name = "FILE")]
        bank: PathBuf,
        /// Directory of schema JSON files, keyed by their db_id.
        #[arg(long, value_name = "DIR")]
        schemas: PathBuf,
        /// Comma-separated list: vanilla,no_ground,full,oracle.
        #[arg(long, value_name = "LIST")]
        modes: Option<String>,
        #[arg(long, value_name = "N")]
        k: Option<usize>,
        #[arg(long, value_name = "H")]
        threshold: Option<f64>,
        /// Write the full JSON report here as well.
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum BankAction {
    /// Parse every record and report abstraction warnings.
    Validate { file: PathBuf },
    /// Per-domain and total item counts by kind.
    Stats {
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

type CliError = Box<dyn std::error::Error>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(2)
        }
    }
}

fn load_schema(path: &Path) -> Result<SchemaGraph, CliError> {
    Ok(SchemaGraph::load(path)?)
}

fn load_query(path: &Path, schema: &SchemaGraph) -> Result<SqlQuery, CliError> {
    let text = std::fs::read_to_string(path)?;
    let mut query = parse_sql(text.trim()).map_err(|e| format!("{}: {e}", path.display()))?;
    query
        .qualify(schema)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(query)
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    let config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Bank { action } => bank_command(action, &config),
        Command::Retrieve {
            bank,
            schema,
            question,
            k,
            scorer,
            json,
        } => {
            let bank = load_bank(bank)?;
            let schema = load_schema(&schema)?;
            let k = config.k(k)?;
            let scorer = config.scorer(scorer.as_deref())?;
            let tokenizer = config.tokenizer()?;
            let hits = retrieve(&bank, &question, &schema, k, tokenizer, scorer)?;
            let dsl_of = |id: &str| bank.get(id).map(render_knowledge).unwrap_or_default();
            if json {
                let rows: Vec<serde_json::Value> = hits
                    .iter()
                    .map(|hit| {
                        serde_json::json!({
                            "id": hit.id, "score": hit.score, "dsl": dsl_of(&hit.id),
                        })
                    })
                    .collect();
                out!("{}", serde_json::to_string_pretty(&rows)?);
            } else if hits.is_empty() {
                out!("no items scored above zero");
            } else {
                for (rank, hit) in hits.iter().enumerate() {
                    out!(
                        "{:>2}. {:<24} {:>8.4}  {}",
                        rank + 1,
                        hit.id,
                        hit.score,
                        dsl_of(&hit.id)
                    );
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Ground {
            bank,
            schema,
            item,
            threshold,
            strategy,
            json,
        } => {
            let bank = load_bank(bank)?;
            let schema = load_schema(&schema)?;
            let threshold = config.threshold(threshold)?;
            let strategy = config.strategy(strategy.as_deref())?;
            let item = bank
                .get(&item)
                .ok_or_else(|| format!("no item with id `{item}` in the bank"))?;
            let grounded = ground(item, &schema, threshold, strategy)?;
            if json {
                let value = serde_json::json!({
                    "item": grounded.item.id,
                    "status": grounded.status,
                    "resolutions": grounded.resolutions,
                });
                out!("{}", serde_json::to_string_pretty(&value)?);
            } else {
                out!("{}", render_knowledge(item));
                for resolution in &grounded.resolutions {
                    match &resolution.resolution {
                        Resolution::Resolved { column, confidence } => {
                            out!("  {:<28} → {column}  ({confidence:.3})", resolution.concept);
                        }
                        Resolution::Unresolved { best } => {
                            out!("  {:<28} unresolved (best {best:.3})", resolution.concept);
                        }
                    }
                }
                out!(
                    "status: {}",
                    serde_json::to_value(grounded.status)?
                        .as_str()
                        .unwrap_or("unknown")
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sqlmatch {
            gold,
            pred,
            schema,
            json,
        } => {
            let schema = load_schema(&schema)?;
            let gold = load_query(&gold, &schema)?;
            let pred = load_query(&pred, &schema)?;
            let matched = exact_set_match(&gold, &pred);
            if json {
                let value = serde_json::json!({
                    "match": matched,
                    "divergence": first_divergence(&gold, &pred),
                });
                out!("{}", serde_json::to_string_pretty(&value)?);
            } else if matched {
                out!("match");
            } else {
                match first_divergence(&gold, &pred) {
                    Some(diff) => out!(
                        "mismatch in {}: `{}` vs `{}`",
                        diff.clause,
                        diff.left,
                        diff.right
                    ),
                    None => out!("mismatch"),
                }
            }
            Ok(if matched {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Parse {
            bank,
            schema,
            question,
            top_k,
            threshold,
            trace,
        } => {
            if let Some(format) = &trace {
                if format != "json" {
                    return Err(format!("unsupported trace format `{format}` (only json)").into());
                }
            }
            let bank = load_bank(bank)?;
            let schema = load_schema(&schema)?;
            let pipeline_config = PipelineConfig {
                mode: Mode::Full,
                k: config.k(top_k)?,
                threshold: config.threshold(threshold)?,
                strategy: config.strategy(None)?,
                tokenizer: config.tokenizer()?,
                scorer: config.scorer(None)?,
            };
            let example = DatasetExample {
                id: "cli".into(),
                question,
                schema_id: schema.db_id.clone(),
                gold_sql: String::new(),
                gold_knowledge_ids: vec![],
                gold_grounding: vec![],
                split: Split::Dev,
            };
            let (result, run_trace) = run_pipeline(&example, &bank, &schema, &pipeline_config);
            if trace.is_some() {
                out!("{}", serde_json::to_string_pretty(&run_trace)?);
                return Ok(if result.is_ok() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                });
            }
            match result {
                Ok(query) => {
                    out!("{}", render_sql(&query));
                    Ok(ExitCode::SUCCESS)
                }
                Err(error) => {
                    eprintln!("error: {error}");
                    Ok(ExitCode::from(1))
                }
            }
        }
        Command::Eval {
            dataset,
            bank,
            schemas,
            modes,
            k,
            threshold,
            report,
        } => {
            let dataset = load_dataset(dataset)?;
            let bank = load_bank(bank)?;
            let schemas = load_schema_dir(&schemas)?;
            let modes = parse_modes(modes.as_deref())?;
            let eval_config = EvalConfig {
                modes,
                k: config.k(k)?,
                threshold: config.threshold(threshold)?,
                strategy: config.strategy(None)?,
                tokenizer: config.tokenizer()?,
                scorer: config.scorer(None)?,
            };
            let result = evaluate(&dataset, &bank, &schemas, &eval_config)?;
            out_raw!("{}", result.to_text());
            if let Some(path) = report {
                std::fs::write(&path, result.to_json())?;
                eprintln!("report written to {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn bank_command(action: BankAction, config: &Config) -> Result<ExitCode, CliError> {
    match action {
        BankAction::Validate { file } => {
            let bank = load_bank(&file)?;
            let gazetteer = config.gazetteer();
            let mut warnings = 0usize;
            for item in bank.items() {
                for warning in abstraction_lint(item, &gazetteer) {
                    warnings += 1;
                    out!("warning: {warning}");
                }
            }
            out!(
                "ok: {} items, {warnings} abstraction warning(s)",
                bank.len()
            );
            Ok(ExitCode::SUCCESS)
        }
        BankAction::Stats { file, json } => {
            let bank = load_bank(&file)?;
            let stats = bank.stats();
            if json {
                out!("{}", serde_json::to_string_pretty(&stats)?);
            } else {
                out!(
                    "{:<16} {:>6} {:>12} {:>6} {:>10}",
                    "domain",
                    "total",
                    "calculation",
                    "union",
                    "condition"
                );
                for (domain, counts) in &stats.domains {
                    out!(
                        "{:<16} {:>6} {:>12} {:>6} {:>10}",
                        domain,
                        counts.total,
                        counts.calculation,
                        counts.union,
                        counts.condition
                    );
                }
                let t = &stats.total;
                out!(
                    "{:<16} {:>6} {:>12} {:>6} {:>10}",
                    "(all)",
                    t.total,
                    t.calculation,
                    t.union,
                    t.condition
                );
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn load_schema_dir(dir: &Path) -> Result<BTreeMap<String, SchemaGraph>, CliError> {
    let mut schemas = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let schema = SchemaGraph::load(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        if schemas.insert(schema.db_id.clone(), schema).is_some() {
            return Err(format!("duplicate db_id in schema directory: {}", path.display()).into());
        }
    }
    if schemas.is_empty() {
        return Err(format!("no schema JSON files found in {}", dir.display()).into());
    }
    Ok(schemas)
}

fn parse_modes(spec: Option<&str>) -> Result<Vec<Mode>, CliError> {
    let Some(spec) = spec else {
        return Ok(Mode::ALL.to_vec());
    };
    let mut modes = Vec::new();
    for name in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        modes.push(name.parse::<Mode>()?);
    }
    if modes.is_empty() {
        return Err("`--modes` lists no modes".into());
    }
    Ok(modes)
}
