//! End-to-end runner and evaluation harness.
//!
//! A [`DatasetExample`] pairs a question with its gold SQL, gold knowledge
//! ids, and gold grounding. [`run_pipeline`] executes one example in one of
//! four modes — `vanilla` (no knowledge), `no_ground` (retrieved knowledge
//! with unresolved concepts), `full` (retrieve → ground → fuse), `oracle`
//! (gold knowledge with gold grounding injected) — and records a trace.
//! [`evaluate`] runs a whole dataset across the requested modes and
//! aggregates exact-set-match accuracy, Recall@{1,3,10}, grounding P/R/F1,
//! and error-category counts per split; [`attribute_error`] assigns each
//! full-mode failure to the pipeline stage that caused it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bank::KnowledgeBank;
use crate::fuse::{fuse_with_trace, parse_question, FuseError, FusionInput};
use crate::ground::{
    ground, grounding_prf, ConceptResolution, GroundError, GroundStatus, GroundedKnowledge, Prf,
    Resolution, Strategy,
};
use crate::knowledge::concepts_of;
use crate::retrieve::{recall_at_k, retrieve, Scorer, Tokenizer};
use crate::schema::{QualifiedColumn, SchemaGraph};
use crate::sql::{exact_set_match, parse_sql, render_sql, SqlQuery};
use crate::text::normalize;

/// Dataset split tag. Ordering follows declaration order, which is the order
/// split sections appear in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Finance,
    Estate,
    Transportation,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Finance => "finance",
            Split::Estate => "estate",
            Split::Transportation => "transportation",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Pipeline ablation mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// No knowledge at all: fusion sees an empty grounded list.
    Vanilla,
    /// Retrieved knowledge passed with every concept unresolved; usable only
    /// for name matching.
    NoGround,
    /// The complete pipeline: retrieve top-k, ground at threshold H, fuse.
    Full,
    /// Gold knowledge ids with gold grounding injected at full confidence.
    Oracle,
}

impl Mode {
    /// All modes in ablation order, weakest first.
    pub const ALL: [Mode; 4] = [Mode::Vanilla, Mode::NoGround, Mode::Full, Mode::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Vanilla => "vanilla",
            Mode::NoGround => "no_ground",
            Mode::Full => "full",
            Mode::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vanilla" => Ok(Mode::Vanilla),
            "no_ground" => Ok(Mode::NoGround),
            "full" => Ok(Mode::Full),
            "oracle" => Ok(Mode::Oracle),
            other => Err(format!(
                "unknown mode `{other}`: expected vanilla, no_ground, full, or oracle"
            )),
        }
    }
}

/// One evaluation example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetExample {
    pub id: String,
    pub question: String,
    /// Key into the schema map passed to [`evaluate`].
    pub schema_id: String,
    pub gold_sql: String,
    /// Empty for knowledge-free questions.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gold_knowledge_ids: Vec<String>,
    /// `(concept, "table.column")` pairs for the gold items' concepts.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gold_grounding: Vec<(String, String)>,
    pub split: Split,
}

/// Configuration for a single [`run_pipeline`] call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub mode: Mode,
    /// Retrieval depth (top-k).
    pub k: usize,
    /// Grounding confidence threshold H.
    pub threshold: f64,
    pub strategy: Strategy,
    pub tokenizer: Tokenizer,
    pub scorer: Scorer,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mode: Mode::Full,
            k: 3,
            threshold: 0.6,
            strategy: Strategy::Composite,
            tokenizer: Tokenizer::Word,
            scorer: Scorer::default(),
        }
    }
}

/// Configuration for [`evaluate`]: one pipeline config applied across modes.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// Modes to run, in report order. Duplicates are ignored.
    pub modes: Vec<Mode>,
    pub k: usize,
    pub threshold: f64,
    pub strategy: Strategy,
    pub tokenizer: Tokenizer,
    pub scorer: Scorer,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let base = PipelineConfig::default();
        EvalConfig {
            modes: Mode::ALL.to_vec(),
            k: base.k,
            threshold: base.threshold,
            strategy: base.strategy,
            tokenizer: base.tokenizer,
            scorer: base.scorer,
        }
    }
}

impl EvalConfig {
    fn pipeline_config(&self, mode: Mode) -> PipelineConfig {
        PipelineConfig {
            mode,
            k: self.k,
            threshold: self.threshold,
            strategy: self.strategy,
            tokenizer: self.tokenizer,
            scorer: self.scorer,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("cannot read dataset: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("duplicate example id `{id}`")]
    DuplicateExample { id: String },
    #[error("example `{example}` references unknown schema `{schema_id}`")]
    UnknownSchema { example: String, schema_id: String },
    #[error("example `{example}` references unknown knowledge id `{id}`")]
    UnknownKnowledge { example: String, id: String },
    #[error("example `{example}` grounds to unknown column `{column}`")]
    UnknownGroundingColumn { example: String, column: String },
    #[error("invalid configuration: {message}")]
    InvalidConfig { message: String },
    #[error("example `{id}` did not fail; nothing to attribute")]
    NotAFailure { id: String },
}

/// The paper-style failure taxonomy, in attribution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum ErrorCategory {
    #[serde(rename = "RetrievalError")]
    Retrieval,
    #[serde(rename = "GroundingError")]
    Grounding,
    #[serde(rename = "ParsingError")]
    Parsing,
    #[serde(rename = "OtherError")]
    Other,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 4] = [
        ErrorCategory::Retrieval,
        ErrorCategory::Grounding,
        ErrorCategory::Parsing,
        ErrorCategory::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ErrorCategory::Retrieval => "RetrievalError",
            ErrorCategory::Grounding => "GroundingError",
            ErrorCategory::Parsing => "ParsingError",
            ErrorCategory::Other => "OtherError",
        }
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-item grounding summary recorded in a trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceKnowledge {
    pub id: String,
    pub status: GroundStatus,
}

/// Everything observable about one example under one mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExampleTrace {
    pub example_id: String,
    pub split: String,
    pub mode: String,
    /// Knowledge ids handed to fusion, in rank order (gold-id order under
    /// oracle).
    pub retrieved: Vec<String>,
    pub knowledge: Vec<TraceKnowledge>,
    pub chosen_item: Option<String>,
    pub direct_column: Option<String>,
    pub predicted_sql: Option<String>,
    pub error: Option<String>,
    /// Stable machine-readable code for `error`: one of
    /// `unparseable_question`, `target_unresolved`, `partial_knowledge`,
    /// `join_path`.
    pub error_code: Option<String>,
    pub matched: bool,
}

fn error_code(err: &FuseError) -> &'static str {
    match err {
        FuseError::UnparseableQuestion { .. } => "unparseable_question",
        FuseError::TargetUnresolved { .. } => "target_unresolved",
        FuseError::PartialKnowledge { .. } => "partial_knowledge",
        FuseError::JoinPath { .. } => "join_path",
    }
}

/// Read a JSONL dataset: one [`DatasetExample`] per non-blank line.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<DatasetExample>, PipelineError> {
    load_dataset_str(&std::fs::read_to_string(path)?)
}

/// [`load_dataset`] from in-memory JSONL.
pub fn load_dataset_str(content: &str) -> Result<Vec<DatasetExample>, PipelineError> {
    let mut examples = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let example: DatasetExample =
            serde_json::from_str(line).map_err(|e| PipelineError::Line {
                line: idx + 1,
                message: e.to_string(),
            })?;
        examples.push(example);
    }
    Ok(examples)
}

/// Check every referential invariant of a dataset: unique ids, known schemas,
/// known knowledge ids, grounding columns that exist in the example's schema.
///
/// Gold SQL is deliberately not validated here: an example whose gold SQL
/// falls outside the subset grammar is legal and simply can never be matched
/// (its failures attribute to `OtherError`).
pub fn validate_dataset(
    dataset: &[DatasetExample],
    bank: &KnowledgeBank,
    schemas: &BTreeMap<String, SchemaGraph>,
) -> Result<(), PipelineError> {
    let mut seen = BTreeSet::new();
    for ex in dataset {
        if !seen.insert(ex.id.clone()) {
            return Err(PipelineError::DuplicateExample { id: ex.id.clone() });
        }
        let schema = schemas
            .get(&ex.schema_id)
            .ok_or_else(|| PipelineError::UnknownSchema {
                example: ex.id.clone(),
                schema_id: ex.schema_id.clone(),
            })?;
        for id in &ex.gold_knowledge_ids {
            if bank.get(id).is_none() {
                return Err(PipelineError::UnknownKnowledge {
                    example: ex.id.clone(),
                    id: id.clone(),
                });
            }
        }
        for (_, column) in &ex.gold_grounding {
            let known = QualifiedColumn::parse(column)
                .map(|qc| schema.has_column(&qc))
                .unwrap_or(false);
            if !known {
                return Err(PipelineError::UnknownGroundingColumn {
                    example: ex.id.clone(),
                    column: column.clone(),
                });
            }
        }
    }
    Ok(())
}

/// A knowledge item with every concept left unresolved — what fusion sees
/// under `no_ground`. Concept-free items have nothing to resolve and count as
/// fully grounded.
fn ungrounded_knowledge(item: crate::knowledge::KnowledgeItem) -> GroundedKnowledge {
    let resolutions: Vec<ConceptResolution> = concepts_of(&item)
        .into_iter()
        .map(|concept| ConceptResolution {
            concept,
            resolution: Resolution::Unresolved { best: 0.0 },
        })
        .collect();
    let status = if resolutions.is_empty() {
        GroundStatus::FullyGrounded
    } else {
        GroundStatus::Ungrounded
    };
    GroundedKnowledge {
        item,
        resolutions,
        status,
    }
}

/// Ground one item for `full` mode. Concept-free items ground vacuously.
fn auto_ground(
    item: &crate::knowledge::KnowledgeItem,
    schema: &SchemaGraph,
    config: &PipelineConfig,
) -> GroundedKnowledge {
    match ground(item, schema, config.threshold, config.strategy) {
        Ok(g) => g,
        Err(GroundError::NoConcept { .. }) => GroundedKnowledge {
            item: item.clone(),
            resolutions: Vec::new(),
            status: GroundStatus::FullyGrounded,
        },
        Err(_) => ungrounded_knowledge(item.clone()),
    }
}

/// Inject gold grounding at full confidence for `oracle` mode. Concepts the
/// gold pairs do not cover stay unresolved.
fn oracle_grounding(
    item: crate::knowledge::KnowledgeItem,
    gold_grounding: &[(String, String)],
) -> GroundedKnowledge {
    let by_concept: BTreeMap<String, QualifiedColumn> = gold_grounding
        .iter()
        .filter_map(|(concept, column)| {
            QualifiedColumn::parse(&column.to_lowercase()).map(|qc| (normalize(concept), qc))
        })
        .collect();
    let resolutions: Vec<ConceptResolution> = concepts_of(&item)
        .into_iter()
        .map(|concept| {
            let resolution = match by_concept.get(&normalize(&concept)) {
                Some(column) => Resolution::Resolved {
                    column: column.clone(),
                    confidence: 1.0,
                },
                None => Resolution::Unresolved { best: 0.0 },
            };
            ConceptResolution {
                concept,
                resolution,
            }
        })
        .collect();
    let resolved = resolutions
        .iter()
        .filter(|r| matches!(r.resolution, Resolution::Resolved { .. }))
        .count();
    let status = if resolved == resolutions.len() {
        GroundStatus::FullyGrounded
    } else if resolved > 0 {
        GroundStatus::PartiallyGrounded
    } else {
        GroundStatus::Ungrounded
    };
    GroundedKnowledge {
        item,
        resolutions,
        status,
    }
}

/// Run one example end to end in one mode. Stage errors are recorded in the
/// trace, never panicking or aborting a batch. `matched` in the returned
/// trace is left `false`; [`evaluate`] fills it in after comparing with gold.
pub fn run_pipeline(
    example: &DatasetExample,
    bank: &KnowledgeBank,
    schema: &SchemaGraph,
    config: &PipelineConfig,
) -> (Result<SqlQuery, FuseError>, ExampleTrace) {
    let mut trace = ExampleTrace {
        example_id: example.id.clone(),
        split: example.split.to_string(),
        mode: config.mode.name().to_string(),
        retrieved: Vec::new(),
        knowledge: Vec::new(),
        chosen_item: None,
        direct_column: None,
        predicted_sql: None,
        error: None,
        error_code: None,
        matched: false,
    };
    let grounded: Vec<GroundedKnowledge> = match config.mode {
        Mode::Vanilla => Vec::new(),
        Mode::NoGround | Mode::Full => {
            let hits = retrieve(
                bank,
                &example.question,
                schema,
                config.k,
                config.tokenizer,
                config.scorer,
            )
            .unwrap_or_default();
            trace.retrieved = hits.into_iter().map(|h| h.id).collect();
            trace
                .retrieved
                .iter()
                .filter_map(|id| bank.get(id))
                .map(|item| match config.mode {
                    Mode::NoGround => ungrounded_knowledge(item.clone()),
                    _ => auto_ground(item, schema, config),
                })
                .collect()
        }
        Mode::Oracle => {
            let mut ids = example.gold_knowledge_ids.clone();
            ids.sort();
            ids.dedup();
            trace.retrieved = ids.clone();
            ids.iter()
                .filter_map(|id| bank.get(id))
                .map(|item| oracle_grounding(item.clone(), &example.gold_grounding))
                .collect()
        }
    };
    trace.knowledge = grounded
        .iter()
        .map(|g| TraceKnowledge {
            id: g.item.id.clone(),
            status: g.status,
        })
        .collect();
    let outcome = parse_question(&example.question, schema).and_then(|frame| {
        fuse_with_trace(
            &FusionInput {
                frame: &frame,
                schema,
                grounded: &grounded,
            },
            config.threshold,
        )
    });
    match outcome {
        Ok((query, fuse_trace)) => {
            trace.chosen_item = fuse_trace.chosen_item;
            trace.direct_column = fuse_trace.direct_column;
            trace.predicted_sql = Some(render_sql(&query));
            (Ok(query), trace)
        }
        Err(err) => {
            trace.error_code = Some(error_code(&err).to_string());
            trace.error = Some(err.to_string());
            (Err(err), trace)
        }
    }
}

/// Parse and qualify gold SQL against its schema. `None` means the gold is
/// outside the subset grammar (or references unknown columns) — such
/// examples can never match and their failures attribute to `OtherError`.
fn gold_query(example: &DatasetExample, schema: &SchemaGraph) -> Option<SqlQuery> {
    let mut query = parse_sql(&example.gold_sql).ok()?;
    query.qualify(schema).ok()?;
    Some(query)
}

/// Auto-grounding pairs for the example's gold items — what `full` mode
/// would resolve, pooled across the gold items.
fn predicted_pairs_for_gold(
    example: &DatasetExample,
    bank: &KnowledgeBank,
    schema: &SchemaGraph,
    config: &PipelineConfig,
) -> BTreeSet<(String, String)> {
    let mut ids = example.gold_knowledge_ids.clone();
    ids.sort();
    ids.dedup();
    ids.iter()
        .filter_map(|id| bank.get(id))
        .flat_map(|item| auto_ground(item, schema, config).resolved_pairs())
        .collect()
}

fn gold_pairs(example: &DatasetExample) -> BTreeSet<(String, String)> {
    example
        .gold_grounding
        .iter()
        .map(|(concept, column)| (normalize(concept), column.to_lowercase()))
        .collect()
}

/// Assign a failed full-mode example to exactly one error category.
///
/// The attribution chain follows the pipeline's stage order: missing gold
/// knowledge in the top-k → [`ErrorCategory::Retrieval`]; auto-grounding of
/// the gold items disagreeing with the gold grounding →
/// [`ErrorCategory::Grounding`]; gold SQL outside the subset grammar or a
/// schema-connectivity failure → [`ErrorCategory::Other`]; anything else —
/// fusion produced the wrong query from correct inputs —
/// [`ErrorCategory::Parsing`].
pub fn attribute_error(
    example: &DatasetExample,
    trace: &ExampleTrace,
    bank: &KnowledgeBank,
    schema: &SchemaGraph,
    config: &PipelineConfig,
) -> Result<ErrorCategory, PipelineError> {
    if trace.matched || trace.mode != Mode::Full.name() {
        return Err(PipelineError::NotAFailure {
            id: example.id.clone(),
        });
    }
    let retrieved: BTreeSet<&String> = trace.retrieved.iter().collect();
    if example
        .gold_knowledge_ids
        .iter()
        .any(|id| !retrieved.contains(id))
    {
        return Ok(ErrorCategory::Retrieval);
    }
    if predicted_pairs_for_gold(example, bank, schema, config) != gold_pairs(example) {
        return Ok(ErrorCategory::Grounding);
    }
    if gold_query(example, schema).is_none() || trace.error_code.as_deref() == Some("join_path") {
        return Ok(ErrorCategory::Other);
    }
    Ok(ErrorCategory::Parsing)
}

/// Exact-set-match accuracy of one mode over one split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeAccuracy {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

/// Macro-averaged Recall@k over the split's examples with gold knowledge.
/// `None` when the split has no such examples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecallReport {
    pub at_1: Option<f64>,
    pub at_3: Option<f64>,
    pub at_10: Option<f64>,
}

/// All metrics for one split (or for `overall`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitReport {
    pub split: String,
    pub examples: usize,
    /// Keyed by mode name, one entry per requested mode.
    pub accuracy: BTreeMap<String, ModeAccuracy>,
    pub recall: RecallReport,
    pub grounding: Prf,
    /// Full-mode failure counts keyed by category name; all four categories
    /// always present. Zero everywhere unless `full` mode was requested.
    pub errors: BTreeMap<String, usize>,
    /// Number of full-mode failures (the sum of `errors`).
    pub failures: usize,
}

/// Configuration echo embedded in a report, stringified for stability.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub modes: Vec<String>,
    pub k: usize,
    pub threshold: f64,
    pub strategy: Strategy,
    pub tokenizer: String,
    pub scorer: String,
}

fn tokenizer_name(tokenizer: Tokenizer) -> String {
    match tokenizer {
        Tokenizer::Word => "word".to_string(),
        Tokenizer::CharNgram(n) => format!("char_ngram({n})"),
    }
}

fn scorer_name(scorer: Scorer) -> String {
    match scorer {
        Scorer::Bm25 { k1, b } => format!("bm25(k1={k1}, b={b})"),
        Scorer::TfIdfCosine => "tfidf_cosine".to_string(),
    }
}

/// The complete evaluation output: per-split metrics (splits in declaration
/// order, then `overall`) plus every per-example, per-mode trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub config: ConfigEcho,
    pub splits: Vec<SplitReport>,
    /// Ordered by example id, then by requested mode order.
    pub traces: Vec<ExampleTrace>,
}

impl EvalReport {
    /// Metrics for one split; `overall` aggregates everything.
    pub fn split(&self, name: &str) -> Option<&SplitReport> {
        self.splits.iter().find(|s| s.split == name)
    }

    /// Deterministic pretty-printed JSON: two [`evaluate`] runs with the same
    /// inputs produce byte-identical output.
    pub fn to_json(&self) -> String {
        let mut json = serde_json::to_string_pretty(self).expect("report serializes");
        json.push('\n');
        json
    }

    /// Aligned text tables: accuracy per mode, recall, grounding, errors.
    pub fn to_text(&self) -> String {
        let mut out = String::new();

        let mut acc_rows = vec![{
            let mut header = vec!["split".to_string(), "examples".to_string()];
            header.extend(self.config.modes.iter().cloned());
            header
        }];
        for s in &self.splits {
            let mut row = vec![s.split.clone(), s.examples.to_string()];
            for mode in &self.config.modes {
                row.push(match s.accuracy.get(mode) {
                    Some(a) => format!("{:.3}", a.accuracy),
                    None => "-".to_string(),
                });
            }
            acc_rows.push(row);
        }
        out.push_str("exact-set-match accuracy\n");
        out.push_str(&render_table(&acc_rows));

        let fmt_recall = |r: Option<f64>| match r {
            Some(v) => format!("{v:.3}"),
            None => "-".to_string(),
        };
        let mut recall_rows = vec![vec![
            "split".to_string(),
            "recall@1".to_string(),
            "recall@3".to_string(),
            "recall@10".to_string(),
        ]];
        for s in &self.splits {
            recall_rows.push(vec![
                s.split.clone(),
                fmt_recall(s.recall.at_1),
                fmt_recall(s.recall.at_3),
                fmt_recall(s.recall.at_10),
            ]);
        }
        out.push_str("\nknowledge retrieval (macro recall over examples with gold knowledge)\n");
        out.push_str(&render_table(&recall_rows));

        let mut ground_rows = vec![vec![
            "split".to_string(),
            "precision".to_string(),
            "recall".to_string(),
            "f1".to_string(),
        ]];
        for s in &self.splits {
            ground_rows.push(vec![
                s.split.clone(),
                format!("{:.3}", s.grounding.precision),
                format!("{:.3}", s.grounding.recall),
                format!("{:.3}", s.grounding.f1),
            ]);
        }
        out.push_str("\ngrounding of gold knowledge (micro)\n");
        out.push_str(&render_table(&ground_rows));

        let mut error_rows = vec![{
            let mut header = vec!["split".to_string()];
            header.extend(ErrorCategory::ALL.iter().map(|c| c.name().to_string()));
            header.push("failures".to_string());
            header
        }];
        for s in &self.splits {
            let mut row = vec![s.split.clone()];
            for category in ErrorCategory::ALL {
                row.push(
                    s.errors
                        .get(category.name())
                        .copied()
                        .unwrap_or(0)
                        .to_string(),
                );
            }
            row.push(s.failures.to_string());
            error_rows.push(row);
        }
        out.push_str("\nfull-mode failures by category\n");
        out.push_str(&render_table(&error_rows));

        out
    }
}

/// Left-aligned columns, two spaces apart, width = widest cell.
fn render_table(rows: &[Vec<String>]) -> String {
    let columns = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    let mut widths = vec![0usize; columns];
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (i, cell) in row.iter().enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            line.push_str(cell);
            let pad = widths[i].saturating_sub(cell.len());
            if i + 1 < row.len() {
                line.extend(std::iter::repeat_n(' ', pad));
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// Accumulates one split's (or the overall) metrics.
#[derive(Default)]
struct SplitAccumulator {
    examples: usize,
    correct: BTreeMap<Mode, usize>,
    recall_sums: [f64; 3],
    recall_count: usize,
    predicted_pairs: Vec<BTreeSet<(String, String)>>,
    gold_pairs: Vec<BTreeSet<(String, String)>>,
    errors: BTreeMap<ErrorCategory, usize>,
    failures: usize,
}

impl SplitAccumulator {
    fn into_report(self, split: String, modes: &[Mode]) -> SplitReport {
        let mut accuracy = BTreeMap::new();
        for mode in modes {
            let correct = self.correct.get(mode).copied().unwrap_or(0);
            let total = self.examples;
            accuracy.insert(
                mode.name().to_string(),
                ModeAccuracy {
                    correct,
                    total,
                    accuracy: if total == 0 {
                        0.0
                    } else {
                        correct as f64 / total as f64
                    },
                },
            );
        }
        let recall_at = |i: usize| {
            (self.recall_count > 0).then(|| self.recall_sums[i] / self.recall_count as f64)
        };
        let recall = RecallReport {
            at_1: recall_at(0),
            at_3: recall_at(1),
            at_10: recall_at(2),
        };
        let grounding = grounding_prf(&self.predicted_pairs, &self.gold_pairs)
            .expect("accumulator keeps the vectors aligned");
        let mut errors = BTreeMap::new();
        for category in ErrorCategory::ALL {
            errors.insert(
                category.name().to_string(),
                self.errors.get(&category).copied().unwrap_or(0),
            );
        }
        SplitReport {
            split,
            examples: self.examples,
            accuracy,
            recall,
            grounding,
            errors,
            failures: self.failures,
        }
    }
}

/// Run every example in every requested mode and aggregate per split plus
/// `overall`. Deterministic: examples are processed in id order and two runs
/// produce byte-identical JSON.
pub fn evaluate(
    dataset: &[DatasetExample],
    bank: &KnowledgeBank,
    schemas: &BTreeMap<String, SchemaGraph>,
    config: &EvalConfig,
) -> Result<EvalReport, PipelineError> {
    if config.modes.is_empty() {
        return Err(PipelineError::InvalidConfig {
            message: "no modes requested".to_string(),
        });
    }
    if config.k == 0 {
        return Err(PipelineError::InvalidConfig {
            message: "k must be at least 1".to_string(),
        });
    }
    if !(0.0..=1.0).contains(&config.threshold) {
        return Err(PipelineError::InvalidConfig {
            message: format!("threshold {} outside [0, 1]", config.threshold),
        });
    }
    validate_dataset(dataset, bank, schemas)?;

    let mut modes: Vec<Mode> = Vec::new();
    for mode in &config.modes {
        if !modes.contains(mode) {
            modes.push(*mode);
        }
    }

    let mut ordered: Vec<&DatasetExample> = dataset.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));

    let full_config = |mode| EvalConfig::pipeline_config(config, mode);
    let mut by_split: BTreeMap<Split, SplitAccumulator> = BTreeMap::new();
    let mut overall = SplitAccumulator::default();
    let mut traces = Vec::with_capacity(ordered.len() * modes.len());

    for example in ordered {
        let schema = schemas.get(&example.schema_id).expect("validated above");
        let gold = gold_query(example, schema);

        // Retrieval quality is mode-independent: rank the whole bank once.
        let recalls = if example.gold_knowledge_ids.is_empty() {
            None
        } else {
            let ranked: Vec<String> = retrieve(
                bank,
                &example.question,
                schema,
                bank.len().max(1),
                config.tokenizer,
                config.scorer,
            )
            .unwrap_or_default()
            .into_iter()
            .map(|h| h.id)
            .collect();
            let at = |k| recall_at_k(&ranked, &example.gold_knowledge_ids, k).unwrap_or(0.0);
            Some([at(1), at(3), at(10)])
        };

        let predicted_pairs =
            predicted_pairs_for_gold(example, bank, schema, &full_config(Mode::Full));
        let example_gold_pairs = gold_pairs(example);

        let split_acc = by_split.entry(example.split).or_default();
        for acc in [&mut *split_acc, &mut overall] {
            acc.examples += 1;
            if let Some(r) = recalls {
                acc.recall_count += 1;
                for (sum, value) in acc.recall_sums.iter_mut().zip(r) {
                    *sum += value;
                }
            }
            acc.predicted_pairs.push(predicted_pairs.clone());
            acc.gold_pairs.push(example_gold_pairs.clone());
        }

        for &mode in &modes {
            let pipeline_config = full_config(mode);
            let (result, mut trace) = run_pipeline(example, bank, schema, &pipeline_config);
            let matched = match (&result, &gold) {
                (Ok(predicted), Some(gold)) => exact_set_match(predicted, gold),
                _ => false,
            };
            trace.matched = matched;
            let category = if mode == Mode::Full && !matched {
                Some(
                    attribute_error(example, &trace, bank, schema, &pipeline_config)
                        .expect("trace is an unmatched full-mode run"),
                )
            } else {
                None
            };
            let split_acc = by_split.entry(example.split).or_default();
            for acc in [&mut *split_acc, &mut overall] {
                if matched {
                    *acc.correct.entry(mode).or_insert(0) += 1;
                }
                if let Some(category) = category {
                    acc.failures += 1;
                    *acc.errors.entry(category).or_insert(0) += 1;
                }
            }
            traces.push(trace);
        }
    }

    let mut splits: Vec<SplitReport> = by_split
        .into_iter()
        .map(|(split, acc)| acc.into_report(split.name().to_string(), &modes))
        .collect();
    splits.push(overall.into_report("overall".to_string(), &modes));

    Ok(EvalReport {
        config: ConfigEcho {
            modes: modes.iter().map(|m| m.name().to_string()).collect(),
            k: config.k,
            threshold: config.threshold,
            strategy: config.strategy,
            tokenizer: tokenizer_name(config.tokenizer),
            scorer: scorer_name(config.scorer),
        },
        splits,
        traces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::parse_knowledge;

    fn finance_schema() -> SchemaGraph {
        SchemaGraph::from_json(
            r#"{"db_id": "fin", "tables": [
                {"name": "finance", "columns": [
                    {"name": "company", "type": "text"},
                    {"name": "revenue", "type": "number"},
                    {"name": "cost_of_goods_sold", "type": "number"},
                    {"name": "operating_expenses", "type": "number"},
                    {"name": "gross_profit", "type": "number"},
                    {"name": "net_profit", "type": "number"}
                ], "keys": ["company"]}
            ]}"#,
        )
        .unwrap()
    }

    fn transport_schema() -> SchemaGraph {
        SchemaGraph::from_json(
            r#"{"db_id": "trans", "tables": [
                {"name": "garage", "columns": [
                    {"name": "garage_name", "type": "text"},
                    {"name": "num_cars", "type": "number"},
                    {"name": "parking_lot_area", "type": "number"}
                ], "keys": ["garage_name"]}
            ]}"#,
        )
        .unwrap()
    }

    fn schemas() -> BTreeMap<String, SchemaGraph> {
        BTreeMap::from([
            ("fin".to_string(), finance_schema()),
            ("trans".to_string(), transport_schema()),
        ])
    }

    fn bank() -> KnowledgeBank {
        let mut bank = KnowledgeBank::new();
        let items = [
            (
                "f_ebit",
                "finance",
                "EBIT = Revenue - Cost of Goods Sold - Operating Expenses",
            ),
            (
                "f_age",
                "finance",
                "Company Age = YEAR ( NOW ( ) ) - Founded Year",
            ),
            (
                "t_cars",
                "transportation",
                "Car Density = Number of Cars / Parking Lot Area",
            ),
        ];
        for (id, domain, dsl) in items {
            bank.add_item(
                parse_knowledge(dsl)
                    .unwrap()
                    .with_id(id)
                    .with_domain(domain),
            )
            .unwrap();
        }
        bank
    }

    fn example(
        id: &str,
        question: &str,
        schema_id: &str,
        gold_sql: &str,
        gold_ids: &[&str],
        gold_grounding: &[(&str, &str)],
        split: Split,
    ) -> DatasetExample {
        DatasetExample {
            id: id.to_string(),
            question: question.to_string(),
            schema_id: schema_id.to_string(),
            gold_sql: gold_sql.to_string(),
            gold_knowledge_ids: gold_ids.iter().map(|s| s.to_string()).collect(),
            gold_grounding: gold_grounding
                .iter()
                .map(|(c, col)| (c.to_string(), col.to_string()))
                .collect(),
            split,
        }
    }

    fn ebit_example() -> DatasetExample {
        example(
            "e1",
            "What is the EBIT of 'Acme'?",
            "fin",
            "SELECT finance.revenue - finance.cost_of_goods_sold - finance.operating_expenses \
             FROM finance WHERE finance.company = 'Acme'",
            &["f_ebit"],
            &[
                ("Revenue", "finance.revenue"),
                ("Cost of Goods Sold", "finance.cost_of_goods_sold"),
                ("Operating Expenses", "finance.operating_expenses"),
            ],
            Split::Finance,
        )
    }

    fn knowledge_free_example() -> DatasetExample {
        example(
            "e2",
            "What is the revenue of 'Acme'?",
            "fin",
            "SELECT finance.revenue FROM finance WHERE finance.company = 'Acme'",
            &[],
            &[],
            Split::Finance,
        )
    }

    fn car_density_example() -> DatasetExample {
        example(
            "e3",
            "What is the car density of 'Central Garage'?",
            "trans",
            "SELECT garage.num_cars / garage.parking_lot_area FROM garage \
             WHERE garage.garage_name = 'Central Garage'",
            &["t_cars"],
            &[
                ("Number of Cars", "garage.num_cars"),
                ("Parking Lot Area", "garage.parking_lot_area"),
            ],
            Split::Transportation,
        )
    }

    fn limit_gold_example() -> DatasetExample {
        example(
            "e4",
            "What is the gross profit of 'Acme'?",
            "fin",
            "SELECT finance.gross_profit FROM finance WHERE finance.company = 'Acme' LIMIT 5",
            &[],
            &[],
            Split::Finance,
        )
    }

    fn out_of_grammar_example() -> DatasetExample {
        example(
            "e5",
            "What is the net profit of 'Acme'?",
            "fin",
            "SELECT net_profit FROM finance WHERE company LIKE 'A%'",
            &[],
            &[],
            Split::Finance,
        )
    }

    fn corpus() -> Vec<DatasetExample> {
        vec![
            ebit_example(),
            knowledge_free_example(),
            car_density_example(),
            limit_gold_example(),
            out_of_grammar_example(),
        ]
    }

    fn run(example: &DatasetExample, mode: Mode) -> (Result<SqlQuery, FuseError>, ExampleTrace) {
        let schema = schemas().remove(&example.schema_id).unwrap();
        let config = PipelineConfig {
            mode,
            ..PipelineConfig::default()
        };
        run_pipeline(example, &bank(), &schema, &config)
    }

    fn run_matched(example: &DatasetExample, mode: Mode) -> ExampleTrace {
        let schema = schemas().remove(&example.schema_id).unwrap();
        let (result, mut trace) = run(example, mode);
        let gold = gold_query(example, &schema);
        trace.matched = matches!((&result, &gold), (Ok(p), Some(g)) if exact_set_match(p, g));
        trace
    }

    #[test]
    fn mode_names_round_trip() {
        for mode in Mode::ALL {
            assert_eq!(mode.name().parse::<Mode>().unwrap(), mode);
        }
        assert!("bm25".parse::<Mode>().is_err());
    }

    #[test]
    fn dataset_loads_with_defaults() {
        let jsonl = r#"
            {"id": "a", "question": "q", "schema_id": "fin", "gold_sql": "SELECT revenue FROM finance", "split": "dev"}
            {"id": "b", "question": "q", "schema_id": "fin", "gold_sql": "SELECT revenue FROM finance", "gold_knowledge_ids": ["f_ebit"], "gold_grounding": [["Revenue", "finance.revenue"]], "split": "finance"}
        "#;
        let examples = load_dataset_str(jsonl).unwrap();
        assert_eq!(examples.len(), 2);
        assert!(examples[0].gold_knowledge_ids.is_empty());
        assert!(examples[0].gold_grounding.is_empty());
        assert_eq!(examples[0].split, Split::Dev);
        assert_eq!(examples[1].gold_knowledge_ids, vec!["f_ebit"]);
        assert_eq!(
            examples[1].gold_grounding,
            vec![("Revenue".to_string(), "finance.revenue".to_string())]
        );
    }

    #[test]
    fn dataset_load_reports_the_bad_line() {
        let jsonl = "{\"id\": \"a\", \"question\": \"q\", \"schema_id\": \"fin\", \
                     \"gold_sql\": \"SELECT 1\", \"split\": \"dev\"}\nnot json\n";
        match load_dataset_str(jsonl) {
            Err(PipelineError::Line { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected line error, got {other:?}"),
        }
    }

    #[test]
    fn validation_rejects_broken_references() {
        let bank = bank();
        let schemas = schemas();
        let base = knowledge_free_example();

        let mut unknown_schema = base.clone();
        unknown_schema.schema_id = "nope".to_string();
        assert!(matches!(
            validate_dataset(&[unknown_schema], &bank, &schemas),
            Err(PipelineError::UnknownSchema { schema_id, .. }) if schema_id == "nope"
        ));

        let mut unknown_knowledge = base.clone();
        unknown_knowledge.gold_knowledge_ids = vec!["ghost".to_string()];
        assert!(matches!(
            validate_dataset(&[unknown_knowledge], &bank, &schemas),
            Err(PipelineError::UnknownKnowledge { id, .. }) if id == "ghost"
        ));

        let mut bad_column = base.clone();
        bad_column.gold_grounding = vec![("Revenue".to_string(), "finance.profits".to_string())];
        assert!(matches!(
            validate_dataset(&[bad_column], &bank, &schemas),
            Err(PipelineError::UnknownGroundingColumn { column, .. })
                if column == "finance.profits"
        ));

        assert!(matches!(
            validate_dataset(&[base.clone(), base.clone()], &bank, &schemas),
            Err(PipelineError::DuplicateExample { id }) if id == "e2"
        ));

        assert!(validate_dataset(&corpus(), &bank, &schemas).is_ok());
    }

    #[test]
    fn out_of_grammar_gold_passes_validation() {
        // Gold SQL is deliberately soft: the example validates but can never
        // match, and its failures attribute to OtherError.
        assert!(validate_dataset(&[out_of_grammar_example()], &bank(), &schemas()).is_ok());
    }

    #[test]
    fn knowledge_free_question_is_identical_across_modes() {
        let example = knowledge_free_example();
        let outputs: Vec<String> = Mode::ALL
            .iter()
            .map(|&mode| run_matched(&example, mode))
            .map(|trace| {
                assert!(trace.matched, "mode {} should match", trace.mode);
                trace.predicted_sql.unwrap()
            })
            .collect();
        assert!(
            outputs.windows(2).all(|w| w[0] == w[1]),
            "outputs differ: {outputs:?}"
        );
    }

    #[test]
    fn ebit_full_matches_and_vanilla_fails() {
        let example = ebit_example();
        let full = run_matched(&example, Mode::Full);
        assert!(full.matched);
        assert_eq!(full.chosen_item.as_deref(), Some("f_ebit"));
        assert_eq!(full.retrieved.first().map(String::as_str), Some("f_ebit"));

        let (result, trace) = run(&example, Mode::Vanilla);
        assert!(matches!(result, Err(FuseError::TargetUnresolved { .. })));
        assert_eq!(trace.error_code.as_deref(), Some("target_unresolved"));
        assert!(trace.retrieved.is_empty());
    }

    #[test]
    fn no_ground_cannot_use_a_calculation() {
        let (result, trace) = run(&ebit_example(), Mode::NoGround);
        assert!(matches!(result, Err(FuseError::PartialKnowledge { ref id }) if id == "f_ebit"));
        assert_eq!(trace.error_code.as_deref(), Some("partial_knowledge"));
        assert!(trace
            .knowledge
            .iter()
            .all(|k| k.status == GroundStatus::Ungrounded));
    }

    #[test]
    fn oracle_recovers_an_engineered_grounding_failure() {
        let example = car_density_example();

        // Full mode: "number of cars" scores below H against num_cars, so the
        // item stays partially grounded and fusion refuses it.
        let (result, trace) = run(&example, Mode::Full);
        assert!(matches!(result, Err(FuseError::PartialKnowledge { .. })));
        let top = &trace.knowledge[0];
        assert_eq!(
            (top.id.as_str(), top.status),
            ("t_cars", GroundStatus::PartiallyGrounded),
            "t_cars should reach fusion first, partially grounded: {:?}",
            trace.knowledge
        );

        // Oracle mode: gold grounding injected at confidence 1.0.
        let oracle = run_matched(&example, Mode::Oracle);
        assert!(oracle.matched, "oracle trace: {oracle:?}");
        assert_eq!(oracle.retrieved, vec!["t_cars"]);
        assert_eq!(oracle.knowledge[0].status, GroundStatus::FullyGrounded);
    }

    #[test]
    fn attribution_retrieval_when_gold_is_outside_top_k() {
        let example = ebit_example();
        let schema = finance_schema();
        let config = PipelineConfig::default();
        // Synthetic full-mode failure whose top-k misses the gold id.
        let trace = ExampleTrace {
            example_id: example.id.clone(),
            split: example.split.to_string(),
            mode: Mode::Full.name().to_string(),
            retrieved: vec!["f_age".to_string()],
            knowledge: Vec::new(),
            chosen_item: None,
            direct_column: None,
            predicted_sql: None,
            error: None,
            error_code: Some("target_unresolved".to_string()),
            matched: false,
        };
        let category = attribute_error(&example, &trace, &bank(), &schema, &config).unwrap();
        assert_eq!(category, ErrorCategory::Retrieval);
    }

    #[test]
    fn attribution_grounding_when_auto_pairs_disagree_with_gold() {
        let example = car_density_example();
        let schema = transport_schema();
        let config = PipelineConfig::default();
        let (_, trace) = run(&example, Mode::Full);
        let category = attribute_error(&example, &trace, &bank(), &schema, &config).unwrap();
        assert_eq!(category, ErrorCategory::Grounding);
    }

    #[test]
    fn attribution_parsing_when_inputs_were_correct() {
        let example = limit_gold_example();
        let schema = finance_schema();
        let config = PipelineConfig::default();
        let trace = run_matched(&example, Mode::Full);
        assert!(!trace.matched);
        let category = attribute_error(&example, &trace, &bank(), &schema, &config).unwrap();
        assert_eq!(category, ErrorCategory::Parsing);
    }

    #[test]
    fn attribution_other_for_out_of_grammar_gold() {
        let example = out_of_grammar_example();
        let schema = finance_schema();
        let config = PipelineConfig::default();
        let trace = run_matched(&example, Mode::Full);
        assert!(!trace.matched);
        let category = attribute_error(&example, &trace, &bank(), &schema, &config).unwrap();
        assert_eq!(category, ErrorCategory::Other);
    }

    #[test]
    fn attribution_rejects_passing_examples() {
        let example = knowledge_free_example();
        let schema = finance_schema();
        let config = PipelineConfig::default();
        let trace = run_matched(&example, Mode::Full);
        assert!(trace.matched);
        assert!(matches!(
            attribute_error(&example, &trace, &bank(), &schema, &config),
            Err(PipelineError::NotAFailure { id }) if id == "e2"
        ));
    }

    #[test]
    fn single_passing_example_scores_one_everywhere() {
        let report = evaluate(
            &[knowledge_free_example()],
            &bank(),
            &schemas(),
            &EvalConfig::default(),
        )
        .unwrap();
        let overall = report.split("overall").unwrap();
        assert_eq!(overall.examples, 1);
        for mode in Mode::ALL {
            let acc = &overall.accuracy[mode.name()];
            assert_eq!((acc.correct, acc.total), (1, 1));
            assert_eq!(acc.accuracy, 1.0);
        }
        assert_eq!(overall.failures, 0);
        assert!(overall.errors.values().all(|&n| n == 0));
        // No gold knowledge anywhere: recall is undefined, grounding is
        // vacuously perfect.
        assert_eq!(overall.recall.at_1, None);
        assert_eq!(overall.grounding.f1, 1.0);
    }

    #[test]
    fn corpus_metrics_have_the_designed_shape() {
        let report = evaluate(&corpus(), &bank(), &schemas(), &EvalConfig::default()).unwrap();

        let overall = report.split("overall").unwrap();
        assert_eq!(overall.examples, 5);
        let acc = |mode: Mode| overall.accuracy[mode.name()].accuracy;
        assert_eq!(overall.accuracy[Mode::Oracle.name()].correct, 3);
        assert_eq!(overall.accuracy[Mode::Full.name()].correct, 2);
        assert_eq!(overall.accuracy[Mode::NoGround.name()].correct, 1);
        assert_eq!(overall.accuracy[Mode::Vanilla.name()].correct, 1);
        assert!(acc(Mode::Oracle) >= acc(Mode::Full));
        assert!(acc(Mode::Full) >= acc(Mode::NoGround));
        assert!(acc(Mode::NoGround) >= acc(Mode::Vanilla));

        // Failures partition into the designed categories.
        assert_eq!(overall.failures, 3);
        assert_eq!(overall.errors["GroundingError"], 1);
        assert_eq!(overall.errors["ParsingError"], 1);
        assert_eq!(overall.errors["OtherError"], 1);
        assert_eq!(overall.errors["RetrievalError"], 0);
        assert_eq!(overall.failures, overall.errors.values().sum::<usize>());

        let finance = report.split("finance").unwrap();
        assert_eq!(finance.examples, 4);
        assert_eq!(finance.errors["ParsingError"], 1);
        assert_eq!(finance.errors["OtherError"], 1);
        assert_eq!(finance.failures, finance.errors.values().sum::<usize>());
        // e1 is finance's only gold-bearing example and ranks first.
        assert_eq!(finance.recall.at_1, Some(1.0));
        assert_eq!(finance.grounding.f1, 1.0);

        let transportation = report.split("transportation").unwrap();
        assert_eq!(transportation.examples, 1);
        assert_eq!(transportation.errors["GroundingError"], 1);
        // One of t_cars' two concepts grounds automatically.
        assert_eq!(transportation.grounding.precision, 1.0);
        assert_eq!(transportation.grounding.recall, 0.5);

        // Recall is monotone in k wherever defined.
        for split in &report.splits {
            if let (Some(a1), Some(a3), Some(a10)) =
                (split.recall.at_1, split.recall.at_3, split.recall.at_10)
            {
                assert!(
                    a1 <= a3 && a3 <= a10,
                    "split {}: {:?}",
                    split.split,
                    split.recall
                );
            }
        }

        // Traces: every example × every mode, id-major, mode order preserved.
        assert_eq!(report.traces.len(), 5 * 4);
        let ids: Vec<&str> = report
            .traces
            .iter()
            .map(|t| t.example_id.as_str())
            .collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
        assert_eq!(
            report
                .traces
                .iter()
                .take(4)
                .map(|t| t.mode.as_str())
                .collect::<Vec<_>>(),
            ["vanilla", "no_ground", "full", "oracle"]
        );
    }

    #[test]
    fn evaluate_is_deterministic() {
        let config = EvalConfig::default();
        let a = evaluate(&corpus(), &bank(), &schemas(), &config).unwrap();
        let b = evaluate(&corpus(), &bank(), &schemas(), &config).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        // Input order is irrelevant: evaluation folds in id order.
        let mut reversed = corpus();
        reversed.reverse();
        let c = evaluate(&reversed, &bank(), &schemas(), &config).unwrap();
        assert_eq!(a.to_json(), c.to_json());
    }

    #[test]
    fn removing_an_example_changes_only_its_contribution() {
        let config = EvalConfig::default();
        let all = evaluate(&corpus(), &bank(), &schemas(), &config).unwrap();
        let without: Vec<DatasetExample> = corpus().into_iter().filter(|e| e.id != "e1").collect();
        let reduced = evaluate(&without, &bank(), &schemas(), &config).unwrap();

        // e1 matched in full and oracle modes only; every aggregate shifts by
        // exactly e1's own contribution.
        let full_all = &all.split("overall").unwrap().accuracy["full"];
        let full_reduced = &reduced.split("overall").unwrap().accuracy["full"];
        assert_eq!(full_all.correct - full_reduced.correct, 1);
        assert_eq!(full_all.total - full_reduced.total, 1);
        let vanilla_all = &all.split("overall").unwrap().accuracy["vanilla"];
        let vanilla_reduced = &reduced.split("overall").unwrap().accuracy["vanilla"];
        assert_eq!(vanilla_all.correct, vanilla_reduced.correct);

        // The untouched split is byte-identical.
        assert_eq!(
            serde_json::to_string(all.split("transportation").unwrap()).unwrap(),
            serde_json::to_string(reduced.split("transportation").unwrap()).unwrap()
        );
        // e1's traces are gone, everything else is unchanged.
        assert_eq!(reduced.traces.len(), all.traces.len() - 4);
        let all_rest: Vec<&ExampleTrace> =
            all.traces.iter().filter(|t| t.example_id != "e1").collect();
        let reduced_refs: Vec<&ExampleTrace> = reduced.traces.iter().collect();
        assert_eq!(all_rest, reduced_refs);
    }

    #[test]
    fn evaluate_rejects_invalid_config() {
        let corpus = corpus();
        let no_modes = EvalConfig {
            modes: vec![],
            ..EvalConfig::default()
        };
        assert!(matches!(
            evaluate(&corpus, &bank(), &schemas(), &no_modes),
            Err(PipelineError::InvalidConfig { .. })
        ));
        let bad_threshold = EvalConfig {
            threshold: 1.5,
            ..EvalConfig::default()
        };
        assert!(matches!(
            evaluate(&corpus, &bank(), &schemas(), &bad_threshold),
            Err(PipelineError::InvalidConfig { .. })
        ));
        let zero_k = EvalConfig {
            k: 0,
            ..EvalConfig::default()
        };
        assert!(matches!(
            evaluate(&corpus, &bank(), &schemas(), &zero_k),
            Err(PipelineError::InvalidConfig { .. })
        ));
    }

    #[test]
    fn report_text_tables_are_aligned() {
        let report = evaluate(&corpus(), &bank(), &schemas(), &EvalConfig::default()).unwrap();
        let text = report.to_text();
        assert!(text.contains("exact-set-match accuracy"));
        assert!(text.contains("overall"));
        assert!(text.contains("RetrievalError"));
        // Every table's header and rows agree on the column grid: cells of
        // the accuracy table start at the same offsets in each line.
        let lines: Vec<&str> = text.lines().collect();
        let header_idx = lines.iter().position(|l| l.starts_with("split")).unwrap();
        let vanilla_offset = lines[header_idx].find("vanilla").unwrap();
        for line in lines
            .iter()
            .skip(header_idx + 1)
            .take_while(|l| !l.is_empty())
        {
            assert!(line.len() > vanilla_offset, "short row: {line:?}");
        }
    }

    #[test]
    fn oracle_mode_sorts_and_dedupes_gold_ids() {
        let mut example = ebit_example();
        example.gold_knowledge_ids = vec![
            "f_ebit".to_string(),
            "f_age".to_string(),
            "f_ebit".to_string(),
        ];
        let (_, trace) = run(&example, Mode::Oracle);
        assert_eq!(trace.retrieved, vec!["f_age", "f_ebit"]);
    }
}
