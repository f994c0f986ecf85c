//! Formula-aware text-to-SQL.
//!
//! Many natural-language questions over databases cannot be answered from the
//! schema alone: "EBIT", "car density", or "real estate bubble" are domain
//! formulas, not columns. This crate models such formulas in a tiny DSL,
//! stores them in a bank, retrieves candidates for a question with BM25,
//! grounds their concepts onto schema columns, and fuses the winning formula
//! into an executable SQL query. An evaluation harness measures the whole
//! pipeline and attributes failures to the stage that caused them.
//!
//! The pieces are usable on their own:
//!
//! * [`knowledge`] — the formula DSL: parser, canonical renderer, concept
//!   extraction. Three kinds of item: calculations, unions, conditions.
//! * [`bank`] — a JSONL-backed collection of knowledge items with duplicate
//!   detection, an abstraction lint, and per-domain statistics.
//! * [`schema`] — typed database schemas loaded from JSON.
//! * [`retrieve`] — an inverted index over the bank with Okapi BM25 scoring
//!   (TF-IDF cosine as an alternative) and Recall@k.
//! * [`ground`] — concept-to-column confidence matrices, threshold-based
//!   resolution, and grounding precision/recall/F1.
//! * [`sql`] — a SQL subset: parser, canonical renderer, normalizing
//!   exact-set-match comparator.
//! * [`fuse`] — a controlled question grammar and the fusion step that turns
//!   a grounded formula plus a question frame into SQL.
//! * [`pipeline`] — dataset model, the four pipeline modes (vanilla,
//!   no_ground, full, oracle), error attribution, and batch evaluation.
//!
//! # Examples
//!
//! Each capability has a runnable example against the bundled corpus in
//! `data/`:
//!
//! ```text
//! cargo run --example parse_knowledge    # DSL round-trips and concept lists
//! cargo run --example bank_stats         # bank validation, lint, statistics
//! cargo run --example retrieve_knowledge # BM25 ranking and Recall@k
//! cargo run --example ground_concepts    # confidence matrices, thresholds
//! cargo run --example sql_match          # exact-set-match on SQL pairs
//! cargo run --example question_to_sql    # one question end to end
//! cargo run --example evaluate_corpus    # full ablation over the corpus
//! ```
//!
//! A thin CLI (`formula-sql`) exposes the same operations; see the README.

pub mod bank;
pub mod config;
pub mod fuse;
pub mod ground;
pub mod knowledge;
pub mod pipeline;
pub mod retrieve;
pub mod schema;
pub mod sql;
pub mod text;
