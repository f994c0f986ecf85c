//! The knowledge bank: a persistent collection of formulas.
//!
//! On disk a bank is UTF-8 JSONL, one record per line:
//!
//! ```json
//! {"id": "fin_ebit", "domain": "finance", "dsl": "EBIT = Revenue - COGS - OpEx", "source": "handbook"}
//! ```
//!
//! `source` is optional. In memory the bank keeps items by id plus two
//! secondary indexes: domain → ids and normalized name → ids. Several items
//! may share a name (two ways to compute EBIT are two items); what is
//! rejected is a duplicate (normalized name, canonical body) pair.
//!
//! [`abstraction_lint`] is advisory: it flags concepts that look database-
//! specific — year literals, gazetteer names, digit-bearing tokens — since
//! formulas phrased over one database's values transfer poorly to others.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knowledge::{
    concepts_of, parse_knowledge, render_knowledge, DslError, KnowledgeItem, KnowledgeKind,
};
use crate::text::normalize;

/// One JSONL record of the on-disk format.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct BankRecord {
    id: String,
    domain: String,
    dsl: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<String>,
}

#[derive(Debug, Error)]
pub enum BankError {
    #[error("cannot read bank: {0}")]
    Io(#[from] std::io::Error),
    #[error("bank line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("duplicate item: `{new_id}` repeats the name and body of `{existing_id}`")]
    Duplicate { existing_id: String, new_id: String },
    #[error("duplicate item id `{id}`")]
    DuplicateId { id: String },
    #[error("item has an empty id")]
    MissingId,
    #[error("no item with id `{id}`")]
    UnknownId { id: String },
    #[error("item `{id}` is not well-formed: {source}")]
    Invalid { id: String, source: DslError },
}

/// Why a concept was flagged by the abstraction lint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WarnReason {
    /// A four-digit year literal, e.g. `2020`.
    YearLiteral,
    /// A proper-noun token found in the gazetteer, e.g. `Chinese`.
    GazetteerName,
    /// Any other token containing a digit, e.g. `top10`.
    DigitBearing,
}

/// An advisory warning that a concept looks database-specific.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbstractionWarning {
    pub item_id: String,
    pub concept: String,
    pub token: String,
    pub reason: WarnReason,
}

impl std::fmt::Display for AbstractionWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let reason = match self.reason {
            WarnReason::YearLiteral => "a year literal",
            WarnReason::GazetteerName => "a gazetteer name",
            WarnReason::DigitBearing => "a digit-bearing token",
        };
        write!(
            f,
            "item `{}`: concept `{}` contains {} `{}` — consider abstracting it",
            self.item_id, self.concept, reason, self.token
        )
    }
}

/// Country and company names treated as database-specific when they appear
/// inside a concept. Replaceable wholesale for other domains.
#[derive(Debug, Clone, PartialEq)]
pub struct Gazetteer(BTreeSet<String>);

const DEFAULT_GAZETTEER: &[&str] = &[
    "alibaba",
    "amazon",
    "america",
    "american",
    "apple",
    "australia",
    "australian",
    "brazil",
    "brazilian",
    "britain",
    "british",
    "canada",
    "canadian",
    "china",
    "chinese",
    "costco",
    "europe",
    "european",
    "france",
    "french",
    "german",
    "germany",
    "google",
    "india",
    "indian",
    "japan",
    "japanese",
    "microsoft",
    "russia",
    "russian",
    "samsung",
    "tencent",
    "toyota",
    "uk",
    "usa",
    "walmart",
];

impl Default for Gazetteer {
    fn default() -> Self {
        Gazetteer(DEFAULT_GAZETTEER.iter().map(|s| s.to_string()).collect())
    }
}

impl Gazetteer {
    pub fn from_words<I: IntoIterator<Item = S>, S: AsRef<str>>(words: I) -> Self {
        Gazetteer(
            words
                .into_iter()
                .map(|w| w.as_ref().to_lowercase())
                .collect(),
        )
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(&token.to_lowercase())
    }
}

fn is_year_literal(token: &str) -> bool {
    token.len() == 4
        && token.bytes().all(|b| b.is_ascii_digit())
        && (1000..=2999).contains(&token.parse::<u32>().unwrap_or(0))
}

/// Flag database-specific tokens in an item's concepts. Advisory only.
pub fn abstraction_lint(item: &KnowledgeItem, gazetteer: &Gazetteer) -> Vec<AbstractionWarning> {
    let mut warnings = Vec::new();
    for concept in concepts_of(item) {
        for token in concept.split_whitespace() {
            let reason = if is_year_literal(token) {
                Some(WarnReason::YearLiteral)
            } else if gazetteer.contains(token) {
                Some(WarnReason::GazetteerName)
            } else if token.bytes().any(|b| b.is_ascii_digit()) {
                Some(WarnReason::DigitBearing)
            } else {
                None
            };
            if let Some(reason) = reason {
                warnings.push(AbstractionWarning {
                    item_id: item.id.clone(),
                    concept: concept.clone(),
                    token: token.to_string(),
                    reason,
                });
            }
        }
    }
    warnings
}

/// Counts for one domain or the whole bank.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindCounts {
    pub total: usize,
    pub calculation: usize,
    pub union: usize,
    pub condition: usize,
}

impl KindCounts {
    fn bump(&mut self, kind: KnowledgeKind) {
        self.total += 1;
        match kind {
            KnowledgeKind::Calculation => self.calculation += 1,
            KnowledgeKind::Union => self.union += 1,
            KnowledgeKind::Condition => self.condition += 1,
        }
    }
}

/// Per-domain and total counts; domains are ordered lexicographically.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankStats {
    pub domains: BTreeMap<String, KindCounts>,
    pub total: KindCounts,
}

impl std::fmt::Display for BankStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let width = self
            .domains
            .keys()
            .map(|d| d.len())
            .chain(std::iter::once(5))
            .max()
            .unwrap_or(5);
        writeln!(
            f,
            "{:<width$}  {:>5}  {:>11}  {:>5}  {:>9}",
            "domain", "total", "calculation", "union", "condition"
        )?;
        for (domain, c) in &self.domains {
            writeln!(
                f,
                "{domain:<width$}  {:>5}  {:>11}  {:>5}  {:>9}",
                c.total, c.calculation, c.union, c.condition
            )?;
        }
        write!(
            f,
            "{:<width$}  {:>5}  {:>11}  {:>5}  {:>9}",
            "(all)",
            self.total.total,
            self.total.calculation,
            self.total.union,
            self.total.condition
        )
    }
}

/// An in-memory bank of knowledge items.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgeBank {
    items: BTreeMap<String, KnowledgeItem>,
    domain_index: BTreeMap<String, Vec<String>>,
    name_index: BTreeMap<String, Vec<String>>,
    /// (normalized name, canonical body) → id, for duplicate rejection.
    signatures: BTreeMap<(String, String), String>,
}

impl KnowledgeBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&KnowledgeItem> {
        self.items.get(id)
    }

    /// Items in id order.
    pub fn items(&self) -> impl Iterator<Item = &KnowledgeItem> {
        self.items.values()
    }

    /// Ids that share a normalized name, in insertion order.
    pub fn ids_for_name(&self, name: &str) -> &[String] {
        self.name_index
            .get(&normalize(name))
            .map_or(&[], Vec::as_slice)
    }

    /// Ids in a domain, in insertion order.
    pub fn ids_for_domain(&self, domain: &str) -> &[String] {
        self.domain_index.get(domain).map_or(&[], Vec::as_slice)
    }

    /// Insert an item, enforcing the bank invariants. Returns advisory
    /// abstraction warnings (computed with the default gazetteer); these
    /// never block the insert.
    pub fn add_item(&mut self, item: KnowledgeItem) -> Result<Vec<AbstractionWarning>, BankError> {
        if item.id.is_empty() {
            return Err(BankError::MissingId);
        }
        item.validate().map_err(|source| BankError::Invalid {
            id: item.id.clone(),
            source,
        })?;
        let signature = (
            item.normalized_name(),
            crate::knowledge::render_body(&item.body),
        );
        if let Some(existing) = self.signatures.get(&signature) {
            return Err(BankError::Duplicate {
                existing_id: existing.clone(),
                new_id: item.id.clone(),
            });
        }
        if self.items.contains_key(&item.id) {
            return Err(BankError::DuplicateId {
                id: item.id.clone(),
            });
        }
        let warnings = abstraction_lint(&item, &Gazetteer::default());
        self.signatures.insert(signature, item.id.clone());
        self.domain_index
            .entry(item.domain.clone())
            .or_default()
            .push(item.id.clone());
        self.name_index
            .entry(item.normalized_name())
            .or_default()
            .push(item.id.clone());
        self.items.insert(item.id.clone(), item);
        Ok(warnings)
    }

    /// Remove an item by id, restoring all indexes.
    pub fn remove_item(&mut self, id: &str) -> Result<KnowledgeItem, BankError> {
        let item = self
            .items
            .remove(id)
            .ok_or_else(|| BankError::UnknownId { id: id.into() })?;
        let signature = (
            item.normalized_name(),
            crate::knowledge::render_body(&item.body),
        );
        self.signatures.remove(&signature);
        for (index, key) in [
            (&mut self.domain_index, item.domain.clone()),
            (&mut self.name_index, item.normalized_name()),
        ] {
            if let Some(ids) = index.get_mut(&key) {
                ids.retain(|i| i != id);
                if ids.is_empty() {
                    index.remove(&key);
                }
            }
        }
        Ok(item)
    }

    /// Per-domain and total counts by kind.
    pub fn stats(&self) -> BankStats {
        let mut stats = BankStats::default();
        for item in self.items.values() {
            stats
                .domains
                .entry(item.domain.clone())
                .or_default()
                .bump(item.kind());
            stats.total.bump(item.kind());
        }
        stats
    }

    /// Write the bank as canonical JSONL (items in id order, canonical DSL).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), BankError> {
        let mut out = Vec::new();
        for item in self.items.values() {
            let record = BankRecord {
                id: item.id.clone(),
                domain: item.domain.clone(),
                dsl: render_knowledge(item),
                source: item.source.clone(),
            };
            serde_json::to_writer(&mut out, &record).map_err(|e| BankError::Schema {
                line: 0,
                message: e.to_string(),
            })?;
            out.push(b'\n');
        }
        let mut file = std::fs::File::create(path)?;
        file.write_all(&out)?;
        Ok(())
    }
}

/// Load a bank from JSONL. Blank lines are skipped; any malformed record,
/// unparseable DSL, or duplicate aborts the load with the offending line.
pub fn load_bank(path: impl AsRef<Path>) -> Result<KnowledgeBank, BankError> {
    load_bank_str(&std::fs::read_to_string(path)?)
}

/// [`load_bank`] over an in-memory string (line numbers are 1-based).
pub fn load_bank_str(content: &str) -> Result<KnowledgeBank, BankError> {
    let mut bank = KnowledgeBank::new();
    for (lineno, line) in content.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let lineno = lineno + 1;
        let record: BankRecord = serde_json::from_str(line).map_err(|e| BankError::Schema {
            line: lineno,
            message: e.to_string(),
        })?;
        if record.id.trim().is_empty() {
            return Err(BankError::Schema {
                line: lineno,
                message: "empty item id".into(),
            });
        }
        let item = parse_knowledge(&record.dsl)
            .map_err(|e| BankError::Schema {
                line: lineno,
                message: e.to_string(),
            })?
            .with_id(record.id.trim())
            .with_domain(record.domain.trim());
        let item = match record.source {
            Some(s) => item.with_source(&s),
            None => item,
        };
        bank.add_item(item)?;
    }
    Ok(bank)
}
