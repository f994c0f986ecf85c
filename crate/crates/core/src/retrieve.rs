//! Lexical retrieval of knowledge items for a question.
//!
//! Each bank item becomes one retrieval document: its name, canonical body,
//! and domain joined by `|`. The query is built from the question plus the
//! schema's table and column names, so a question that mentions neither a
//! formula name nor its inputs can still reach items whose bodies overlap
//! the schema vocabulary.
//!
//! Two interchangeable scorers are provided: Okapi BM25 (the default) and
//! TF-IDF cosine. Both run over the same [`KnowledgeIndex`]; ranking is
//! deterministic — score descending, then id ascending — and zero-score
//! documents are never returned.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::bank::KnowledgeBank;
use crate::knowledge::{render_body, KnowledgeItem};
use crate::schema::SchemaGraph;

/// How text is split into index terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tokenizer {
    /// Lowercased alphanumeric runs: `"price_to_income"` → `price to income`.
    Word,
    /// Character n-grams within each word; words shorter than `n` are kept
    /// whole. Useful when questions abbreviate column names.
    CharNgram(usize),
}

/// Ranking function run over the index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scorer {
    Bm25 { k1: f64, b: f64 },
    TfIdfCosine,
}

impl Default for Scorer {
    fn default() -> Self {
        Scorer::Bm25 { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Error)]
pub enum RetrieveError {
    #[error("cannot build an index over an empty bank")]
    EmptyBank,
    #[error("recall is undefined for an empty gold set")]
    EmptyGold,
}

/// One ranked result.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit {
    pub id: String,
    pub score: f64,
}

/// Split `text` into terms under `tokenizer`.
pub fn tokenize(text: &str, tokenizer: Tokenizer) -> Vec<String> {
    let words = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase());
    match tokenizer {
        Tokenizer::Word => words.collect(),
        Tokenizer::CharNgram(n) => {
            let n = n.max(1);
            let mut terms = Vec::new();
            for word in words {
                let chars: Vec<char> = word.chars().collect();
                if chars.len() <= n {
                    terms.push(word);
                } else {
                    for window in chars.windows(n) {
                        terms.push(window.iter().collect());
                    }
                }
            }
            terms
        }
    }
}

/// The text a knowledge item is indexed under.
pub fn document_text(item: &KnowledgeItem) -> String {
    format!(
        "{} | {} | {}",
        item.name,
        render_body(&item.body),
        item.domain
    )
}

/// Build the retrieval query for a question against a schema: question terms
/// plus every table and column name.
pub fn make_query(question: &str, schema: &SchemaGraph, tokenizer: Tokenizer) -> Vec<String> {
    let mut text = question.to_string();
    for table in &schema.tables {
        text.push(' ');
        text.push_str(&table.name);
        for column in &table.columns {
            text.push(' ');
            text.push_str(&column.name);
        }
    }
    let distinct: BTreeSet<String> = tokenize(&text, tokenizer).into_iter().collect();
    distinct.into_iter().collect()
}

/// An inverted index over a bank.
#[derive(Debug, Clone)]
pub struct KnowledgeIndex {
    tokenizer: Tokenizer,
    /// term → (doc id → term frequency).
    postings: BTreeMap<String, BTreeMap<String, f64>>,
    /// doc id → token count.
    doc_len: BTreeMap<String, f64>,
    avg_doc_len: f64,
}

impl KnowledgeIndex {
    pub fn tokenizer(&self) -> Tokenizer {
        self.tokenizer
    }

    pub fn doc_count(&self) -> usize {
        self.doc_len.len()
    }

    fn idf_bm25(&self, term: &str) -> f64 {
        let n = self.doc_count() as f64;
        let df = self.postings.get(term).map_or(0.0, |p| p.len() as f64);
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Smoothed TF-IDF idf; strictly positive for any indexed term.
    fn idf_tfidf(&self, term: &str) -> f64 {
        let n = self.doc_count() as f64;
        let df = self.postings.get(term).map_or(0.0, |p| p.len() as f64);
        ((1.0 + n) / (1.0 + df)).ln() + 1.0
    }

    /// Rank documents for `query` terms. Query term frequency is capped at
    /// one (terms are deduplicated), only strictly positive scores are
    /// returned, and ties break by ascending id.
    pub fn search(&self, query: &[String], k: usize, scorer: Scorer) -> Vec<SearchHit> {
        let terms: BTreeSet<&String> = query.iter().collect();
        let mut scores: BTreeMap<&str, f64> = BTreeMap::new();
        match scorer {
            Scorer::Bm25 { k1, b } => {
                for term in terms {
                    let Some(postings) = self.postings.get(term.as_str()) else {
                        continue;
                    };
                    let idf = self.idf_bm25(term);
                    for (id, &tf) in postings {
                        let dl_ratio = if self.avg_doc_len > 0.0 {
                            self.doc_len[id] / self.avg_doc_len
                        } else {
                            0.0
                        };
                        let tf_part = tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl_ratio));
                        *scores.entry(id).or_default() += idf * tf_part;
                    }
                }
            }
            Scorer::TfIdfCosine => {
                // Document norms span the full vocabulary, so compute them
                // per search; banks are small enough that this is cheap.
                let mut doc_norm_sq: BTreeMap<&str, f64> = BTreeMap::new();
                for (term, postings) in &self.postings {
                    let idf = self.idf_tfidf(term);
                    for (id, &tf) in postings {
                        *doc_norm_sq.entry(id).or_default() += (tf * idf).powi(2);
                    }
                }
                let mut query_norm_sq = 0.0;
                let mut dot: BTreeMap<&str, f64> = BTreeMap::new();
                for term in terms {
                    let Some(postings) = self.postings.get(term.as_str()) else {
                        continue;
                    };
                    let idf = self.idf_tfidf(term);
                    query_norm_sq += idf * idf;
                    for (id, &tf) in postings {
                        *dot.entry(id).or_default() += idf * (tf * idf);
                    }
                }
                if query_norm_sq > 0.0 {
                    for (id, d) in dot {
                        let norm = (query_norm_sq * doc_norm_sq[id]).sqrt();
                        if norm > 0.0 {
                            scores.insert(id, d / norm);
                        }
                    }
                }
            }
        }
        let mut hits: Vec<SearchHit> = scores
            .into_iter()
            .filter(|(_, score)| *score > 0.0)
            .map(|(id, score)| SearchHit {
                id: id.to_string(),
                score,
            })
            .collect();
        hits.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.id.cmp(&b.id))
        });
        hits.truncate(k);
        hits
    }
}

/// Index every item of a non-empty bank.
pub fn build_index(
    bank: &KnowledgeBank,
    tokenizer: Tokenizer,
) -> Result<KnowledgeIndex, RetrieveError> {
    if bank.is_empty() {
        return Err(RetrieveError::EmptyBank);
    }
    let mut postings: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    let mut doc_len = BTreeMap::new();
    let mut total_len = 0.0;
    for item in bank.items() {
        let terms = tokenize(&document_text(item), tokenizer);
        total_len += terms.len() as f64;
        doc_len.insert(item.id.clone(), terms.len() as f64);
        for term in terms {
            *postings
                .entry(term)
                .or_default()
                .entry(item.id.clone())
                .or_default() += 1.0;
        }
    }
    let avg_doc_len = total_len / doc_len.len() as f64;
    Ok(KnowledgeIndex {
        tokenizer,
        postings,
        doc_len,
        avg_doc_len,
    })
}

/// One-shot convenience: index the bank and rank items for the question.
pub fn retrieve(
    bank: &KnowledgeBank,
    question: &str,
    schema: &SchemaGraph,
    k: usize,
    tokenizer: Tokenizer,
    scorer: Scorer,
) -> Result<Vec<SearchHit>, RetrieveError> {
    let index = build_index(bank, tokenizer)?;
    let query = make_query(question, schema, tokenizer);
    Ok(index.search(&query, k, scorer))
}

/// Fraction of gold ids found in the top `k` of `ranked`.
pub fn recall_at_k(ranked: &[String], gold: &[String], k: usize) -> Result<f64, RetrieveError> {
    let gold: BTreeSet<&String> = gold.iter().collect();
    if gold.is_empty() {
        return Err(RetrieveError::EmptyGold);
    }
    let top: BTreeSet<&String> = ranked.iter().take(k).collect();
    Ok(gold.intersection(&top).count() as f64 / gold.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::parse_knowledge;

    fn bank_from(dsl_by_id: &[(&str, &str, &str)]) -> KnowledgeBank {
        let mut bank = KnowledgeBank::new();
        for (id, domain, dsl) in dsl_by_id {
            let item = parse_knowledge(dsl)
                .unwrap()
                .with_id(id)
                .with_domain(domain);
            bank.add_item(item).unwrap();
        }
        bank
    }

    fn sample_bank() -> KnowledgeBank {
        bank_from(&[
            ("fin_ebit", "finance", "EBIT = Revenue - COGS - OpEx"),
            (
                "fin_margin",
                "finance",
                "Profit Margin = Net Income / Revenue",
            ),
            (
                "est_density",
                "estate",
                "People Density = Population / Land Area",
            ),
            (
                "est_tier1",
                "estate",
                "First Tier City = IN ( Beijing , Shanghai )",
            ),
        ])
    }

    fn schema() -> SchemaGraph {
        SchemaGraph::from_json(
            r#"{"db_id": "finance", "tables": [
                {"name": "finance", "columns": [
                    {"name": "company", "type": "text"},
                    {"name": "revenue", "type": "number"},
                    {"name": "net_income", "type": "number"}
                ]}
            ]}"#,
        )
        .unwrap()
    }

    #[test]
    fn word_tokenizer_splits_punctuation_and_lowercases() {
        assert_eq!(
            tokenize("What's the price_to_income ratio?", Tokenizer::Word),
            ["what", "s", "the", "price", "to", "income", "ratio"]
        );
        assert_eq!(tokenize("EBIT 2020", Tokenizer::Word), ["ebit", "2020"]);
        assert!(tokenize("  |  ", Tokenizer::Word).is_empty());
    }

    #[test]
    fn char_ngram_tokenizer_windows_within_words() {
        assert_eq!(
            tokenize("chips so", Tokenizer::CharNgram(3)),
            ["chi", "hip", "ips", "so"]
        );
        // n larger than every word keeps words whole, i.e. degenerates to Word.
        assert_eq!(
            tokenize("a bc", Tokenizer::CharNgram(9)),
            tokenize("a bc", Tokenizer::Word)
        );
    }

    #[test]
    fn query_merges_question_and_schema_vocabulary() {
        let query = make_query("What is the EBIT of Walmart?", &schema(), Tokenizer::Word);
        for expected in [
            "ebit", "walmart", "finance", "revenue", "net", "income", "company",
        ] {
            assert!(
                query.contains(&expected.to_string()),
                "missing {expected} in {query:?}"
            );
        }
        // Distinct and sorted.
        let mut sorted = query.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(query, sorted);
    }

    #[test]
    fn empty_bank_cannot_be_indexed() {
        assert!(matches!(
            build_index(&KnowledgeBank::new(), Tokenizer::Word),
            Err(RetrieveError::EmptyBank)
        ));
    }

    #[test]
    fn single_doc_single_term_bm25_is_hand_computable() {
        let bank = bank_from(&[("only", "finance", "EBIT = Revenue - COGS - OpEx")]);
        let index = build_index(&bank, Tokenizer::Word).unwrap();
        let hits = index.search(&["ebit".into()], 5, Scorer::default());
        assert_eq!(hits.len(), 1);
        // One document: idf = ln(1 + 0.5/1.5); tf = 1 and dl = avgdl make the
        // tf part collapse to (k1+1)/(1+k1) = 1.
        let expected = (1.0f64 + 0.5 / 1.5).ln();
        assert!(
            (hits[0].score - expected).abs() < 1e-12,
            "{} vs {expected}",
            hits[0].score
        );
    }

    #[test]
    fn ranks_the_matching_item_first_and_drops_zero_scores() {
        let bank = sample_bank();
        let index = build_index(&bank, Tokenizer::Word).unwrap();
        let query = make_query(
            "what is the profit margin of Walmart",
            &schema(),
            Tokenizer::Word,
        );
        let hits = index.search(&query, 10, Scorer::default());
        assert_eq!(hits[0].id, "fin_margin");
        // `est_tier1` shares no term with the query or schema.
        assert!(hits.iter().all(|h| h.id != "est_tier1"), "{hits:?}");
        assert!(hits.iter().all(|h| h.score > 0.0));

        let none = index.search(&["zzz".into()], 10, Scorer::default());
        assert!(none.is_empty());
    }

    fn estate_schema() -> SchemaGraph {
        SchemaGraph::from_json(
            r#"{"db_id": "estate", "tables": [
                {"name": "estate", "columns": [
                    {"name": "city", "type": "text"},
                    {"name": "population", "type": "number"},
                    {"name": "land_area", "type": "number"}
                ]}
            ]}"#,
        )
        .unwrap()
    }

    #[test]
    fn tfidf_cosine_agrees_on_the_top_item() {
        let bank = sample_bank();
        let index = build_index(&bank, Tokenizer::Word).unwrap();
        let query = make_query(
            "what is the people density of Beijing",
            &estate_schema(),
            Tokenizer::Word,
        );
        let bm25 = index.search(&query, 1, Scorer::default());
        let cosine = index.search(&query, 1, Scorer::TfIdfCosine);
        assert_eq!(bm25[0].id, "est_density");
        assert_eq!(cosine[0].id, "est_density");
        assert!(cosine[0].score <= 1.0 + 1e-12);
    }

    #[test]
    fn char_ngrams_bridge_abbreviations() {
        let bank = sample_bank();
        let index = build_index(&bank, Tokenizer::CharNgram(3)).unwrap();
        let hits = index.search(
            &tokenize("populat", Tokenizer::CharNgram(3)),
            5,
            Scorer::default(),
        );
        assert_eq!(hits.first().map(|h| h.id.as_str()), Some("est_density"));
    }

    #[test]
    fn ties_break_by_ascending_id() {
        // Distinct items (the bodies differ by case, so they are not bank
        // duplicates) whose tokenized documents are identical.
        let bank = bank_from(&[
            ("b_copy", "finance", "Gross Profit = Revenue - COGS"),
            ("a_copy", "finance", "gross profit = revenue - cogs"),
        ]);
        let index = build_index(&bank, Tokenizer::Word).unwrap();
        let hits = index.search(&["revenue".into(), "cogs".into()], 5, Scorer::default());
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].id, "a_copy");
        assert!((hits[0].score - hits[1].score).abs() < 1e-12);
    }

    #[test]
    fn retrieve_is_index_plus_query() {
        let bank = sample_bank();
        let hits = retrieve(
            &bank,
            "what is the EBIT of Walmart",
            &schema(),
            3,
            Tokenizer::Word,
            Scorer::default(),
        )
        .unwrap();
        // Schema vocabulary in the query keeps every finance item in range;
        // the named item must at least make the cut.
        assert!(hits.iter().any(|h| h.id == "fin_ebit"), "{hits:?}");
        assert!(hits.len() <= 3);
    }

    #[test]
    fn recall_at_k_counts_gold_hits() {
        let ranked: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let gold: Vec<String> = ["b", "d"].iter().map(|s| s.to_string()).collect();
        assert_eq!(recall_at_k(&ranked, &gold, 1).unwrap(), 0.0);
        assert_eq!(recall_at_k(&ranked, &gold, 2).unwrap(), 0.5);
        assert_eq!(recall_at_k(&ranked, &gold, 4).unwrap(), 1.0);
        assert_eq!(recall_at_k(&ranked, &gold, 10).unwrap(), 1.0);
        assert!(matches!(
            recall_at_k(&ranked, &[], 3),
            Err(RetrieveError::EmptyGold)
        ));
    }

    /// Mirror of the BM25 scorer computed directly from raw documents,
    /// without an inverted index. Kept deliberately naive.
    fn brute_force_bm25(
        docs: &[(String, Vec<String>)],
        query: &[String],
        k1: f64,
        b: f64,
    ) -> Vec<(String, f64)> {
        let n = docs.len() as f64;
        let avgdl = docs.iter().map(|(_, t)| t.len() as f64).sum::<f64>() / n;
        let terms: BTreeSet<&String> = query.iter().collect();
        let mut out = Vec::new();
        for (id, tokens) in docs {
            let dl = tokens.len() as f64;
            let mut score = 0.0;
            for term in &terms {
                let tf = tokens.iter().filter(|t| t == term).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = docs.iter().filter(|(_, d)| d.contains(term)).count() as f64;
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                let ratio = if avgdl > 0.0 { dl / avgdl } else { 0.0 };
                score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * ratio));
            }
            if score > 0.0 {
                out.push((id.clone(), score));
            }
        }
        out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        out
    }

    #[test]
    fn bm25_matches_brute_force_on_the_sample_bank() {
        let bank = sample_bank();
        let docs: Vec<(String, Vec<String>)> = bank
            .items()
            .map(|item| {
                (
                    item.id.clone(),
                    tokenize(&document_text(item), Tokenizer::Word),
                )
            })
            .collect();
        let index = build_index(&bank, Tokenizer::Word).unwrap();
        for question in [
            "what is the EBIT of Walmart",
            "people density of Shanghai",
            "profit margin",
            "first tier city",
        ] {
            let query = make_query(question, &schema(), Tokenizer::Word);
            let fast = index.search(&query, usize::MAX, Scorer::default());
            let slow = brute_force_bm25(&docs, &query, 1.2, 0.75);
            assert_eq!(fast.len(), slow.len(), "question: {question}");
            for (hit, (id, score)) in fast.iter().zip(&slow) {
                assert_eq!(&hit.id, id, "question: {question}");
                assert!((hit.score - score).abs() < 1e-9, "question: {question}");
            }
        }
    }

    mod prop_tests {
        use super::*;
        use proptest::prelude::*;

        fn doc_strategy() -> impl Strategy<Value = Vec<String>> {
            proptest::collection::vec("[a-e][a-e]?", 1..12)
        }

        proptest! {
            #[test]
            fn index_search_equals_brute_force(
                raw_docs in proptest::collection::vec(doc_strategy(), 1..20),
                query in proptest::collection::vec("[a-e][a-e]?", 1..6),
            ) {
                // Build a bank whose document texts are controlled: the name
                // carries the tokens; body and domain stay constant.
                let mut bank = KnowledgeBank::new();
                let mut docs = Vec::new();
                for (i, words) in raw_docs.iter().enumerate() {
                    let id = format!("doc{i:02}");
                    let name = format!("{} {i:02}", words.join(" "));
                    let dsl = format!("{name} = qq + rr");
                    let item = parse_knowledge(&dsl).unwrap().with_id(&id).with_domain("zz");
                    bank.add_item(item).unwrap();
                    let tokens = tokenize(&document_text(bank.get(&id).unwrap()), Tokenizer::Word);
                    docs.push((id, tokens));
                }
                let index = build_index(&bank, Tokenizer::Word).unwrap();
                let query: Vec<String> = query.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
                let fast = index.search(&query, usize::MAX, Scorer::default());
                let slow = brute_force_bm25(&docs, &query, 1.2, 0.75);
                prop_assert_eq!(fast.len(), slow.len());
                for (hit, (id, score)) in fast.iter().zip(&slow) {
                    prop_assert_eq!(&hit.id, id);
                    prop_assert!((hit.score - score).abs() < 1e-9);
                }
            }

            #[test]
            fn recall_is_monotone_in_k(
                ranked in proptest::collection::vec("[a-z]{1,3}", 0..15),
                gold in proptest::collection::vec("[a-z]{1,3}", 1..5),
            ) {
                let mut last = 0.0;
                for k in 0..=ranked.len() + 1 {
                    let r = recall_at_k(&ranked, &gold, k).unwrap();
                    prop_assert!(r >= last - 1e-12);
                    prop_assert!((0.0..=1.0).contains(&r));
                    last = r;
                }
            }
        }
    }
}
