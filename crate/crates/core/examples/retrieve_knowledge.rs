//! BM25 ranking and Recall@k.
//!
//! Builds the inverted index over the bundled bank once, shows how a raw
//! question is expanded with schema vocabulary into the retrieval query, and
//! ranks items for a few questions. Ends with Recall@k for one question
//! whose gold item hides behind a synonym.
//!
//! ```text
//! cargo run --example retrieve_knowledge
//! ```

use formula_sql::bank::load_bank;
use formula_sql::knowledge::render_knowledge;
use formula_sql::retrieve::{build_index, make_query, recall_at_k, Scorer, Tokenizer};
use formula_sql::schema::SchemaGraph;

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bank = load_bank(format!("{DATA}/bank.jsonl"))?;
    let finance = SchemaGraph::load(format!("{DATA}/schemas/finance.json"))?;
    let estate = SchemaGraph::load(format!("{DATA}/schemas/estate.json"))?;

    let tokenizer = Tokenizer::Word;
    let index = build_index(&bank, tokenizer)?;

    // The query is the question plus every table and column name of the
    // active schema, so items phrased in schema vocabulary score too.
    let question = "What is the EBIT of 'Acme'?";
    let query = make_query(question, &finance, tokenizer);
    println!("question: {question}");
    println!("query terms ({}): {}\n", query.len(), query.join(" "));

    for (question, schema) in [
        ("What is the EBIT of 'Acme'?", &finance),
        ("Which cities are in a housing bubble?", &estate),
    ] {
        println!("top 3 for: {question}");
        let query = make_query(question, schema, tokenizer);
        for (rank, hit) in index
            .search(&query, 3, Scorer::default())
            .iter()
            .enumerate()
        {
            let dsl = bank.get(&hit.id).map(render_knowledge).unwrap_or_default();
            println!("  {}. {:<22} {:>8.4}  {dsl}", rank + 1, hit.id, hit.score);
        }
        println!();
    }

    // Union items only overlap the query on their short names, while
    // calculation items also match many of the schema terms added by the
    // query expansion, so a union's gold item can sit well below rank 1.
    // Recall@k shows where it surfaces.
    let question = "List price where first tier city?";
    let query = make_query(question, &estate, tokenizer);
    let ranked: Vec<String> = index
        .search(&query, bank.len(), Scorer::default())
        .into_iter()
        .map(|hit| hit.id)
        .collect();
    let gold = vec!["est_first_tier".to_string()];
    let position = ranked
        .iter()
        .position(|id| id == "est_first_tier")
        .map(|p| p + 1);
    println!("question: {question}");
    println!("gold item est_first_tier ranks at position {position:?}");
    for k in [1, 3, 10] {
        println!("  recall@{k:<2} = {:.3}", recall_at_k(&ranked, &gold, k)?);
    }

    // BM25 saturates term frequency and length-normalizes differently from
    // TF-IDF cosine, so the two scorers can disagree even at rank 1.
    let question = "What is the price to income ratio?";
    let query = make_query(question, &estate, tokenizer);
    let bm25: Vec<String> = index
        .search(&query, 3, Scorer::default())
        .into_iter()
        .map(|h| h.id)
        .collect();
    let tfidf: Vec<String> = index
        .search(&query, 3, Scorer::TfIdfCosine)
        .into_iter()
        .map(|h| h.id)
        .collect();
    println!("\nscorer comparison on: {question}");
    println!("  bm25:  {bm25:?}");
    println!("  tfidf: {tfidf:?}");

    Ok(())
}
