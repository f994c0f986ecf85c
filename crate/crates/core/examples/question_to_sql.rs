//! One question end to end: retrieve → ground → fuse.
//!
//! Runs a formula-dependent question through all four pipeline modes to show
//! what each stage contributes, then prints the full-mode trace. "EBIT" is
//! not a column of the finance schema, so the vanilla parser has nothing to
//! bind the target to; it takes the retrieved and grounded formula to turn
//! the question into SQL.
//!
//! ```text
//! cargo run --example question_to_sql
//! ```

use formula_sql::bank::load_bank;
use formula_sql::pipeline::{run_pipeline, DatasetExample, Mode, PipelineConfig, Split};
use formula_sql::schema::SchemaGraph;
use formula_sql::sql::render_sql;

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bank = load_bank(format!("{DATA}/bank.jsonl"))?;
    let finance = SchemaGraph::load(format!("{DATA}/schemas/finance.json"))?;

    let example = DatasetExample {
        id: "demo".into(),
        question: "What is the EBIT of 'Walmart'?".into(),
        schema_id: finance.db_id.clone(),
        gold_sql: String::new(),
        // Oracle mode skips retrieval and grounding and uses these instead.
        gold_knowledge_ids: vec!["fin_ebit_top_down".into()],
        gold_grounding: vec![
            ("Revenue".into(), "finance.revenue".into()),
            (
                "Cost of Goods Sold".into(),
                "finance.cost_of_goods_sold".into(),
            ),
            (
                "Operating Expenses".into(),
                "finance.operating_expenses".into(),
            ),
        ],
        split: Split::Dev,
    };

    println!("question: {}\n", example.question);
    for mode in Mode::ALL {
        let config = PipelineConfig {
            mode,
            ..PipelineConfig::default()
        };
        let (result, _) = run_pipeline(&example, &bank, &finance, &config);
        match result {
            Ok(query) => println!("{:<10} {}", mode.name(), render_sql(&query)),
            Err(error) => println!("{:<10} error: {error}", mode.name()),
        }
    }

    // The trace records what every stage did; the evaluation harness uses
    // the same object for error attribution.
    let config = PipelineConfig {
        mode: Mode::Full,
        ..PipelineConfig::default()
    };
    let (_, trace) = run_pipeline(&example, &bank, &finance, &config);
    println!(
        "\nfull-mode trace:\n{}",
        serde_json::to_string_pretty(&trace)?
    );

    // A question about a plain column never needs the bank: every mode,
    // including vanilla, parses it directly against the schema.
    let direct = DatasetExample {
        id: "direct".into(),
        question: "What is the revenue of 'Walmart'?".into(),
        schema_id: finance.db_id.clone(),
        gold_sql: String::new(),
        gold_knowledge_ids: vec![],
        gold_grounding: vec![],
        split: Split::Dev,
    };
    println!("\nquestion: {}\n", direct.question);
    for mode in Mode::ALL {
        let config = PipelineConfig {
            mode,
            ..PipelineConfig::default()
        };
        let (result, _) = run_pipeline(&direct, &bank, &finance, &config);
        match result {
            Ok(query) => println!("{:<10} {}", mode.name(), render_sql(&query)),
            Err(error) => println!("{:<10} error: {error}", mode.name()),
        }
    }

    Ok(())
}
