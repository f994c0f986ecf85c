//! Bank validation, lint, statistics.
//!
//! Loads the bundled knowledge bank, prints per-domain counts by kind, and
//! demonstrates the two safeguards a bank applies when items are added:
//! duplicate detection and the abstraction lint that flags concrete entity
//! names baked into formulas.
//!
//! ```text
//! cargo run --example bank_stats
//! ```

use formula_sql::bank::{abstraction_lint, load_bank, Gazetteer, KnowledgeBank};
use formula_sql::knowledge::parse_knowledge;

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bank = load_bank(format!("{DATA}/bank.jsonl"))?;
    let stats = bank.stats();

    println!(
        "{:<16} {:>6} {:>12} {:>6} {:>10}",
        "domain", "total", "calculation", "union", "condition"
    );
    for (domain, counts) in &stats.domains {
        println!(
            "{:<16} {:>6} {:>12} {:>6} {:>10}",
            domain, counts.total, counts.calculation, counts.union, counts.condition
        );
    }
    let t = &stats.total;
    println!(
        "{:<16} {:>6} {:>12} {:>6} {:>10}",
        "(all)", t.total, t.calculation, t.union, t.condition
    );

    // The curated bank is clean: no item embeds a known entity name.
    let gazetteer = Gazetteer::default();
    let warnings: usize = bank
        .items()
        .map(|item| abstraction_lint(item, &gazetteer).len())
        .sum();
    println!("\nabstraction warnings in the bundled bank: {warnings}");

    // A scratch bank shows what the safeguards catch.
    let mut scratch = KnowledgeBank::new();
    let item = parse_knowledge("EBIT = Revenue - Cost of Goods Sold - Operating Expenses")?
        .with_id("ebit")
        .with_domain("finance");
    scratch.add_item(item.clone())?;
    println!("\nadding the same formula again under a new id:");
    match scratch.add_item(item.with_id("ebit_copy")) {
        Ok(_) => unreachable!("duplicates are rejected"),
        Err(error) => println!("  rejected: {error}"),
    }

    println!("a formula that names specific companies draws lint warnings:");
    let concrete = parse_knowledge("Retail Giant = IN ( Walmart , Costco )")?
        .with_id("retail_giant")
        .with_domain("finance");
    for warning in scratch.add_item(concrete)? {
        println!("  warning: {warning}");
    }
    println!(
        "  (warnings are advisory; the item was still added: {} items)",
        scratch.len()
    );

    Ok(())
}
