//! Confidence matrices, thresholds, and resolution strategies.
//!
//! Scores every concept of a formula against every schema column, then shows
//! how the acceptance threshold H turns scores into resolutions — and how
//! the choice of similarity strategy decides whether an abbreviation like
//! `num_cars` counts as a match for "Number of Cars".
//!
//! ```text
//! cargo run --example ground_concepts
//! ```

use formula_sql::bank::load_bank;
use formula_sql::ground::{
    ground, grounding_prf, score_matrix, GroundStatus, Resolution, Strategy,
};
use formula_sql::knowledge::render_knowledge;
use formula_sql::schema::SchemaGraph;
use std::collections::BTreeSet;

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bank = load_bank(format!("{DATA}/bank.jsonl"))?;
    let estate = SchemaGraph::load(format!("{DATA}/schemas/estate.json"))?;
    let transportation = SchemaGraph::load(format!("{DATA}/schemas/transportation.json"))?;

    // Full confidence matrix for one item: rows are the formula's concepts,
    // columns the schema's qualified columns.
    let bubble = bank.get("est_housing_bubble").expect("bundled item");
    println!("{}", render_knowledge(bubble));
    let matrix = score_matrix(bubble, &estate, Strategy::Composite)?;
    print!("{:<24}", "");
    for column in &matrix.columns {
        print!(" {:>8}", column.column.chars().take(8).collect::<String>());
    }
    println!();
    for (row, concept) in matrix.concepts.iter().enumerate() {
        print!("{concept:<24}");
        for score in &matrix.scores[row] {
            print!(" {score:>8.3}");
        }
        println!();
    }

    // The threshold H slides over such a matrix: each concept resolves to
    // its best column iff the best score reaches H. "Number of Cars" scores
    // 0.235 against `num_cars` under the composite strategy but 0.625 under
    // the fuzzy n-gram one, so the outcome flips with both knobs.
    let density = bank.get("tra_car_density").expect("bundled item");
    println!("\n{}", render_knowledge(density));
    println!("  {:<6} {:<16} {:<16}", "H", "composite", "fuzzy");
    for threshold in [0.2, 0.6, 0.9] {
        print!("  {threshold:<6.1}");
        for strategy in [Strategy::Composite, Strategy::Fuzzy] {
            let grounded = ground(density, &transportation, threshold, strategy)?;
            let resolved = grounded
                .resolutions
                .iter()
                .filter(|r| r.resolution.column().is_some())
                .count();
            let status = match grounded.status {
                GroundStatus::FullyGrounded => "fully",
                GroundStatus::PartiallyGrounded => "partially",
                GroundStatus::Ungrounded => "ungrounded",
            };
            let cell = format!("{resolved}/{} {status}", grounded.resolutions.len());
            print!(" {cell:<16}");
        }
        println!();
    }

    // Composite similarity (exact / token Jaccard / character bigrams) is
    // conservative about abbreviations; the fuzzy n-gram strategy trades
    // precision for recall and accepts them.
    println!("\nper-concept detail:");
    for strategy in [Strategy::Composite, Strategy::Fuzzy] {
        println!("  strategy {strategy:?}, H = 0.6:");
        let grounded = ground(density, &transportation, 0.6, strategy)?;
        for resolution in &grounded.resolutions {
            match &resolution.resolution {
                Resolution::Resolved { column, confidence } => {
                    println!(
                        "    {:<22} → {column}  ({confidence:.3})",
                        resolution.concept
                    );
                }
                Resolution::Unresolved { best } => {
                    println!("    {:<22} unresolved (best {best:.3})", resolution.concept);
                }
            }
        }
    }

    // Resolutions compare against a gold standard as (concept, column) pairs
    // under micro-averaged precision/recall/F1.
    let grounded = ground(density, &transportation, 0.6, Strategy::Composite)?;
    let predicted: BTreeSet<(String, String)> = grounded.resolved_pairs().into_iter().collect();
    let gold: BTreeSet<(String, String)> = [
        ("number of cars".to_string(), "garage.num_cars".to_string()),
        (
            "parking lot area".to_string(),
            "garage.parking_lot_area".to_string(),
        ),
    ]
    .into();
    let prf = grounding_prf(&[predicted], &[gold])?;
    println!(
        "\ngrounding quality vs gold: precision {:.3}, recall {:.3}, f1 {:.3}",
        prf.precision, prf.recall, prf.f1
    );

    Ok(())
}
