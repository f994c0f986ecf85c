//! Exact-set-match on SQL pairs.
//!
//! Two queries match when their normal forms are identical: clause order,
//! commutative operand order, comparison direction, constant arithmetic,
//! and IN-list order all wash out; a real semantic difference does not.
//! For differing pairs, `first_divergence` names the clause to blame.
//!
//! ```text
//! cargo run --example sql_match
//! ```

use formula_sql::schema::SchemaGraph;
use formula_sql::sql::{exact_set_match, first_divergence, normalize, parse_sql, render_sql};

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data");

fn check(
    label: &str,
    schema: &SchemaGraph,
    a: &str,
    b: &str,
) -> Result<bool, Box<dyn std::error::Error>> {
    let mut left = parse_sql(a)?;
    let mut right = parse_sql(b)?;
    left.qualify(schema)?;
    right.qualify(schema)?;
    let verdict = exact_set_match(&left, &right);
    println!("{label}");
    println!("  a: {a}");
    println!("  b: {b}");
    println!("  exact set match: {verdict}");
    if verdict {
        // Both sides normalize to the same canonical rendering.
        println!("  normal form: {}", render_sql(&normalize(&left)));
    } else if let Some(diff) = first_divergence(&left, &right) {
        println!(
            "  first divergence in {}: `{}` vs `{}`",
            diff.clause, diff.left, diff.right
        );
    }
    println!();
    Ok(verdict)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let estate = SchemaGraph::load(format!("{DATA}/schemas/estate.json"))?;

    let equivalent = check(
        "clause order, operand order, and comparison direction:",
        &estate,
        "SELECT city, rent + income FROM estate WHERE price > 500000 AND rent < 2000",
        "SELECT income + rent, city FROM estate WHERE 2000 > rent AND 500000 < price",
    )?;
    assert!(equivalent);

    let equivalent = check(
        "constant arithmetic folds before comparison:",
        &estate,
        "SELECT city FROM estate WHERE price > 2 * 500000",
        "SELECT city FROM estate WHERE price > 1000000",
    )?;
    assert!(equivalent);

    let equivalent = check(
        "IN lists are sets:",
        &estate,
        "SELECT price FROM estate WHERE city IN ('Beijing', 'Shanghai', 'Shenzhen')",
        "SELECT price FROM estate WHERE city IN ('Shenzhen', 'Beijing', 'Shanghai')",
    )?;
    assert!(equivalent);

    let equivalent = check(
        "a genuinely different predicate stays different:",
        &estate,
        "SELECT city FROM estate WHERE price > 500000",
        "SELECT city FROM estate WHERE price >= 500000",
    )?;
    assert!(!equivalent);

    let equivalent = check(
        "aggregates must agree:",
        &estate,
        "SELECT AVG(price) FROM estate GROUP BY city",
        "SELECT MAX(price) FROM estate GROUP BY city",
    )?;
    assert!(!equivalent);

    Ok(())
}
