//! DSL round-trips and concept lists.
//!
//! Parses one formula of each kind, shows the canonical rendering, the
//! concepts a grounder would need to resolve, and that rendering is a fixed
//! point (parse → render → parse gives the same item). Ends with a few
//! malformed inputs and the errors they produce.
//!
//! ```text
//! cargo run --example parse_knowledge
//! ```

use formula_sql::knowledge::{concepts_of, parse_knowledge, render_knowledge};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sources = [
        // A calculation: arithmetic over named concepts and literals.
        "EBIT = Revenue - Cost of Goods Sold - Operating Expenses",
        // Nested arithmetic keeps only the parentheses precedence demands.
        "Operating Margin = ((Revenue - Cost of Goods Sold) - Operating Expenses) / (Revenue)",
        // A union: the name abbreviates a closed set of values.
        "First Tier City = IN ( Beijing , Shanghai , Guangzhou , Shenzhen )",
        // A condition: the name abbreviates a conjunction of predicates.
        "Housing Bubble = Price to Income Ratio > 9 AND Price Growth > 0.1",
        // Functions and a date predicate.
        "Company Age = YEAR ( NOW ( ) ) - Founded Year",
    ];

    for source in sources {
        let item = parse_knowledge(source)?;
        let canonical = render_knowledge(&item);
        println!("input:     {source}");
        println!("kind:      {:?}", item.kind());
        println!("canonical: {canonical}");
        println!("concepts:  {:?}", concepts_of(&item));

        // The canonical form round-trips: parsing it again changes nothing.
        let reparsed = parse_knowledge(&canonical)?;
        assert_eq!(reparsed, item);
        assert_eq!(render_knowledge(&reparsed), canonical);
        println!("round-trip: ok\n");
    }

    println!("rejected inputs:");
    let bad = [
        "EBIT",                   // no `=` at all
        "X = Revenue / 0",        // division by a literal zero
        "X = IN ( Beijing )",     // a union needs two members
        "X = ( Revenue = Cost )", // `=` may not nest
        "A + B = Revenue",        // operator inside the name
    ];
    for source in bad {
        let error = parse_knowledge(source).unwrap_err();
        println!("  {source:<28} → {error}");
    }

    Ok(())
}
