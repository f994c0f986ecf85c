//! Grounding: resolving a formula's concepts to schema columns.
//!
//! A formula such as `People Density = Population / Land Area` is abstract;
//! before it can be fused into SQL, each concept must be pinned to a column
//! of the target database. The grounder scores every (concept, column) pair
//! with a string-similarity strategy, takes the best column per concept, and
//! accepts it when the score clears a confidence threshold.
//!
//! Two strategies are provided. [`Strategy::Composite`] (the default) blends
//! exact, token-overlap, and character-bigram evidence and is conservative:
//! it only saturates when the names really correspond. [`Strategy::Fuzzy`]
//! is edit-distance over token n-grams and is more permissive with
//! abbreviations (`number of cars` vs `num_cars`), at the cost of more false
//! positives. Both give score 1.0 whenever the normalized texts are equal.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::knowledge::{concepts_of, KnowledgeItem};
use crate::schema::{QualifiedColumn, SchemaGraph};
use crate::text::{composite_similarity, fuzzy_ngram_similarity, normalize};

/// Similarity strategy for concept–column scoring.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Composite,
    Fuzzy,
}

impl Strategy {
    /// Score a concept against a bare column name in `[0, 1]`.
    pub fn score(&self, concept: &str, column_name: &str) -> f64 {
        match self {
            Strategy::Composite => composite_similarity(concept, column_name),
            Strategy::Fuzzy => fuzzy_ngram_similarity(concept, column_name),
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "composite" => Ok(Strategy::Composite),
            "fuzzy" => Ok(Strategy::Fuzzy),
            other => Err(format!(
                "unknown strategy `{other}` (expected composite or fuzzy)"
            )),
        }
    }
}

#[derive(Debug, Error)]
pub enum GroundError {
    #[error("threshold {value} is outside [0, 1]")]
    InvalidThreshold { value: f64 },
    #[error("item `{id}` has no concepts to ground")]
    NoConcept { id: String },
    #[error("prediction/gold length mismatch: {predicted} vs {gold}")]
    LengthMismatch { predicted: usize, gold: usize },
}

/// Outcome for a single concept.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Resolution {
    Resolved {
        column: QualifiedColumn,
        confidence: f64,
    },
    /// Below threshold; `best` records the highest score seen.
    Unresolved { best: f64 },
}

impl Resolution {
    pub fn column(&self) -> Option<&QualifiedColumn> {
        match self {
            Resolution::Resolved { column, .. } => Some(column),
            Resolution::Unresolved { .. } => None,
        }
    }
}

/// One concept with its grounding outcome, in document order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConceptResolution {
    pub concept: String,
    #[serde(flatten)]
    pub resolution: Resolution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundStatus {
    FullyGrounded,
    PartiallyGrounded,
    Ungrounded,
}

/// A knowledge item together with its per-concept resolutions.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundedKnowledge {
    pub item: KnowledgeItem,
    pub resolutions: Vec<ConceptResolution>,
    pub status: GroundStatus,
}

impl GroundedKnowledge {
    /// Look up the resolution of a concept by its exact text.
    pub fn resolution_for(&self, concept: &str) -> Option<&Resolution> {
        self.resolutions
            .iter()
            .find(|r| r.concept == concept)
            .map(|r| &r.resolution)
    }

    /// The resolved (normalized concept, lowercase `table.column`) pairs.
    pub fn resolved_pairs(&self) -> BTreeSet<(String, String)> {
        self.resolutions
            .iter()
            .filter_map(|r| {
                r.resolution
                    .column()
                    .map(|c| (normalize(&r.concept), c.to_string().to_lowercase()))
            })
            .collect()
    }
}

/// Full similarity matrix: one row per concept (document order), one column
/// per qualified schema column (schema declaration order).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub concepts: Vec<String>,
    pub columns: Vec<QualifiedColumn>,
    pub scores: Vec<Vec<f64>>,
}

impl ScoreMatrix {
    pub fn get(&self, concept: &str, column: &QualifiedColumn) -> Option<f64> {
        let row = self.concepts.iter().position(|c| c == concept)?;
        let col = self.columns.iter().position(|c| c == column)?;
        Some(self.scores[row][col])
    }
}

/// Score every concept of `item` against every column of `schema`.
pub fn score_matrix(
    item: &KnowledgeItem,
    schema: &SchemaGraph,
    strategy: Strategy,
) -> Result<ScoreMatrix, GroundError> {
    let concepts = concepts_of(item);
    if concepts.is_empty() {
        return Err(GroundError::NoConcept {
            id: item.id.clone(),
        });
    }
    let columns = schema.qualified_columns();
    let scores = concepts
        .iter()
        .map(|concept| {
            columns
                .iter()
                .map(|col| strategy.score(concept, &col.column))
                .collect()
        })
        .collect();
    Ok(ScoreMatrix {
        concepts,
        columns,
        scores,
    })
}

/// Ground an item's concepts against a schema.
///
/// Per concept, the best-scoring column wins (ties go to the
/// lexicographically smallest qualified name) and is accepted iff its score
/// is at least `threshold`. The result never fails per concept — failures
/// are recorded as [`Resolution::Unresolved`] and summarized in the status.
pub fn ground(
    item: &KnowledgeItem,
    schema: &SchemaGraph,
    threshold: f64,
    strategy: Strategy,
) -> Result<GroundedKnowledge, GroundError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(GroundError::InvalidThreshold { value: threshold });
    }
    let matrix = score_matrix(item, schema, strategy)?;
    let mut resolutions = Vec::with_capacity(matrix.concepts.len());
    for (concept, row) in matrix.concepts.iter().zip(&matrix.scores) {
        let mut best: Option<(&QualifiedColumn, f64)> = None;
        for (column, &score) in matrix.columns.iter().zip(row) {
            let better = match best {
                None => true,
                Some((bc, bs)) => score > bs || (score == bs && column < bc),
            };
            if better {
                best = Some((column, score));
            }
        }
        let (column, score) = best.expect("schema validation guarantees at least one column");
        let resolution = if score >= threshold {
            Resolution::Resolved {
                column: column.clone(),
                confidence: score,
            }
        } else {
            Resolution::Unresolved { best: score }
        };
        resolutions.push(ConceptResolution {
            concept: concept.clone(),
            resolution,
        });
    }
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
    Ok(GroundedKnowledge {
        item: item.clone(),
        resolutions,
        status,
    })
}

/// Micro-averaged precision/recall/F1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Pool predicted and gold (concept, column) pairs across aligned items and
/// micro-average. With nothing predicted and nothing gold the score is
/// perfect by convention; with one side empty and the other not, zero.
pub fn grounding_prf(
    predicted: &[BTreeSet<(String, String)>],
    gold: &[BTreeSet<(String, String)>],
) -> Result<Prf, GroundError> {
    if predicted.len() != gold.len() {
        return Err(GroundError::LengthMismatch {
            predicted: predicted.len(),
            gold: gold.len(),
        });
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (pred, gold) in predicted.iter().zip(gold) {
        tp += pred.intersection(gold).count();
        fp += pred.difference(gold).count();
        fn_ += gold.difference(pred).count();
    }
    let precision = if tp + fp == 0 {
        if fn_ == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        if fp == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Prf {
        precision,
        recall,
        f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::parse_knowledge;

    fn estate_schema() -> SchemaGraph {
        SchemaGraph::from_json(
            r#"{"db_id": "estate", "tables": [
                {"name": "estate", "columns": [
                    {"name": "city", "type": "text"},
                    {"name": "population", "type": "number"},
                    {"name": "land_area", "type": "number"},
                    {"name": "price_to_income_ratio", "type": "number"},
                    {"name": "vacancy_rate", "type": "number"}
                ]}
            ]}"#,
        )
        .unwrap()
    }

    fn traffic_schema() -> SchemaGraph {
        SchemaGraph::from_json(
            r#"{"db_id": "transportation", "tables": [
                {"name": "transportation", "columns": [
                    {"name": "city", "type": "text"},
                    {"name": "num_cars", "type": "number"},
                    {"name": "parking_lot_area", "type": "number"}
                ]}
            ]}"#,
        )
        .unwrap()
    }

    fn density() -> KnowledgeItem {
        parse_knowledge("People Density = Population / Land Area")
            .unwrap()
            .with_id("d")
    }

    #[test]
    fn exact_and_separator_insensitive_names_ground_fully() {
        let grounded = ground(&density(), &estate_schema(), 0.6, Strategy::Composite).unwrap();
        assert_eq!(grounded.status, GroundStatus::FullyGrounded);
        let pop = grounded.resolution_for("Population").unwrap();
        assert_eq!(
            pop.column(),
            Some(&QualifiedColumn::new("estate", "population"))
        );
        match pop {
            Resolution::Resolved { confidence, .. } => assert_eq!(*confidence, 1.0),
            other => panic!("expected resolved, got {other:?}"),
        }
        // `Land Area` vs `land_area`: normalization makes them equal.
        let area = grounded.resolution_for("Land Area").unwrap();
        assert_eq!(
            area.column(),
            Some(&QualifiedColumn::new("estate", "land_area"))
        );
    }

    #[test]
    fn matrix_cell_for_paraphrased_concept_is_frozen() {
        let item = parse_knowledge("People Density = total number of People / Land Area")
            .unwrap()
            .with_id("d2");
        let matrix = score_matrix(&item, &estate_schema(), Strategy::Composite).unwrap();
        let cell = matrix
            .get(
                "total number of People",
                &QualifiedColumn::new("estate", "population"),
            )
            .unwrap();
        // No exact match, no shared tokens; bigram dice = 2/27 (see text.rs),
        // scaled by the 0.4 dice weight.
        let expected = 0.4 * (2.0 / 27.0);
        assert!((cell - expected).abs() < 1e-12, "{cell} vs {expected}");

        let grounded = ground(&item, &estate_schema(), 0.6, Strategy::Composite).unwrap();
        assert_eq!(grounded.status, GroundStatus::PartiallyGrounded);
        match grounded.resolution_for("total number of People").unwrap() {
            // `best` maximizes over all columns, so it is at least the
            // population cell but still far below threshold.
            Resolution::Unresolved { best } => {
                assert!(*best >= expected && *best < 0.6, "best = {best}")
            }
            other => panic!("expected unresolved, got {other:?}"),
        }
    }

    #[test]
    fn fuzzy_accepts_abbreviations_composite_rejects() {
        let item = parse_knowledge("Car Density = number of cars / parking lot area")
            .unwrap()
            .with_id("cd");
        let schema = traffic_schema();
        let composite = ground(&item, &schema, 0.6, Strategy::Composite).unwrap();
        assert_eq!(composite.status, GroundStatus::PartiallyGrounded);
        assert!(matches!(
            composite.resolution_for("number of cars").unwrap(),
            Resolution::Unresolved { .. }
        ));

        let fuzzy = ground(&item, &schema, 0.6, Strategy::Fuzzy).unwrap();
        assert_eq!(fuzzy.status, GroundStatus::FullyGrounded);
        match fuzzy.resolution_for("number of cars").unwrap() {
            Resolution::Resolved { column, confidence } => {
                assert_eq!(column, &QualifiedColumn::new("transportation", "num_cars"));
                // Best n-gram is `of cars` at edit distance 3 from `num cars`.
                assert!((confidence - 0.625).abs() < 1e-12);
            }
            other => panic!("expected resolved, got {other:?}"),
        }
    }

    #[test]
    fn threshold_must_be_a_probability() {
        let item = density();
        let schema = estate_schema();
        for bad in [-0.1, 1.0001, f64::NAN] {
            assert!(matches!(
                ground(&item, &schema, bad, Strategy::Composite),
                Err(GroundError::InvalidThreshold { .. })
            ));
        }
        for ok in [0.0, 0.5, 1.0] {
            assert!(ground(&item, &schema, ok, Strategy::Composite).is_ok());
        }
    }

    #[test]
    fn constant_formulas_have_nothing_to_ground() {
        let item = parse_knowledge("X = 5").unwrap().with_id("c");
        assert!(matches!(
            ground(&item, &estate_schema(), 0.6, Strategy::Composite),
            Err(GroundError::NoConcept { .. })
        ));
    }

    #[test]
    fn at_threshold_zero_everything_resolves() {
        let item = parse_knowledge("Weird = alpha beta gamma / delta")
            .unwrap()
            .with_id("w");
        let grounded = ground(&item, &estate_schema(), 0.0, Strategy::Composite).unwrap();
        assert_eq!(grounded.status, GroundStatus::FullyGrounded);
    }

    #[test]
    fn fully_unrelated_item_is_ungrounded() {
        let item = parse_knowledge("Weird = alpha beta gamma / delta epsilon")
            .unwrap()
            .with_id("w");
        let grounded = ground(&item, &estate_schema(), 0.6, Strategy::Composite).unwrap();
        assert_eq!(grounded.status, GroundStatus::Ungrounded);
        assert!(grounded.resolved_pairs().is_empty());
    }

    #[test]
    fn ties_pick_the_lexicographically_smallest_column() {
        let schema = SchemaGraph::from_json(
            r#"{"db_id": "two", "tables": [
                {"name": "zeta", "columns": [{"name": "population", "type": "number"}]},
                {"name": "alpha", "columns": [{"name": "population", "type": "number"}]}
            ]}"#,
        )
        .unwrap();
        let item = parse_knowledge("Head Count = Population / 2")
            .unwrap()
            .with_id("h");
        let grounded = ground(&item, &schema, 0.6, Strategy::Composite).unwrap();
        assert_eq!(
            grounded.resolution_for("Population").unwrap().column(),
            Some(&QualifiedColumn::new("alpha", "population"))
        );
    }

    #[test]
    fn resolved_pairs_normalize_concept_and_column() {
        let grounded = ground(&density(), &estate_schema(), 0.6, Strategy::Composite).unwrap();
        let pairs = grounded.resolved_pairs();
        assert!(pairs.contains(&("population".to_string(), "estate.population".to_string())));
        assert!(pairs.contains(&("land area".to_string(), "estate.land_area".to_string())));
    }

    #[test]
    fn prf_conventions() {
        let pair = |c: &str, col: &str| (c.to_string(), col.to_string());
        let gold: Vec<BTreeSet<(String, String)>> = vec![
            [pair("population", "estate.population")]
                .into_iter()
                .collect(),
            [
                pair("land area", "estate.land_area"),
                pair("city", "estate.city"),
            ]
            .into_iter()
            .collect(),
        ];
        // Gold as its own prediction is perfect.
        let perfect = grounding_prf(&gold, &gold).unwrap();
        assert_eq!(
            (perfect.precision, perfect.recall, perfect.f1),
            (1.0, 1.0, 1.0)
        );

        // Both sides empty: perfect by convention.
        let empty: Vec<BTreeSet<(String, String)>> = vec![BTreeSet::new()];
        let p = grounding_prf(&empty, &empty).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));

        // Nothing predicted against non-empty gold: all zero.
        let none: Vec<BTreeSet<(String, String)>> = vec![BTreeSet::new(), BTreeSet::new()];
        let p = grounding_prf(&none, &gold).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (0.0, 0.0, 0.0));

        // One of two pairs correct on the second item, a spurious extra on the first.
        let mixed: Vec<BTreeSet<(String, String)>> = vec![
            [pair("population", "estate.city")].into_iter().collect(),
            [pair("land area", "estate.land_area")]
                .into_iter()
                .collect(),
        ];
        let p = grounding_prf(&mixed, &gold).unwrap();
        assert!((p.precision - 0.5).abs() < 1e-12);
        assert!((p.recall - 1.0 / 3.0).abs() < 1e-12);
        assert!((p.f1 - 0.4).abs() < 1e-12);

        assert!(matches!(
            grounding_prf(&none, &gold[..1]),
            Err(GroundError::LengthMismatch { .. })
        ));
    }

    mod prop_tests {
        use super::Strategy as Sim;
        use super::*;
        use proptest::prelude::*;
        use proptest::strategy::Strategy;

        fn item_strategy() -> impl Strategy<Value = KnowledgeItem> {
            proptest::collection::vec("[a-f]{2,8}( [a-f]{2,8}){0,2}", 2..4).prop_map(|phrases| {
                let body = phrases.join(" + ");
                parse_knowledge(&format!("Thing = {body}"))
                    .unwrap()
                    .with_id("p")
            })
        }

        fn schema_strategy() -> impl Strategy<Value = SchemaGraph> {
            proptest::collection::btree_set("[a-f]{2,8}(_[a-f]{2,8})?", 1..6).prop_map(|cols| {
                let columns: Vec<String> = cols
                    .into_iter()
                    .map(|c| format!(r#"{{"name": "{c}", "type": "number"}}"#))
                    .collect();
                SchemaGraph::from_json(&format!(
                    r#"{{"db_id": "p", "tables": [{{"name": "t", "columns": [{}]}}]}}"#,
                    columns.join(",")
                ))
                .unwrap()
            })
        }

        proptest! {
            /// Raising the threshold can only shrink the resolved set.
            #[test]
            fn resolved_sets_are_nested_in_threshold(
                item in item_strategy(),
                schema in schema_strategy(),
                mut thresholds in proptest::collection::vec(0.0f64..=1.0, 2),
            ) {
                thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let low = ground(&item, &schema, thresholds[0], Sim::Composite).unwrap();
                let high = ground(&item, &schema, thresholds[1], Sim::Composite).unwrap();
                let low_pairs = low.resolved_pairs();
                for pair in high.resolved_pairs() {
                    prop_assert!(low_pairs.contains(&pair));
                }
            }

            /// A column whose normalized name equals the concept always wins
            /// with confidence 1.0, under either strategy.
            #[test]
            fn exact_match_dominates(
                schema in schema_strategy(),
                strategy in prop_oneof![Just(Sim::Composite), Just(Sim::Fuzzy)],
            ) {
                let column = schema.tables[0].columns[0].name.clone();
                let concept = column.replace('_', " ");
                let item = parse_knowledge(&format!("Thing = {concept} + 1")).unwrap().with_id("p");
                let grounded = ground(&item, &schema, 1.0, strategy).unwrap();
                match grounded.resolution_for(&concept).unwrap() {
                    Resolution::Resolved { confidence, column: got } => {
                        prop_assert_eq!(*confidence, 1.0);
                        prop_assert_eq!(&got.column, &column);
                    }
                    other => {
                        prop_assert!(false, "expected resolved, got {:?}", other);
                    }
                }
            }

            /// Reordering schema tables or columns never changes the outcome.
            #[test]
            fn grounding_is_schema_order_invariant(
                item in item_strategy(),
                schema in schema_strategy(),
            ) {
                let mut reversed = schema.clone();
                reversed.tables.reverse();
                for table in &mut reversed.tables {
                    table.columns.reverse();
                }
                let a = ground(&item, &schema, 0.3, Sim::Composite).unwrap();
                let b = ground(&item, &reversed, 0.3, Sim::Composite).unwrap();
                prop_assert_eq!(a.resolutions, b.resolutions);
                prop_assert_eq!(a.status, b.status);
            }
        }
    }
}
