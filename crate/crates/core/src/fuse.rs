//! Question parsing and knowledge fusion.
//!
//! This is the deterministic "parser" stage of the pipeline: a controlled
//! question grammar yields a [`QuestionFrame`], and [`fuse`] turns the frame
//! plus a ranked list of grounded knowledge into a SQL query, substituting
//! each formula at its proper position — calculation bodies as `SELECT`
//! arithmetic, union bodies as `IN` lists or `UNION` chains, condition
//! bodies as `WHERE` conjuncts.
//!
//! ## Question grammar
//!
//! Case-insensitive; articles optional; a trailing `?`/`.`/`!` is ignored.
//!
//! * `what is the <target> [of <Entity>]` — lookup. The entity part (after
//!   the last ` of `) is recognized only when it is quoted or capitalized;
//!   `what is the number of cars` keeps the whole phrase as its target.
//! * `list <column> where <predicate>` — filter.
//! * `<avg|total|max|min> <target> [by <column>]` — aggregate, optionally
//!   grouped. Synonyms: average/avg/mean, total/sum, maximum/max/highest/
//!   largest, minimum/min/lowest/smallest.
//! * `how many <rows> where <predicate>` — `COUNT(*)` over a predicate; the
//!   counted noun is not interpreted.
//!
//! Predicate phrases are either a direct comparison (`<column phrase> is
//! <value>`, `<column phrase> > <number>`, and friends) or a bare phrase
//! resolved against condition/union knowledge.
//!
//! ## Resolution priority
//!
//! A select-position target resolves in this order: (1) a schema column
//! whose name matches with composite similarity ≥ H; (2) the highest-ranked
//! grounded knowledge item whose name matches with similarity ≥ H and whose
//! body is usable at that position; (3) [`FuseError::TargetUnresolved`].
//! Calculations require full grounding; unions and conditions drop
//! unresolved members/predicates as long as at least one survives. A union
//! in predicate position never needs grounding at all: its members are used
//! as literal values of a context text column.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::ground::{GroundStatus, GroundedKnowledge};
use crate::knowledge::{ArithOp, CmpOp, ConceptExpr, FuncName, KnowledgeBody, PredRhs};
use crate::schema::{ColumnType, QualifiedColumn, SchemaGraph};
use crate::sql::{
    AggFn, Atom, ColumnRef, FromClause, Operand, OrGroup, SelectItem, SetOpKind, SqlBinOp, SqlExpr,
    SqlFunc, SqlQuery,
};
use crate::text::{composite_similarity, normalize};

/// What the question asks for.
#[derive(Debug, Clone, PartialEq)]
pub enum Intent {
    /// `what is the <target> …` — project the target.
    Lookup,
    /// `<agg> <target>` — aggregate the target; `Count` instead counts rows
    /// satisfying the target-as-predicate.
    Aggregate(AggFn),
    /// `list <projection> where <target>` — project a column, filter rows.
    Filter { projection: String },
    /// `<agg> <target> by <group>` — aggregate per group.
    AggregateBy(AggFn, String),
}

/// The deterministic parse of a question.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionFrame {
    pub intent: Intent,
    /// The phrase to resolve (a column, a formula name, or a predicate).
    pub target: String,
    /// `(column hint, literal)` pairs that become equality predicates.
    pub entity_filters: Vec<(String, String)>,
    /// The original question text.
    pub source: String,
}

/// Everything fusion needs: the frame, the schema, and grounded knowledge
/// ordered by retrieval rank.
#[derive(Debug, Clone)]
pub struct FusionInput<'a> {
    pub frame: &'a QuestionFrame,
    pub schema: &'a SchemaGraph,
    pub grounded: &'a [GroundedKnowledge],
}

#[derive(Debug, Error)]
pub enum FuseError {
    #[error(
        "cannot parse question `{text}`; accepted patterns: \
         \"what is the <target> [of <Entity>]\", \"list <column> where <predicate>\", \
         \"<avg|total|max|min> <target> [by <column>]\", \"how many <rows> where <predicate>\""
    )]
    UnparseableQuestion { text: String },
    #[error("target phrase `{phrase}` matched neither a column nor a usable knowledge item")]
    TargetUnresolved { phrase: String },
    #[error("knowledge item `{id}` matched the target but is not fully grounded")]
    PartialKnowledge { id: String },
    #[error("no join path connects table `{table}` to the rest of the query")]
    JoinPath { table: String },
}

/// How the target was resolved, for traces and error attribution.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FuseTrace {
    /// Id of the knowledge item fused into the query, when one was used.
    pub chosen_item: Option<String>,
    /// `table.column` chosen by the direct-column route, when it won.
    pub direct_column: Option<String>,
}

// ---------------------------------------------------------------------------
// Question parsing
// ---------------------------------------------------------------------------

fn strip_prefix_ci<'a>(s: &'a str, prefix: &str) -> Option<&'a str> {
    let head = s.get(..prefix.len())?;
    head.eq_ignore_ascii_case(prefix)
        .then(|| &s[prefix.len()..])
}

fn strip_article(s: &str) -> &str {
    let s = s.trim();
    for article in ["the ", "an ", "a "] {
        if let Some(rest) = strip_prefix_ci(s, article) {
            return rest.trim_start();
        }
    }
    s
}

/// Find the last case-insensitive occurrence of `needle` in `s`.
fn rfind_ci(s: &str, needle: &str) -> Option<usize> {
    s.to_ascii_lowercase().rfind(&needle.to_ascii_lowercase())
}

fn find_ci(s: &str, needle: &str) -> Option<usize> {
    s.to_ascii_lowercase().find(&needle.to_ascii_lowercase())
}

/// Entity values are quoted phrases or capitalized names; lowercase phrases
/// (`… of cars`) stay part of the target.
fn looks_like_entity(s: &str) -> bool {
    let s = s.trim();
    if s.starts_with('\'') || s.starts_with('"') {
        return true;
    }
    s.chars()
        .find(|c| c.is_alphabetic())
        .is_some_and(|c| c.is_uppercase())
}

fn unquote(s: &str) -> &str {
    let s = s.trim();
    for quote in ['\'', '"'] {
        if s.len() >= 2 && s.starts_with(quote) && s.ends_with(quote) {
            return &s[1..s.len() - 1];
        }
    }
    s
}

fn aggregate_word(word: &str) -> Option<AggFn> {
    match word {
        "average" | "avg" | "mean" => Some(AggFn::Avg),
        "total" | "sum" => Some(AggFn::Sum),
        "maximum" | "max" | "highest" | "largest" => Some(AggFn::Max),
        "minimum" | "min" | "lowest" | "smallest" => Some(AggFn::Min),
        _ => None,
    }
}

/// Parse a question in the controlled grammar into a frame.
///
/// The schema supplies the entity-filter column hint: entities filter on the
/// database's first text column by convention, refined at fusion time to the
/// best-matching text column of the tables actually used.
pub fn parse_question(text: &str, schema: &SchemaGraph) -> Result<QuestionFrame, FuseError> {
    let trimmed = text.trim().trim_end_matches(['?', '.', '!']).trim_end();
    let unparseable = || FuseError::UnparseableQuestion {
        text: text.trim().to_string(),
    };
    let frame = |intent, target: &str, filters| {
        let target = strip_article(target).to_string();
        if target.is_empty() {
            Err(unparseable())
        } else {
            Ok(QuestionFrame {
                intent,
                target,
                entity_filters: filters,
                source: text.trim().to_string(),
            })
        }
    };

    // what is / what's / what are <target> [of <Entity>]
    for prefix in ["what is ", "what's ", "what are "] {
        if let Some(rest) = strip_prefix_ci(trimmed, prefix) {
            let rest = strip_article(rest);
            if let Some(pos) = rfind_ci(rest, " of ") {
                let (head, tail) = (rest[..pos].trim(), rest[pos + 4..].trim());
                if !head.is_empty() && looks_like_entity(tail) {
                    let mut filters = Vec::new();
                    if let Some(col) = schema.first_text_column() {
                        filters.push((col.column, unquote(tail).to_string()));
                    }
                    return frame(Intent::Lookup, head, filters);
                }
            }
            return frame(Intent::Lookup, rest, Vec::new());
        }
    }

    // list/show [all] <projection> where <predicate>
    for prefix in ["list ", "show "] {
        if let Some(rest) = strip_prefix_ci(trimmed, prefix) {
            let rest = strip_prefix_ci(rest.trim_start(), "all ")
                .unwrap_or(rest)
                .trim_start();
            let rest = strip_article(rest);
            let pos = find_ci(rest, " where ").ok_or_else(unparseable)?;
            let projection = strip_article(rest[..pos].trim()).to_string();
            if projection.is_empty() {
                return Err(unparseable());
            }
            return frame(
                Intent::Filter { projection },
                rest[pos + 7..].trim(),
                Vec::new(),
            );
        }
    }

    // how many <rows> where <predicate>
    if let Some(rest) = strip_prefix_ci(trimmed, "how many ") {
        let pos = find_ci(rest, " where ").ok_or_else(unparseable)?;
        return frame(
            Intent::Aggregate(AggFn::Count),
            rest[pos + 7..].trim(),
            Vec::new(),
        );
    }

    // <agg word> <target> [by <group>]
    let first_word = trimmed.split_whitespace().next().unwrap_or("");
    if let Some(agg) = aggregate_word(&first_word.to_ascii_lowercase()) {
        let rest = strip_article(trimmed[first_word.len()..].trim_start());
        if let Some(pos) = rfind_ci(rest, " by ") {
            let target = rest[..pos].trim();
            let group = strip_article(rest[pos + 4..].trim()).to_string();
            if !target.is_empty() && !group.is_empty() {
                return frame(Intent::AggregateBy(agg, group), target, Vec::new());
            }
        }
        return frame(Intent::Aggregate(agg), rest, Vec::new());
    }

    Err(unparseable())
}

// ---------------------------------------------------------------------------
// Fusion
// ---------------------------------------------------------------------------

/// The best schema column whose name matches `phrase` with similarity ≥
/// `threshold`; ties break toward the lexicographically smaller column.
fn direct_column(phrase: &str, schema: &SchemaGraph, threshold: f64) -> Option<QualifiedColumn> {
    let mut best: Option<(f64, QualifiedColumn)> = None;
    for qc in schema.qualified_columns() {
        let score = composite_similarity(phrase, &qc.column);
        if score < threshold {
            continue;
        }
        let better = match &best {
            None => true,
            Some((bs, bc)) => score > *bs || (score == *bs && qc < *bc),
        };
        if better {
            best = Some((score, qc));
        }
    }
    best.map(|(_, qc)| qc)
}

fn sql_func(name: FuncName) -> SqlFunc {
    match name {
        FuncName::Now => SqlFunc::Now,
        FuncName::Year => SqlFunc::Year,
        FuncName::Abs => SqlFunc::Abs,
    }
}

fn sql_bin_op(op: ArithOp) -> SqlBinOp {
    match op {
        ArithOp::Add => SqlBinOp::Add,
        ArithOp::Sub => SqlBinOp::Sub,
        ArithOp::Mul => SqlBinOp::Mul,
        ArithOp::Div => SqlBinOp::Div,
    }
}

/// The resolved column for `concept`, matching resolutions by normalized
/// concept text.
fn resolved_column(grounded: &GroundedKnowledge, concept: &str) -> Option<QualifiedColumn> {
    let wanted = normalize(concept);
    grounded
        .resolutions
        .iter()
        .find(|r| normalize(&r.concept) == wanted)
        .and_then(|r| r.resolution.column().cloned())
}

/// Translate a concept expression node for node, substituting resolved
/// columns for concepts and changing nothing else. `None` when any concept
/// in the expression is unresolved.
fn translate_expr(expr: &ConceptExpr, grounded: &GroundedKnowledge) -> Option<SqlExpr> {
    match expr {
        ConceptExpr::Concept(c) => {
            resolved_column(grounded, c).map(|qc| SqlExpr::Column(ColumnRef::from(&qc)))
        }
        ConceptExpr::Number(n) => Some(SqlExpr::Number(*n)),
        ConceptExpr::Func { name, args } => {
            let args = args
                .iter()
                .map(|a| translate_expr(a, grounded))
                .collect::<Option<_>>()?;
            Some(SqlExpr::Func {
                func: sql_func(*name),
                args,
            })
        }
        ConceptExpr::Binary { op, left, right } => Some(SqlExpr::binary(
            sql_bin_op(*op),
            translate_expr(left, grounded)?,
            translate_expr(right, grounded)?,
        )),
    }
}

fn translate_rhs(rhs: &PredRhs, grounded: &GroundedKnowledge) -> Option<SqlExpr> {
    match rhs {
        PredRhs::Number(n) => Some(SqlExpr::Number(*n)),
        PredRhs::Str(s) => Some(SqlExpr::Str(s.clone())),
        PredRhs::Func { name, args } => {
            let args = args
                .iter()
                .map(|a| translate_expr(a, grounded))
                .collect::<Option<_>>()?;
            Some(SqlExpr::Func {
                func: sql_func(*name),
                args,
            })
        }
    }
}

fn cmp_atom(left: SqlExpr, op: CmpOp, right: SqlExpr) -> Atom {
    Atom::Cmp {
        left: Operand::Expr(left),
        op,
        right: Operand::Expr(right),
    }
}

/// Recognize `<column phrase> <op> <value>` predicate phrases. `None` when
/// no operator appears or the column phrase does not clear the threshold.
fn direct_predicate(phrase: &str, schema: &SchemaGraph, threshold: f64) -> Option<Vec<OrGroup>> {
    const OPS: [(&str, CmpOp); 16] = [
        (" at least ", CmpOp::Ge),
        (" at most ", CmpOp::Le),
        (" greater than ", CmpOp::Gt),
        (" less than ", CmpOp::Lt),
        (" above ", CmpOp::Gt),
        (" over ", CmpOp::Gt),
        (" below ", CmpOp::Lt),
        (" under ", CmpOp::Lt),
        (" >= ", CmpOp::Ge),
        (" <= ", CmpOp::Le),
        (" != ", CmpOp::Ne),
        (" > ", CmpOp::Gt),
        (" < ", CmpOp::Lt),
        (" is not ", CmpOp::Ne),
        (" equals ", CmpOp::Eq),
        (" is ", CmpOp::Eq),
    ];
    let (pos, width, op) = OPS
        .iter()
        .find_map(|(word, op)| find_ci(phrase, word).map(|p| (p, word.len(), *op)))?;
    let mut lhs = phrase[..pos].trim();
    for tail in [" is", " are", " was", " were"] {
        if let Some(stripped) = lhs.strip_suffix(tail) {
            lhs = stripped.trim_end();
        }
    }
    let column = direct_column(strip_article(lhs), schema, threshold)?;
    let value = unquote(phrase[pos + width..].trim());
    let rhs = match value.parse::<f64>() {
        Ok(n) if n.is_finite() => SqlExpr::Number(n),
        _ => SqlExpr::Str(value.to_string()),
    };
    Some(vec![vec![cmp_atom(
        SqlExpr::Column(ColumnRef::from(&column)),
        op,
        rhs,
    )]])
}

/// A resolved select-position target.
enum SelectTarget {
    Column(QualifiedColumn),
    Expr {
        id: String,
        expr: SqlExpr,
    },
    Union {
        id: String,
        columns: Vec<QualifiedColumn>,
    },
}

/// Resolve a select-position target: direct column first, then grounded
/// knowledge in retrieval-rank order.
fn resolve_select_target(
    input: &FusionInput,
    threshold: f64,
    allow_union: bool,
) -> Result<SelectTarget, FuseError> {
    let target = &input.frame.target;
    if let Some(column) = direct_column(target, input.schema, threshold) {
        return Ok(SelectTarget::Column(column));
    }
    let mut partial: Option<&GroundedKnowledge> = None;
    for g in input.grounded {
        if composite_similarity(target, &g.item.name) < threshold {
            continue;
        }
        match &g.item.body {
            KnowledgeBody::Calculation(expr) => {
                if g.status == GroundStatus::FullyGrounded {
                    if let Some(sql) = translate_expr(expr, g) {
                        return Ok(SelectTarget::Expr {
                            id: g.item.id.clone(),
                            expr: sql,
                        });
                    }
                }
                partial.get_or_insert(g);
            }
            KnowledgeBody::Union(members) if allow_union => {
                let columns: Vec<QualifiedColumn> = members
                    .iter()
                    .filter_map(|m| resolved_column(g, m))
                    .collect();
                if !columns.is_empty() {
                    return Ok(SelectTarget::Union {
                        id: g.item.id.clone(),
                        columns,
                    });
                }
            }
            _ => {}
        }
    }
    match partial {
        Some(p) => Err(FuseError::PartialKnowledge {
            id: p.item.id.clone(),
        }),
        None => Err(FuseError::TargetUnresolved {
            phrase: target.clone(),
        }),
    }
}

/// Resolve a predicate-position target into WHERE groups: a direct
/// comparison phrase, a condition item's surviving conjuncts, or a union
/// item as a value `IN` list on a context text column.
fn resolve_predicates(
    input: &FusionInput,
    threshold: f64,
    context_tables: &[String],
) -> Result<(Vec<OrGroup>, Option<String>), FuseError> {
    let target = &input.frame.target;
    if let Some(groups) = direct_predicate(target, input.schema, threshold) {
        return Ok((groups, None));
    }
    for g in input.grounded {
        if composite_similarity(target, &g.item.name) < threshold {
            continue;
        }
        match &g.item.body {
            KnowledgeBody::Condition(predicates) => {
                let groups: Vec<OrGroup> = predicates
                    .iter()
                    .filter_map(|p| {
                        let lhs = translate_expr(&p.lhs, g)?;
                        let rhs = translate_rhs(&p.rhs, g)?;
                        Some(vec![cmp_atom(lhs, p.op, rhs)])
                    })
                    .collect();
                if !groups.is_empty() {
                    return Ok((groups, Some(g.item.id.clone())));
                }
            }
            KnowledgeBody::Union(members) => {
                // Members become literal values of a context column: the
                // column matching the union's own name when that clears the
                // threshold, else the first text column in context, else the
                // database's first text column.
                let column = direct_column(&g.item.name, input.schema, threshold)
                    .or_else(|| first_text_column_in(input.schema, context_tables))
                    .or_else(|| input.schema.first_text_column());
                let Some(column) = column else { continue };
                let values = members.iter().map(|m| SqlExpr::Str(m.clone())).collect();
                let atom = Atom::InList {
                    expr: SqlExpr::Column(ColumnRef::from(&column)),
                    values,
                };
                return Ok((vec![vec![atom]], Some(g.item.id.clone())));
            }
            KnowledgeBody::Calculation(_) => {}
        }
    }
    Err(FuseError::TargetUnresolved {
        phrase: target.clone(),
    })
}

fn first_text_column_in(schema: &SchemaGraph, tables: &[String]) -> Option<QualifiedColumn> {
    for name in tables {
        if let Some(table) = schema.table(name) {
            if let Some(col) = table
                .columns
                .iter()
                .find(|c| c.col_type == ColumnType::Text)
            {
                return Some(QualifiedColumn::new(&table.name, &col.name));
            }
        }
    }
    None
}

/// The best-matching text column for an entity hint, preferring columns of
/// tables the query already references.
fn entity_column(
    hint: &str,
    schema: &SchemaGraph,
    preferred: &BTreeSet<String>,
) -> Option<QualifiedColumn> {
    let mut best: Option<(f64, bool, QualifiedColumn)> = None;
    for table in &schema.tables {
        for column in &table.columns {
            if column.col_type != ColumnType::Text {
                continue;
            }
            let qc = QualifiedColumn::new(&table.name, &column.name);
            let score = composite_similarity(hint, &column.name);
            let in_preferred = preferred.contains(&table.name);
            let better = match &best {
                None => true,
                Some((bs, bp, bc)) => {
                    score > *bs
                        || (score == *bs && in_preferred && !bp)
                        || (score == *bs && in_preferred == *bp && qc < *bc)
                }
            };
            if better {
                best = Some((score, in_preferred, qc));
            }
        }
    }
    best.map(|(_, _, qc)| qc)
}

fn collect_tables_from_expr(expr: &SqlExpr, tables: &mut BTreeSet<String>) {
    match expr {
        SqlExpr::Column(cr) => {
            if let Some(t) = &cr.table {
                tables.insert(t.clone());
            }
        }
        SqlExpr::Binary { left, right, .. } => {
            collect_tables_from_expr(left, tables);
            collect_tables_from_expr(right, tables);
        }
        SqlExpr::Func { args, .. } => {
            for arg in args {
                collect_tables_from_expr(arg, tables);
            }
        }
        SqlExpr::Number(_) | SqlExpr::Str(_) | SqlExpr::Star => {}
    }
}

fn referenced_tables(
    select: &[SelectItem],
    where_: &[OrGroup],
    group_by: &[ColumnRef],
) -> BTreeSet<String> {
    let mut tables = BTreeSet::new();
    for item in select {
        collect_tables_from_expr(&item.expr, &mut tables);
    }
    for group in where_ {
        for atom in group {
            match atom {
                Atom::Cmp { left, right, .. } => {
                    for operand in [left, right] {
                        if let Operand::Expr(e) = operand {
                            collect_tables_from_expr(e, &mut tables);
                        }
                    }
                }
                Atom::InList { expr, values } => {
                    collect_tables_from_expr(expr, &mut tables);
                    for value in values {
                        collect_tables_from_expr(value, &mut tables);
                    }
                }
                Atom::InQuery { expr, .. } => collect_tables_from_expr(expr, &mut tables),
            }
        }
    }
    for cr in group_by {
        if let Some(t) = &cr.table {
            tables.insert(t.clone());
        }
    }
    tables
}

fn is_key(schema: &SchemaGraph, table: &str, column: &str) -> bool {
    schema
        .table(table)
        .is_some_and(|t| t.keys.iter().any(|k| k == column))
}

/// Column names present in both tables, sorted.
fn shared_columns(schema: &SchemaGraph, a: &str, b: &str) -> Vec<String> {
    let (Some(ta), Some(tb)) = (schema.table(a), schema.table(b)) else {
        return Vec::new();
    };
    let names: BTreeSet<&str> = ta.columns.iter().map(|c| c.name.as_str()).collect();
    tb.columns
        .iter()
        .map(|c| c.name.as_str())
        .filter(|n| names.contains(n))
        .map(str::to_string)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Connect every referenced table through same-named columns, preferring
/// declared key columns, building a deterministic spanning tree.
fn infer_joins(
    schema: &SchemaGraph,
    tables: &[String],
) -> Result<Vec<crate::sql::JoinCond>, FuseError> {
    if tables.len() <= 1 {
        return Ok(Vec::new());
    }
    let mut connected: BTreeSet<&String> = BTreeSet::from([&tables[0]]);
    let mut remaining: BTreeSet<&String> = tables[1..].iter().collect();
    let mut joins = Vec::new();
    while !remaining.is_empty() {
        // Candidate ranking: declared keys first, then column name, then the
        // joining pair of tables — all lexicographic (minimize the tuple).
        let mut best: Option<(bool, String, &String, &String)> = None;
        for new in &remaining {
            for old in &connected {
                for column in shared_columns(schema, old, new) {
                    let keyed = is_key(schema, old, &column) || is_key(schema, new, &column);
                    let candidate = (!keyed, column, *new, *old);
                    if best.as_ref().is_none_or(|b| candidate < *b) {
                        best = Some(candidate);
                    }
                }
            }
        }
        match best {
            Some((_, column, new, old)) => {
                joins.push(crate::sql::JoinCond::new(
                    QualifiedColumn::new(old, &column),
                    QualifiedColumn::new(new, &column),
                ));
                remaining.remove(new);
                connected.insert(new);
            }
            None => {
                let stranded = remaining.iter().next().expect("non-empty").to_string();
                return Err(FuseError::JoinPath { table: stranded });
            }
        }
    }
    Ok(joins)
}

/// Build the final query from resolved parts, inferring FROM and joins.
fn assemble(
    schema: &SchemaGraph,
    select: Vec<SelectItem>,
    where_: Vec<OrGroup>,
    group_by: Vec<ColumnRef>,
    target: &str,
) -> Result<SqlQuery, FuseError> {
    let tables: Vec<String> = referenced_tables(&select, &where_, &group_by)
        .into_iter()
        .collect();
    if tables.is_empty() {
        // Nothing anchors the query to a table (e.g. a constant-only
        // formula with no filters); there is no FROM clause to emit.
        return Err(FuseError::TargetUnresolved {
            phrase: target.to_string(),
        });
    }
    let joins = infer_joins(schema, &tables)?;
    let mut query = SqlQuery::new();
    query.select = select;
    query.from = FromClause { tables, joins };
    query.where_ = where_;
    query.group_by = group_by;
    Ok(query)
}

/// Turn entity filters into equality atoms against the best text columns.
fn entity_atoms(input: &FusionInput, preferred: &BTreeSet<String>) -> Vec<OrGroup> {
    input
        .frame
        .entity_filters
        .iter()
        .filter_map(|(hint, literal)| {
            entity_column(hint, input.schema, preferred).map(|qc| {
                vec![cmp_atom(
                    SqlExpr::Column(ColumnRef::from(&qc)),
                    CmpOp::Eq,
                    SqlExpr::Str(literal.clone()),
                )]
            })
        })
        .collect()
}

fn fuse_select_position(
    input: &FusionInput,
    threshold: f64,
    agg: Option<AggFn>,
    group: Option<QualifiedColumn>,
) -> Result<(SqlQuery, FuseTrace), FuseError> {
    let allow_union = agg.is_none() && group.is_none();
    let resolved = resolve_select_target(input, threshold, allow_union)?;
    let mut trace = FuseTrace::default();

    let expr = match resolved {
        SelectTarget::Column(qc) => {
            trace.direct_column = Some(qc.to_string());
            SqlExpr::Column(ColumnRef::from(&qc))
        }
        SelectTarget::Expr { id, expr } => {
            trace.chosen_item = Some(id);
            expr
        }
        SelectTarget::Union { id, columns } => {
            trace.chosen_item = Some(id);
            // One SELECT per member column, chained with UNION.
            let mut members = Vec::new();
            for qc in columns {
                let item = SelectItem::plain(SqlExpr::Column(ColumnRef::from(&qc)));
                let preferred = BTreeSet::from([qc.table.clone()]);
                let where_ = entity_atoms(input, &preferred);
                members.push(assemble(
                    input.schema,
                    vec![item],
                    where_,
                    Vec::new(),
                    &input.frame.target,
                )?);
            }
            let mut head = members.remove(0);
            head.set_ops = members.into_iter().map(|m| (SetOpKind::Union, m)).collect();
            return Ok((head, trace));
        }
    };

    let mut select = Vec::new();
    let mut group_by = Vec::new();
    if let Some(qc) = &group {
        select.push(SelectItem::plain(SqlExpr::Column(ColumnRef::from(qc))));
        group_by.push(ColumnRef::from(qc));
    }
    select.push(match agg {
        Some(f) => SelectItem {
            expr,
            aggregate: Some(f),
            distinct: false,
        },
        None => SelectItem::plain(expr),
    });

    let mut preferred = referenced_tables(&select, &[], &group_by);
    if preferred.is_empty() {
        preferred = input.schema.tables.iter().map(|t| t.name.clone()).collect();
    }
    let where_ = entity_atoms(input, &preferred);
    let query = assemble(input.schema, select, where_, group_by, &input.frame.target)?;
    Ok((query, trace))
}

fn fuse_count(input: &FusionInput, threshold: f64) -> Result<(SqlQuery, FuseTrace), FuseError> {
    let (where_, chosen) = resolve_predicates(input, threshold, &[])?;
    let select = vec![SelectItem {
        expr: SqlExpr::Star,
        aggregate: Some(AggFn::Count),
        distinct: false,
    }];
    let query = assemble(
        input.schema,
        select,
        where_,
        Vec::new(),
        &input.frame.target,
    )?;
    Ok((
        query,
        FuseTrace {
            chosen_item: chosen,
            direct_column: None,
        },
    ))
}

fn fuse_filter(
    input: &FusionInput,
    threshold: f64,
    projection: QualifiedColumn,
) -> Result<(SqlQuery, FuseTrace), FuseError> {
    let context = vec![projection.table.clone()];
    let (mut where_, chosen) = resolve_predicates(input, threshold, &context)?;
    let select = vec![SelectItem::plain(SqlExpr::Column(ColumnRef::from(
        &projection,
    )))];
    let preferred = referenced_tables(&select, &where_, &[]);
    where_.extend(entity_atoms(input, &preferred));
    let query = assemble(
        input.schema,
        select,
        where_,
        Vec::new(),
        &input.frame.target,
    )?;
    Ok((
        query,
        FuseTrace {
            chosen_item: chosen,
            direct_column: None,
        },
    ))
}

/// Fuse a frame with grounded knowledge into a SQL query. See the module
/// documentation for the resolution priority.
pub fn fuse(input: &FusionInput, threshold: f64) -> Result<SqlQuery, FuseError> {
    fuse_with_trace(input, threshold).map(|(query, _)| query)
}

/// [`fuse`], also reporting which route resolved the target.
pub fn fuse_with_trace(
    input: &FusionInput,
    threshold: f64,
) -> Result<(SqlQuery, FuseTrace), FuseError> {
    match &input.frame.intent {
        Intent::Lookup => fuse_select_position(input, threshold, None, None),
        Intent::Aggregate(AggFn::Count) => fuse_count(input, threshold),
        Intent::Aggregate(agg) => fuse_select_position(input, threshold, Some(*agg), None),
        Intent::AggregateBy(agg, group_phrase) => {
            let group = direct_column(group_phrase, input.schema, threshold).ok_or_else(|| {
                FuseError::TargetUnresolved {
                    phrase: group_phrase.clone(),
                }
            })?;
            fuse_select_position(input, threshold, Some(*agg), Some(group))
        }
        Intent::Filter { projection } => {
            let column = direct_column(projection, input.schema, threshold).ok_or_else(|| {
                FuseError::TargetUnresolved {
                    phrase: projection.clone(),
                }
            })?;
            fuse_filter(input, threshold, column)
        }
    }
}
