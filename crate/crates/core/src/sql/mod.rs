//! A SQL subset with parsing, canonical rendering, schema qualification,
//! and semantic equivalence (exact set match).
//!
//! The subset is exactly what fused formula queries need — arithmetic
//! projections, aggregates, inner joins, conjunctive filters with
//! parenthesized `OR` groups, `IN` lists and subqueries, `GROUP BY`/
//! `HAVING`/`ORDER BY`/`LIMIT`, and set operations — and nothing more;
//! anything else fails loudly at parse time. Equivalence is decided by
//! comparing [`normalize`]d forms, so clause order, operand order of
//! commutative operators, join spelling, and duplicate predicates never
//! produce spurious mismatches.

mod ast;
mod normalize;
mod parse;
mod render;

pub use ast::*;
pub use normalize::normalize;
pub use parse::parse_sql;
pub use render::render_sql;

use serde::Serialize;
use std::collections::BTreeSet;
use thiserror::Error;

use crate::schema::{QualifiedColumn, SchemaGraph};

#[derive(Debug, Error)]
pub enum SqlError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unsupported SQL feature: `{keyword}`")]
    Unsupported { keyword: String },
    #[error("query nesting depth {depth} exceeds the maximum of {max}")]
    Nesting { depth: usize, max: usize },
    #[error("unknown table `{table}`")]
    UnknownTable { table: String },
    #[error("unknown column `{column}`")]
    UnknownColumn { column: String },
    #[error("ambiguous column `{column}`: could be {}", candidates.join(" or "))]
    AmbiguousColumn {
        column: String,
        candidates: Vec<String>,
    },
}

/// Two queries are exact-set-matched when their normal forms coincide.
/// Qualify both sides against the same schema first when they may differ in
/// bare versus qualified column references.
pub fn exact_set_match(a: &SqlQuery, b: &SqlQuery) -> bool {
    normalize(a) == normalize(b)
}

fn resolve_ref(
    cr: &mut ColumnRef,
    from_tables: &[String],
    schema: &SchemaGraph,
) -> Result<(), SqlError> {
    match &cr.table {
        Some(table) => {
            if !from_tables.contains(table) {
                return Err(SqlError::UnknownTable {
                    table: table.clone(),
                });
            }
            let qc = QualifiedColumn::new(table, &cr.column);
            if !schema.has_column(&qc) {
                return Err(SqlError::UnknownColumn {
                    column: qc.to_string(),
                });
            }
        }
        None => {
            let candidates: BTreeSet<&String> = from_tables
                .iter()
                .filter(|t| schema.has_column(&QualifiedColumn::new(t, &cr.column)))
                .collect();
            let mut iter = candidates.iter();
            match (iter.next(), iter.next()) {
                (None, _) => {
                    return Err(SqlError::UnknownColumn {
                        column: cr.column.clone(),
                    });
                }
                (Some(only), None) => cr.table = Some((*only).clone()),
                (Some(_), Some(_)) => {
                    return Err(SqlError::AmbiguousColumn {
                        column: cr.column.clone(),
                        candidates: candidates
                            .iter()
                            .map(|t| format!("{t}.{}", cr.column))
                            .collect(),
                    });
                }
            }
        }
    }
    Ok(())
}

fn walk_expr(
    expr: &mut SqlExpr,
    resolve: &mut dyn FnMut(&mut ColumnRef) -> Result<(), SqlError>,
) -> Result<(), SqlError> {
    match expr {
        SqlExpr::Column(cr) => resolve(cr),
        SqlExpr::Binary { left, right, .. } => {
            walk_expr(left, resolve)?;
            walk_expr(right, resolve)
        }
        SqlExpr::Func { args, .. } => {
            for arg in args {
                walk_expr(arg, resolve)?;
            }
            Ok(())
        }
        SqlExpr::Number(_) | SqlExpr::Str(_) | SqlExpr::Star => Ok(()),
    }
}

fn qualify_query(q: &mut SqlQuery, schema: &SchemaGraph) -> Result<(), SqlError> {
    for table in &q.from.tables {
        if schema.table(table).is_none() {
            return Err(SqlError::UnknownTable {
                table: table.clone(),
            });
        }
    }
    for join in &q.from.joins {
        for side in [&join.left, &join.right] {
            if !q.from.tables.contains(&side.table) {
                return Err(SqlError::UnknownTable {
                    table: side.table.clone(),
                });
            }
            if !schema.has_column(side) {
                return Err(SqlError::UnknownColumn {
                    column: side.to_string(),
                });
            }
        }
    }
    let tables = q.from.tables.clone();

    // Split the borrow: a closure resolving one reference in this scope.
    macro_rules! resolve {
        () => {
            &mut |cr: &mut ColumnRef| resolve_ref(cr, &tables, schema)
        };
    }

    for item in &mut q.select {
        walk_expr(&mut item.expr, resolve!())?;
    }
    for group in q.where_.iter_mut().chain(q.having.iter_mut()) {
        for atom in group {
            match atom {
                Atom::Cmp { left, right, .. } => {
                    for operand in [left, right] {
                        match operand {
                            Operand::Expr(e) => walk_expr(e, resolve!())?,
                            Operand::Agg(call) => walk_expr(&mut call.arg, resolve!())?,
                            Operand::Query(sub) => qualify_query(sub, schema)?,
                        }
                    }
                }
                Atom::InList { expr, values } => {
                    walk_expr(expr, resolve!())?;
                    for value in values {
                        walk_expr(value, resolve!())?;
                    }
                }
                Atom::InQuery { expr, query } => {
                    walk_expr(expr, resolve!())?;
                    qualify_query(query, schema)?;
                }
            }
        }
    }
    for cr in &mut q.group_by {
        resolve_ref(cr, &tables, schema)?;
    }
    for key in &mut q.order_by {
        match &mut key.expr {
            Operand::Expr(e) => walk_expr(e, resolve!())?,
            Operand::Agg(call) => walk_expr(&mut call.arg, resolve!())?,
            Operand::Query(sub) => qualify_query(sub, schema)?,
        }
    }
    for (_, member) in &mut q.set_ops {
        qualify_query(member, schema)?;
    }
    Ok(())
}

impl SqlQuery {
    /// Resolve every bare column reference against `schema`, reject
    /// references to unknown tables or columns, and error on names found in
    /// more than one `FROM` table. Subqueries resolve against their own
    /// `FROM` clause (the subset has no correlated references).
    pub fn qualify(&mut self, schema: &SchemaGraph) -> Result<(), SqlError> {
        qualify_query(self, schema)
    }
}

/// The first clause where two normalized queries disagree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClauseDiff {
    pub clause: String,
    pub left: String,
    pub right: String,
}

/// Compare normal forms clause by clause; `None` means the queries match.
pub fn first_divergence(a: &SqlQuery, b: &SqlQuery) -> Option<ClauseDiff> {
    let a = normalize(a);
    let b = normalize(b);
    let clauses = |q: &SqlQuery| -> Vec<(&'static str, String)> {
        vec![
            (
                "distinct",
                if q.distinct {
                    "DISTINCT".into()
                } else {
                    String::new()
                },
            ),
            (
                "select",
                q.select
                    .iter()
                    .map(render::render_select_item)
                    .collect::<Vec<_>>()
                    .join(", "),
            ),
            ("from", {
                let joins: Vec<String> = q
                    .from
                    .joins
                    .iter()
                    .map(|j| format!("{} = {}", j.left, j.right))
                    .collect();
                format!("{} [{}]", q.from.tables.join(", "), joins.join(" AND "))
            }),
            (
                "where",
                q.where_
                    .iter()
                    .map(render::render_group)
                    .collect::<Vec<_>>()
                    .join(" AND "),
            ),
            (
                "group_by",
                q.group_by
                    .iter()
                    .map(render::render_column_ref)
                    .collect::<Vec<_>>()
                    .join(", "),
            ),
            (
                "having",
                q.having
                    .iter()
                    .map(render::render_group)
                    .collect::<Vec<_>>()
                    .join(" AND "),
            ),
            (
                "order_by",
                q.order_by
                    .iter()
                    .map(render::render_order_key)
                    .collect::<Vec<_>>()
                    .join(", "),
            ),
            ("limit", q.limit.map(|l| l.to_string()).unwrap_or_default()),
            (
                "set_ops",
                q.set_ops
                    .iter()
                    .map(|(k, m)| format!("{} ({})", k.keyword(), render_sql(m)))
                    .collect::<Vec<_>>()
                    .join(" "),
            ),
        ]
    };
    for ((name, left), (_, right)) in clauses(&a).into_iter().zip(clauses(&b)) {
        if left != right {
            return Some(ClauseDiff {
                clause: name.to_string(),
                left,
                right,
            });
        }
    }
    None
}
