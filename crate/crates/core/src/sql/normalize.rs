//! Semantic normalization of queries, the basis of exact set match.
//!
//! Two queries are considered equivalent when their normal forms are
//! structurally equal. Normalization:
//!
//! * folds constant arithmetic (skipping division by zero) and flattens
//!   commutative `+`/`*` chains into a sorted left-associated spine, so
//!   `a + b` equals `b + a` while `a - b` stays distinct from `b - a`;
//! * orients comparisons (`a > b` becomes `b < a`; `=`/`!=` operands are
//!   sorted), sorts and deduplicates conjuncts, `OR` groups, and `IN` lists;
//! * hoists equi-join predicates out of `WHERE` into the join set and sorts
//!   `FROM` tables, so explicit `JOIN … ON` and comma-style joins coincide;
//! * sorts the `SELECT` list as a multiset and `GROUP BY` as a set;
//! * flattens and sorts all-`UNION` (and all-`INTERSECT`) chains, dropping
//!   duplicate members; `EXCEPT` chains keep their order.
//!
//! `ORDER BY` keys keep their order — ordering is semantics — and `LIMIT`
//! and `DISTINCT` are compared verbatim.

use super::ast::*;
use super::render::{
    render_atom, render_column_ref, render_expr, render_group, render_select_item, render_sql,
};
use crate::knowledge::CmpOp;

fn fold_binary(op: SqlBinOp, left: &SqlExpr, right: &SqlExpr) -> Option<f64> {
    let (&SqlExpr::Number(a), &SqlExpr::Number(b)) = (left, right) else {
        return None;
    };
    if op == SqlBinOp::Div && b == 0.0 {
        return None;
    }
    let value = match op {
        SqlBinOp::Add => a + b,
        SqlBinOp::Sub => a - b,
        SqlBinOp::Mul => a * b,
        SqlBinOp::Div => a / b,
    };
    value.is_finite().then_some(value)
}

/// Collect the operands of a maximal same-operator commutative chain.
fn collect_chain(expr: SqlExpr, op: SqlBinOp, out: &mut Vec<SqlExpr>) {
    match expr {
        SqlExpr::Binary { op: o, left, right } if o == op => {
            collect_chain(*left, op, out);
            collect_chain(*right, op, out);
        }
        other => out.push(other),
    }
}

fn norm_expr(expr: &SqlExpr) -> SqlExpr {
    match expr {
        SqlExpr::Column(_) | SqlExpr::Str(_) | SqlExpr::Star => expr.clone(),
        SqlExpr::Number(n) => SqlExpr::Number(if *n == 0.0 { 0.0 } else { *n }),
        SqlExpr::Func { func, args } => SqlExpr::Func {
            func: *func,
            args: args.iter().map(norm_expr).collect(),
        },
        SqlExpr::Binary { op, left, right } => {
            let left = norm_expr(left);
            let right = norm_expr(right);
            if let Some(value) = fold_binary(*op, &left, &right) {
                return norm_expr(&SqlExpr::Number(value));
            }
            if op.is_commutative() {
                let mut operands = Vec::new();
                collect_chain(
                    SqlExpr::Binary {
                        op: *op,
                        left: Box::new(left),
                        right: Box::new(right),
                    },
                    *op,
                    &mut operands,
                );
                operands.sort_by_key(render_expr);
                let rebuilt = operands
                    .into_iter()
                    .reduce(|acc, next| SqlExpr::binary(*op, acc, next))
                    .expect("chain has at least two operands");
                // Sorting clusters numeric literals on the left spine; a
                // second pass folds them together.
                return fold_spine(rebuilt);
            }
            SqlExpr::Binary {
                op: *op,
                left: Box::new(left),
                right: Box::new(right),
            }
        }
    }
}

/// Re-fold constants after a chain rebuild, bottom-up along the left spine.
fn fold_spine(expr: SqlExpr) -> SqlExpr {
    match expr {
        SqlExpr::Binary { op, left, right } => {
            let left = fold_spine(*left);
            match fold_binary(op, &left, &right) {
                Some(value) => SqlExpr::Number(value),
                None => SqlExpr::Binary {
                    op,
                    left: Box::new(left),
                    right,
                },
            }
        }
        other => other,
    }
}

fn norm_operand(operand: &Operand) -> Operand {
    match operand {
        Operand::Expr(e) => Operand::Expr(norm_expr(e)),
        Operand::Agg(call) => Operand::Agg(AggCall {
            func: call.func,
            distinct: call.distinct,
            arg: norm_expr(&call.arg),
        }),
        Operand::Query(q) => Operand::Query(Box::new(normalize(q))),
    }
}

fn operand_key(operand: &Operand) -> String {
    super::render::render_operand(operand)
}

fn norm_atom(atom: &Atom) -> Atom {
    match atom {
        Atom::Cmp { left, op, right } => {
            let mut left = norm_operand(left);
            let mut right = norm_operand(right);
            let mut op = *op;
            // Prefer `<`/`<=`: `a > b` and `b < a` meet in the middle.
            if matches!(op, CmpOp::Gt | CmpOp::Ge) {
                std::mem::swap(&mut left, &mut right);
                op = op.flipped();
            }
            // `=`/`!=` are symmetric: order operands canonically.
            if matches!(op, CmpOp::Eq | CmpOp::Ne) && operand_key(&left) > operand_key(&right) {
                std::mem::swap(&mut left, &mut right);
            }
            Atom::Cmp { left, op, right }
        }
        Atom::InList { expr, values } => {
            let mut values: Vec<SqlExpr> = values.iter().map(norm_expr).collect();
            values.sort_by_key(render_expr);
            values.dedup();
            Atom::InList {
                expr: norm_expr(expr),
                values,
            }
        }
        Atom::InQuery { expr, query } => Atom::InQuery {
            expr: norm_expr(expr),
            query: Box::new(normalize(query)),
        },
    }
}

fn norm_groups(groups: &[OrGroup]) -> Vec<OrGroup> {
    let mut out: Vec<OrGroup> = groups
        .iter()
        .map(|group| {
            let mut atoms: Vec<Atom> = group.iter().map(norm_atom).collect();
            atoms.sort_by_key(render_atom);
            atoms.dedup();
            atoms
        })
        .collect();
    out.sort_by_key(render_group);
    out.dedup();
    out
}

/// A `WHERE` conjunct that is really a join predicate: a lone
/// `t1.c1 = t2.c2` between different tables.
fn as_join(group: &OrGroup) -> Option<JoinCond> {
    let [Atom::Cmp {
        left: Operand::Expr(SqlExpr::Column(l)),
        op: CmpOp::Eq,
        right: Operand::Expr(SqlExpr::Column(r)),
    }] = group.as_slice()
    else {
        return None;
    };
    let (l, r) = (l.as_qualified()?, r.as_qualified()?);
    (l.table != r.table).then(|| JoinCond::new(l, r))
}

/// Flatten an all-`kind` chain into its member cores.
fn collect_members(mut q: SqlQuery, kind: SetOpKind, out: &mut Vec<SqlQuery>) {
    let ops = std::mem::take(&mut q.set_ops);
    if ops.iter().all(|(k, _)| *k == kind) {
        out.push(q);
        for (_, member) in ops {
            collect_members(member, kind, out);
        }
    } else {
        q.set_ops = ops;
        out.push(q);
    }
}

/// Compute the normal form of a query. Pure; idempotent.
pub fn normalize(q: &SqlQuery) -> SqlQuery {
    let mut out = SqlQuery::new();
    out.distinct = q.distinct;

    out.select = q
        .select
        .iter()
        .map(|item| SelectItem {
            expr: norm_expr(&item.expr),
            aggregate: item.aggregate,
            distinct: item.distinct,
        })
        .collect();
    out.select.sort_by_key(render_select_item);

    out.where_ = norm_groups(&q.where_);
    let mut joins = q.from.joins.clone();
    out.where_.retain(|group| match as_join(group) {
        Some(join) => {
            joins.push(join);
            false
        }
        None => true,
    });
    joins.sort();
    joins.dedup();
    let mut tables = q.from.tables.clone();
    tables.sort();
    tables.dedup();
    out.from = FromClause { tables, joins };

    out.group_by = q.group_by.clone();
    out.group_by.sort_by_key(render_column_ref);
    out.group_by.dedup();

    out.having = norm_groups(&q.having);

    out.order_by = q
        .order_by
        .iter()
        .map(|key| OrderKey {
            expr: norm_operand(&key.expr),
            desc: key.desc,
        })
        .collect();
    out.limit = q.limit;

    if !q.set_ops.is_empty() {
        let kind = q.set_ops[0].0;
        let uniform = q.set_ops.iter().all(|(k, _)| *k == kind);
        if uniform && matches!(kind, SetOpKind::Union | SetOpKind::Intersect) {
            // Commutative, associative, idempotent: flatten, normalize each
            // member, sort, and deduplicate.
            let mut shell = out.clone();
            shell.set_ops = q.set_ops.clone();
            let mut members = Vec::new();
            collect_members(shell, kind, &mut members);
            let mut members: Vec<SqlQuery> = members.iter().map(normalize).collect();
            members.sort_by_key(render_sql);
            members.dedup();
            let mut head = members.remove(0);
            head.set_ops = members.into_iter().map(|m| (kind, m)).collect();
            return head;
        }
        out.set_ops = q.set_ops.iter().map(|(k, m)| (*k, normalize(m))).collect();
    }

    out
}
