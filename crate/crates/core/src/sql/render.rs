//! Canonical single-line rendering of the SQL subset.
//!
//! The renderer emits uppercase keywords, lowercase identifiers, and
//! comma-joined `FROM` lists with join conditions leading the `WHERE`
//! clause, so `a JOIN b ON a.x = b.y` and `FROM a, b WHERE a.x = b.y` print
//! identically once normalized. `render_sql ∘ parse_sql` is the identity on
//! rendered output, which the property tests pin down.

use super::ast::*;

fn render_number(n: f64) -> String {
    // `Display` for f64 is the shortest round-tripping decimal form and
    // never uses exponent notation.
    format!("{n}")
}

/// Render an expression; `parent_prec`/`is_right` drive minimal parentheses
/// exactly as in the knowledge DSL.
fn render_expr_prec(expr: &SqlExpr, parent_prec: u8, is_right: bool, out: &mut String) {
    match expr {
        SqlExpr::Column(cr) => {
            if let Some(table) = &cr.table {
                out.push_str(table);
                out.push('.');
            }
            out.push_str(&cr.column);
        }
        SqlExpr::Number(n) => out.push_str(&render_number(*n)),
        SqlExpr::Str(s) => {
            out.push('\'');
            out.push_str(s);
            out.push('\'');
        }
        SqlExpr::Star => out.push('*'),
        SqlExpr::Func { func, args } => {
            out.push_str(func.keyword());
            out.push('(');
            for (i, arg) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                render_expr_prec(arg, 0, false, out);
            }
            out.push(')');
        }
        SqlExpr::Binary { op, left, right } => {
            let prec = op.precedence();
            let needs_parens = prec < parent_prec || (prec == parent_prec && is_right);
            if needs_parens {
                out.push('(');
            }
            render_expr_prec(left, prec, false, out);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            render_expr_prec(right, prec, true, out);
            if needs_parens {
                out.push(')');
            }
        }
    }
}

pub(super) fn render_expr(expr: &SqlExpr) -> String {
    let mut out = String::new();
    render_expr_prec(expr, 0, false, &mut out);
    out
}

pub(super) fn render_agg_call(call: &AggCall) -> String {
    let distinct = if call.distinct { "DISTINCT " } else { "" };
    format!(
        "{}({}{})",
        call.func.keyword(),
        distinct,
        render_expr(&call.arg)
    )
}

pub(super) fn render_operand(operand: &Operand) -> String {
    match operand {
        Operand::Expr(e) => render_expr(e),
        Operand::Agg(call) => render_agg_call(call),
        Operand::Query(q) => format!("({})", render_sql(q)),
    }
}

pub(super) fn render_atom(atom: &Atom) -> String {
    match atom {
        Atom::Cmp { left, op, right } => {
            format!(
                "{} {} {}",
                render_operand(left),
                op.symbol(),
                render_operand(right)
            )
        }
        Atom::InList { expr, values } => {
            let values: Vec<String> = values.iter().map(render_expr).collect();
            format!("{} IN ({})", render_expr(expr), values.join(", "))
        }
        Atom::InQuery { expr, query } => {
            format!("{} IN ({})", render_expr(expr), render_sql(query))
        }
    }
}

pub(super) fn render_group(group: &OrGroup) -> String {
    if group.len() == 1 {
        render_atom(&group[0])
    } else {
        let atoms: Vec<String> = group.iter().map(render_atom).collect();
        format!("({})", atoms.join(" OR "))
    }
}

pub(super) fn render_select_item(item: &SelectItem) -> String {
    match item.aggregate {
        Some(func) => {
            let distinct = if item.distinct { "DISTINCT " } else { "" };
            format!(
                "{}({}{})",
                func.keyword(),
                distinct,
                render_expr(&item.expr)
            )
        }
        None => render_expr(&item.expr),
    }
}

pub(super) fn render_column_ref(cr: &ColumnRef) -> String {
    match &cr.table {
        Some(table) => format!("{table}.{}", cr.column),
        None => cr.column.clone(),
    }
}

pub(super) fn render_order_key(key: &OrderKey) -> String {
    let dir = if key.desc { "DESC" } else { "ASC" };
    format!("{} {dir}", render_operand(&key.expr))
}

/// Render one query core, ignoring its set-operation chain.
fn render_core(q: &SqlQuery) -> String {
    let mut out = String::from("SELECT ");
    if q.distinct {
        out.push_str("DISTINCT ");
    }
    let items: Vec<String> = q.select.iter().map(render_select_item).collect();
    out.push_str(&items.join(", "));
    out.push_str(" FROM ");
    out.push_str(&q.from.tables.join(", "));
    let mut conjuncts: Vec<String> = q
        .from
        .joins
        .iter()
        .map(|j| format!("{} = {}", j.left, j.right))
        .collect();
    conjuncts.extend(q.where_.iter().map(render_group));
    if !conjuncts.is_empty() {
        out.push_str(" WHERE ");
        out.push_str(&conjuncts.join(" AND "));
    }
    if !q.group_by.is_empty() {
        let refs: Vec<String> = q.group_by.iter().map(render_column_ref).collect();
        out.push_str(" GROUP BY ");
        out.push_str(&refs.join(", "));
    }
    if !q.having.is_empty() {
        let groups: Vec<String> = q.having.iter().map(render_group).collect();
        out.push_str(" HAVING ");
        out.push_str(&groups.join(" AND "));
    }
    if !q.order_by.is_empty() {
        let keys: Vec<String> = q.order_by.iter().map(render_order_key).collect();
        out.push_str(" ORDER BY ");
        out.push_str(&keys.join(", "));
    }
    if let Some(limit) = q.limit {
        out.push_str(&format!(" LIMIT {limit}"));
    }
    out
}

/// Render a query (and its set-operation chain) as canonical SQL.
pub fn render_sql(q: &SqlQuery) -> String {
    if q.set_ops.is_empty() {
        return render_core(q);
    }
    let mut out = format!("({})", render_core(q));
    for (kind, member) in &q.set_ops {
        out.push(' ');
        out.push_str(kind.keyword());
        out.push(' ');
        out.push_str(&format!("({})", render_sql(member)));
    }
    out
}
