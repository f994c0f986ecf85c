//! The SQL subset's abstract syntax tree.
//!
//! The subset covers single-statement `SELECT` queries: arithmetic over
//! column references, literals and the scalar functions `NOW`/`YEAR`/`ABS`;
//! aggregates (optionally `DISTINCT`); inner joins; conjunctive `WHERE` and
//! `HAVING` clauses whose disjunctions must be parenthesized; `IN` over a
//! literal list or a subquery; scalar subqueries as comparison operands;
//! `GROUP BY`, `ORDER BY`, `LIMIT`; and `UNION`/`INTERSECT`/`EXCEPT` chains.
//! Query nesting (set-operation members and subqueries alike) is capped at
//! [`MAX_QUERY_DEPTH`] levels.

pub use crate::knowledge::CmpOp;
use crate::schema::QualifiedColumn;

/// Maximum query nesting depth: a top-level query plus one level of
/// subqueries or set-operation members.
pub const MAX_QUERY_DEPTH: usize = 2;

/// Aggregate functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AggFn {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl AggFn {
    pub fn keyword(&self) -> &'static str {
        match self {
            AggFn::Count => "COUNT",
            AggFn::Sum => "SUM",
            AggFn::Avg => "AVG",
            AggFn::Min => "MIN",
            AggFn::Max => "MAX",
        }
    }

    pub fn from_word(word: &str) -> Option<AggFn> {
        match word.to_ascii_uppercase().as_str() {
            "COUNT" => Some(AggFn::Count),
            "SUM" => Some(AggFn::Sum),
            "AVG" => Some(AggFn::Avg),
            "MIN" => Some(AggFn::Min),
            "MAX" => Some(AggFn::Max),
            _ => None,
        }
    }
}

/// Scalar functions, mirroring the knowledge DSL's function set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqlFunc {
    Now,
    Year,
    Abs,
}

impl SqlFunc {
    pub fn keyword(&self) -> &'static str {
        match self {
            SqlFunc::Now => "NOW",
            SqlFunc::Year => "YEAR",
            SqlFunc::Abs => "ABS",
        }
    }

    pub fn from_word(word: &str) -> Option<SqlFunc> {
        match word.to_ascii_uppercase().as_str() {
            "NOW" => Some(SqlFunc::Now),
            "YEAR" => Some(SqlFunc::Year),
            "ABS" => Some(SqlFunc::Abs),
            _ => None,
        }
    }
}

/// Binary arithmetic; `+`/`*` bind looser than `-`-free chains of `*`/`/`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqlBinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl SqlBinOp {
    pub fn precedence(&self) -> u8 {
        match self {
            SqlBinOp::Add | SqlBinOp::Sub => 1,
            SqlBinOp::Mul | SqlBinOp::Div => 2,
        }
    }

    pub fn symbol(&self) -> &'static str {
        match self {
            SqlBinOp::Add => "+",
            SqlBinOp::Sub => "-",
            SqlBinOp::Mul => "*",
            SqlBinOp::Div => "/",
        }
    }

    /// Commutative operators admit operand reordering during normalization.
    pub fn is_commutative(&self) -> bool {
        matches!(self, SqlBinOp::Add | SqlBinOp::Mul)
    }
}

/// A possibly table-qualified column reference.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ColumnRef {
    pub table: Option<String>,
    pub column: String,
}

impl ColumnRef {
    pub fn bare(column: &str) -> Self {
        ColumnRef {
            table: None,
            column: column.to_string(),
        }
    }

    pub fn qualified(table: &str, column: &str) -> Self {
        ColumnRef {
            table: Some(table.to_string()),
            column: column.to_string(),
        }
    }

    pub fn as_qualified(&self) -> Option<QualifiedColumn> {
        self.table
            .as_ref()
            .map(|t| QualifiedColumn::new(t, &self.column))
    }
}

impl From<&QualifiedColumn> for ColumnRef {
    fn from(qc: &QualifiedColumn) -> Self {
        ColumnRef::qualified(&qc.table, &qc.column)
    }
}

/// A scalar SQL expression.
#[derive(Debug, Clone, PartialEq)]
pub enum SqlExpr {
    Column(ColumnRef),
    Number(f64),
    Str(String),
    Binary {
        op: SqlBinOp,
        left: Box<SqlExpr>,
        right: Box<SqlExpr>,
    },
    Func {
        func: SqlFunc,
        args: Vec<SqlExpr>,
    },
    /// `*`; valid only as the argument of `COUNT`.
    Star,
}

impl SqlExpr {
    pub fn column(table: &str, column: &str) -> Self {
        SqlExpr::Column(ColumnRef::qualified(table, column))
    }

    pub fn binary(op: SqlBinOp, left: SqlExpr, right: SqlExpr) -> Self {
        SqlExpr::Binary {
            op,
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}

/// An aggregate call such as `COUNT(*)` or `SUM(DISTINCT t.x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AggCall {
    pub func: AggFn,
    pub distinct: bool,
    pub arg: SqlExpr,
}

/// One operand of a comparison: a scalar expression, an aggregate call
/// (meaningful in `HAVING`), or a scalar subquery.
#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    Expr(SqlExpr),
    Agg(AggCall),
    Query(Box<SqlQuery>),
}

/// An atomic predicate.
#[derive(Debug, Clone, PartialEq)]
pub enum Atom {
    Cmp {
        left: Operand,
        op: CmpOp,
        right: Operand,
    },
    InList {
        expr: SqlExpr,
        values: Vec<SqlExpr>,
    },
    InQuery {
        expr: SqlExpr,
        query: Box<SqlQuery>,
    },
}

/// A disjunction of atoms. A bare predicate is a one-atom group; longer
/// groups correspond to parenthesized `OR` chains in the source.
pub type OrGroup = Vec<Atom>;

/// One projected column of the `SELECT` list.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectItem {
    pub expr: SqlExpr,
    /// When set, `expr` is wrapped in this aggregate.
    pub aggregate: Option<AggFn>,
    /// `DISTINCT` inside the aggregate, as in `COUNT(DISTINCT x)`.
    pub distinct: bool,
}

impl SelectItem {
    pub fn plain(expr: SqlExpr) -> Self {
        SelectItem {
            expr,
            aggregate: None,
            distinct: false,
        }
    }

    pub fn aggregated(func: AggFn, expr: SqlExpr) -> Self {
        SelectItem {
            expr,
            aggregate: Some(func),
            distinct: false,
        }
    }
}

/// An equi-join between two qualified columns.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct JoinCond {
    pub left: QualifiedColumn,
    pub right: QualifiedColumn,
}

impl JoinCond {
    /// Store the pair with its smaller side first.
    pub fn new(a: QualifiedColumn, b: QualifiedColumn) -> Self {
        if a <= b {
            JoinCond { left: a, right: b }
        } else {
            JoinCond { left: b, right: a }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FromClause {
    pub tables: Vec<String>,
    pub joins: Vec<JoinCond>,
}

/// An `ORDER BY` key. `Operand::Query` never appears here.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderKey {
    pub expr: Operand,
    pub desc: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetOpKind {
    Union,
    Intersect,
    Except,
}

impl SetOpKind {
    pub fn keyword(&self) -> &'static str {
        match self {
            SetOpKind::Union => "UNION",
            SetOpKind::Intersect => "INTERSECT",
            SetOpKind::Except => "EXCEPT",
        }
    }
}

/// A `SELECT` query, possibly extended by a left-associative chain of set
/// operations: `head op1 q1 op2 q2` means `((head op1 q1) op2 q2)`.
///
/// `ORDER BY` and `LIMIT` are only permitted when `set_ops` is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct SqlQuery {
    pub distinct: bool,
    pub select: Vec<SelectItem>,
    pub from: FromClause,
    pub where_: Vec<OrGroup>,
    pub group_by: Vec<ColumnRef>,
    pub having: Vec<OrGroup>,
    pub order_by: Vec<OrderKey>,
    pub limit: Option<u64>,
    pub set_ops: Vec<(SetOpKind, SqlQuery)>,
}

impl SqlQuery {
    /// An empty query skeleton; callers fill in `select` and `from`.
    pub fn new() -> Self {
        SqlQuery {
            distinct: false,
            select: Vec::new(),
            from: FromClause::default(),
            where_: Vec::new(),
            group_by: Vec::new(),
            having: Vec::new(),
            order_by: Vec::new(),
            limit: None,
            set_ops: Vec::new(),
        }
    }

    /// Nesting depth: 1 plus the deepest subquery or set-operation member.
    pub fn depth(&self) -> usize {
        let mut deepest = 0;
        self.visit_child_queries(&mut |child| deepest = deepest.max(child.depth()));
        1 + deepest
    }

    /// Invoke `f` on every directly nested query: set-operation members,
    /// `IN (SELECT …)` subqueries, and scalar subquery operands.
    pub fn visit_child_queries(&self, f: &mut dyn FnMut(&SqlQuery)) {
        for (_, member) in &self.set_ops {
            f(member);
        }
        for group in self.where_.iter().chain(&self.having) {
            for atom in group {
                match atom {
                    Atom::Cmp { left, right, .. } => {
                        for operand in [left, right] {
                            if let Operand::Query(q) = operand {
                                f(q);
                            }
                        }
                    }
                    Atom::InQuery { query, .. } => f(query),
                    Atom::InList { .. } => {}
                }
            }
        }
    }
}

impl Default for SqlQuery {
    fn default() -> Self {
        SqlQuery::new()
    }
}
