//! Parsing the SQL subset.
//!
//! The lexer runs first and a blanket scan rejects any keyword outside the
//! subset (`LEFT`, `OVER`, `NOT`, `CASE`, …) with
//! [`SqlError::Unsupported`], so unsupported constructs fail loudly instead
//! of mis-parsing. Identifiers are case-folded to lowercase; keywords are
//! recognized case-insensitively. Aggregate and scalar function names are
//! contextual: they act as functions only when directly followed by `(`.
//!
//! Disjunction is only accepted inside parentheses — `a = 1 OR b = 2` at the
//! top level of a `WHERE` is a syntax error asking for `(… OR …)` — which
//! keeps every condition list a plain conjunction of groups.

use super::ast::*;
use super::SqlError;
use crate::knowledge::CmpOp;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Number(f64),
    Str(String),
    LParen,
    RParen,
    Comma,
    Dot,
    Semi,
    Plus,
    Minus,
    Slash,
    /// `*`: multiplication or the `COUNT(*)` star, depending on context.
    Star,
    Cmp(CmpOp),
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Word(w) => format!("`{w}`"),
            Tok::Number(n) => format!("number {n}"),
            Tok::Str(s) => format!("string '{s}'"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Star => "`*`".into(),
            Tok::Cmp(op) => format!("`{}`", op.symbol()),
        }
    }
}

struct Lexed {
    tok: Tok,
    offset: usize,
}

/// Keywords of SQL at large that the subset deliberately rejects.
const UNSUPPORTED: &[&str] = &[
    "ALL",
    "ALTER",
    "ANY",
    "AS",
    "BETWEEN",
    "CASE",
    "CAST",
    "CREATE",
    "CROSS",
    "DELETE",
    "DROP",
    "ELSE",
    "END",
    "EXISTS",
    "FULL",
    "ILIKE",
    "INSERT",
    "IS",
    "LEFT",
    "LIKE",
    "NATURAL",
    "NOT",
    "NULL",
    "OFFSET",
    "OUTER",
    "OVER",
    "PARTITION",
    "RECURSIVE",
    "RIGHT",
    "SOME",
    "THEN",
    "TOP",
    "UPDATE",
    "USING",
    "VALUES",
    "WHEN",
    "WINDOW",
    "WITH",
];

/// Reserved words of the subset itself; these can never be identifiers.
const RESERVED: &[&str] = &[
    "AND",
    "ASC",
    "BY",
    "DESC",
    "DISTINCT",
    "EXCEPT",
    "FROM",
    "GROUP",
    "HAVING",
    "IN",
    "INNER",
    "INTERSECT",
    "JOIN",
    "LIMIT",
    "ON",
    "OR",
    "ORDER",
    "SELECT",
    "UNION",
    "WHERE",
];

fn syntax(offset: usize, message: impl Into<String>) -> SqlError {
    SqlError::Syntax {
        offset,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<Lexed>, SqlError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let offset = i;
        match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
            }
            '(' | ')' | ',' | ';' | '+' | '-' | '/' | '*' => {
                let tok = match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    ',' => Tok::Comma,
                    ';' => Tok::Semi,
                    '+' => Tok::Plus,
                    '-' => Tok::Minus,
                    '/' => Tok::Slash,
                    _ => Tok::Star,
                };
                toks.push(Lexed { tok, offset });
                i += 1;
            }
            '.' => {
                toks.push(Lexed {
                    tok: Tok::Dot,
                    offset,
                });
                i += 1;
            }
            '\'' => {
                let start = i + 1;
                let mut j = start;
                while j < bytes.len() && bytes[j] != b'\'' {
                    j += 1;
                }
                if j >= bytes.len() {
                    return Err(syntax(offset, "unterminated string literal"));
                }
                toks.push(Lexed {
                    tok: Tok::Str(text[start..j].to_string()),
                    offset,
                });
                i = j + 1;
            }
            '<' | '>' | '=' | '!' => {
                let two = text.get(i..i + 2).unwrap_or("");
                let (op, len) = match (c, two) {
                    (_, "<=") => (CmpOp::Le, 2),
                    (_, ">=") => (CmpOp::Ge, 2),
                    (_, "!=") => (CmpOp::Ne, 2),
                    (_, "<>") => (CmpOp::Ne, 2),
                    ('<', _) => (CmpOp::Lt, 1),
                    ('>', _) => (CmpOp::Gt, 1),
                    ('=', _) => (CmpOp::Eq, 1),
                    _ => return Err(syntax(offset, "stray `!`")),
                };
                toks.push(Lexed {
                    tok: Tok::Cmp(op),
                    offset,
                });
                i += len;
            }
            _ if c.is_ascii_digit() => {
                let mut j = i;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                if j < bytes.len()
                    && bytes[j] == b'.'
                    && j + 1 < bytes.len()
                    && bytes[j + 1].is_ascii_digit()
                {
                    j += 1;
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                let value: f64 = text[i..j]
                    .parse()
                    .map_err(|_| syntax(offset, format!("invalid number `{}`", &text[i..j])))?;
                toks.push(Lexed {
                    tok: Tok::Number(value),
                    offset,
                });
                i = j;
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let mut j = i;
                while j < bytes.len()
                    && ((bytes[j] as char).is_ascii_alphanumeric() || bytes[j] == b'_')
                {
                    j += 1;
                }
                toks.push(Lexed {
                    tok: Tok::Word(text[i..j].to_string()),
                    offset,
                });
                i = j;
            }
            _ => return Err(syntax(offset, format!("unexpected character `{c}`"))),
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<Lexed>,
    pos: usize,
    text_len: usize,
}

impl Parser {
    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.text_len, |t| t.offset)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, ahead: usize) -> Option<&Tok> {
        self.toks.get(self.pos + ahead).map(|t| &t.tok)
    }

    fn err(&self, message: impl Into<String>) -> SqlError {
        syntax(self.offset(), message)
    }

    fn peek_word(&self) -> Option<&str> {
        match self.peek() {
            Some(Tok::Word(w)) => Some(w.as_str()),
            _ => None,
        }
    }

    fn peek_kw(&self, kw: &str) -> bool {
        self.peek_word().is_some_and(|w| w.eq_ignore_ascii_case(kw))
    }

    fn peek_kw_at(&self, ahead: usize, kw: &str) -> bool {
        matches!(self.peek_at(ahead), Some(Tok::Word(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.peek_kw(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), SqlError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            let found = self.peek().map_or("end of input".into(), Tok::describe);
            Err(self.err(format!("expected `{kw}`, found {found}")))
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &Tok) -> Result<(), SqlError> {
        if self.eat(tok) {
            Ok(())
        } else {
            let found = self.peek().map_or("end of input".into(), Tok::describe);
            Err(self.err(format!("expected {}, found {found}", tok.describe())))
        }
    }

    /// An identifier: any word that is not reserved.
    fn expect_ident(&mut self, what: &str) -> Result<String, SqlError> {
        match self.peek() {
            Some(Tok::Word(w)) => {
                let upper = w.to_ascii_uppercase();
                if RESERVED.contains(&upper.as_str()) {
                    return Err(self.err(format!("expected {what}, found keyword `{w}`")));
                }
                let ident = w.to_lowercase();
                self.pos += 1;
                Ok(ident)
            }
            other => {
                let found = other.map_or("end of input".into(), Tok::describe);
                Err(self.err(format!("expected {what}, found {found}")))
            }
        }
    }

    fn parse_column_ref(&mut self) -> Result<ColumnRef, SqlError> {
        let first = self.expect_ident("a column reference")?;
        if self.eat(&Tok::Dot) {
            let column = self.expect_ident("a column name")?;
            Ok(ColumnRef {
                table: Some(first),
                column,
            })
        } else {
            Ok(ColumnRef::bare(&first))
        }
    }

    /// `(` has already been checked to start a subquery.
    fn parse_parenthesized_query(&mut self) -> Result<SqlQuery, SqlError> {
        self.expect(&Tok::LParen)?;
        let query = self.parse_query()?;
        self.expect(&Tok::RParen)?;
        Ok(query)
    }

    fn starts_subquery(&self) -> bool {
        matches!(self.peek(), Some(Tok::LParen)) && self.peek_kw_at(1, "SELECT")
    }

    /// A word directly followed by `(` acts as a function name.
    fn peek_call(&self) -> Option<&str> {
        match (self.peek(), self.peek_at(1)) {
            (Some(Tok::Word(w)), Some(Tok::LParen)) => Some(w.as_str()),
            _ => None,
        }
    }

    fn parse_agg_call(&mut self) -> Result<AggCall, SqlError> {
        let func = AggFn::from_word(self.peek_word().unwrap_or_default())
            .ok_or_else(|| self.err("expected an aggregate function"))?;
        self.pos += 1;
        self.expect(&Tok::LParen)?;
        let distinct = self.eat_kw("DISTINCT");
        let arg = if self.eat(&Tok::Star) {
            if func != AggFn::Count {
                return Err(self.err("`*` is only valid inside COUNT(*)"));
            }
            if distinct {
                return Err(self.err("COUNT(DISTINCT *) is not valid"));
            }
            SqlExpr::Star
        } else {
            self.parse_expr()?
        };
        self.expect(&Tok::RParen)?;
        Ok(AggCall {
            func,
            distinct,
            arg,
        })
    }

    fn parse_factor(&mut self) -> Result<SqlExpr, SqlError> {
        match self.peek() {
            Some(Tok::Number(n)) => {
                let n = *n;
                self.pos += 1;
                Ok(SqlExpr::Number(n))
            }
            Some(Tok::Str(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(SqlExpr::Str(s))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.parse_expr()?;
                self.expect(&Tok::RParen)?;
                Ok(inner)
            }
            Some(Tok::Word(_)) => {
                if let Some(call) = self.peek_call() {
                    if let Some(func) = SqlFunc::from_word(call) {
                        self.pos += 1;
                        self.expect(&Tok::LParen)?;
                        let mut args = Vec::new();
                        if !self.eat(&Tok::RParen) {
                            loop {
                                args.push(self.parse_expr()?);
                                if !self.eat(&Tok::Comma) {
                                    break;
                                }
                            }
                            self.expect(&Tok::RParen)?;
                        }
                        return Ok(SqlExpr::Func { func, args });
                    }
                    if AggFn::from_word(call).is_some() {
                        return Err(self.err(
                            "aggregates are only allowed as whole SELECT items, in HAVING, or in ORDER BY",
                        ));
                    }
                }
                Ok(SqlExpr::Column(self.parse_column_ref()?))
            }
            other => {
                let found = other.map_or("end of input".into(), Tok::describe);
                Err(self.err(format!("expected an expression, found {found}")))
            }
        }
    }

    fn parse_term(&mut self) -> Result<SqlExpr, SqlError> {
        let mut left = self.parse_factor()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => SqlBinOp::Mul,
                Some(Tok::Slash) => SqlBinOp::Div,
                _ => break,
            };
            self.pos += 1;
            let right = self.parse_factor()?;
            left = SqlExpr::binary(op, left, right);
        }
        Ok(left)
    }

    fn parse_expr(&mut self) -> Result<SqlExpr, SqlError> {
        let mut left = self.parse_term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => SqlBinOp::Add,
                Some(Tok::Minus) => SqlBinOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let right = self.parse_term()?;
            left = SqlExpr::binary(op, left, right);
        }
        Ok(left)
    }

    fn parse_operand(&mut self) -> Result<Operand, SqlError> {
        if self.starts_subquery() {
            return Ok(Operand::Query(Box::new(self.parse_parenthesized_query()?)));
        }
        if let Some(call) = self.peek_call() {
            if AggFn::from_word(call).is_some() {
                return Ok(Operand::Agg(self.parse_agg_call()?));
            }
        }
        Ok(Operand::Expr(self.parse_expr()?))
    }

    fn parse_atom(&mut self) -> Result<Atom, SqlError> {
        let left = self.parse_operand()?;
        if self.peek_kw("IN") {
            let expr = match left {
                Operand::Expr(e) => e,
                _ => return Err(self.err("the left side of IN must be a scalar expression")),
            };
            self.pos += 1;
            self.expect(&Tok::LParen)?;
            if self.peek_kw("SELECT") {
                let query = self.parse_query()?;
                self.expect(&Tok::RParen)?;
                return Ok(Atom::InQuery {
                    expr,
                    query: Box::new(query),
                });
            }
            let mut values = Vec::new();
            loop {
                match self.peek() {
                    Some(Tok::Number(n)) => {
                        values.push(SqlExpr::Number(*n));
                        self.pos += 1;
                    }
                    Some(Tok::Str(s)) => {
                        values.push(SqlExpr::Str(s.clone()));
                        self.pos += 1;
                    }
                    _ => return Err(self.err("IN list items must be number or string literals")),
                }
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
            self.expect(&Tok::RParen)?;
            return Ok(Atom::InList { expr, values });
        }
        let op = match self.peek() {
            Some(Tok::Cmp(op)) => {
                let op = *op;
                self.pos += 1;
                op
            }
            other => {
                let found = other.map_or("end of input".into(), Tok::describe);
                return Err(self.err(format!("expected a comparison operator, found {found}")));
            }
        };
        let right = self.parse_operand()?;
        Ok(Atom::Cmp { left, op, right })
    }

    /// One conjunct: either a parenthesized `OR` group or a single atom.
    fn parse_cond_group(&mut self) -> Result<OrGroup, SqlError> {
        if matches!(self.peek(), Some(Tok::LParen)) && !self.starts_subquery() {
            // `(` is ambiguous: an OR group or a parenthesized arithmetic
            // expression inside an atom. Try the group reading first and
            // fall back to the atom reading.
            let snapshot = self.pos;
            let attempt = (|| -> Result<OrGroup, SqlError> {
                self.expect(&Tok::LParen)?;
                let mut atoms = vec![self.parse_atom()?];
                while self.eat_kw("OR") {
                    atoms.push(self.parse_atom()?);
                }
                self.expect(&Tok::RParen)?;
                Ok(atoms)
            })();
            match attempt {
                Ok(group) => return Ok(group),
                Err(_) => self.pos = snapshot,
            }
        }
        Ok(vec![self.parse_atom()?])
    }

    fn parse_cond_list(&mut self) -> Result<Vec<OrGroup>, SqlError> {
        let mut groups = vec![self.parse_cond_group()?];
        loop {
            if self.eat_kw("AND") {
                groups.push(self.parse_cond_group()?);
            } else if self.peek_kw("OR") {
                return Err(self.err("parenthesize OR groups: `(a OR b)`"));
            } else {
                break;
            }
        }
        Ok(groups)
    }

    fn parse_select_item(&mut self) -> Result<SelectItem, SqlError> {
        if matches!(self.peek(), Some(Tok::Star)) {
            return Err(self.err("`SELECT *` is not supported; project explicit columns"));
        }
        if let Some(call) = self.peek_call() {
            if AggFn::from_word(call).is_some() {
                let agg = self.parse_agg_call()?;
                return Ok(SelectItem {
                    expr: agg.arg,
                    aggregate: Some(agg.func),
                    distinct: agg.distinct,
                });
            }
        }
        Ok(SelectItem::plain(self.parse_expr()?))
    }

    fn parse_from(&mut self, query: &mut SqlQuery) -> Result<(), SqlError> {
        query.from.tables.push(self.expect_ident("a table name")?);
        loop {
            if self.eat(&Tok::Comma) {
                query.from.tables.push(self.expect_ident("a table name")?);
                continue;
            }
            let joined = if self.peek_kw("INNER") {
                if !self.peek_kw_at(1, "JOIN") {
                    return Err(self.err("expected `JOIN` after `INNER`"));
                }
                self.pos += 2;
                true
            } else {
                self.eat_kw("JOIN")
            };
            if !joined {
                break;
            }
            query.from.tables.push(self.expect_ident("a table name")?);
            self.expect_kw("ON")?;
            loop {
                let offset = self.offset();
                let left = self.parse_column_ref()?;
                self.expect(&Tok::Cmp(CmpOp::Eq))?;
                let right = self.parse_column_ref()?;
                match (left.as_qualified(), right.as_qualified()) {
                    (Some(l), Some(r)) if l.table != r.table => {
                        query.from.joins.push(JoinCond::new(l, r));
                    }
                    (Some(_), Some(_)) => {
                        return Err(syntax(
                            offset,
                            "join conditions must link two different tables",
                        ));
                    }
                    _ => {
                        return Err(syntax(
                            offset,
                            "join conditions require table-qualified columns",
                        ));
                    }
                }
                if !self.eat_kw("AND") {
                    break;
                }
            }
        }
        Ok(())
    }

    fn parse_order_by(&mut self) -> Result<Vec<OrderKey>, SqlError> {
        self.expect_kw("ORDER")?;
        self.expect_kw("BY")?;
        let mut keys = Vec::new();
        loop {
            let expr = if let Some(call) = self.peek_call() {
                if AggFn::from_word(call).is_some() {
                    Operand::Agg(self.parse_agg_call()?)
                } else {
                    Operand::Expr(self.parse_expr()?)
                }
            } else {
                Operand::Expr(self.parse_expr()?)
            };
            let desc = if self.eat_kw("DESC") {
                true
            } else {
                self.eat_kw("ASC");
                false
            };
            keys.push(OrderKey { expr, desc });
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        Ok(keys)
    }

    fn parse_limit(&mut self) -> Result<u64, SqlError> {
        self.expect_kw("LIMIT")?;
        match self.peek() {
            Some(Tok::Number(n)) if n.fract() == 0.0 && *n >= 0.0 => {
                let n = *n as u64;
                self.pos += 1;
                Ok(n)
            }
            _ => Err(self.err("LIMIT requires a non-negative integer")),
        }
    }

    /// A single `SELECT` core, or a parenthesized query.
    fn parse_core(&mut self) -> Result<SqlQuery, SqlError> {
        if matches!(self.peek(), Some(Tok::LParen)) {
            return self.parse_parenthesized_query();
        }
        let mut query = SqlQuery::new();
        self.expect_kw("SELECT")?;
        query.distinct = self.eat_kw("DISTINCT");
        loop {
            query.select.push(self.parse_select_item()?);
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect_kw("FROM")?;
        self.parse_from(&mut query)?;
        if self.eat_kw("WHERE") {
            query.where_ = self.parse_cond_list()?;
        }
        if self.peek_kw("GROUP") {
            self.pos += 1;
            self.expect_kw("BY")?;
            loop {
                query.group_by.push(self.parse_column_ref()?);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        if self.eat_kw("HAVING") {
            query.having = self.parse_cond_list()?;
        }
        Ok(query)
    }

    fn eat_set_op(&mut self) -> Option<SetOpKind> {
        for (kw, kind) in [
            ("UNION", SetOpKind::Union),
            ("INTERSECT", SetOpKind::Intersect),
            ("EXCEPT", SetOpKind::Except),
        ] {
            if self.eat_kw(kw) {
                return Some(kind);
            }
        }
        None
    }

    fn parse_query(&mut self) -> Result<SqlQuery, SqlError> {
        let mut head = self.parse_core()?;
        while let Some(kind) = self.eat_set_op() {
            if !head.order_by.is_empty() || head.limit.is_some() {
                return Err(self.err("a set operation member cannot carry ORDER BY or LIMIT"));
            }
            let member = self.parse_core()?;
            if !member.order_by.is_empty() || member.limit.is_some() {
                return Err(self.err("a set operation member cannot carry ORDER BY or LIMIT"));
            }
            head.set_ops.push((kind, member));
        }
        if self.peek_kw("ORDER") {
            if !head.set_ops.is_empty() {
                return Err(self.err("ORDER BY is not supported with set operations"));
            }
            head.order_by = self.parse_order_by()?;
        }
        if self.peek_kw("LIMIT") {
            if !head.set_ops.is_empty() {
                return Err(self.err("LIMIT is not supported with set operations"));
            }
            head.limit = Some(self.parse_limit()?);
        }
        Ok(head)
    }
}

/// Parse one `SELECT` statement of the subset. A single trailing `;` is
/// tolerated.
pub fn parse_sql(text: &str) -> Result<SqlQuery, SqlError> {
    let toks = lex(text)?;
    for lexed in &toks {
        if let Tok::Word(w) = &lexed.tok {
            let upper = w.to_ascii_uppercase();
            if UNSUPPORTED.contains(&upper.as_str()) {
                return Err(SqlError::Unsupported { keyword: upper });
            }
        }
    }
    let mut parser = Parser {
        toks,
        pos: 0,
        text_len: text.len(),
    };
    let query = parser.parse_query()?;
    parser.eat(&Tok::Semi);
    if let Some(tok) = parser.peek() {
        let found = tok.describe();
        return Err(parser.err(format!("unexpected trailing {found}")));
    }
    let depth = query.depth();
    if depth > MAX_QUERY_DEPTH {
        return Err(SqlError::Nesting {
            depth,
            max: MAX_QUERY_DEPTH,
        });
    }
    Ok(query)
}
