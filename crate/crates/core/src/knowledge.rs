//! The knowledge DSL: domain formulas as first-class values.
//!
//! An item is a single line `NAME = BODY`. The body is one of three kinds,
//! decided purely by syntax:
//!
//! * calculation — arithmetic over concepts:
//!   `EBIT = Revenue - Cost of Goods Sold - Operating Expenses`
//! * union — a named member set: `First Tier City = IN ( Beijing , Shanghai )`
//! * condition — a conjunction of threshold predicates:
//!   `Real Estate Bubble = price to income ratio > 30 AND vacancy rate > 0.2`
//!
//! Concepts are multi-word phrases: any maximal run of text between
//! operators and delimiters is one `ConceptRef`, so `Cost of Goods Sold` is
//! a single leaf. The reserved words `IN` and `AND` (uppercase only) split
//! runs; `NOW`, `YEAR` and `ABS` are function names when directly followed
//! by `(`. Items are flat: a parenthesized sub-expression may not introduce
//! its own `NAME = ...` item.
//!
//! [`render_knowledge`] produces the canonical form — single spaces between
//! tokens, parentheses only where precedence requires them — and
//! `parse(render(item))` reproduces the item exactly.

use thiserror::Error;

use crate::text::normalize;

/// Maximum expression-tree depth accepted by the parser.
pub const MAX_DEPTH: usize = 8;

/// The three body kinds, derived from syntax rather than declared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum KnowledgeKind {
    Calculation,
    Union,
    Condition,
}

impl std::fmt::Display for KnowledgeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KnowledgeKind::Calculation => write!(f, "calculation"),
            KnowledgeKind::Union => write!(f, "union"),
            KnowledgeKind::Condition => write!(f, "condition"),
        }
    }
}

/// Binary arithmetic operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    /// Binding strength: additive 1, multiplicative 2.
    pub fn precedence(self) -> u8 {
        match self {
            ArithOp::Add | ArithOp::Sub => 1,
            ArithOp::Mul | ArithOp::Div => 2,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }
}

/// Comparison operators used in condition predicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
        }
    }

    /// The operator that holds when the operands are swapped:
    /// `a < b` iff `b > a`.
    pub fn flipped(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
            CmpOp::Eq => CmpOp::Eq,
            CmpOp::Ne => CmpOp::Ne,
        }
    }
}

/// Built-in scalar functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FuncName {
    Now,
    Year,
    Abs,
}

impl FuncName {
    pub fn as_str(self) -> &'static str {
        match self {
            FuncName::Now => "NOW",
            FuncName::Year => "YEAR",
            FuncName::Abs => "ABS",
        }
    }

    fn from_word(w: &str) -> Option<Self> {
        match w {
            "NOW" => Some(FuncName::Now),
            "YEAR" => Some(FuncName::Year),
            "ABS" => Some(FuncName::Abs),
            _ => None,
        }
    }
}

/// An arithmetic expression over concepts, numbers, and functions.
#[derive(Debug, Clone, PartialEq)]
pub enum ConceptExpr {
    /// A multi-word concept phrase, e.g. `Cost of Goods Sold`.
    Concept(String),
    Number(f64),
    Func {
        name: FuncName,
        args: Vec<ConceptExpr>,
    },
    Binary {
        op: ArithOp,
        left: Box<ConceptExpr>,
        right: Box<ConceptExpr>,
    },
}

impl ConceptExpr {
    /// Tree depth with leaves at depth 1.
    pub fn depth(&self) -> usize {
        match self {
            ConceptExpr::Concept(_) | ConceptExpr::Number(_) => 1,
            ConceptExpr::Func { args, .. } => {
                1 + args.iter().map(ConceptExpr::depth).max().unwrap_or(0)
            }
            ConceptExpr::Binary { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

/// Right-hand side of a predicate: a constant or a function call, never a
/// concept — conditions compare a concept expression against a fixed value.
#[derive(Debug, Clone, PartialEq)]
pub enum PredRhs {
    Number(f64),
    Str(String),
    Func {
        name: FuncName,
        args: Vec<ConceptExpr>,
    },
}

/// One threshold predicate of a condition body.
#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    pub lhs: ConceptExpr,
    pub op: CmpOp,
    pub rhs: PredRhs,
}

/// The body of a knowledge item.
#[derive(Debug, Clone, PartialEq)]
pub enum KnowledgeBody {
    Calculation(ConceptExpr),
    /// Ordered member concepts, at least two, pairwise distinct when
    /// normalized.
    Union(Vec<String>),
    /// Conjunction of predicates, at least one.
    Condition(Vec<Predicate>),
}

/// A named domain formula plus its bookkeeping fields. `id` and `domain`
/// are empty on freshly parsed items and are filled in by the bank.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeItem {
    pub id: String,
    pub name: String,
    pub domain: String,
    pub source: Option<String>,
    pub body: KnowledgeBody,
}

impl KnowledgeItem {
    pub fn kind(&self) -> KnowledgeKind {
        match self.body {
            KnowledgeBody::Calculation(_) => KnowledgeKind::Calculation,
            KnowledgeBody::Union(_) => KnowledgeKind::Union,
            KnowledgeBody::Condition(_) => KnowledgeKind::Condition,
        }
    }

    pub fn with_id(mut self, id: &str) -> Self {
        self.id = id.to_string();
        self
    }

    pub fn with_domain(mut self, domain: &str) -> Self {
        self.domain = domain.to_string();
        self
    }

    pub fn with_source(mut self, source: &str) -> Self {
        self.source = Some(source.to_string());
        self
    }

    /// Name normalized for indexing and duplicate detection.
    pub fn normalized_name(&self) -> String {
        normalize(&self.name)
    }

    /// Re-check the structural invariants. Parsed items always pass; this
    /// guards items assembled programmatically.
    pub fn validate(&self) -> Result<(), DslError> {
        validate_name(&self.name)?;
        match &self.body {
            KnowledgeBody::Calculation(expr) => check_depth(expr)?,
            KnowledgeBody::Union(members) => {
                if members.len() < 2 {
                    return Err(DslError::UnionArity {
                        count: members.len(),
                    });
                }
                let mut seen = std::collections::BTreeSet::new();
                for m in members {
                    if !seen.insert(normalize(m)) {
                        return Err(DslError::DuplicateUnionMember { member: m.clone() });
                    }
                }
            }
            KnowledgeBody::Condition(preds) => {
                if preds.is_empty() {
                    return Err(DslError::Syntax {
                        offset: 0,
                        expected: "at least one predicate".into(),
                        found: "none".into(),
                    });
                }
                for p in preds {
                    check_depth(&p.lhs)?;
                    if let PredRhs::Func { args, .. } = &p.rhs {
                        for a in args {
                            check_depth(a)?;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Errors raised while parsing or validating a knowledge item.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DslError {
    #[error("syntax error at byte {offset}: expected {expected}, found {found}")]
    Syntax {
        offset: usize,
        expected: String,
        found: String,
    },
    #[error("flatness violation at byte {offset}: items cannot nest `NAME = ...` inside a body")]
    Flatness { offset: usize },
    #[error("division by the literal zero at byte {offset}")]
    ZeroDivisor { offset: usize },
    #[error("expression depth {depth} exceeds the maximum of {max}")]
    TooDeep { depth: usize, max: usize },
    #[error("union bodies need at least two members, found {count}")]
    UnionArity { count: usize },
    #[error("duplicate union member `{member}` (members are distinct after normalization)")]
    DuplicateUnionMember { member: String },
}

fn check_depth(expr: &ConceptExpr) -> Result<(), DslError> {
    let depth = expr.depth();
    if depth > MAX_DEPTH {
        return Err(DslError::TooDeep {
            depth,
            max: MAX_DEPTH,
        });
    }
    if let ConceptExpr::Func { args, .. } = expr {
        for a in args {
            check_depth(a)?;
        }
    }
    if let ConceptExpr::Binary { left, right, .. } = expr {
        check_depth(left)?;
        check_depth(right)?;
    }
    Ok(())
}

const NAME_FORBIDDEN: &[char] = &['+', '-', '*', '/', '(', ')', ',', '<', '>', '!', '=', '\''];

fn validate_name(name: &str) -> Result<(), DslError> {
    if name.trim().is_empty() {
        return Err(DslError::Syntax {
            offset: 0,
            expected: "a non-empty item name before `=`".into(),
            found: "nothing".into(),
        });
    }
    if let Some(bad) = name.chars().find(|c| NAME_FORBIDDEN.contains(c)) {
        return Err(DslError::Syntax {
            offset: 0,
            expected: "a plain phrase as the item name".into(),
            found: format!("`{bad}`"),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Phrase(String),
    Number(f64),
    Str(String),
    Op(ArithOp),
    Cmp(CmpOp),
    LParen,
    RParen,
    Comma,
    In,
    And,
    Func(FuncName),
}

fn tok_name(t: &Tok) -> String {
    match t {
        Tok::Phrase(p) => format!("phrase `{p}`"),
        Tok::Number(n) => format!("number {n}"),
        Tok::Str(s) => format!("string '{s}'"),
        Tok::Op(op) => format!("`{}`", op.symbol()),
        Tok::Cmp(op) => format!("`{}`", op.symbol()),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::Comma => "`,`".into(),
        Tok::In => "`IN`".into(),
        Tok::And => "`AND`".into(),
        Tok::Func(f) => format!("function `{}`", f.as_str()),
    }
}

fn is_number_word(w: &str) -> bool {
    let mut dots = 0;
    for (i, c) in w.char_indices() {
        match c {
            '0'..='9' => {}
            '.' if i > 0 && i + 1 < w.len() => dots += 1,
            _ => return false,
        }
    }
    !w.is_empty() && dots <= 1
}

struct Lexer {
    toks: Vec<(Tok, usize)>,
    /// Words of the raw run currently being collected.
    run: Vec<(String, usize)>,
}

impl Lexer {
    fn flush_pending(&mut self, pending: &mut Vec<(String, usize)>) {
        if pending.is_empty() {
            return;
        }
        let offset = pending[0].1;
        if pending.len() == 1 && is_number_word(&pending[0].0) {
            let value: f64 = pending[0].0.parse().expect("digit-checked literal");
            self.toks.push((Tok::Number(value), offset));
        } else {
            let phrase = pending
                .iter()
                .map(|(w, _)| w.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            self.toks.push((Tok::Phrase(phrase), offset));
        }
        pending.clear();
    }

    /// End the current run, splitting out `IN`/`AND` keywords. When the run
    /// is terminated by `(`, a trailing `NOW`/`YEAR`/`ABS` word becomes a
    /// function token.
    fn flush_run(&mut self, next_is_lparen: bool) {
        let words = std::mem::take(&mut self.run);
        let mut pending: Vec<(String, usize)> = Vec::new();
        let last = words.len().saturating_sub(1);
        for (i, (word, offset)) in words.into_iter().enumerate() {
            match word.as_str() {
                "IN" => {
                    self.flush_pending(&mut pending);
                    self.toks.push((Tok::In, offset));
                }
                "AND" => {
                    self.flush_pending(&mut pending);
                    self.toks.push((Tok::And, offset));
                }
                w => {
                    if i == last && next_is_lparen {
                        if let Some(func) = FuncName::from_word(w) {
                            self.flush_pending(&mut pending);
                            self.toks.push((Tok::Func(func), offset));
                            continue;
                        }
                    }
                    pending.push((word, offset));
                }
            }
        }
        self.flush_pending(&mut pending);
    }
}

fn lex(body: &str, base: usize) -> Result<Vec<(Tok, usize)>, DslError> {
    let mut lexer = Lexer {
        toks: Vec::new(),
        run: Vec::new(),
    };
    let bytes = body.as_bytes();
    let mut word = String::new();
    let mut word_start = 0usize;
    let mut i = 0usize;
    macro_rules! end_word {
        () => {
            if !word.is_empty() {
                lexer
                    .run
                    .push((std::mem::take(&mut word), base + word_start));
            }
        };
    }
    while i < bytes.len() {
        let c = body[i..].chars().next().expect("in bounds");
        let clen = c.len_utf8();
        match c {
            c if c.is_whitespace() => {
                end_word!();
                i += clen;
            }
            '(' | ')' | ',' | '+' | '-' | '*' | '/' | '<' | '>' | '=' | '!' | '\'' => {
                end_word!();
                lexer.flush_run(c == '(');
                let offset = base + i;
                match c {
                    '(' => lexer.toks.push((Tok::LParen, offset)),
                    ')' => lexer.toks.push((Tok::RParen, offset)),
                    ',' => lexer.toks.push((Tok::Comma, offset)),
                    '+' => lexer.toks.push((Tok::Op(ArithOp::Add), offset)),
                    '-' => lexer.toks.push((Tok::Op(ArithOp::Sub), offset)),
                    '*' => lexer.toks.push((Tok::Op(ArithOp::Mul), offset)),
                    '/' => lexer.toks.push((Tok::Op(ArithOp::Div), offset)),
                    '<' | '>' | '!' | '=' => {
                        let two = bytes.get(i + 1) == Some(&b'=');
                        let cmp = match (c, two) {
                            ('<', true) => CmpOp::Le,
                            ('<', false) => CmpOp::Lt,
                            ('>', true) => CmpOp::Ge,
                            ('>', false) => CmpOp::Gt,
                            ('=', _) => CmpOp::Eq,
                            ('!', true) => CmpOp::Ne,
                            ('!', false) => {
                                return Err(DslError::Syntax {
                                    offset,
                                    expected: "`!=`".into(),
                                    found: "`!`".into(),
                                })
                            }
                            _ => unreachable!(),
                        };
                        lexer.toks.push((Tok::Cmp(cmp), offset));
                        if two && c != '=' {
                            i += 1;
                        }
                    }
                    '\'' => {
                        let rest = &body[i + 1..];
                        match rest.find('\'') {
                            Some(end) => {
                                lexer.toks.push((Tok::Str(rest[..end].to_string()), offset));
                                i += end + 1;
                            }
                            None => {
                                return Err(DslError::Syntax {
                                    offset,
                                    expected: "a closing `'`".into(),
                                    found: "end of input".into(),
                                })
                            }
                        }
                    }
                    _ => unreachable!(),
                }
                i += clen;
            }
            _ => {
                if word.is_empty() {
                    word_start = i;
                }
                word.push(c);
                i += clen;
            }
        }
    }
    end_word!();
    lexer.flush_run(false);
    Ok(lexer.toks)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(_, o)| *o)
    }

    fn advance(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, expected: &str) -> DslError {
        let found = self.peek().map_or("end of input".to_string(), tok_name);
        DslError::Syntax {
            offset: self.offset(),
            expected: expected.to_string(),
            found,
        }
    }

    fn parse_expr(&mut self) -> Result<ConceptExpr, DslError> {
        let mut left = self.parse_term()?;
        while let Some(Tok::Op(op @ (ArithOp::Add | ArithOp::Sub))) = self.peek() {
            let op = *op;
            self.advance();
            let right = self.parse_term()?;
            left = ConceptExpr::Binary {
                op,
                left: Box::new(left),
                right: Box::new(right),
            };
        }
        Ok(left)
    }

    fn parse_term(&mut self) -> Result<ConceptExpr, DslError> {
        let mut left = self.parse_factor()?;
        while let Some(Tok::Op(op @ (ArithOp::Mul | ArithOp::Div))) = self.peek() {
            let op = *op;
            self.advance();
            let rhs_offset = self.offset();
            let right = self.parse_factor()?;
            if op == ArithOp::Div && matches!(right, ConceptExpr::Number(n) if n == 0.0) {
                return Err(DslError::ZeroDivisor { offset: rhs_offset });
            }
            left = ConceptExpr::Binary {
                op,
                left: Box::new(left),
                right: Box::new(right),
            };
        }
        Ok(left)
    }

    fn parse_factor(&mut self) -> Result<ConceptExpr, DslError> {
        match self.peek() {
            Some(Tok::Number(_)) => {
                if let Some(Tok::Number(n)) = self.advance() {
                    Ok(ConceptExpr::Number(n))
                } else {
                    unreachable!()
                }
            }
            Some(Tok::Phrase(_)) => {
                if let Some(Tok::Phrase(p)) = self.advance() {
                    Ok(ConceptExpr::Concept(p))
                } else {
                    unreachable!()
                }
            }
            Some(Tok::Func(_)) => {
                if let Some(Tok::Func(name)) = self.advance() {
                    let args = self.parse_func_args()?;
                    Ok(ConceptExpr::Func { name, args })
                } else {
                    unreachable!()
                }
            }
            Some(Tok::LParen) => {
                self.advance();
                let inner = self.parse_expr()?;
                match self.peek() {
                    Some(Tok::RParen) => {
                        self.advance();
                        Ok(inner)
                    }
                    Some(Tok::Cmp(CmpOp::Eq)) => Err(DslError::Flatness {
                        offset: self.offset(),
                    }),
                    Some(Tok::Cmp(_)) => Err(DslError::Syntax {
                        offset: self.offset(),
                        expected: "`)` (comparisons cannot appear inside parentheses)".into(),
                        found: self.peek().map_or(String::new(), tok_name),
                    }),
                    _ => Err(self.err("`)`")),
                }
            }
            _ => Err(self.err("a concept, number, function call, or `(`")),
        }
    }

    fn parse_func_args(&mut self) -> Result<Vec<ConceptExpr>, DslError> {
        match self.peek() {
            Some(Tok::LParen) => {
                self.advance();
            }
            _ => return Err(self.err("`(` after a function name")),
        }
        let mut args = Vec::new();
        if matches!(self.peek(), Some(Tok::RParen)) {
            self.advance();
            return Ok(args);
        }
        loop {
            args.push(self.parse_expr()?);
            match self.peek() {
                Some(Tok::Comma) => {
                    self.advance();
                }
                Some(Tok::RParen) => {
                    self.advance();
                    return Ok(args);
                }
                _ => return Err(self.err("`,` or `)` in a function call")),
            }
        }
    }

    fn parse_pred_rhs(&mut self) -> Result<PredRhs, DslError> {
        match self.peek() {
            Some(Tok::Number(_)) => {
                if let Some(Tok::Number(n)) = self.advance() {
                    Ok(PredRhs::Number(n))
                } else {
                    unreachable!()
                }
            }
            Some(Tok::Str(_)) => {
                if let Some(Tok::Str(s)) = self.advance() {
                    Ok(PredRhs::Str(s))
                } else {
                    unreachable!()
                }
            }
            Some(Tok::Func(_)) => {
                if let Some(Tok::Func(name)) = self.advance() {
                    let args = self.parse_func_args()?;
                    Ok(PredRhs::Func { name, args })
                } else {
                    unreachable!()
                }
            }
            _ => Err(self.err("a number, string, or function call on the right of a comparison")),
        }
    }

    fn parse_union(&mut self) -> Result<KnowledgeBody, DslError> {
        self.advance(); // IN
        match self.peek() {
            Some(Tok::LParen) => {
                self.advance();
            }
            _ => return Err(self.err("`(` after `IN`")),
        }
        let mut members: Vec<String> = Vec::new();
        loop {
            match self.advance() {
                Some(Tok::Phrase(p)) => members.push(p),
                Some(t) => {
                    return Err(DslError::Syntax {
                        offset: self.offset(),
                        expected: "a concept as a union member".into(),
                        found: tok_name(&t),
                    })
                }
                None => return Err(self.err("a concept as a union member")),
            }
            match self.peek() {
                Some(Tok::Comma) => {
                    self.advance();
                }
                Some(Tok::RParen) => {
                    self.advance();
                    break;
                }
                _ => return Err(self.err("`,` or `)` in a union body")),
            }
        }
        if members.len() < 2 {
            return Err(DslError::UnionArity {
                count: members.len(),
            });
        }
        let mut seen = std::collections::BTreeSet::new();
        for m in &members {
            if !seen.insert(normalize(m)) {
                return Err(DslError::DuplicateUnionMember { member: m.clone() });
            }
        }
        Ok(KnowledgeBody::Union(members))
    }

    fn parse_body(&mut self) -> Result<KnowledgeBody, DslError> {
        if matches!(self.peek(), Some(Tok::In)) {
            let body = self.parse_union()?;
            self.expect_end()?;
            return Ok(body);
        }
        let first = self.parse_expr()?;
        if let Some(Tok::Cmp(_)) = self.peek() {
            let mut predicates = Vec::new();
            let mut lhs = first;
            loop {
                let op = match self.advance() {
                    Some(Tok::Cmp(op)) => op,
                    _ => return Err(self.err("a comparison operator")),
                };
                let rhs = self.parse_pred_rhs()?;
                predicates.push(Predicate { lhs, op, rhs });
                match self.peek() {
                    Some(Tok::And) => {
                        self.advance();
                        lhs = self.parse_expr()?;
                        if !matches!(self.peek(), Some(Tok::Cmp(_))) {
                            return Err(self.err("a comparison operator after `AND`"));
                        }
                    }
                    None => break,
                    _ => return Err(self.err("`AND` or end of input (conjunctions only)")),
                }
            }
            return Ok(KnowledgeBody::Condition(predicates));
        }
        self.expect_end()?;
        Ok(KnowledgeBody::Calculation(first))
    }

    fn expect_end(&mut self) -> Result<(), DslError> {
        if self.pos < self.toks.len() {
            return Err(self.err("end of input"));
        }
        Ok(())
    }
}

/// Split `NAME = BODY` at the first `=` that is not part of `<=`, `>=`, or
/// `!=`. Returns the name span and the byte offset of the body.
fn split_name(text: &str) -> Option<(&str, usize)> {
    let bytes = text.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'=' {
            let prev = bytes[..i].iter().rev().find(|b| !b.is_ascii_whitespace());
            if matches!(prev, Some(b'<') | Some(b'>') | Some(b'!')) {
                continue;
            }
            return Some((&text[..i], i + 1));
        }
    }
    None
}

/// Parse one DSL line into an item with empty `id` and `domain`.
pub fn parse_knowledge(text: &str) -> Result<KnowledgeItem, DslError> {
    let (raw_name, body_start) = split_name(text).ok_or_else(|| DslError::Syntax {
        offset: text.len(),
        expected: "`=` between the item name and its body".into(),
        found: "end of input".into(),
    })?;
    let name = raw_name.split_whitespace().collect::<Vec<_>>().join(" ");
    validate_name(&name)?;
    let toks = lex(&text[body_start..], body_start)?;
    if toks.is_empty() {
        return Err(DslError::Syntax {
            offset: text.len(),
            expected: "a body after `=`".into(),
            found: "end of input".into(),
        });
    }
    let mut parser = Parser {
        toks,
        pos: 0,
        end: text.len(),
    };
    let body = parser.parse_body()?;
    let item = KnowledgeItem {
        id: String::new(),
        name,
        domain: String::new(),
        source: None,
        body,
    };
    item.validate()?;
    Ok(item)
}

// ---------------------------------------------------------------------------
// Canonical rendering
// ---------------------------------------------------------------------------

fn expr_tokens(expr: &ConceptExpr, parent_prec: u8, is_right: bool, out: &mut Vec<String>) {
    match expr {
        ConceptExpr::Concept(c) => out.push(c.clone()),
        ConceptExpr::Number(n) => out.push(format!("{n}")),
        ConceptExpr::Func { name, args } => {
            out.push(name.as_str().to_string());
            out.push("(".into());
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push(",".into());
                }
                expr_tokens(a, 0, false, out);
            }
            out.push(")".into());
        }
        ConceptExpr::Binary { op, left, right } => {
            let prec = op.precedence();
            let needs = prec < parent_prec || (prec == parent_prec && is_right);
            if needs {
                out.push("(".into());
            }
            expr_tokens(left, prec, false, out);
            out.push(op.symbol().to_string());
            expr_tokens(right, prec, true, out);
            if needs {
                out.push(")".into());
            }
        }
    }
}

fn rhs_tokens(rhs: &PredRhs, out: &mut Vec<String>) {
    match rhs {
        PredRhs::Number(n) => out.push(format!("{n}")),
        PredRhs::Str(s) => out.push(format!("'{s}'")),
        PredRhs::Func { name, args } => expr_tokens(
            &ConceptExpr::Func {
                name: *name,
                args: args.clone(),
            },
            0,
            false,
            out,
        ),
    }
}

/// Canonical body text: tokens joined by single spaces, parentheses only
/// where precedence requires them.
pub fn render_body(body: &KnowledgeBody) -> String {
    let mut out: Vec<String> = Vec::new();
    match body {
        KnowledgeBody::Calculation(expr) => expr_tokens(expr, 0, false, &mut out),
        KnowledgeBody::Union(members) => {
            out.push("IN".into());
            out.push("(".into());
            for (i, m) in members.iter().enumerate() {
                if i > 0 {
                    out.push(",".into());
                }
                out.push(m.clone());
            }
            out.push(")".into());
        }
        KnowledgeBody::Condition(preds) => {
            for (i, p) in preds.iter().enumerate() {
                if i > 0 {
                    out.push("AND".into());
                }
                expr_tokens(&p.lhs, 0, false, &mut out);
                out.push(p.op.symbol().to_string());
                rhs_tokens(&p.rhs, &mut out);
            }
        }
    }
    out.join(" ")
}

/// Canonical one-line form `NAME = BODY`.
pub fn render_knowledge(item: &KnowledgeItem) -> String {
    format!("{} = {}", item.name, render_body(&item.body))
}

// ---------------------------------------------------------------------------
// Concept extraction
// ---------------------------------------------------------------------------

fn collect_concepts(expr: &ConceptExpr, out: &mut Vec<String>) {
    match expr {
        ConceptExpr::Concept(c) => out.push(c.clone()),
        ConceptExpr::Number(_) => {}
        ConceptExpr::Func { args, .. } => {
            for a in args {
                collect_concepts(a, out);
            }
        }
        ConceptExpr::Binary { left, right, .. } => {
            collect_concepts(left, out);
            collect_concepts(right, out);
        }
    }
}

/// Distinct concept phrases of an item in document order (left-to-right
/// depth-first walk; later duplicates, compared after normalization, are
/// dropped).
pub fn concepts_of(item: &KnowledgeItem) -> Vec<String> {
    let mut raw = Vec::new();
    match &item.body {
        KnowledgeBody::Calculation(expr) => collect_concepts(expr, &mut raw),
        KnowledgeBody::Union(members) => raw.extend(members.iter().cloned()),
        KnowledgeBody::Condition(preds) => {
            for p in preds {
                collect_concepts(&p.lhs, &mut raw);
                if let PredRhs::Func { args, .. } = &p.rhs {
                    for a in args {
                        collect_concepts(a, &mut raw);
                    }
                }
            }
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    raw.retain(|c| seen.insert(normalize(c)));
    raw
}

#[cfg(test)]
mod tests {
    use super::*;

    fn concept(s: &str) -> ConceptExpr {
        ConceptExpr::Concept(s.into())
    }

    fn bin(op: ArithOp, l: ConceptExpr, r: ConceptExpr) -> ConceptExpr {
        ConceptExpr::Binary {
            op,
            left: Box::new(l),
            right: Box::new(r),
        }
    }

    #[test]
    fn parses_left_associative_calculation() {
        let item = parse_knowledge("EBIT = Revenue - Cost of Goods Sold - Operating Expenses")
            .expect("parses");
        assert_eq!(item.name, "EBIT");
        assert_eq!(item.kind(), KnowledgeKind::Calculation);
        let expect = bin(
            ArithOp::Sub,
            bin(
                ArithOp::Sub,
                concept("Revenue"),
                concept("Cost of Goods Sold"),
            ),
            concept("Operating Expenses"),
        );
        assert_eq!(item.body, KnowledgeBody::Calculation(expect));
        assert_eq!(
            concepts_of(&item),
            ["Revenue", "Cost of Goods Sold", "Operating Expenses"]
        );
    }

    #[test]
    fn parses_division_calculation() {
        let item = parse_knowledge("People Density = total number of People / Area").unwrap();
        let expect = bin(
            ArithOp::Div,
            concept("total number of People"),
            concept("Area"),
        );
        assert_eq!(item.body, KnowledgeBody::Calculation(expect));
        assert_eq!(concepts_of(&item), ["total number of People", "Area"]);
    }

    #[test]
    fn parses_degenerate_number_calculation() {
        let item = parse_knowledge("X = 5").unwrap();
        assert_eq!(item.kind(), KnowledgeKind::Calculation);
        assert_eq!(
            item.body,
            KnowledgeBody::Calculation(ConceptExpr::Number(5.0))
        );
        assert!(concepts_of(&item).is_empty());
    }

    #[test]
    fn parses_condition_with_two_predicates() {
        let item = parse_knowledge(
            "Real Estate Bubble = price to income ratio > 30 AND vacancy rate > 0.2",
        )
        .unwrap();
        assert_eq!(item.kind(), KnowledgeKind::Condition);
        let expect = KnowledgeBody::Condition(vec![
            Predicate {
                lhs: concept("price to income ratio"),
                op: CmpOp::Gt,
                rhs: PredRhs::Number(30.0),
            },
            Predicate {
                lhs: concept("vacancy rate"),
                op: CmpOp::Gt,
                rhs: PredRhs::Number(0.2),
            },
        ]);
        assert_eq!(item.body, expect);
        assert_eq!(
            concepts_of(&item),
            ["price to income ratio", "vacancy rate"]
        );
    }

    #[test]
    fn parses_union_in_order() {
        let item =
            parse_knowledge("First Tier City = IN ( Beijing , Shanghai , Guangzhou )").unwrap();
        assert_eq!(item.kind(), KnowledgeKind::Union);
        assert_eq!(
            item.body,
            KnowledgeBody::Union(vec![
                "Beijing".into(),
                "Shanghai".into(),
                "Guangzhou".into()
            ])
        );
        assert_eq!(concepts_of(&item), ["Beijing", "Shanghai", "Guangzhou"]);
    }

    #[test]
    fn parses_condition_with_string_rhs() {
        let item = parse_knowledge("Coastal City = region = 'coast'").unwrap();
        let expect = KnowledgeBody::Condition(vec![Predicate {
            lhs: concept("region"),
            op: CmpOp::Eq,
            rhs: PredRhs::Str("coast".into()),
        }]);
        assert_eq!(item.body, expect);
    }

    #[test]
    fn parses_functions_when_followed_by_paren() {
        let item = parse_knowledge("Company Age = YEAR ( NOW ( ) ) - founded").unwrap();
        let expect = bin(
            ArithOp::Sub,
            ConceptExpr::Func {
                name: FuncName::Year,
                args: vec![ConceptExpr::Func {
                    name: FuncName::Now,
                    args: vec![],
                }],
            },
            concept("founded"),
        );
        assert_eq!(item.body, KnowledgeBody::Calculation(expect));
        assert_eq!(concepts_of(&item), ["founded"]);
        // Without `(` the same words are ordinary concept text.
        let item = parse_knowledge("Fiscal Marker = YEAR end balance").unwrap();
        assert_eq!(
            item.body,
            KnowledgeBody::Calculation(concept("YEAR end balance"))
        );
    }

    #[test]
    fn precedence_binds_multiplication_tighter() {
        let item = parse_knowledge("X = a + b * c").unwrap();
        let expect = bin(
            ArithOp::Add,
            concept("a"),
            bin(ArithOp::Mul, concept("b"), concept("c")),
        );
        assert_eq!(item.body, KnowledgeBody::Calculation(expect));
        assert_eq!(render_knowledge(&item), "X = a + b * c");
    }

    #[test]
    fn rendering_parenthesizes_only_where_needed() {
        let grouped = parse_knowledge("X = ( a + b ) * c").unwrap();
        assert_eq!(render_knowledge(&grouped), "X = ( a + b ) * c");
        let right_assoc = KnowledgeItem {
            id: String::new(),
            name: "X".into(),
            domain: String::new(),
            source: None,
            body: KnowledgeBody::Calculation(bin(
                ArithOp::Sub,
                concept("a"),
                bin(ArithOp::Sub, concept("b"), concept("c")),
            )),
        };
        assert_eq!(render_knowledge(&right_assoc), "X = a - ( b - c )");
        let reparsed = parse_knowledge(&render_knowledge(&right_assoc)).unwrap();
        assert_eq!(reparsed.body, right_assoc.body);
    }

    #[test]
    fn renders_union_and_condition_canonically() {
        let u = parse_knowledge("First Tier City=IN(Beijing,Shanghai)").unwrap();
        assert_eq!(
            render_knowledge(&u),
            "First Tier City = IN ( Beijing , Shanghai )"
        );
        let c = parse_knowledge("Bubble=price>30 AND rate>0.2").unwrap();
        assert_eq!(render_knowledge(&c), "Bubble = price > 30 AND rate > 0.2");
    }

    #[test]
    fn concepts_deduplicate_by_normalized_text() {
        let item = parse_knowledge("D = n / n").unwrap();
        assert_eq!(concepts_of(&item), ["n"]);
        let item = parse_knowledge("D = Net Sales / net_sales").unwrap();
        assert_eq!(concepts_of(&item), ["Net Sales"]);
    }

    #[test]
    fn rejects_item_nesting_inside_parentheses() {
        let err = parse_knowledge("X = ( Y = a + b ) * 2").unwrap_err();
        assert!(matches!(err, DslError::Flatness { .. }), "got {err:?}");
    }

    #[test]
    fn rejects_literal_zero_divisor() {
        let err = parse_knowledge("X = a / 0").unwrap_err();
        assert!(matches!(err, DslError::ZeroDivisor { .. }), "got {err:?}");
        let err = parse_knowledge("X = a / 0.0").unwrap_err();
        assert!(matches!(err, DslError::ZeroDivisor { .. }), "got {err:?}");
        // A non-literal divisor is fine; so is zero anywhere else.
        assert!(parse_knowledge("X = a / b").is_ok());
        assert!(parse_knowledge("X = 0 / a").is_ok());
    }

    #[test]
    fn rejects_disjunctions_in_conditions() {
        let err = parse_knowledge("X = a > 1 OR b > 2").unwrap_err();
        assert!(matches!(err, DslError::Syntax { .. }), "got {err:?}");
    }

    #[test]
    fn rejects_empty_or_invalid_names() {
        assert!(matches!(
            parse_knowledge("= a + b"),
            Err(DslError::Syntax { .. })
        ));
        assert!(matches!(
            parse_knowledge("   = a"),
            Err(DslError::Syntax { .. })
        ));
        assert!(matches!(
            parse_knowledge("a + b"),
            Err(DslError::Syntax { .. })
        ));
    }

    #[test]
    fn rejects_bad_unions() {
        assert!(matches!(
            parse_knowledge("X = IN ( OnlyOne )"),
            Err(DslError::UnionArity { count: 1 })
        ));
        assert!(matches!(
            parse_knowledge("X = IN ( A , a )"),
            Err(DslError::DuplicateUnionMember { .. })
        ));
        assert!(matches!(
            parse_knowledge("X = IN ( A , 5 )"),
            Err(DslError::Syntax { .. })
        ));
        assert!(matches!(
            parse_knowledge("X = IN ( A , B"),
            Err(DslError::Syntax { .. })
        ));
    }

    #[test]
    fn rejects_strings_outside_predicate_rhs() {
        assert!(matches!(
            parse_knowledge("X = 'str' + a"),
            Err(DslError::Syntax { .. })
        ));
    }

    #[test]
    fn rejects_trailing_tokens() {
        assert!(matches!(
            parse_knowledge("X = a + b c ,"),
            Err(DslError::Syntax { .. })
        ));
    }

    #[test]
    fn rejects_expressions_past_max_depth() {
        // Build a left spine of MAX_DEPTH additions: depth = MAX_DEPTH + 1.
        let mut text = String::from("a0");
        for i in 1..=MAX_DEPTH {
            text = format!("{text} + a{i}");
        }
        let err = parse_knowledge(&format!("X = {text}")).unwrap_err();
        assert_eq!(
            err,
            DslError::TooDeep {
                depth: MAX_DEPTH + 1,
                max: MAX_DEPTH
            }
        );
        // One fewer addition is exactly MAX_DEPTH and passes.
        let mut text = String::from("a0");
        for i in 1..MAX_DEPTH {
            text = format!("{text} + a{i}");
        }
        assert!(parse_knowledge(&format!("X = {text}")).is_ok());
    }

    #[test]
    fn unterminated_string_is_a_syntax_error() {
        assert!(matches!(
            parse_knowledge("X = region = 'coast"),
            Err(DslError::Syntax { .. })
        ));
    }

    #[test]
    fn offsets_point_at_the_problem() {
        let text = "X = a / 0";
        match parse_knowledge(text) {
            Err(DslError::ZeroDivisor { offset }) => assert_eq!(&text[offset..offset + 1], "0"),
            other => panic!("expected zero divisor, got {other:?}"),
        }
    }
}

#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    fn phrase() -> impl Strategy<Value = String> {
        proptest::collection::vec("[a-z][a-z]{0,7}", 1..4).prop_map(|ws| ws.join(" "))
    }

    fn number() -> impl Strategy<Value = f64> {
        prop_oneof![
            (1u32..10_000).prop_map(f64::from),
            (1u32..10_000).prop_map(|n| f64::from(n) / 100.0)
        ]
    }

    fn expr() -> impl Strategy<Value = ConceptExpr> {
        let leaf = prop_oneof![
            phrase().prop_map(ConceptExpr::Concept),
            number().prop_map(ConceptExpr::Number),
            Just(ConceptExpr::Func {
                name: FuncName::Now,
                args: vec![]
            }),
        ];
        leaf.prop_recursive(3, 24, 4, |inner| {
            prop_oneof![
                (
                    prop_oneof![
                        Just(ArithOp::Add),
                        Just(ArithOp::Sub),
                        Just(ArithOp::Mul),
                        Just(ArithOp::Div)
                    ],
                    inner.clone(),
                    inner.clone()
                )
                    .prop_map(|(op, l, r)| ConceptExpr::Binary {
                        op,
                        left: Box::new(l),
                        right: Box::new(r),
                    }),
                (
                    prop_oneof![Just(FuncName::Year), Just(FuncName::Abs)],
                    inner
                )
                    .prop_map(|(name, a)| ConceptExpr::Func {
                        name,
                        args: vec![a]
                    }),
            ]
        })
    }

    fn cmp_op() -> impl Strategy<Value = CmpOp> {
        prop_oneof![
            Just(CmpOp::Lt),
            Just(CmpOp::Le),
            Just(CmpOp::Gt),
            Just(CmpOp::Ge),
            Just(CmpOp::Eq),
            Just(CmpOp::Ne)
        ]
    }

    fn predicate() -> impl Strategy<Value = Predicate> {
        let rhs = prop_oneof![
            number().prop_map(PredRhs::Number),
            "[a-z]{1,8}".prop_map(PredRhs::Str),
            Just(PredRhs::Func {
                name: FuncName::Now,
                args: vec![]
            }),
        ];
        (expr(), cmp_op(), rhs).prop_map(|(lhs, op, rhs)| Predicate { lhs, op, rhs })
    }

    fn body() -> impl Strategy<Value = KnowledgeBody> {
        prop_oneof![
            expr().prop_map(KnowledgeBody::Calculation),
            proptest::collection::btree_set(phrase(), 2..5)
                .prop_map(|ms| KnowledgeBody::Union(ms.into_iter().collect())),
            proptest::collection::vec(predicate(), 1..4).prop_map(KnowledgeBody::Condition),
        ]
    }

    fn item() -> impl Strategy<Value = KnowledgeItem> {
        (phrase(), body()).prop_map(|(name, body)| KnowledgeItem {
            id: String::new(),
            name,
            domain: String::new(),
            source: None,
            body,
        })
    }

    proptest! {
        /// Canonical rendering is a section of the parser: `parse ∘ render`
        /// is the identity on well-formed items.
        #[test]
        fn render_parse_round_trip(item in item()) {
            prop_assume!(item.validate().is_ok());
            let text = render_knowledge(&item);
            let reparsed = parse_knowledge(&text)
                .unwrap_or_else(|e| panic!("render produced unparseable `{text}`: {e}"));
            prop_assert_eq!(&reparsed.name, &item.name);
            prop_assert_eq!(&reparsed.body, &item.body);
            // And rendering is idempotent on the reparse.
            prop_assert_eq!(render_knowledge(&reparsed), text);
        }

        /// Kind is a pure function of the body; concepts carry no duplicates.
        #[test]
        fn concepts_are_distinct_after_normalization(item in item()) {
            prop_assume!(item.validate().is_ok());
            let concepts = concepts_of(&item);
            let normalized: Vec<String> =
                concepts.iter().map(|c| crate::text::normalize(c)).collect();
            let distinct: std::collections::BTreeSet<&String> = normalized.iter().collect();
            prop_assert_eq!(distinct.len(), normalized.len());
        }
    }
}
