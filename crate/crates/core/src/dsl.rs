//! The conditional rule language attached to descriptor properties.
//!
//! Grammar (keywords are case-sensitive, whitespace is insignificant):
//!
//! ```text
//! rule    := 'if' cond 'then' operand ('else' operand)? | cond
//! cond    := and ('or' and)*
//! and     := unary ('and' unary)*
//! unary   := 'not' unary | atom
//! atom    := operand cmpop operand | ident 'is' 'set' | ident 'is' 'unset'
//!          | 'true' | 'false' | '(' cond ')'
//! operand := ident | "string" | 'string' | number | 'true' | 'false'
//! cmpop   := '==' | '!=' | '<' | '<=' | '>' | '>='
//! ```
//!
//! Identifiers name inputs of the enclosing plugin. Comparisons involving an
//! unset input are false; ordered comparisons require numeric operands.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde_json::Number;
use thiserror::Error;

use crate::value::{parse_number, Value};

const KEYWORDS: &[&str] = &[
    "if", "then", "else", "and", "or", "not", "is", "set", "unset", "true", "false",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn is_ordered(self) -> bool {
        !matches!(self, CmpOp::Eq | CmpOp::Ne)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    Input(String),
    Literal(Value),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Condition {
    Or(Vec<Condition>),
    And(Vec<Condition>),
    Not(Box<Condition>),
    Cmp {
        lhs: Operand,
        op: CmpOp,
        rhs: Operand,
    },
    IsSet(String),
    Const(bool),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branches {
    pub then_value: Operand,
    pub else_value: Option<Operand>,
}

/// A parsed rule: either a bare condition or an if/then/else.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub condition: Condition,
    pub branches: Option<Branches>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleErrorKind {
    Syntax,
    Type,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message} (at offset {offset})")]
pub struct RuleError {
    pub kind: RuleErrorKind,
    pub message: String,
    /// Byte offset into the rule text.
    pub offset: usize,
}

impl RuleError {
    /// Two-line rendering of `text` with a caret under the offending byte.
    pub fn caret(&self, text: &str) -> String {
        let col = text[..self.offset.min(text.len())].chars().count();
        format!("{text}\n{}^ {}", " ".repeat(col), self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("type error: {0}")]
pub struct EvalError(pub String);

/// Read access to the current effective values of a plugin's inputs.
pub trait EvalContext {
    fn lookup(&self, id: &str) -> Option<Value>;
}

impl EvalContext for BTreeMap<String, Value> {
    fn lookup(&self, id: &str) -> Option<Value> {
        self.get(id).cloned()
    }
}

impl EvalContext for HashMap<String, Value> {
    fn lookup(&self, id: &str) -> Option<Value> {
        self.get(id).cloned()
    }
}

impl<F> EvalContext for F
where
    F: Fn(&str) -> Option<Value>,
{
    fn lookup(&self, id: &str) -> Option<Value> {
        self(id)
    }
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Num(Number),
    Op(CmpOp),
    LParen,
    RParen,
    End,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, RuleError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let syntax = |message: String, offset| RuleError {
        kind: RuleErrorKind::Syntax,
        message,
        offset,
    };
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        match c {
            b'(' => {
                out.push((Tok::LParen, start));
                i += 1;
            }
            b')' => {
                out.push((Tok::RParen, start));
                i += 1;
            }
            b'=' | b'!' | b'<' | b'>' => {
                let next = bytes.get(i + 1).copied();
                let (op, len) = match (c, next) {
                    (b'=', Some(b'=')) => (CmpOp::Eq, 2),
                    (b'!', Some(b'=')) => (CmpOp::Ne, 2),
                    (b'<', Some(b'=')) => (CmpOp::Le, 2),
                    (b'>', Some(b'=')) => (CmpOp::Ge, 2),
                    (b'<', _) => (CmpOp::Lt, 1),
                    (b'>', _) => (CmpOp::Gt, 1),
                    _ => return Err(syntax(format!("unexpected '{}'", c as char), start)),
                };
                out.push((Tok::Op(op), start));
                i += len;
            }
            b'"' | b'\'' => {
                let quote = c;
                let mut s = String::new();
                i += 1;
                let mut closed = false;
                while i < bytes.len() {
                    let ch = text[i..].chars().next().unwrap();
                    if ch as u32 == quote as u32 {
                        i += 1;
                        closed = true;
                        break;
                    }
                    if ch == '\\' {
                        let esc = text[i + 1..].chars().next();
                        match esc {
                            Some('n') => s.push('\n'),
                            Some('t') => s.push('\t'),
                            Some('\\') => s.push('\\'),
                            Some('"') => s.push('"'),
                            Some('\'') => s.push('\''),
                            _ => return Err(syntax("invalid escape".into(), i)),
                        }
                        i += 1 + esc.map_or(0, char::len_utf8);
                        continue;
                    }
                    s.push(ch);
                    i += ch.len_utf8();
                }
                if !closed {
                    return Err(syntax("unterminated string".into(), start));
                }
                out.push((Tok::Str(s), start));
            }
            b'-' | b'0'..=b'9' => {
                i += 1;
                while i < bytes.len()
                    && (bytes[i].is_ascii_digit()
                        || matches!(bytes[i], b'.' | b'e' | b'E')
                        || (matches!(bytes[i], b'+' | b'-')
                            && matches!(bytes[i - 1], b'e' | b'E')))
                {
                    i += 1;
                }
                let lit = &text[start..i];
                let n = parse_number(lit)
                    .ok_or_else(|| syntax(format!("invalid number '{lit}'"), start))?;
                out.push((Tok::Num(n), start));
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                i += 1;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || matches!(bytes[i], b'_' | b'-'))
                {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
            }
            _ => {
                let ch = text[i..].chars().next().unwrap();
                return Err(syntax(format!("unexpected character '{ch}'"), start));
            }
        }
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

/// True when `s` can be used as an input reference inside a rule.
pub fn is_valid_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') && !KEYWORDS.contains(&s)
}

// ---------------------------------------------------------------------------
// Parser

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[i].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn err(&self, message: impl Into<String>) -> RuleError {
        RuleError {
            kind: RuleErrorKind::Syntax,
            message: message.into(),
            offset: self.offset(),
        }
    }

    fn describe(&self) -> String {
        match self.peek() {
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Str(_) => "string".into(),
            Tok::Num(n) => format!("number {n}"),
            Tok::Op(op) => format!("'{}'", op.symbol()),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::End => "end of rule".into(),
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), RuleError> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            Err(self.err(format!("expected '{kw}', found {}", self.describe())))
        }
    }

    fn rule(&mut self) -> Result<Rule, RuleError> {
        if self.is_kw("if") {
            self.bump();
            let condition = self.cond()?;
            self.expect_kw("then")?;
            let then_value = self.operand()?;
            let else_value = if self.is_kw("else") {
                self.bump();
                Some(self.operand()?)
            } else {
                None
            };
            self.end()?;
            Ok(Rule {
                condition,
                branches: Some(Branches {
                    then_value,
                    else_value,
                }),
            })
        } else {
            let condition = self.cond()?;
            self.end()?;
            Ok(Rule {
                condition,
                branches: None,
            })
        }
    }

    fn end(&self) -> Result<(), RuleError> {
        if *self.peek() == Tok::End {
            Ok(())
        } else {
            Err(self.err(format!("unexpected {}", self.describe())))
        }
    }

    fn cond(&mut self) -> Result<Condition, RuleError> {
        let mut items = vec![self.and()?];
        while self.is_kw("or") {
            self.bump();
            items.push(self.and()?);
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            Condition::Or(items)
        })
    }

    fn and(&mut self) -> Result<Condition, RuleError> {
        let mut items = vec![self.unary()?];
        while self.is_kw("and") {
            self.bump();
            items.push(self.unary()?);
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            Condition::And(items)
        })
    }

    fn unary(&mut self) -> Result<Condition, RuleError> {
        if self.is_kw("not") {
            self.bump();
            return Ok(Condition::Not(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Condition, RuleError> {
        if *self.peek() == Tok::LParen {
            self.bump();
            let c = self.cond()?;
            if *self.peek() != Tok::RParen {
                return Err(self.err(format!("expected ')', found {}", self.describe())));
            }
            self.bump();
            return Ok(c);
        }
        let follows_operand = matches!(self.peek_at(1), Tok::Op(_))
            || matches!(self.peek_at(1), Tok::Ident(s) if s == "is");
        if !follows_operand {
            if self.is_kw("true") {
                self.bump();
                return Ok(Condition::Const(true));
            }
            if self.is_kw("false") {
                self.bump();
                return Ok(Condition::Const(false));
            }
        }
        let lhs_offset = self.offset();
        let lhs = self.operand()?;
        if self.is_kw("is") {
            self.bump();
            let Operand::Input(id) = lhs else {
                return Err(RuleError {
                    kind: RuleErrorKind::Syntax,
                    message: "'is set' needs an input name".into(),
                    offset: lhs_offset,
                });
            };
            if self.is_kw("set") {
                self.bump();
                return Ok(Condition::IsSet(id));
            }
            if self.is_kw("unset") {
                self.bump();
                return Ok(Condition::Not(Box::new(Condition::IsSet(id))));
            }
            return Err(self.err(format!(
                "expected 'set' or 'unset', found {}",
                self.describe()
            )));
        }
        let Tok::Op(op) = *self.peek() else {
            return Err(self.err(format!(
                "expected comparison or 'is set', found {}",
                self.describe()
            )));
        };
        self.bump();
        let rhs_offset = self.offset();
        let rhs = self.operand()?;
        if op.is_ordered() {
            for (operand, offset) in [(&lhs, lhs_offset), (&rhs, rhs_offset)] {
                if let Operand::Literal(v) = operand {
                    if v.as_f64().is_none() {
                        return Err(RuleError {
                            kind: RuleErrorKind::Type,
                            message: format!("'{}' needs a numeric operand", op.symbol()),
                            offset,
                        });
                    }
                }
            }
        }
        Ok(Condition::Cmp { lhs, op, rhs })
    }

    fn operand(&mut self) -> Result<Operand, RuleError> {
        let offset = self.offset();
        match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                Ok(Operand::Literal(Value::Text(s)))
            }
            Tok::Num(n) => {
                self.bump();
                Ok(Operand::Literal(Value::Number(n)))
            }
            Tok::Ident(s) if s == "true" || s == "false" => {
                self.bump();
                Ok(Operand::Literal(Value::Bool(s == "true")))
            }
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok(Operand::Input(s))
            }
            _ => Err(RuleError {
                kind: RuleErrorKind::Syntax,
                message: format!("expected a value, found {}", self.describe()),
                offset,
            }),
        }
    }
}

/// Parses a rule sentence.
pub fn parse_rule(text: &str) -> Result<Rule, RuleError> {
    if text.trim().is_empty() {
        return Err(RuleError {
            kind: RuleErrorKind::Syntax,
            message: "empty rule".into(),
            offset: 0,
        });
    }
    let toks = lex(text)?;
    Parser { toks, pos: 0 }.rule()
}

/// True when the text is meant as an if/then/else rule rather than a literal.
pub fn looks_like_rule(text: &str) -> bool {
    let t = text.trim_start();
    t.strip_prefix("if")
        .is_some_and(|rest| rest.starts_with(|c: char| c.is_whitespace() || c == '('))
}

// ---------------------------------------------------------------------------
// Evaluation

fn operand_value(op: &Operand, ctx: &dyn EvalContext) -> Option<Value> {
    match op {
        Operand::Input(id) => ctx.lookup(id),
        Operand::Literal(v) => Some(v.clone()),
    }
}

fn values_equal(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => x.as_f64() == y.as_f64(),
        (Value::Number(_), Value::Text(_)) | (Value::Text(_), Value::Number(_)) => {
            match (a.as_f64(), b.as_f64()) {
                (Some(x), Some(y)) => x == y,
                _ => false,
            }
        }
        (Value::Text(x) | Value::File(x), Value::Text(y) | Value::File(y)) => x == y,
        (Value::Bool(x), Value::Bool(y)) => x == y,
        _ => false,
    }
}

fn compare(lhs: &Value, op: CmpOp, rhs: &Value) -> Result<bool, EvalError> {
    match op {
        CmpOp::Eq => Ok(values_equal(lhs, rhs)),
        CmpOp::Ne => Ok(!values_equal(lhs, rhs)),
        _ => {
            let (Some(x), Some(y)) = (lhs.as_f64(), rhs.as_f64()) else {
                let bad = if lhs.as_f64().is_none() { lhs } else { rhs };
                return Err(EvalError(format!(
                    "'{}' compares non-numeric value '{bad}'",
                    op.symbol()
                )));
            };
            Ok(match op {
                CmpOp::Lt => x < y,
                CmpOp::Le => x <= y,
                CmpOp::Gt => x > y,
                CmpOp::Ge => x >= y,
                CmpOp::Eq | CmpOp::Ne => unreachable!(),
            })
        }
    }
}

impl Condition {
    pub fn eval(&self, ctx: &dyn EvalContext) -> Result<bool, EvalError> {
        match self {
            Condition::Or(items) => {
                for c in items {
                    if c.eval(ctx)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            Condition::And(items) => {
                for c in items {
                    if !c.eval(ctx)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            Condition::Not(c) => Ok(!c.eval(ctx)?),
            Condition::Cmp { lhs, op, rhs } => {
                match (operand_value(lhs, ctx), operand_value(rhs, ctx)) {
                    (Some(a), Some(b)) => compare(&a, *op, &b),
                    _ => Ok(false),
                }
            }
            Condition::IsSet(id) => Ok(ctx.lookup(id).is_some()),
            Condition::Const(b) => Ok(*b),
        }
    }

    fn collect_refs(&self, out: &mut BTreeSet<String>) {
        match self {
            Condition::Or(items) | Condition::And(items) => {
                items.iter().for_each(|c| c.collect_refs(out))
            }
            Condition::Not(c) => c.collect_refs(out),
            Condition::Cmp { lhs, rhs, .. } => {
                for o in [lhs, rhs] {
                    if let Operand::Input(id) = o {
                        out.insert(id.clone());
                    }
                }
            }
            Condition::IsSet(id) => {
                out.insert(id.clone());
            }
            Condition::Const(_) => {}
        }
    }
}

impl Rule {
    /// Evaluates the rule: the condition's truth for bare conditions, otherwise
    /// the selected branch (`None` when false with no else branch).
    pub fn evaluate(&self, ctx: &dyn EvalContext) -> Result<Option<Value>, EvalError> {
        let truth = self.condition.eval(ctx)?;
        Ok(match &self.branches {
            None => Some(Value::Bool(truth)),
            Some(b) if truth => operand_value(&b.then_value, ctx),
            Some(b) => b.else_value.as_ref().and_then(|e| operand_value(e, ctx)),
        })
    }

    /// Every input id the rule reads.
    pub fn references(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.condition.collect_refs(&mut out);
        if let Some(b) = &self.branches {
            for o in std::iter::once(&b.then_value).chain(b.else_value.iter()) {
                if let Operand::Input(id) = o {
                    out.insert(id.clone());
                }
            }
        }
        out
    }

    /// Literal branch values, used to type-check rules against their attachment.
    pub fn literal_results(&self) -> Vec<&Value> {
        match &self.branches {
            None => Vec::new(),
            Some(b) => std::iter::once(&b.then_value)
                .chain(b.else_value.iter())
                .filter_map(|o| match o {
                    Operand::Literal(v) => Some(v),
                    Operand::Input(_) => None,
                })
                .collect(),
        }
    }
}

/// Convenience wrapper over [`Rule::evaluate`].
pub fn evaluate(rule: &Rule, ctx: &dyn EvalContext) -> Result<Option<Value>, EvalError> {
    rule.evaluate(ctx)
}

/// Convenience wrapper over [`Rule::references`].
pub fn references(rule: &Rule) -> BTreeSet<String> {
    rule.references()
}

// ---------------------------------------------------------------------------
// Printer

fn write_string_literal(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\t' => f.write_str("\\t")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Input(id) => f.write_str(id),
            Operand::Literal(Value::Text(s) | Value::File(s)) => write_string_literal(f, s),
            Operand::Literal(Value::Number(n)) => write!(f, "{n}"),
            Operand::Literal(Value::Bool(b)) => write!(f, "{b}"),
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn list(
            f: &mut fmt::Formatter<'_>,
            items: &[Condition],
            sep: &str,
            needs_parens: fn(&Condition) -> bool,
        ) -> fmt::Result {
            for (i, c) in items.iter().enumerate() {
                if i > 0 {
                    write!(f, " {sep} ")?;
                }
                if needs_parens(c) {
                    write!(f, "({c})")?;
                } else {
                    write!(f, "{c}")?;
                }
            }
            Ok(())
        }
        match self {
            Condition::Or(items) => list(f, items, "or", |c| matches!(c, Condition::Or(_))),
            Condition::And(items) => list(f, items, "and", |c| {
                matches!(c, Condition::Or(_) | Condition::And(_))
            }),
            Condition::Not(c) => match **c {
                Condition::Or(_) | Condition::And(_) => write!(f, "not ({c})"),
                _ => write!(f, "not {c}"),
            },
            Condition::Cmp { lhs, op, rhs } => write!(f, "{lhs} {} {rhs}", op.symbol()),
            Condition::IsSet(id) => write!(f, "{id} is set"),
            Condition::Const(b) => write!(f, "{b}"),
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.branches {
            None => write!(f, "{}", self.condition),
            Some(b) => {
                write!(f, "if {} then {}", self.condition, b.then_value)?;
                if let Some(e) = &b.else_value {
                    write!(f, " else {e}")?;
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(id: &str) -> Operand {
        Operand::Input(id.into())
    }

    fn ctx(pairs: &[(&str, Value)]) -> BTreeMap<String, Value> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn if_then_else() {
        let r = parse_rule("if model == 2 then 1 else 0").unwrap();
        assert_eq!(
            r,
            Rule {
                condition: Condition::Cmp {
                    lhs: input("model"),
                    op: CmpOp::Eq,
                    rhs: Operand::Literal(Value::int(2)),
                },
                branches: Some(Branches {
                    then_value: Operand::Literal(Value::int(1)),
                    else_value: Some(Operand::Literal(Value::int(0))),
                }),
            }
        );
    }

    #[test]
    fn bare_condition() {
        let r = parse_rule("count is set and seqs > 10").unwrap();
        assert_eq!(
            r.condition,
            Condition::And(vec![
                Condition::IsSet("count".into()),
                Condition::Cmp {
                    lhs: input("seqs"),
                    op: CmpOp::Gt,
                    rhs: Operand::Literal(Value::int(10)),
                },
            ])
        );
        assert!(r.branches.is_none());
    }

    #[test]
    fn missing_condition_reports_offset() {
        let e = parse_rule("if then else").unwrap_err();
        assert_eq!(e.kind, RuleErrorKind::Syntax);
        assert_eq!(e.offset, 3);
        assert_eq!(e.caret("if then else").lines().nth(1).unwrap().find('^'), Some(3));
    }

    #[test]
    fn ordered_comparison_on_text_literal_is_type_error() {
        let e = parse_rule("a > \"x\"").unwrap_err();
        assert_eq!(e.kind, RuleErrorKind::Type);
        assert_eq!(parse_rule("a < true").unwrap_err().kind, RuleErrorKind::Type);
        assert!(parse_rule("a < \"10\"").is_ok());
    }

    #[test]
    fn assorted_syntax_errors() {
        for bad in ["", "   ", "a ==", "(a is set", "a is", "5 is set", "if a is set", "a is set b", "a = 1", "x $ 1"] {
            let e = parse_rule(bad).unwrap_err();
            assert_eq!(e.kind, RuleErrorKind::Syntax, "{bad}");
            assert!(e.offset <= bad.len());
        }
    }

    #[test]
    fn constant_condition_returns_then_value() {
        let r = parse_rule("if true then \"output.fa\"").unwrap();
        let any = ctx(&[("x", Value::int(3))]);
        assert_eq!(r.evaluate(&any).unwrap(), Some(Value::text("output.fa")));
        assert_eq!(r.evaluate(&ctx(&[])).unwrap(), Some(Value::text("output.fa")));
    }

    #[test]
    fn unset_semantics() {
        let r = parse_rule("if f is set then 1 else 0").unwrap();
        assert_eq!(r.evaluate(&ctx(&[])).unwrap(), Some(Value::int(0)));
        // comparisons with an unset operand are false, for != too
        let ne = parse_rule("f != 1").unwrap();
        assert_eq!(ne.evaluate(&ctx(&[])).unwrap(), Some(Value::Bool(false)));
        let no_else = parse_rule("if f == 1 then 5").unwrap();
        assert_eq!(no_else.evaluate(&ctx(&[])).unwrap(), None);
        let unset = parse_rule("f is unset").unwrap();
        assert_eq!(unset.evaluate(&ctx(&[])).unwrap(), Some(Value::Bool(true)));
    }

    #[test]
    fn numeric_string_tie_break() {
        let r = parse_rule("model == 2").unwrap();
        assert_eq!(
            r.evaluate(&ctx(&[("model", Value::text("2"))])).unwrap(),
            Some(Value::Bool(true))
        );
        assert_eq!(
            r.evaluate(&ctx(&[("model", Value::text("2.0"))])).unwrap(),
            Some(Value::Bool(true))
        );
        // two strings compare exactly and case-sensitively
        let s = parse_rule("name == \"Abc\"").unwrap();
        assert_eq!(
            s.evaluate(&ctx(&[("name", Value::text("abc"))])).unwrap(),
            Some(Value::Bool(false))
        );
        let g = parse_rule("seqs >= 10").unwrap();
        assert_eq!(
            g.evaluate(&ctx(&[("seqs", Value::text("12"))])).unwrap(),
            Some(Value::Bool(true))
        );
    }

    #[test]
    fn ordered_comparison_on_text_value_is_eval_error() {
        let r = parse_rule("seqs > 10").unwrap();
        assert!(r.evaluate(&ctx(&[("seqs", Value::text("many"))])).is_err());
        assert!(r.evaluate(&ctx(&[("seqs", Value::Bool(true))])).is_err());
    }

    #[test]
    fn then_branch_can_read_inputs() {
        let r = parse_rule("if a == 1 then b else 2").unwrap();
        let refs: Vec<_> = r.references().into_iter().collect();
        assert_eq!(refs, ["a", "b"]);
        let c = ctx(&[("a", Value::int(1)), ("b", Value::text("x"))]);
        assert_eq!(r.evaluate(&c).unwrap(), Some(Value::text("x")));
        assert!(parse_rule("if true then 5").unwrap().references().is_empty());
    }

    #[test]
    fn precedence_and_grouping() {
        let r = parse_rule("a is set or b is set and not c is set").unwrap();
        assert!(matches!(&r.condition, Condition::Or(items) if items.len() == 2));
        let g = parse_rule("(a is set or b is set) and c is set").unwrap();
        assert!(matches!(&g.condition, Condition::And(items) if matches!(items[0], Condition::Or(_))));
        assert_eq!(g.to_string(), "(a is set or b is set) and c is set");
    }

    #[test]
    fn printer_round_trips_nested_lists() {
        for text in [
            "(a is set and b is set) and c is set",
            "(a is set or b is set) or c is set",
            "not (a is set and b is set)",
            "not not a is set",
            "if x == \"q\\\"uote\\n\" then y else -1.5",
            "true == flag",
            "if false then true",
        ] {
            let r = parse_rule(text).unwrap();
            assert_eq!(parse_rule(&r.to_string()).unwrap(), r, "{text}");
        }
    }

    #[test]
    fn identifiers() {
        assert!(is_valid_identifier("out-file"));
        assert!(is_valid_identifier("_x1"));
        assert!(!is_valid_identifier("1x"));
        assert!(!is_valid_identifier("set"));
        assert!(!is_valid_identifier("a.b"));
        let r = parse_rule("out-file is set").unwrap();
        assert_eq!(r.condition, Condition::IsSet("out-file".into()));
    }

    #[test]
    fn rule_detection() {
        assert!(looks_like_rule("if a is set then 1"));
        assert!(looks_like_rule("  if(a is set) then 1"));
        assert!(!looks_like_rule("iffy.txt"));
        assert!(!looks_like_rule("output.fa"));
    }
}
