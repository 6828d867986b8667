//! Access policies and the Laplace mechanism.
//!
//! Predicate syntax:
//!
//! ```text
//! expr    := conj ('or' conj)*
//! conj    := term ('and' term)*
//! term    := 'not' term | atom
//! atom    := field op literal | '(' expr ')'
//! field   := ('data' | 'user') '.' ident
//! op      := '=' | '==' | '!=' | '≠' | '<' | '<=' | '≤' | '>' | '>=' | '≥'
//! literal := number | ident | quoted string
//! ```
//!
//! `∧`, `∨` and `¬` are accepted as synonyms of `and`, `or` and `not`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transform::Value;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("type error: {0}")]
    Type(String),
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("role must be nonempty")]
    EmptyRole,
    #[error("epsilon and sensitivity must be positive and finite")]
    BadPrivacyParameter,
    #[error("mean of an empty value list")]
    EmptyAggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserContext {
    pub user_id: String,
    pub role: String,
    pub clearance: u64,
    pub at: f64,
}

impl UserContext {
    pub fn new(user_id: impl Into<String>, role: impl Into<String>, clearance: u64, at: f64) -> Result<Self, PolicyError> {
        let role = role.into();
        if role.is_empty() {
            return Err(PolicyError::EmptyRole);
        }
        Ok(Self {
            user_id: user_id.into(),
            role,
            clearance,
            at,
        })
    }

    fn field(&self, name: &str) -> Option<Value> {
        match name {
            "userId" | "user_id" | "id" => Some(Value::Cat(self.user_id.clone())),
            "role" => Some(Value::Cat(self.role.clone())),
            "clearance" => Some(Value::Num(self.clearance as f64)),
            "at" => Some(Value::Num(self.at)),
            _ => None,
        }
    }

    fn field_is_numeric(name: &str) -> Option<bool> {
        match name {
            "userId" | "user_id" | "id" | "role" => Some(false),
            "clearance" | "at" => Some(true),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    fn holds(self, ord: Ordering) -> bool {
        match self {
            CmpOp::Eq => ord == Ordering::Equal,
            CmpOp::Ne => ord != Ordering::Equal,
            CmpOp::Lt => ord == Ordering::Less,
            CmpOp::Le => ord != Ordering::Greater,
            CmpOp::Gt => ord == Ordering::Greater,
            CmpOp::Ge => ord != Ordering::Less,
        }
    }

    fn is_ordering(self) -> bool {
        !matches!(self, CmpOp::Eq | CmpOp::Ne)
    }

    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Data,
    User,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRef {
    pub scope: Scope,
    pub name: String,
}

impl fmt::Display for FieldRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let scope = match self.scope {
            Scope::Data => "data",
            Scope::User => "user",
        };
        write!(f, "{scope}.{}", self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PredicateExpr {
    And(Box<PredicateExpr>, Box<PredicateExpr>),
    Or(Box<PredicateExpr>, Box<PredicateExpr>),
    Not(Box<PredicateExpr>),
    Cmp { field: FieldRef, op: CmpOp, literal: Value },
}

impl fmt::Display for PredicateExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredicateExpr::And(a, b) => write!(f, "({a} and {b})"),
            PredicateExpr::Or(a, b) => write!(f, "({a} or {b})"),
            PredicateExpr::Not(a) => write!(f, "not {a}"),
            PredicateExpr::Cmp { field, op, literal } => match literal {
                Value::Num(x) => write!(f, "{field} {} {x:?}", op.symbol()),
                Value::Cat(s) => write!(f, "{field} {} \"{s}\"", op.symbol()),
            },
        }
    }
}

/// Field lookups for predicate evaluation.
pub trait Context {
    fn data(&self, name: &str) -> Option<Value>;
    fn user(&self, name: &str) -> Option<Value>;
}

/// Dataset attributes paired with an optional requesting user.
pub struct RequestContext<'a> {
    pub data: &'a BTreeMap<String, Value>,
    pub user: Option<&'a UserContext>,
}

impl Context for RequestContext<'_> {
    fn data(&self, name: &str) -> Option<Value> {
        self.data.get(name).cloned()
    }

    fn user(&self, name: &str) -> Option<Value> {
        self.user.and_then(|u| u.field(name))
    }
}

fn compare(field: &FieldRef, op: CmpOp, actual: &Value, literal: &Value) -> Result<bool, PolicyError> {
    let ord = match (actual, literal) {
        (Value::Num(a), Value::Num(b)) => a.partial_cmp(b).ok_or_else(|| PolicyError::Type(format!("{field} is NaN")))?,
        (Value::Cat(a), Value::Cat(b)) if !op.is_ordering() => a.cmp(b),
        (Value::Cat(_), Value::Cat(_)) => {
            return Err(PolicyError::Type(format!("ordering comparison on categorical {field}")))
        }
        _ => {
            return Err(PolicyError::Type(format!(
                "{field} = {actual} compared with {literal}"
            )))
        }
    };
    Ok(op.holds(ord))
}

impl PredicateExpr {
    pub fn eval(&self, ctx: &dyn Context) -> Result<bool, PolicyError> {
        match self {
            PredicateExpr::And(a, b) => Ok(a.eval(ctx)? && b.eval(ctx)?),
            PredicateExpr::Or(a, b) => Ok(a.eval(ctx)? || b.eval(ctx)?),
            PredicateExpr::Not(a) => Ok(!a.eval(ctx)?),
            PredicateExpr::Cmp { field, op, literal } => {
                let actual = match field.scope {
                    Scope::Data => ctx.data(&field.name),
                    Scope::User => ctx.user(&field.name),
                }
                .ok_or_else(|| PolicyError::UnknownField(field.to_string()))?;
                compare(field, *op, &actual, literal)
            }
        }
    }

    /// Every field the expression reads, in first-occurrence order.
    pub fn fields(&self) -> Vec<&FieldRef> {
        let mut out = Vec::new();
        self.collect_fields(&mut out);
        out
    }

    fn collect_fields<'a>(&'a self, out: &mut Vec<&'a FieldRef>) {
        match self {
            PredicateExpr::And(a, b) | PredicateExpr::Or(a, b) => {
                a.collect_fields(out);
                b.collect_fields(out);
            }
            PredicateExpr::Not(a) => a.collect_fields(out),
            PredicateExpr::Cmp { field, .. } => {
                if !out.contains(&field) {
                    out.push(field);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Str(String),
    Op(CmpOp),
    And,
    Or,
    Not,
    LParen,
    RParen,
    Dot,
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-'
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, PolicyError> {
    let syntax = |pos, msg: &str| PolicyError::Syntax {
        pos,
        msg: msg.to_owned(),
    };
    let mut out = Vec::new();
    let mut it = text.char_indices().peekable();
    while let Some(&(pos, c)) = it.peek() {
        if c.is_whitespace() {
            it.next();
            continue;
        }
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '.' => Some(Tok::Dot),
            '∧' => Some(Tok::And),
            '∨' => Some(Tok::Or),
            '¬' => Some(Tok::Not),
            '≠' => Some(Tok::Op(CmpOp::Ne)),
            '≤' => Some(Tok::Op(CmpOp::Le)),
            '≥' => Some(Tok::Op(CmpOp::Ge)),
            _ => None,
        };
        if let Some(t) = single {
            it.next();
            out.push((pos, t));
            continue;
        }
        match c {
            '=' | '!' | '<' | '>' => {
                it.next();
                let eq = it.next_if(|&(_, d)| d == '=').is_some();
                let op = match (c, eq) {
                    ('=', _) => CmpOp::Eq,
                    ('!', true) => CmpOp::Ne,
                    ('<', false) => CmpOp::Lt,
                    ('<', true) => CmpOp::Le,
                    ('>', false) => CmpOp::Gt,
                    ('>', true) => CmpOp::Ge,
                    _ => return Err(syntax(pos, "expected `!=`")),
                };
                out.push((pos, Tok::Op(op)));
            }
            '"' | '\'' => {
                it.next();
                let mut s = String::new();
                loop {
                    match it.next() {
                        Some((_, d)) if d == c => break,
                        Some((_, d)) => s.push(d),
                        None => return Err(syntax(text.len(), "unterminated string")),
                    }
                }
                out.push((pos, Tok::Str(s)));
            }
            c if c.is_ascii_digit() || c == '-' || c == '+' => {
                let mut s = String::new();
                while let Some((_, d)) = it.next_if(|&(_, d)| d.is_ascii_alphanumeric() || "+-.".contains(d)) {
                    s.push(d);
                }
                let x: f64 = s.parse().map_err(|_| syntax(pos, &format!("bad number `{s}`")))?;
                out.push((pos, Tok::Num(x)));
            }
            c if is_ident_char(c) => {
                let mut s = String::new();
                while let Some((_, d)) = it.next_if(|&(_, d)| is_ident_char(d)) {
                    s.push(d);
                }
                let tok = match s.as_str() {
                    "and" | "AND" => Tok::And,
                    "or" | "OR" => Tok::Or,
                    "not" | "NOT" => Tok::Not,
                    _ => Tok::Ident(s),
                };
                out.push((pos, tok));
            }
            _ => return Err(syntax(pos, &format!("unexpected character `{c}`"))),
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.end, |(p, _)| *p)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, PolicyError> {
        Err(PolicyError::Syntax {
            pos: self.pos(),
            msg: msg.into(),
        })
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.at).map(|(_, t)| t.clone());
        self.at += 1;
        t
    }

    fn expr(&mut self) -> Result<PredicateExpr, PolicyError> {
        let mut lhs = self.conj()?;
        while self.peek() == Some(&Tok::Or) {
            self.at += 1;
            lhs = PredicateExpr::Or(Box::new(lhs), Box::new(self.conj()?));
        }
        Ok(lhs)
    }

    fn conj(&mut self) -> Result<PredicateExpr, PolicyError> {
        let mut lhs = self.term()?;
        while self.peek() == Some(&Tok::And) {
            self.at += 1;
            lhs = PredicateExpr::And(Box::new(lhs), Box::new(self.term()?));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<PredicateExpr, PolicyError> {
        if self.peek() == Some(&Tok::Not) {
            self.at += 1;
            return Ok(PredicateExpr::Not(Box::new(self.term()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<PredicateExpr, PolicyError> {
        match self.peek() {
            Some(Tok::LParen) => {
                self.at += 1;
                let e = self.expr()?;
                if self.peek() != Some(&Tok::RParen) {
                    return self.err("expected `)`");
                }
                self.at += 1;
                Ok(e)
            }
            Some(Tok::Ident(_)) => self.comparison(),
            None => self.err("unexpected end of input"),
            Some(_) => self.err("expected a field or `(`"),
        }
    }

    fn comparison(&mut self) -> Result<PredicateExpr, PolicyError> {
        let scope_pos = self.pos();
        let scope = match self.next() {
            Some(Tok::Ident(s)) if s == "data" => Scope::Data,
            Some(Tok::Ident(s)) if s == "user" => Scope::User,
            _ => {
                return Err(PolicyError::Syntax {
                    pos: scope_pos,
                    msg: "fields must start with `data.` or `user.`".into(),
                })
            }
        };
        if self.peek() != Some(&Tok::Dot) {
            return self.err("expected `.`");
        }
        self.at += 1;
        let name = match self.peek() {
            Some(Tok::Ident(n)) => n.clone(),
            _ => return self.err("expected a field name"),
        };
        self.at += 1;
        let op = match self.peek() {
            Some(Tok::Op(op)) => *op,
            _ => return self.err("expected a comparison operator"),
        };
        self.at += 1;
        let literal = match self.peek() {
            Some(Tok::Num(x)) => Value::Num(*x),
            Some(Tok::Str(s)) | Some(Tok::Ident(s)) => Value::Cat(s.clone()),
            _ => return self.err("expected a literal"),
        };
        self.at += 1;
        let field = FieldRef { scope, name };
        if let Value::Cat(_) = literal {
            if op.is_ordering() {
                return Err(PolicyError::Type(format!("ordering comparison of {field} with a string")));
            }
        }
        if scope == Scope::User {
            match UserContext::field_is_numeric(&field.name) {
                None => return Err(PolicyError::UnknownField(field.to_string())),
                Some(numeric) if numeric != matches!(literal, Value::Num(_)) => {
                    return Err(PolicyError::Type(format!("{field} compared with {literal}")))
                }
                Some(_) => {}
            }
        }
        Ok(PredicateExpr::Cmp { field, op, literal })
    }
}

pub fn parse_predicate(text: &str) -> Result<PredicateExpr, PolicyError> {
    let mut p = Parser {
        toks: lex(text)?,
        at: 0,
        end: text.len(),
    };
    let e = p.expr()?;
    if p.at < p.toks.len() {
        return p.err("trailing input");
    }
    Ok(e)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyAction {
    Grant,
    DenyReason(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub id: String,
    pub predicate: PredicateExpr,
    pub action: PolicyAction,
}

impl Policy {
    pub fn parse(id: impl Into<String>, text: &str) -> Result<Self, PolicyError> {
        Ok(Self {
            id: id.into(),
            predicate: parse_predicate(text)?,
            action: PolicyAction::Grant,
        })
    }

    pub fn with_reason(mut self, reason: impl Into<String>) -> Self {
        self.action = PolicyAction::DenyReason(reason.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Denial {
    pub policy: String,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub granted: bool,
    /// Policies whose predicate is false, ordered by policy id.
    pub failing: Vec<Denial>,
}

/// Grants iff every policy predicate holds; the empty set grants.
pub fn evaluate_request(
    data: &BTreeMap<String, Value>,
    user: &UserContext,
    policies: &[Policy],
) -> Result<Decision, PolicyError> {
    let ctx = RequestContext {
        data,
        user: Some(user),
    };
    let mut failing = Vec::new();
    for p in policies {
        if !p.predicate.eval(&ctx)? {
            failing.push(Denial {
                policy: p.id.clone(),
                reason: match &p.action {
                    PolicyAction::Grant => None,
                    PolicyAction::DenyReason(r) => Some(r.clone()),
                },
            });
        }
    }
    failing.sort_by(|a, b| a.policy.cmp(&b.policy));
    Ok(Decision {
        granted: failing.is_empty(),
        failing,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    Sum,
    Mean,
}

/// One draw of Laplace(0, scale).
pub fn laplace_noise(scale: f64, rng: &mut impl rand::Rng) -> f64 {
    let a: f64 = Exp1.sample(rng);
    let b: f64 = Exp1.sample(rng);
    scale * (a - b)
}

/// Aggregate released under ε-differential privacy with Laplace noise of
/// scale `sensitivity / epsilon`.
pub fn dp_aggregate(
    values: &[f64],
    aggregate: Aggregate,
    epsilon: f64,
    sensitivity: f64,
    seed: u64,
) -> Result<f64, PolicyError> {
    let ok = |x: f64| x > 0.0 && x.is_finite();
    if !ok(epsilon) || !ok(sensitivity) {
        return Err(PolicyError::BadPrivacyParameter);
    }
    let sum: f64 = values.iter().sum();
    let exact = match aggregate {
        Aggregate::Sum => sum,
        Aggregate::Mean if values.is_empty() => return Err(PolicyError::EmptyAggregate),
        Aggregate::Mean => sum / values.len() as f64,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(exact + laplace_noise(sensitivity / epsilon, &mut rng))
}
