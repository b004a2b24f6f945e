//! The FO-CTLK specification language: syntax, parser, analysis, and
//! fragment classification.
//!
//! Formulas extend first-order logic over a schema with branching-time
//! operators (AX, AU, EU) and knowledge operators (per-agent K and common
//! knowledge C). Free variables may cross modal operators. Derived operators
//! (∧, ∨, ∃, EX, AF, EF, AG, EG, dual knowledge) are desugared at
//! construction, so the AST carries the minimal connective set only.

use alloc::borrow::ToOwned;
use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::lex::{lex, Tok, Token};
use crate::relational::{FOFormula, Schema, Term, Value};

/// An FO-CTLK formula in minimal form.
///
/// The first five variants mirror [`FOFormula`]; `Know(i, _)` is agent `i`'s
/// knowledge operator (1-based; the environment, index 0, has no knowledge
/// operator) and `Common` is common knowledge among agents 1..=n.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum SpecFormula {
    Eq(Term, Term),
    Atom(String, Vec<Term>),
    Not(Box<SpecFormula>),
    Implies(Box<SpecFormula>, Box<SpecFormula>),
    Forall(String, Box<SpecFormula>),
    AX(Box<SpecFormula>),
    AU(Box<SpecFormula>, Box<SpecFormula>),
    EU(Box<SpecFormula>, Box<SpecFormula>),
    Know(usize, Box<SpecFormula>),
    Common(Box<SpecFormula>),
}

impl SpecFormula {
    pub fn atom(relation: &str, terms: Vec<Term>) -> Self {
        SpecFormula::Atom(relation.to_owned(), terms)
    }

    pub fn not(f: Self) -> Self {
        SpecFormula::Not(Box::new(f))
    }

    pub fn implies(a: Self, b: Self) -> Self {
        SpecFormula::Implies(Box::new(a), Box::new(b))
    }

    pub fn and(a: Self, b: Self) -> Self {
        Self::not(Self::implies(a, Self::not(b)))
    }

    pub fn or(a: Self, b: Self) -> Self {
        Self::implies(Self::not(a), b)
    }

    pub fn forall(var: &str, f: Self) -> Self {
        SpecFormula::Forall(var.to_owned(), Box::new(f))
    }

    pub fn exists(var: &str, f: Self) -> Self {
        Self::not(Self::forall(var, Self::not(f)))
    }

    pub fn ax(f: Self) -> Self {
        SpecFormula::AX(Box::new(f))
    }

    /// EX φ ≡ ¬AX ¬φ.
    pub fn ex(f: Self) -> Self {
        Self::not(Self::ax(Self::not(f)))
    }

    pub fn au(a: Self, b: Self) -> Self {
        SpecFormula::AU(Box::new(a), Box::new(b))
    }

    pub fn eu(a: Self, b: Self) -> Self {
        SpecFormula::EU(Box::new(a), Box::new(b))
    }

    /// AF φ ≡ A(true U φ).
    pub fn af(f: Self) -> Self {
        Self::au(Self::tautology(), f)
    }

    /// EF φ ≡ E(true U φ).
    pub fn ef(f: Self) -> Self {
        Self::eu(Self::tautology(), f)
    }

    /// AG φ ≡ ¬EF ¬φ.
    pub fn ag(f: Self) -> Self {
        Self::not(Self::ef(Self::not(f)))
    }

    /// EG φ ≡ ¬AF ¬φ.
    pub fn eg(f: Self) -> Self {
        Self::not(Self::af(Self::not(f)))
    }

    pub fn know(agent: usize, f: Self) -> Self {
        SpecFormula::Know(agent, Box::new(f))
    }

    /// K̄_i φ ≡ ¬K_i ¬φ.
    pub fn know_bar(agent: usize, f: Self) -> Self {
        Self::not(Self::know(agent, Self::not(f)))
    }

    pub fn common(f: Self) -> Self {
        SpecFormula::Common(Box::new(f))
    }

    /// C̄ φ ≡ ¬C ¬φ.
    pub fn common_bar(f: Self) -> Self {
        Self::not(Self::common(Self::not(f)))
    }

    /// The `true` literal: ∀x x = x.
    pub fn tautology() -> Self {
        SpecFormula::forall("x", SpecFormula::Eq(Term::var("x"), Term::var("x")))
    }

    /// Whether this is exactly the canonical truth literal ∀v v = v. Such a
    /// subtree prints as `true` and contributes no variables: it stands for a
    /// logical constant, not a quantifier the user wrote.
    pub fn is_truth_literal(&self) -> bool {
        match self {
            SpecFormula::Forall(x, body) => matches!(
                body.as_ref(),
                SpecFormula::Eq(Term::Var(a), Term::Var(b)) if a == x && b == x
            ),
            _ => false,
        }
    }

    /// Lift a pure FO formula into the specification language.
    pub fn from_fo(f: &FOFormula) -> Self {
        match f {
            FOFormula::Eq(a, b) => SpecFormula::Eq(a.clone(), b.clone()),
            FOFormula::Atom(r, ts) => SpecFormula::Atom(r.clone(), ts.clone()),
            FOFormula::Not(g) => Self::not(Self::from_fo(g)),
            FOFormula::Implies(a, b) => Self::implies(Self::from_fo(a), Self::from_fo(b)),
            FOFormula::Forall(x, g) => Self::forall(x, Self::from_fo(g)),
        }
    }

    /// The pure FO reading of the formula, if it has no modal operators.
    pub fn as_fo(&self) -> Option<FOFormula> {
        match self {
            SpecFormula::Eq(a, b) => Some(FOFormula::Eq(a.clone(), b.clone())),
            SpecFormula::Atom(r, ts) => Some(FOFormula::Atom(r.clone(), ts.clone())),
            SpecFormula::Not(f) => f.as_fo().map(FOFormula::not),
            SpecFormula::Implies(a, b) => Some(FOFormula::implies(a.as_fo()?, b.as_fo()?)),
            SpecFormula::Forall(x, f) => Some(FOFormula::Forall(x.clone(), Box::new(f.as_fo()?))),
            _ => None,
        }
    }

    pub fn is_pure_fo(&self) -> bool {
        match self {
            SpecFormula::Eq(..) | SpecFormula::Atom(..) => true,
            SpecFormula::Not(f) | SpecFormula::Forall(_, f) => f.is_pure_fo(),
            SpecFormula::Implies(a, b) => a.is_pure_fo() && b.is_pure_fo(),
            _ => false,
        }
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut free = BTreeSet::new();
        self.collect_free(&mut BTreeSet::new(), &mut free);
        free
    }

    fn collect_free(&self, bound: &mut BTreeSet<String>, free: &mut BTreeSet<String>) {
        match self {
            SpecFormula::Eq(a, b) => {
                for t in [a, b] {
                    if let Term::Var(v) = t {
                        if !bound.contains(v) {
                            free.insert(v.clone());
                        }
                    }
                }
            }
            SpecFormula::Atom(_, terms) => {
                for t in terms {
                    if let Term::Var(v) = t {
                        if !bound.contains(v) {
                            free.insert(v.clone());
                        }
                    }
                }
            }
            SpecFormula::Not(f)
            | SpecFormula::AX(f)
            | SpecFormula::Know(_, f)
            | SpecFormula::Common(f) => f.collect_free(bound, free),
            SpecFormula::Implies(a, b) | SpecFormula::AU(a, b) | SpecFormula::EU(a, b) => {
                a.collect_free(bound, free);
                b.collect_free(bound, free);
            }
            SpecFormula::Forall(x, f) => {
                let fresh = bound.insert(x.clone());
                f.collect_free(bound, free);
                if fresh {
                    bound.remove(x);
                }
            }
        }
    }

    /// All distinct variables, free or bound. Truth literals (see
    /// [`Self::is_truth_literal`]) contribute none.
    pub fn all_vars(&self) -> BTreeSet<String> {
        let mut vars = BTreeSet::new();
        self.collect_all_vars(&mut vars);
        vars
    }

    fn collect_all_vars(&self, vars: &mut BTreeSet<String>) {
        if self.is_truth_literal() {
            return;
        }
        match self {
            SpecFormula::Eq(a, b) => {
                for t in [a, b] {
                    if let Term::Var(v) = t {
                        vars.insert(v.clone());
                    }
                }
            }
            SpecFormula::Atom(_, terms) => {
                for t in terms {
                    if let Term::Var(v) = t {
                        vars.insert(v.clone());
                    }
                }
            }
            SpecFormula::Not(f)
            | SpecFormula::AX(f)
            | SpecFormula::Know(_, f)
            | SpecFormula::Common(f) => f.collect_all_vars(vars),
            SpecFormula::Implies(a, b) | SpecFormula::AU(a, b) | SpecFormula::EU(a, b) => {
                a.collect_all_vars(vars);
                b.collect_all_vars(vars);
            }
            SpecFormula::Forall(x, f) => {
                vars.insert(x.clone());
                f.collect_all_vars(vars);
            }
        }
    }

    pub fn constants(&self) -> BTreeSet<Value> {
        let mut consts = BTreeSet::new();
        self.walk(&mut |f| match f {
            SpecFormula::Eq(a, b) => {
                for t in [a, b] {
                    if let Term::Const(c) = t {
                        consts.insert(c.clone());
                    }
                }
            }
            SpecFormula::Atom(_, terms) => {
                for t in terms {
                    if let Term::Const(c) = t {
                        consts.insert(c.clone());
                    }
                }
            }
            _ => {}
        });
        consts
    }

    pub fn relations(&self) -> BTreeSet<String> {
        let mut rels = BTreeSet::new();
        self.walk(&mut |f| {
            if let SpecFormula::Atom(r, _) = f {
                rels.insert(r.clone());
            }
        });
        rels
    }

    fn walk(&self, visit: &mut impl FnMut(&SpecFormula)) {
        visit(self);
        match self {
            SpecFormula::Eq(..) | SpecFormula::Atom(..) => {}
            SpecFormula::Not(f)
            | SpecFormula::Forall(_, f)
            | SpecFormula::AX(f)
            | SpecFormula::Know(_, f)
            | SpecFormula::Common(f) => f.walk(visit),
            SpecFormula::Implies(a, b) | SpecFormula::AU(a, b) | SpecFormula::EU(a, b) => {
                a.walk(visit);
                b.walk(visit);
            }
        }
    }

    /// Check atoms against a schema and agent indices against the agent count
    /// `n` (agents 1..=n may know; the environment may not).
    pub fn validate(&self, schema: &Schema, n: usize) -> Result<(), SpecError> {
        let mut err = None;
        self.walk(&mut |f| {
            if err.is_some() {
                return;
            }
            match f {
                SpecFormula::Atom(r, terms) => match schema.arity(r) {
                    None => err = Some(SpecError::UnknownRelation(r.clone())),
                    Some(a) if a != terms.len() => {
                        err = Some(SpecError::ArityMismatch {
                            relation: r.clone(),
                            expected: a,
                            found: terms.len(),
                        })
                    }
                    Some(_) => {}
                },
                SpecFormula::Know(i, _) if *i == 0 || *i > n => {
                    err = Some(SpecError::BadAgent(*i))
                }
                _ => {}
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

impl fmt::Display for SpecFormula {
    /// Concrete syntax in minimal form; printing then re-parsing is stable.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_truth_literal() {
            return f.write_str("true");
        }
        match self {
            SpecFormula::Eq(a, b) => write!(f, "{a} = {b}"),
            SpecFormula::Atom(r, terms) => {
                write!(f, "{r}(")?;
                for (i, t) in terms.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{t}")?;
                }
                f.write_str(")")
            }
            SpecFormula::Not(g) => write!(f, "not ({g})"),
            SpecFormula::Implies(a, b) => write!(f, "(({a}) -> ({b}))"),
            SpecFormula::Forall(x, g) => write!(f, "forall {x}. ({g})"),
            SpecFormula::AX(g) => write!(f, "AX ({g})"),
            SpecFormula::AU(a, b) => write!(f, "AU(({a}), ({b}))"),
            SpecFormula::EU(a, b) => write!(f, "EU(({a}), ({b}))"),
            SpecFormula::Know(i, g) => write!(f, "K[{i}] ({g})"),
            SpecFormula::Common(g) => write!(f, "C ({g})"),
        }
    }
}

/// Parsing and validation errors for the specification language.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpecError {
    #[error("{line}:{col}: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },

    #[error("unknown relation '{0}'")]
    UnknownRelation(String),

    #[error("relation '{relation}' has arity {expected}, got {found} arguments")]
    ArityMismatch {
        relation: String,
        expected: usize,
        found: usize,
    },

    #[error("no agent with knowledge index {0} (the environment has no knowledge operator)")]
    BadAgent(usize),
}

impl SpecError {
    fn syntax(tok: Option<&Token>, message: impl Into<String>) -> Self {
        let (line, col) = tok.map_or((0, 0), |t| (t.line, t.col));
        SpecError::Syntax {
            line,
            col,
            message: message.into(),
        }
    }
}

const KEYWORDS: &[&str] = &[
    "forall", "exists", "and", "or", "not", "true", "false", "AX", "EX", "AF", "EF", "AG", "EG",
    "AU", "EU", "K", "Kbar", "C", "Cbar",
];

/// Whether a word is reserved in formula text (shared with the program
/// format, whose parser must decide which identifiers denote constants).
pub(crate) fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    schema: &'a Schema,
    /// Agent names, environment first (index 0). `K[name]` resolves against
    /// this list; numeric indices are also accepted.
    agents: &'a [String],
    constants: &'a BTreeSet<Value>,
    bound: Vec<String>,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, kind: &Tok) -> Result<(), SpecError> {
        match self.peek() {
            Some(t) if t.kind == *kind => {
                self.pos += 1;
                Ok(())
            }
            t => Err(SpecError::syntax(t, format!("expected {kind}"))),
        }
    }

    fn keyword(&self) -> Option<&str> {
        match self.peek() {
            Some(Token {
                kind: Tok::Ident(w),
                ..
            }) if KEYWORDS.contains(&w.as_str()) => Some(w.as_str()),
            _ => None,
        }
    }

    fn parse_implies(&mut self) -> Result<SpecFormula, SpecError> {
        let lhs = self.parse_or()?;
        if matches!(self.peek(), Some(t) if t.kind == Tok::Arrow) {
            self.pos += 1;
            let rhs = self.parse_implies()?;
            Ok(SpecFormula::implies(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn parse_or(&mut self) -> Result<SpecFormula, SpecError> {
        let mut lhs = self.parse_and()?;
        while self.keyword() == Some("or") {
            self.pos += 1;
            let rhs = self.parse_and()?;
            lhs = SpecFormula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn parse_and(&mut self) -> Result<SpecFormula, SpecError> {
        let mut lhs = self.parse_prefix()?;
        while self.keyword() == Some("and") {
            self.pos += 1;
            let rhs = self.parse_prefix()?;
            lhs = SpecFormula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn parse_agent_ref(&mut self) -> Result<usize, SpecError> {
        self.expect(&Tok::LBracket)?;
        let tok = self.next();
        let index = match &tok {
            Some(Token {
                kind: Tok::Ident(w),
                ..
            }) => {
                if let Ok(i) = w.parse::<usize>() {
                    i
                } else if let Some(i) = self.agents.iter().position(|a| a == w) {
                    i
                } else {
                    return Err(SpecError::syntax(tok.as_ref(), format!("unknown agent '{w}'")));
                }
            }
            t => return Err(SpecError::syntax(t.as_ref(), "expected agent name or index")),
        };
        self.expect(&Tok::RBracket)?;
        if index == 0 || (!self.agents.is_empty() && index >= self.agents.len()) {
            return Err(SpecError::syntax(
                tok.as_ref(),
                format!("agent index {index} has no knowledge operator"),
            ));
        }
        Ok(index)
    }

    fn parse_quantifier(&mut self, universal: bool) -> Result<SpecFormula, SpecError> {
        let mut vars = Vec::new();
        loop {
            let tok = self.next();
            match &tok {
                Some(Token {
                    kind: Tok::Ident(w),
                    ..
                }) if !KEYWORDS.contains(&w.as_str()) => {
                    if self.constants.contains(&Value::new(w)) {
                        return Err(SpecError::syntax(
                            tok.as_ref(),
                            format!("bound variable '{w}' shadows a constant"),
                        ));
                    }
                    vars.push(w.clone());
                }
                t => return Err(SpecError::syntax(t.as_ref(), "expected variable name")),
            }
            match self.peek() {
                Some(t) if t.kind == Tok::Comma => {
                    self.pos += 1;
                }
                _ => break,
            }
        }
        self.expect(&Tok::Dot)?;
        let depth = self.bound.len();
        self.bound.extend(vars.iter().cloned());
        let body = self.parse_implies()?;
        self.bound.truncate(depth);
        let mut out = body;
        for v in vars.into_iter().rev() {
            out = if universal {
                SpecFormula::forall(&v, out)
            } else {
                SpecFormula::exists(&v, out)
            };
        }
        Ok(out)
    }

    fn parse_prefix(&mut self) -> Result<SpecFormula, SpecError> {
        if let Some(kw) = self.keyword() {
            let kw = kw.to_string();
            match kw.as_str() {
                "not" => {
                    self.pos += 1;
                    return Ok(SpecFormula::not(self.parse_prefix()?));
                }
                "true" => {
                    self.pos += 1;
                    return Ok(SpecFormula::tautology());
                }
                "false" => {
                    self.pos += 1;
                    return Ok(SpecFormula::not(SpecFormula::tautology()));
                }
                "AX" | "EX" | "AF" | "EF" | "AG" | "EG" => {
                    self.pos += 1;
                    let sub = self.parse_prefix()?;
                    return Ok(match kw.as_str() {
                        "AX" => SpecFormula::ax(sub),
                        "EX" => SpecFormula::ex(sub),
                        "AF" => SpecFormula::af(sub),
                        "EF" => SpecFormula::ef(sub),
                        "AG" => SpecFormula::ag(sub),
                        _ => SpecFormula::eg(sub),
                    });
                }
                "AU" | "EU" => {
                    self.pos += 1;
                    self.expect(&Tok::LParen)?;
                    let a = self.parse_implies()?;
                    self.expect(&Tok::Comma)?;
                    let b = self.parse_implies()?;
                    self.expect(&Tok::RParen)?;
                    return Ok(if kw == "AU" {
                        SpecFormula::au(a, b)
                    } else {
                        SpecFormula::eu(a, b)
                    });
                }
                "K" | "Kbar" => {
                    self.pos += 1;
                    let agent = self.parse_agent_ref()?;
                    let sub = self.parse_prefix()?;
                    return Ok(if kw == "K" {
                        SpecFormula::know(agent, sub)
                    } else {
                        SpecFormula::know_bar(agent, sub)
                    });
                }
                "C" | "Cbar" => {
                    self.pos += 1;
                    let sub = self.parse_prefix()?;
                    return Ok(if kw == "C" {
                        SpecFormula::common(sub)
                    } else {
                        SpecFormula::common_bar(sub)
                    });
                }
                "forall" | "exists" => {
                    self.pos += 1;
                    return self.parse_quantifier(kw == "forall");
                }
                _ => {
                    return Err(SpecError::syntax(
                        self.peek(),
                        format!("unexpected keyword '{kw}'"),
                    ))
                }
            }
        }
        match self.peek() {
            Some(t) if t.kind == Tok::LParen => {
                self.pos += 1;
                let inner = self.parse_implies()?;
                self.expect(&Tok::RParen)?;
                Ok(inner)
            }
            _ => self.parse_atom_or_eq(),
        }
    }

    fn parse_term(&mut self) -> Result<Term, SpecError> {
        let tok = self.next();
        match &tok {
            Some(Token {
                kind: Tok::Ident(w),
                ..
            }) if !KEYWORDS.contains(&w.as_str()) => {
                let value = Value::new(w);
                if self.constants.contains(&value) && !self.bound.contains(w) {
                    Ok(Term::Const(value))
                } else {
                    Ok(Term::Var(w.clone()))
                }
            }
            t => Err(SpecError::syntax(t.as_ref(), "expected a term")),
        }
    }

    fn parse_atom_or_eq(&mut self) -> Result<SpecFormula, SpecError> {
        // A relation atom if the identifier names a relation, otherwise an
        // equality between two terms.
        if let Some(Token {
            kind: Tok::Ident(w),
            ..
        }) = self.peek()
        {
            if self.schema.contains(w) {
                let name = w.clone();
                let tok = self.next();
                let mut terms = Vec::new();
                if matches!(self.peek(), Some(t) if t.kind == Tok::LParen) {
                    self.pos += 1;
                    if !matches!(self.peek(), Some(t) if t.kind == Tok::RParen) {
                        loop {
                            terms.push(self.parse_term()?);
                            match self.peek() {
                                Some(t) if t.kind == Tok::Comma => {
                                    self.pos += 1;
                                }
                                _ => break,
                            }
                        }
                    }
                    self.expect(&Tok::RParen)?;
                }
                let expected = self.schema.arity(&name).unwrap();
                if expected != terms.len() {
                    let _ = tok;
                    return Err(SpecError::ArityMismatch {
                        relation: name,
                        expected,
                        found: terms.len(),
                    });
                }
                return Ok(SpecFormula::atom(&name, terms));
            }
        }
        let a = self.parse_term()?;
        match self.peek().map(|t| t.kind.clone()) {
            Some(Tok::Eq) => {
                self.pos += 1;
                let b = self.parse_term()?;
                Ok(SpecFormula::Eq(a, b))
            }
            Some(Tok::Ne) => {
                self.pos += 1;
                let b = self.parse_term()?;
                Ok(SpecFormula::not(SpecFormula::Eq(a, b)))
            }
            _ => Err(SpecError::syntax(self.peek(), "expected '=' or '!='")),
        }
    }
}

/// Parse a formula from an already-lexed token slice, consuming all of it.
/// Shared by the model and program file parsers, whose grammars embed
/// formulas terminated by `;`.
pub(crate) fn parse_formula_tokens(
    toks: Vec<Token>,
    schema: &Schema,
    agents: &[String],
    constants: &BTreeSet<Value>,
) -> Result<SpecFormula, SpecError> {
    let mut p = Parser {
        toks,
        pos: 0,
        schema,
        agents,
        constants,
        bound: Vec::new(),
    };
    let phi = p.parse_implies()?;
    if let Some(t) = p.peek() {
        return Err(SpecError::syntax(Some(t), format!("trailing input {}", t.kind)));
    }
    let n = if agents.is_empty() { usize::MAX } else { agents.len() - 1 };
    phi.validate(schema, n)?;
    Ok(phi)
}

/// Parse an FO-CTLK formula. `agents` lists agent names with the environment
/// first (index 0); `K[name]` and `K[index]` both resolve against it. An
/// identifier denotes a constant iff it is in `constants` and not bound by an
/// enclosing quantifier (shadowing a constant is rejected).
pub fn parse_spec(
    text: &str,
    schema: &Schema,
    agents: &[String],
    constants: &BTreeSet<Value>,
) -> Result<SpecFormula, SpecError> {
    let toks = lex(text).map_err(|(line, col, message)| SpecError::Syntax { line, col, message })?;
    parse_formula_tokens(toks, schema, agents, constants)
}

/// Parse a pure first-order formula (used for action pre/postconditions).
pub fn parse_fo(
    text: &str,
    schema: &Schema,
    constants: &BTreeSet<Value>,
) -> Result<FOFormula, SpecError> {
    let phi = parse_spec(text, schema, &[], constants)?;
    phi.as_fo().ok_or_else(|| SpecError::Syntax {
        line: 1,
        col: 1,
        message: String::from("modal operators are not allowed here"),
    })
}

/// Parse a `.spec` file: one `name : formula` entry per line; blank lines and
/// `#` comments ignored.
pub fn parse_spec_file(
    text: &str,
    schema: &Schema,
    agents: &[String],
    constants: &BTreeSet<Value>,
) -> Result<Vec<(String, SpecFormula)>, SpecError> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        let Some((name, body)) = line.split_once(':') else {
            return Err(SpecError::Syntax {
                line: lineno + 1,
                col: 1,
                message: String::from("expected 'name : formula'"),
            });
        };
        let name = name.trim();
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(SpecError::Syntax {
                line: lineno + 1,
                col: 1,
                message: format!("bad formula name '{name}'"),
            });
        }
        let phi = parse_spec(body, schema, agents, constants).map_err(|e| match e {
            SpecError::Syntax { col, message, .. } => SpecError::Syntax {
                line: lineno + 1,
                col,
                message,
            },
            other => other,
        })?;
        out.push((name.to_owned(), phi));
    }
    Ok(out)
}

/// Language fragments a formula may belong to.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Fragment {
    /// The full language; every formula belongs here.
    FoCtlk,
    /// Sentence-atomic CTL: FO sentences as atoms, no epistemic operators,
    /// no variable free in the scope of a modal operator.
    SaFoCtl,
    /// The existential fragment (EX, EU, dual knowledge operators under
    /// positive polarity only), preserved from b-restrictions upward.
    FoEctlk,
    /// At most k distinct variables.
    FoCtlkK(usize),
}

/// The result of classifying a formula.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Classification {
    pub fragments: BTreeSet<Fragment>,
    /// The number of distinct variables: the minimal k with φ ∈ FO-CTLK_k.
    pub min_vars: usize,
}

impl Classification {
    pub fn is_sa_fo_ctl(&self) -> bool {
        self.fragments.contains(&Fragment::SaFoCtl)
    }

    pub fn is_fo_ectlk(&self) -> bool {
        self.fragments.contains(&Fragment::FoEctlk)
    }
}

/// Classify a formula into the fragments it syntactically belongs to (modulo
/// the fixed desugaring) and compute the minimal variable count.
pub fn classify(phi: &SpecFormula) -> Classification {
    let mut fragments = BTreeSet::new();
    fragments.insert(Fragment::FoCtlk);
    if is_sa(phi) {
        fragments.insert(Fragment::SaFoCtl);
    }
    if is_ectlk(phi, true) {
        fragments.insert(Fragment::FoEctlk);
    }
    let min_vars = phi.all_vars().len();
    fragments.insert(Fragment::FoCtlkK(min_vars));
    Classification { fragments, min_vars }
}

fn is_sa(phi: &SpecFormula) -> bool {
    if phi.is_pure_fo() {
        return phi.free_vars().is_empty();
    }
    match phi {
        SpecFormula::Not(f) | SpecFormula::AX(f) => is_sa(f),
        SpecFormula::Implies(a, b) | SpecFormula::AU(a, b) | SpecFormula::EU(a, b) => {
            is_sa(a) && is_sa(b)
        }
        // Epistemic operators are excluded; a quantifier over a modal body
        // puts a variable in modal scope.
        _ => false,
    }
}

/// Polarity-based membership test for the existential fragment on the
/// desugared AST: EX is ¬AX¬ (so AX may only occur negatively), EU and the
/// plain knowledge/common operators likewise carry polarity constraints, and
/// AU is not expressible at all.
fn is_ectlk(phi: &SpecFormula, positive: bool) -> bool {
    if phi.is_pure_fo() {
        return true;
    }
    match phi {
        SpecFormula::Not(f) => is_ectlk(f, !positive),
        SpecFormula::Implies(a, b) => is_ectlk(a, !positive) && is_ectlk(b, positive),
        SpecFormula::Forall(_, f) => is_ectlk(f, positive),
        SpecFormula::AX(f) => !positive && is_ectlk(f, false),
        SpecFormula::EU(a, b) => positive && is_ectlk(a, true) && is_ectlk(b, true),
        SpecFormula::AU(..) => false,
        SpecFormula::Know(_, f) | SpecFormula::Common(f) => !positive && is_ectlk(f, false),
        SpecFormula::Eq(..) | SpecFormula::Atom(..) => true,
    }
}

/// Syntactic analysis: free variables, all variables, constants.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Analysis {
    pub free: BTreeSet<String>,
    pub vars: BTreeSet<String>,
    pub consts: BTreeSet<Value>,
}

pub fn analyze(phi: &SpecFormula) -> Analysis {
    Analysis {
        free: phi.free_vars(),
        vars: phi.all_vars(),
        consts: phi.constants(),
    }
}
