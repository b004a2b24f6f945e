//! Relational states and first-order evaluation.
//!
//! Local agent states are finite database instances: interpretations of a
//! relational schema over a value universe. This module provides the value and
//! instance types, active-domain FO evaluation, the join of an instance pair
//! over a doubled (primed) schema used to evaluate postconditions, and
//! constant-preserving isomorphism search with witnesses.

use alloc::borrow::ToOwned;
use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

/// An interned value: a constant or a plain domain element.
///
/// Two values are equal iff their symbols are equal; constants are interpreted
/// rigidly (Herbrand), so equality between constants is syntactic. Whether a
/// value is a *constant* is not a property of the value itself but of the
/// problem: each program/model declares its constant set once.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Value(Arc<str>);

impl Value {
    pub fn new(symbol: impl AsRef<str>) -> Self {
        Value(Arc::from(symbol.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::new(s)
    }
}

/// A tuple of values, the element of a relation's interpretation.
pub type Tuple = Vec<Value>;

/// Schema and instance errors.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchemaError {
    #[error("duplicate relation '{0}'")]
    DuplicateRelation(String),

    #[error("unknown relation '{0}'")]
    UnknownRelation(String),

    #[error("relation '{relation}' has arity {expected}, got a tuple of length {found}")]
    ArityMismatch {
        relation: String,
        expected: usize,
        found: usize,
    },

    #[error("instances have different schemas")]
    SchemaMismatch,
}

/// A relational schema: relation names with fixed arities (arity 0 allowed,
/// modelling propositions).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Schema {
    relations: BTreeMap<String, usize>,
}

impl Schema {
    pub fn new() -> Self {
        Schema::default()
    }

    /// Build a schema from (name, arity) pairs. Fails on duplicate names.
    pub fn from_relations<I, S>(rels: I) -> Result<Self, SchemaError>
    where
        I: IntoIterator<Item = (S, usize)>,
        S: AsRef<str>,
    {
        let mut schema = Schema::new();
        for (name, arity) in rels {
            schema.declare(name.as_ref(), arity)?;
        }
        Ok(schema)
    }

    pub fn declare(&mut self, name: &str, arity: usize) -> Result<(), SchemaError> {
        if self.relations.contains_key(name) {
            return Err(SchemaError::DuplicateRelation(name.to_owned()));
        }
        self.relations.insert(name.to_owned(), arity);
        Ok(())
    }

    pub fn arity(&self, name: &str) -> Option<usize> {
        self.relations.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.relations.contains_key(name)
    }

    pub fn relations(&self) -> impl Iterator<Item = (&str, usize)> {
        self.relations.iter().map(|(n, a)| (n.as_str(), *a))
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    /// The doubled schema: every relation P plus its primed copy P'.
    pub fn doubled(&self) -> Schema {
        let mut rels = BTreeMap::new();
        for (name, arity) in &self.relations {
            rels.insert(name.clone(), *arity);
            rels.insert(primed(name), *arity);
        }
        Schema { relations: rels }
    }

    /// Union of two schemas; shared relation names must agree on arity.
    pub fn union(&self, other: &Schema) -> Result<Schema, SchemaError> {
        let mut rels = self.relations.clone();
        for (name, arity) in &other.relations {
            match rels.get(name) {
                Some(a) if a != arity => {
                    return Err(SchemaError::ArityMismatch {
                        relation: name.clone(),
                        expected: *a,
                        found: *arity,
                    })
                }
                _ => {
                    rels.insert(name.clone(), *arity);
                }
            }
        }
        Ok(Schema { relations: rels })
    }
}

/// The primed copy of a relation name, written `P'` in the concrete syntax.
pub fn primed(name: &str) -> String {
    let mut p = name.to_owned();
    p.push('\'');
    p
}

/// Whether a relation name is a primed copy, and if so of what.
pub fn unprimed(name: &str) -> Option<&str> {
    name.strip_suffix('\'')
}

/// A finite interpretation of a schema: each relation maps to a finite set of
/// tuples of the declared arity.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Instance {
    schema: Arc<Schema>,
    tuples: BTreeMap<String, BTreeSet<Tuple>>,
}

impl Instance {
    /// The empty instance of a schema (every relation empty).
    pub fn empty(schema: Arc<Schema>) -> Self {
        Instance {
            schema,
            tuples: BTreeMap::new(),
        }
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn insert(&mut self, relation: &str, tuple: Tuple) -> Result<(), SchemaError> {
        match self.schema.arity(relation) {
            None => Err(SchemaError::UnknownRelation(relation.to_owned())),
            Some(arity) if arity != tuple.len() => Err(SchemaError::ArityMismatch {
                relation: relation.to_owned(),
                expected: arity,
                found: tuple.len(),
            }),
            Some(_) => {
                self.tuples
                    .entry(relation.to_owned())
                    .or_default()
                    .insert(tuple);
                Ok(())
            }
        }
    }

    pub fn remove(&mut self, relation: &str, tuple: &Tuple) {
        if let Some(set) = self.tuples.get_mut(relation) {
            set.remove(tuple);
            if set.is_empty() {
                self.tuples.remove(relation);
            }
        }
    }

    /// The tuples of a relation (empty set if none inserted).
    pub fn get(&self, relation: &str) -> &BTreeSet<Tuple> {
        static EMPTY: BTreeSet<Tuple> = BTreeSet::new();
        self.tuples.get(relation).unwrap_or(&EMPTY)
    }

    pub fn contains(&self, relation: &str, tuple: &Tuple) -> bool {
        self.tuples.get(relation).is_some_and(|s| s.contains(tuple))
    }

    /// Non-empty relations with their tuple sets, in name order.
    pub fn relations(&self) -> impl Iterator<Item = (&str, &BTreeSet<Tuple>)> {
        self.tuples.iter().map(|(n, t)| (n.as_str(), t))
    }

    /// Total tuple count across all relations.
    pub fn tuple_count(&self) -> usize {
        self.tuples.values().map(BTreeSet::len).sum()
    }

    /// The active domain: all values occurring in some tuple.
    pub fn active_domain(&self) -> BTreeSet<Value> {
        let mut adom = BTreeSet::new();
        for tuples in self.tuples.values() {
            for tuple in tuples {
                adom.extend(tuple.iter().cloned());
            }
        }
        adom
    }
}

/// The active domain of an instance: all values occurring in some tuple.
pub fn active_domain(inst: &Instance) -> BTreeSet<Value> {
    inst.active_domain()
}

/// The active domain of a list of instances (a global state).
pub fn joint_active_domain(insts: &[Instance]) -> BTreeSet<Value> {
    let mut adom = BTreeSet::new();
    for inst in insts {
        adom.append(&mut inst.active_domain());
    }
    adom
}

/// Join of two same-schema instances over the doubled schema: unprimed
/// relations are interpreted per `d`, primed ones per `d2`. Postconditions over
/// `D ∪ D'` are evaluated against this join.
pub fn oplus(d: &Instance, d2: &Instance) -> Result<Instance, SchemaError> {
    if d.schema != d2.schema {
        return Err(SchemaError::SchemaMismatch);
    }
    let schema = Arc::new(d.schema.doubled());
    let mut tuples = BTreeMap::new();
    for (name, set) in &d.tuples {
        tuples.insert(name.clone(), set.clone());
    }
    for (name, set) in &d2.tuples {
        tuples.insert(primed(name), set.clone());
    }
    Ok(Instance { schema, tuples })
}

/// A variable assignment. Constants are not stored: a constant term evaluates
/// to itself.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct Assignment {
    bindings: BTreeMap<String, Value>,
}

impl Assignment {
    pub fn new() -> Self {
        Assignment::default()
    }

    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, Value)>,
        S: AsRef<str>,
    {
        let mut a = Assignment::new();
        for (var, value) in pairs {
            a.bind(var.as_ref(), value);
        }
        a
    }

    pub fn bind(&mut self, var: &str, value: Value) {
        self.bindings.insert(var.to_owned(), value);
    }

    /// The assignment updated at one variable (σ with x ↦ u), leaving `self`
    /// untouched.
    pub fn updated(&self, var: &str, value: Value) -> Assignment {
        let mut next = self.clone();
        next.bind(var, value);
        next
    }

    pub fn get(&self, var: &str) -> Option<&Value> {
        self.bindings.get(var)
    }

    pub fn bindings(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.bindings.iter().map(|(v, u)| (v.as_str(), u))
    }

    /// Restriction of the assignment to a variable set.
    pub fn restrict(&self, vars: &BTreeSet<String>) -> Assignment {
        Assignment {
            bindings: self
                .bindings
                .iter()
                .filter(|(v, _)| vars.contains(*v))
                .map(|(v, u)| (v.clone(), u.clone()))
                .collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }
}

/// A term: a variable or an (interned) constant.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Term {
    Var(String),
    Const(Value),
}

impl Term {
    pub fn var(name: &str) -> Term {
        Term::Var(name.to_owned())
    }

    pub fn constant(v: impl Into<Value>) -> Term {
        Term::Const(v.into())
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => f.write_str(v),
            Term::Const(c) => write!(f, "{c}"),
        }
    }
}

/// First-order formulas over a schema, in the minimal connective set. Derived
/// connectives (∧, ∨, ∃, ≠) are provided as constructors that desugar.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum FOFormula {
    Eq(Term, Term),
    Atom(String, Vec<Term>),
    Not(Box<FOFormula>),
    Implies(Box<FOFormula>, Box<FOFormula>),
    Forall(String, Box<FOFormula>),
}

impl FOFormula {
    pub fn atom(relation: &str, terms: Vec<Term>) -> FOFormula {
        FOFormula::Atom(relation.to_owned(), terms)
    }

    pub fn eq(a: Term, b: Term) -> FOFormula {
        FOFormula::Eq(a, b)
    }

    pub fn neq(a: Term, b: Term) -> FOFormula {
        FOFormula::not(FOFormula::Eq(a, b))
    }

    pub fn not(f: FOFormula) -> FOFormula {
        FOFormula::Not(Box::new(f))
    }

    pub fn implies(a: FOFormula, b: FOFormula) -> FOFormula {
        FOFormula::Implies(Box::new(a), Box::new(b))
    }

    /// a ∧ b, stored as ¬(a → ¬b).
    pub fn and(a: FOFormula, b: FOFormula) -> FOFormula {
        FOFormula::not(FOFormula::implies(a, FOFormula::not(b)))
    }

    /// a ∨ b, stored as ¬a → b.
    pub fn or(a: FOFormula, b: FOFormula) -> FOFormula {
        FOFormula::implies(FOFormula::not(a), b)
    }

    pub fn forall(var: &str, f: FOFormula) -> FOFormula {
        FOFormula::Forall(var.to_owned(), Box::new(f))
    }

    /// ∃x φ, stored as ¬∀x ¬φ.
    pub fn exists(var: &str, f: FOFormula) -> FOFormula {
        FOFormula::not(FOFormula::forall(var, FOFormula::not(f)))
    }

    /// Conjunction of a sequence (the empty conjunction is the tautology).
    pub fn conj(fs: impl IntoIterator<Item = FOFormula>) -> FOFormula {
        let mut iter = fs.into_iter();
        match iter.next() {
            None => FOFormula::tautology(),
            Some(first) => iter.fold(first, FOFormula::and),
        }
    }

    /// The fixed tautology used for `true`: ∀x x = x.
    pub fn tautology() -> FOFormula {
        FOFormula::forall("x", FOFormula::Eq(Term::var("x"), Term::var("x")))
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut free = BTreeSet::new();
        self.collect_free(&mut BTreeSet::new(), &mut free);
        free
    }

    fn collect_free(&self, bound: &mut BTreeSet<String>, free: &mut BTreeSet<String>) {
        match self {
            FOFormula::Eq(a, b) => {
                for t in [a, b] {
                    if let Term::Var(v) = t {
                        if !bound.contains(v) {
                            free.insert(v.clone());
                        }
                    }
                }
            }
            FOFormula::Atom(_, terms) => {
                for t in terms {
                    if let Term::Var(v) = t {
                        if !bound.contains(v) {
                            free.insert(v.clone());
                        }
                    }
                }
            }
            FOFormula::Not(f) => f.collect_free(bound, free),
            FOFormula::Implies(a, b) => {
                a.collect_free(bound, free);
                b.collect_free(bound, free);
            }
            FOFormula::Forall(x, f) => {
                let fresh = bound.insert(x.clone());
                f.collect_free(bound, free);
                if fresh {
                    bound.remove(x);
                }
            }
        }
    }

    /// All variables, free or bound.
    pub fn all_vars(&self) -> BTreeSet<String> {
        let mut vars = BTreeSet::new();
        self.collect_vars(&mut vars);
        vars
    }

    fn collect_vars(&self, vars: &mut BTreeSet<String>) {
        match self {
            FOFormula::Eq(a, b) => {
                for t in [a, b] {
                    if let Term::Var(v) = t {
                        vars.insert(v.clone());
                    }
                }
            }
            FOFormula::Atom(_, terms) => {
                for t in terms {
                    if let Term::Var(v) = t {
                        vars.insert(v.clone());
                    }
                }
            }
            FOFormula::Not(f) => f.collect_vars(vars),
            FOFormula::Implies(a, b) => {
                a.collect_vars(vars);
                b.collect_vars(vars);
            }
            FOFormula::Forall(x, f) => {
                vars.insert(x.clone());
                f.collect_vars(vars);
            }
        }
    }

    /// All constants mentioned in the formula.
    pub fn constants(&self) -> BTreeSet<Value> {
        let mut consts = BTreeSet::new();
        self.collect_constants(&mut consts);
        consts
    }

    fn collect_constants(&self, consts: &mut BTreeSet<Value>) {
        match self {
            FOFormula::Eq(a, b) => {
                for t in [a, b] {
                    if let Term::Const(c) = t {
                        consts.insert(c.clone());
                    }
                }
            }
            FOFormula::Atom(_, terms) => {
                for t in terms {
                    if let Term::Const(c) = t {
                        consts.insert(c.clone());
                    }
                }
            }
            FOFormula::Not(f) => f.collect_constants(consts),
            FOFormula::Implies(a, b) => {
                a.collect_constants(consts);
                b.collect_constants(consts);
            }
            FOFormula::Forall(_, f) => f.collect_constants(consts),
        }
    }

    /// All relation names mentioned in atoms.
    pub fn relations(&self) -> BTreeSet<String> {
        let mut rels = BTreeSet::new();
        self.collect_relations(&mut rels);
        rels
    }

    fn collect_relations(&self, rels: &mut BTreeSet<String>) {
        match self {
            FOFormula::Eq(..) => {}
            FOFormula::Atom(r, _) => {
                rels.insert(r.clone());
            }
            FOFormula::Not(f) => f.collect_relations(rels),
            FOFormula::Implies(a, b) => {
                a.collect_relations(rels);
                b.collect_relations(rels);
            }
            FOFormula::Forall(_, f) => f.collect_relations(rels),
        }
    }

    /// Check atoms against a schema (existence + arity).
    pub fn validate(&self, schema: &Schema) -> Result<(), SchemaError> {
        match self {
            FOFormula::Eq(..) => Ok(()),
            FOFormula::Atom(r, terms) => match schema.arity(r) {
                None => Err(SchemaError::UnknownRelation(r.clone())),
                Some(a) if a != terms.len() => Err(SchemaError::ArityMismatch {
                    relation: r.clone(),
                    expected: a,
                    found: terms.len(),
                }),
                Some(_) => Ok(()),
            },
            FOFormula::Not(f) => f.validate(schema),
            FOFormula::Implies(a, b) => {
                a.validate(schema)?;
                b.validate(schema)
            }
            FOFormula::Forall(_, f) => f.validate(schema),
        }
    }
}

/// FO evaluation errors.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("unbound variable '{0}'")]
    UnboundVariable(String),

    #[error(transparent)]
    Schema(#[from] SchemaError),
}

/// Active-domain satisfaction: (D, σ) ⊨ φ.
///
/// Universal quantifiers range over the active domain of `inst` only. Free
/// variables may be bound to values outside the active domain (atoms over such
/// values are simply false unless the tuple is present). Equality is
/// syntactic, in particular between constants.
pub fn fo_eval(inst: &Instance, sigma: &Assignment, phi: &FOFormula) -> Result<bool, EvalError> {
    let adom = inst.active_domain();
    eval_rec(inst, &adom, sigma, phi)
}

fn term_value(sigma: &Assignment, t: &Term) -> Result<Value, EvalError> {
    match t {
        Term::Const(c) => Ok(c.clone()),
        Term::Var(v) => sigma
            .get(v)
            .cloned()
            .ok_or_else(|| EvalError::UnboundVariable(v.clone())),
    }
}

fn eval_rec(
    inst: &Instance,
    adom: &BTreeSet<Value>,
    sigma: &Assignment,
    phi: &FOFormula,
) -> Result<bool, EvalError> {
    match phi {
        FOFormula::Eq(a, b) => Ok(term_value(sigma, a)? == term_value(sigma, b)?),
        FOFormula::Atom(r, terms) => {
            let arity = inst
                .schema
                .arity(r)
                .ok_or_else(|| SchemaError::UnknownRelation(r.clone()))?;
            if arity != terms.len() {
                return Err(SchemaError::ArityMismatch {
                    relation: r.clone(),
                    expected: arity,
                    found: terms.len(),
                }
                .into());
            }
            let tuple: Tuple = terms
                .iter()
                .map(|t| term_value(sigma, t))
                .collect::<Result<_, _>>()?;
            Ok(inst.contains(r, &tuple))
        }
        FOFormula::Not(f) => Ok(!eval_rec(inst, adom, sigma, f)?),
        FOFormula::Implies(a, b) => {
            Ok(!eval_rec(inst, adom, sigma, a)? || eval_rec(inst, adom, sigma, b)?)
        }
        FOFormula::Forall(x, f) => {
            if let Some(result) = eval_guarded_chain(inst, adom, sigma, phi)? {
                return Ok(result);
            }
            for u in adom {
                let extended = sigma.updated(x, u.clone());
                if !eval_rec(inst, adom, &extended, f)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
    }
}

/// Relativized evaluation of ∀x̄ (R(t̄) → rest) when the guard atom pins every
/// quantified variable: the implication is vacuous wherever the guard is
/// false, so the quantifiers can be walked over the tuples of R instead of the
/// full adom^k grid. Returns None (fall back to plain enumeration) whenever
/// the shape does not apply or an error should surface on the plain path.
fn eval_guarded_chain(
    inst: &Instance,
    adom: &BTreeSet<Value>,
    sigma: &Assignment,
    phi: &FOFormula,
) -> Result<Option<bool>, EvalError> {
    let mut chain: Vec<&str> = Vec::new();
    let mut body = phi;
    while let FOFormula::Forall(x, f) = body {
        if chain.contains(&x.as_str()) {
            return Ok(None);
        }
        chain.push(x);
        body = f;
    }
    let FOFormula::Implies(guard, rest) = body else {
        return Ok(None);
    };
    let FOFormula::Atom(r, terms) = guard.as_ref() else {
        return Ok(None);
    };
    if inst.schema.arity(r) != Some(terms.len()) {
        return Ok(None);
    }
    let pinned: BTreeSet<&str> = terms
        .iter()
        .filter_map(|t| match t {
            Term::Var(v) => Some(v.as_str()),
            Term::Const(_) => None,
        })
        .collect();
    if !chain.iter().all(|x| pinned.contains(x)) {
        return Ok(None);
    }
    // Variables outside the chain must already be bound; otherwise the plain
    // path must raise the unbound-variable error even when R is empty.
    let outer_bound = |v: &str| chain.contains(&v) || sigma.get(v).is_some();
    if !pinned.iter().all(|v| outer_bound(v)) {
        return Ok(None);
    }
    if !rest.free_vars().iter().all(|v| outer_bound(v)) {
        return Ok(None);
    }
    'tuples: for tuple in inst.get(r) {
        let mut bound: Vec<(&str, &Value)> = Vec::with_capacity(chain.len());
        for (term, val) in terms.iter().zip(tuple.iter()) {
            let matched = match term {
                Term::Const(c) => c == val,
                Term::Var(v) if chain.contains(&v.as_str()) => {
                    match bound.iter().find(|(name, _)| *name == v.as_str()) {
                        Some((_, prev)) => *prev == val,
                        None => {
                            bound.push((v.as_str(), val));
                            true
                        }
                    }
                }
                Term::Var(v) => sigma.get(v) == Some(val),
            };
            if !matched {
                continue 'tuples;
            }
        }
        let mut ext = sigma.clone();
        for (v, val) in bound {
            ext = ext.updated(v, val.clone());
        }
        if !eval_rec(inst, adom, &ext, rest)? {
            return Ok(Some(false));
        }
    }
    Ok(Some(true))
}

/// A witness for an isomorphism of global states: a constant-preserving
/// bijection between active domains (plus constants) mapping every tuple of
/// every component onto the corresponding component of the other state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IsoWitness {
    mapping: BTreeMap<Value, Value>,
}

impl IsoWitness {
    pub fn mapping(&self) -> &BTreeMap<Value, Value> {
        &self.mapping
    }

    pub fn apply(&self, v: &Value) -> Option<&Value> {
        self.mapping.get(v)
    }

    /// Independently re-check that this mapping witnesses `s ≃ s2`.
    pub fn verify(&self, s: &[Instance], s2: &[Instance], constants: &BTreeSet<Value>) -> bool {
        let dom1: BTreeSet<Value> = joint_active_domain(s)
            .into_iter()
            .chain(constants.iter().cloned())
            .collect();
        let dom2: BTreeSet<Value> = joint_active_domain(s2)
            .into_iter()
            .chain(constants.iter().cloned())
            .collect();
        // Bijection between exactly the two domains, identity on constants.
        if self.mapping.len() != dom1.len() {
            return false;
        }
        let image: BTreeSet<&Value> = self.mapping.values().collect();
        if image.len() != self.mapping.len() {
            return false;
        }
        if !self.mapping.keys().all(|k| dom1.contains(k)) {
            return false;
        }
        if image.len() != dom2.len() || !image.iter().all(|v| dom2.contains(*v)) {
            return false;
        }
        if !constants
            .iter()
            .all(|c| self.mapping.get(c) == Some(c) || !dom1.contains(c))
        {
            return false;
        }
        if s.len() != s2.len() {
            return false;
        }
        for (a, b) in s.iter().zip(s2) {
            if a.schema != b.schema {
                return false;
            }
            for (rel, _) in a.schema.relations() {
                let ta = a.get(rel);
                let tb = b.get(rel);
                if ta.len() != tb.len() {
                    return false;
                }
                for tuple in ta {
                    let mapped: Option<Tuple> =
                        tuple.iter().map(|v| self.apply(v).cloned()).collect();
                    match mapped {
                        Some(m) if tb.contains(&m) => {}
                        _ => return false,
                    }
                }
            }
        }
        true
    }
}

/// Per-value structural profile: occurrence counts keyed by
/// (component index, relation, position). Isomorphic values must have equal
/// profiles, which both filters whole states quickly and prunes the search.
type Profile = BTreeMap<(usize, String, usize), usize>;

fn profiles(s: &[Instance], constants: &BTreeSet<Value>) -> BTreeMap<Value, Profile> {
    let mut map: BTreeMap<Value, Profile> = BTreeMap::new();
    for c in constants {
        map.entry(c.clone()).or_default();
    }
    for (ci, inst) in s.iter().enumerate() {
        for (rel, tuples) in inst.relations() {
            for tuple in tuples {
                for (pos, v) in tuple.iter().enumerate() {
                    *map.entry(v.clone())
                        .or_default()
                        .entry((ci, rel.to_owned(), pos))
                        .or_insert(0) += 1;
                }
            }
        }
    }
    map
}

/// The canonical-form filter: a structural signature equal on isomorphic
/// states. Constants are anchored by name; other values contribute their
/// profile to a multiset.
fn signature(
    s: &[Instance],
    profs: &BTreeMap<Value, Profile>,
    constants: &BTreeSet<Value>,
) -> (Vec<(Value, Profile)>, Vec<Profile>, Vec<(usize, String, usize)>) {
    let mut anchored = Vec::new();
    let mut floating = Vec::new();
    for (v, p) in profs {
        if constants.contains(v) {
            anchored.push((v.clone(), p.clone()));
        } else {
            floating.push(p.clone());
        }
    }
    floating.sort();
    let mut counts = Vec::new();
    for (ci, inst) in s.iter().enumerate() {
        for (rel, tuples) in inst.relations() {
            counts.push((ci, rel.to_owned(), tuples.len()));
        }
    }
    (anchored, floating, counts)
}

/// Search for a single bijection witnessing componentwise isomorphism of two
/// global states (lists of local instances) simultaneously. Returns `None`
/// both on absence of a witness and on shape mismatch (different component
/// counts or schemas).
pub fn find_isomorphism(
    s: &[Instance],
    s2: &[Instance],
    constants: &BTreeSet<Value>,
) -> Option<IsoWitness> {
    find_isomorphism_forced(s, s2, constants, &BTreeMap::new())
}

/// Isomorphism search honouring a forced partial mapping (used for
/// assignment-equivalence checks). Forced pairs outside the relevant domains
/// must be handled by the caller.
fn find_isomorphism_forced(
    s: &[Instance],
    s2: &[Instance],
    constants: &BTreeSet<Value>,
    forced: &BTreeMap<Value, Value>,
) -> Option<IsoWitness> {
    if s.len() != s2.len() {
        return None;
    }
    for (a, b) in s.iter().zip(s2) {
        if a.schema != b.schema {
            return None;
        }
    }

    let prof1 = profiles(s, constants);
    let prof2 = profiles(s2, constants);
    if prof1.len() != prof2.len() {
        return None;
    }
    // Fast filter: equal canonical signature required before any search.
    if signature(s, &prof1, constants) != signature(s2, &prof2, constants) {
        return None;
    }

    let mut mapping: BTreeMap<Value, Value> = BTreeMap::new();
    let mut used: BTreeSet<Value> = BTreeSet::new();
    for c in constants {
        if prof1.contains_key(c) {
            if prof1.get(c) != prof2.get(c) {
                return None;
            }
            mapping.insert(c.clone(), c.clone());
            used.insert(c.clone());
        }
    }
    for (v, w) in forced {
        if let Some(prev) = mapping.get(v) {
            if prev != w {
                return None;
            }
            continue;
        }
        if !prof1.contains_key(v) {
            // Caller handles values outside adom(s) ∪ C.
            continue;
        }
        if !prof2.contains_key(w) || used.contains(w) || prof1.get(v) != prof2.get(w) {
            return None;
        }
        mapping.insert(v.clone(), w.clone());
        used.insert(w.clone());
    }

    // Order the remaining values by decreasing degree (total occurrence count),
    // then name, for fail-fast assignment.
    let mut pending: Vec<&Value> = prof1.keys().filter(|v| !mapping.contains_key(*v)).collect();
    pending.sort_by_key(|v| {
        let degree: usize = prof1[*v].values().sum();
        (core::cmp::Reverse(degree), (*v).clone())
    });

    let candidates: Vec<&Value> = prof2.keys().collect();
    if backtrack(
        s,
        s2,
        &prof1,
        &prof2,
        &pending,
        0,
        &candidates,
        &mut mapping,
        &mut used,
    ) {
        Some(IsoWitness { mapping })
    } else {
        None
    }
}

#[allow(clippy::too_many_arguments)]
fn backtrack(
    s: &[Instance],
    s2: &[Instance],
    prof1: &BTreeMap<Value, Profile>,
    prof2: &BTreeMap<Value, Profile>,
    pending: &[&Value],
    index: usize,
    candidates: &[&Value],
    mapping: &mut BTreeMap<Value, Value>,
    used: &mut BTreeSet<Value>,
) -> bool {
    if index == pending.len() {
        return verify_tuples(s, s2, mapping);
    }
    let v = pending[index];
    let profile = &prof1[v];
    for w in candidates {
        if used.contains(*w) || prof2[*w] != *profile {
            continue;
        }
        mapping.insert(v.clone(), (*w).clone());
        used.insert((*w).clone());
        if consistent_so_far(s, s2, mapping, v)
            && backtrack(s, s2, prof1, prof2, pending, index + 1, candidates, mapping, used)
        {
            return true;
        }
        mapping.remove(v);
        used.remove(*w);
    }
    false
}

/// Prune: every tuple involving `v` whose values are all mapped must map onto
/// a tuple of the corresponding relation of `s2`.
fn consistent_so_far(
    s: &[Instance],
    s2: &[Instance],
    mapping: &BTreeMap<Value, Value>,
    v: &Value,
) -> bool {
    for (a, b) in s.iter().zip(s2) {
        for (rel, tuples) in a.relations() {
            for tuple in tuples {
                if !tuple.contains(v) {
                    continue;
                }
                let mapped: Option<Tuple> = tuple.iter().map(|u| mapping.get(u).cloned()).collect();
                if let Some(m) = mapped {
                    if !b.contains(rel, &m) {
                        return false;
                    }
                }
            }
        }
    }
    true
}

fn verify_tuples(s: &[Instance], s2: &[Instance], mapping: &BTreeMap<Value, Value>) -> bool {
    for (a, b) in s.iter().zip(s2) {
        for (rel, _) in a.schema.relations() {
            let ta = a.get(rel);
            let tb = b.get(rel);
            if ta.len() != tb.len() {
                return false;
            }
            for tuple in ta {
                let mapped: Option<Tuple> = tuple.iter().map(|u| mapping.get(u).cloned()).collect();
                match mapped {
                    Some(m) if tb.contains(&m) => {}
                    _ => return false,
                }
            }
        }
    }
    true
}

/// Check whether `sigma` and `sigma2` are equivalent for `vars` with respect
/// to the global states `s` and `s2`: a bijection γ over
/// adom(s) ∪ C ∪ σ(vars) whose restriction to adom(s) ∪ C witnesses `s ≃ s2`
/// and with σ2(v) = γ(σ(v)) for every v in `vars`.
pub fn equivalent_assignments(
    s: &[Instance],
    s2: &[Instance],
    sigma: &Assignment,
    sigma2: &Assignment,
    vars: &BTreeSet<String>,
    constants: &BTreeSet<Value>,
) -> Option<BTreeMap<Value, Value>> {
    let dom1: BTreeSet<Value> = joint_active_domain(s)
        .into_iter()
        .chain(constants.iter().cloned())
        .collect();
    let dom2: BTreeSet<Value> = joint_active_domain(s2)
        .into_iter()
        .chain(constants.iter().cloned())
        .collect();

    let mut forced: BTreeMap<Value, Value> = BTreeMap::new();
    let mut forced_image: BTreeMap<Value, Value> = BTreeMap::new();
    for v in vars {
        let u = sigma.get(v)?.clone();
        let u2 = sigma2.get(v)?.clone();
        // γ is a bijection restricting to a witness on dom1 → dom2, so a value
        // lies inside dom1 iff its image lies inside dom2.
        if dom1.contains(&u) != dom2.contains(&u2) {
            return None;
        }
        if let Some(prev) = forced.get(&u) {
            if *prev != u2 {
                return None;
            }
        }
        if let Some(prev) = forced_image.get(&u2) {
            if *prev != u {
                return None;
            }
        }
        forced.insert(u.clone(), u2.clone());
        forced_image.insert(u2, u);
    }

    let witness = find_isomorphism_forced(s, s2, constants, &forced)?;
    let mut gamma = witness.mapping;
    for (u, u2) in &forced {
        if !dom1.contains(u) {
            // Outside the witness domain: constants must still map to
            // themselves (they are in dom1 by construction, so this branch
            // only sees plain values), and injectivity was checked above.
            gamma.insert(u.clone(), u2.clone());
        }
    }
    Some(gamma)
}

/// Renaming errors.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum RenameError {
    #[error("renaming not defined at value '{0}'")]
    Missing(Value),

    #[error("renaming not injective: '{0}' and '{1}' collide")]
    NotInjective(Value, Value),

    #[error("renaming moves constant '{0}'")]
    MovesConstant(Value),
}

/// Apply an injective, constant-preserving value renaming to a global state.
/// Values absent from `f` that are constants map to themselves; any other
/// unmapped active-domain value is an error. The result is isomorphic to `s`.
pub fn rename(
    s: &[Instance],
    f: &BTreeMap<Value, Value>,
    constants: &BTreeSet<Value>,
) -> Result<Vec<Instance>, RenameError> {
    for c in constants {
        if let Some(img) = f.get(c) {
            if img != c {
                return Err(RenameError::MovesConstant(c.clone()));
            }
        }
    }
    let mut seen: BTreeMap<Value, Value> = BTreeMap::new();
    let mut lookup = |v: &Value| -> Result<Value, RenameError> {
        let image = match f.get(v) {
            Some(img) => img.clone(),
            None if constants.contains(v) => v.clone(),
            None => return Err(RenameError::Missing(v.clone())),
        };
        if let Some(prev) = seen.get(&image) {
            if prev != v {
                return Err(RenameError::NotInjective(prev.clone(), v.clone()));
            }
        }
        seen.insert(image.clone(), v.clone());
        Ok(image)
    };
    let mut out = Vec::with_capacity(s.len());
    for inst in s {
        let mut renamed = Instance::empty(inst.schema.clone());
        for (rel, tuples) in inst.relations() {
            for tuple in tuples {
                let mapped: Tuple = tuple.iter().map(&mut lookup).collect::<Result<_, _>>()?;
                renamed
                    .insert(rel, mapped)
                    .expect("renaming preserves schema");
            }
        }
        out.push(renamed);
    }
    Ok(out)
}
