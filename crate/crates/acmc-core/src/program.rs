//! Declarative agent programs and the models they induce.
//!
//! A program gives each agent a local schema, an initial instance, and a set
//! of parametrised action rules `α(x̄) = ⟨π, ψ⟩`: the precondition π is a
//! first-order formula over the agent's local schema, the postcondition ψ a
//! first-order formula over the doubled global schema (primed relations
//! describe the successor). The induced model is the reachable closure of the
//! initial state under joint ground actions: a joint action fires when every
//! component precondition holds locally, and a successor is admitted when the
//! join of current and successor instance satisfies every component
//! postcondition, every value of the successor comes from the current state,
//! the actual parameters, or the postcondition constants, and every relation
//! that no fired rule writes (mentions primed) is unchanged.
//!
//! Successor generation runs one of two engines. The constructive engine
//! applies rules whose postconditions consist of ground insert/delete
//! literals, pure tests, and atom-guarded universal clauses: it builds the
//! minimal-change successor from the literals and then verifies the full
//! postcondition conjunction, so everything it produces is a genuine
//! transition (successors that deviate from the literals in ways the formula
//! happens to also permit are deliberately not explored). The generic engine
//! enumerates all candidate instances over the allowed value set under an
//! explicit budget and keeps exactly the satisfying ones.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use alloc::{vec, collections::BTreeMap, collections::BTreeSet};

use thiserror::Error;

use crate::acmas::{
    all_tuples, global_schema_of, Acmas, AcmasBuilder, ActionSig, Agent, ExplorationBudget,
    GlobalState, GroundAction, ModelError, SecParser, StateId, SKIP,
};
use crate::lex::{lex, Tok, Token};
use crate::logic::{is_keyword, parse_formula_tokens, SpecError};
use crate::relational::{
    fo_eval, oplus, unprimed, Assignment, EvalError, FOFormula, Instance, Schema, SchemaError,
    Term, Tuple, Value,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProgramError {
    #[error(transparent)]
    Parse(#[from] SpecError),

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Schema(#[from] SchemaError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error("relation '{relation}' owned by both '{first}' and '{second}'")]
    SharedRelation {
        relation: String,
        first: String,
        second: String,
    },

    #[error("agent '{agent}' declares view '{relation}' but no other agent owns it")]
    UnknownView { agent: String, relation: String },

    #[error("action '{action}': free variable '{var}' is not a parameter")]
    FreeVariable { action: String, var: String },

    #[error("action '{action}': duplicate parameter '{param}'")]
    DuplicateParam { action: String, param: String },

    #[error("program domain is symbolic; supply a finite domain")]
    SymbolicDomain,

    #[error("domain is missing required value '{0}'")]
    DomainTooSmall(Value),

    #[error("declared bound {bound} exceeded: a reachable state has {found} active-domain values")]
    BoundExceeded { bound: usize, found: usize },

    #[error("agent index {0} out of range")]
    BadAgent(usize),
}

/// One effect conjunct of a constructive postcondition.
#[derive(Clone, Debug, PartialEq, Eq)]
enum EffectClause {
    /// A positive primed literal with parameter/constant terms: insert.
    Insert { rel: String, terms: Vec<Term> },
    /// A negated primed literal: delete.
    Delete { rel: String, terms: Vec<Term> },
    /// Anything verified on the join only (tests, guarded clauses).
    Check,
}

/// An action rule α(x̄) = ⟨π, ψ⟩.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionRule {
    name: String,
    params: Vec<String>,
    pre: FOFormula,
    post: FOFormula,
    consts: BTreeSet<Value>,
    post_consts: BTreeSet<Value>,
    writes: BTreeSet<String>,
    effects: Option<Vec<EffectClause>>,
}

fn fo_constants(phi: &FOFormula, out: &mut BTreeSet<Value>) {
    match phi {
        FOFormula::Eq(a, b) => {
            for t in [a, b] {
                if let Term::Const(c) = t {
                    out.insert(c.clone());
                }
            }
        }
        FOFormula::Atom(_, terms) => {
            for t in terms {
                if let Term::Const(c) = t {
                    out.insert(c.clone());
                }
            }
        }
        FOFormula::Not(f) | FOFormula::Forall(_, f) => fo_constants(f, out),
        FOFormula::Implies(a, b) => {
            fo_constants(a, out);
            fo_constants(b, out);
        }
    }
}

/// Base names of relations occurring primed (i.e. written) in a formula.
fn primed_relations(phi: &FOFormula, out: &mut BTreeSet<String>) {
    match phi {
        FOFormula::Eq(..) => {}
        FOFormula::Atom(r, _) => {
            if let Some(base) = unprimed(r) {
                out.insert(base.to_owned());
            }
        }
        FOFormula::Not(f) | FOFormula::Forall(_, f) => primed_relations(f, out),
        FOFormula::Implies(a, b) => {
            primed_relations(a, out);
            primed_relations(b, out);
        }
    }
}

/// Split a formula into its conjuncts (undoing the ¬(a → ¬b) encoding of ∧).
fn flatten_conj<'a>(phi: &'a FOFormula, out: &mut Vec<&'a FOFormula>) {
    if let FOFormula::Not(imp) = phi {
        if let FOFormula::Implies(a, b) = imp.as_ref() {
            if let FOFormula::Not(right) = b.as_ref() {
                flatten_conj(a, out);
                flatten_conj(right, out);
                return;
            }
        }
    }
    out.push(phi);
}

/// A ∀-chain whose body is an implication guarded by an atom pinning every
/// quantified variable. Such clauses are vacuous outside the guard relation's
/// tuples, so the minimal-change successor can be checked against them
/// directly (and cheaply, thanks to relativized evaluation).
fn is_guarded_chain(phi: &FOFormula) -> bool {
    let mut chain: Vec<&str> = Vec::new();
    let mut body = phi;
    while let FOFormula::Forall(x, f) = body {
        if chain.contains(&x.as_str()) {
            return false;
        }
        chain.push(x);
        body = f;
    }
    if chain.is_empty() {
        return false;
    }
    let FOFormula::Implies(guard, _) = body else {
        return false;
    };
    let FOFormula::Atom(_, terms) = guard.as_ref() else {
        return false;
    };
    let pinned: BTreeSet<&str> = terms
        .iter()
        .filter_map(|t| match t {
            Term::Var(v) => Some(v.as_str()),
            Term::Const(_) => None,
        })
        .collect();
    chain.iter().all(|x| pinned.contains(x))
}

/// Classify a postcondition for the constructive engine; None means the rule
/// needs the generic engine.
fn classify(post: &FOFormula) -> Option<Vec<EffectClause>> {
    let mut conjuncts = Vec::new();
    flatten_conj(post, &mut conjuncts);
    let mut effects = Vec::new();
    for c in conjuncts {
        let clause = match c {
            FOFormula::Atom(r, terms) if unprimed(r).is_some() => EffectClause::Insert {
                rel: unprimed(r).unwrap().to_owned(),
                terms: terms.clone(),
            },
            FOFormula::Not(inner) => match inner.as_ref() {
                FOFormula::Atom(r, terms) if unprimed(r).is_some() => EffectClause::Delete {
                    rel: unprimed(r).unwrap().to_owned(),
                    terms: terms.clone(),
                },
                _ => {
                    let mut writes = BTreeSet::new();
                    primed_relations(c, &mut writes);
                    if writes.is_empty() || is_guarded_chain(c) {
                        EffectClause::Check
                    } else {
                        return None;
                    }
                }
            },
            other => {
                let mut writes = BTreeSet::new();
                primed_relations(other, &mut writes);
                if writes.is_empty() || is_guarded_chain(other) {
                    EffectClause::Check
                } else {
                    return None;
                }
            }
        };
        effects.push(clause);
    }
    Some(effects)
}

impl ActionRule {
    pub fn new(
        name: &str,
        params: Vec<String>,
        pre: FOFormula,
        post: FOFormula,
    ) -> Result<Self, ProgramError> {
        for (i, p) in params.iter().enumerate() {
            if params[..i].contains(p) {
                return Err(ProgramError::DuplicateParam {
                    action: name.to_owned(),
                    param: p.clone(),
                });
            }
        }
        for phi in [&pre, &post] {
            for v in phi.free_vars() {
                if !params.contains(&v) {
                    return Err(ProgramError::FreeVariable {
                        action: name.to_owned(),
                        var: v,
                    });
                }
            }
        }
        let mut consts = BTreeSet::new();
        fo_constants(&pre, &mut consts);
        let mut post_consts = BTreeSet::new();
        fo_constants(&post, &mut post_consts);
        consts.extend(post_consts.iter().cloned());
        let mut writes = BTreeSet::new();
        primed_relations(&post, &mut writes);
        let effects = classify(&post);
        Ok(ActionRule {
            name: name.to_owned(),
            params,
            pre,
            post,
            consts,
            post_consts,
            writes,
            effects,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &[String] {
        &self.params
    }

    pub fn pre(&self) -> &FOFormula {
        &self.pre
    }

    pub fn post(&self) -> &FOFormula {
        &self.post
    }

    /// Constants occurring in π or ψ.
    pub fn constants(&self) -> &BTreeSet<Value> {
        &self.consts
    }

    /// Base names of the relations the postcondition writes.
    pub fn writes(&self) -> &BTreeSet<String> {
        &self.writes
    }

    pub fn is_constructive(&self) -> bool {
        self.effects.is_some()
    }

    /// The postcondition with frame conjuncts ∀x̄ (P(x̄) → P'(x̄)) ∧
    /// ∀x̄ (P'(x̄) → P(x̄)) added for every relation it does not write. The
    /// induced-model semantics applies the same frames per joint action (to
    /// the set of relations no fired component writes), so that two agents
    /// can write different relations simultaneously.
    pub fn framed_post(&self, global: &Schema) -> FOFormula {
        let mut parts = vec![self.post.clone()];
        parts.extend(frame_clauses(global, &self.writes));
        FOFormula::conj(parts)
    }
}

/// Frame clauses for every relation of `global` not in `written`.
fn frame_clauses(global: &Schema, written: &BTreeSet<String>) -> Vec<FOFormula> {
    let mut out = Vec::new();
    for (rel, arity) in global.relations() {
        if written.contains(rel) {
            continue;
        }
        let vars: Vec<String> = (0..arity).map(|i| format!("x{i}")).collect();
        let terms: Vec<Term> = vars.iter().map(|v| Term::var(v)).collect();
        let plain = FOFormula::atom(rel, terms.clone());
        let primed = FOFormula::atom(&crate::relational::primed(rel), terms);
        for (a, b) in [(plain.clone(), primed.clone()), (primed, plain)] {
            let mut clause = FOFormula::implies(a, b);
            for v in vars.iter().rev() {
                clause = FOFormula::forall(v, clause);
            }
            out.push(clause);
        }
    }
    out
}

/// One agent's program: local schema (owned relations plus views of other
/// agents' relations), initial instance, and action rules.
#[derive(Clone, Debug)]
pub struct AgentProgram {
    pub name: String,
    pub schema: Arc<Schema>,
    /// Relations this agent owns (the rest of the schema are views).
    pub owned: BTreeSet<String>,
    pub init: Instance,
    pub rules: Vec<ActionRule>,
}

/// The domain declaration of a program.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DomainDecl {
    Finite(BTreeSet<Value>),
    /// Infinite domain; the declared values name the known constants. A
    /// finite domain must be supplied (e.g. by abstraction) to build models.
    Symbolic(BTreeSet<Value>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProgramMetrics {
    /// Σ_i max over the agent's rules of the parameter count.
    pub n_acp: usize,
    /// All initial-instance values and rule constants.
    pub c_acp: BTreeSet<Value>,
    pub declared_bound: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct ACProgram {
    pub domain: DomainDecl,
    pub declared_bound: Option<usize>,
    pub agents: Vec<AgentProgram>,
    global_schema: Arc<Schema>,
}

impl ACProgram {
    /// Validate ownership/views and assemble the global schema.
    pub fn new(
        domain: DomainDecl,
        declared_bound: Option<usize>,
        agents: Vec<AgentProgram>,
    ) -> Result<Self, ProgramError> {
        let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
        for a in &agents {
            for rel in &a.owned {
                if let Some(prev) = owner.insert(rel, &a.name) {
                    return Err(ProgramError::SharedRelation {
                        relation: rel.clone(),
                        first: prev.to_owned(),
                        second: a.name.clone(),
                    });
                }
            }
        }
        for a in &agents {
            for (rel, _) in a.schema.relations() {
                if !a.owned.contains(rel) && !owner.contains_key(rel) {
                    return Err(ProgramError::UnknownView {
                        agent: a.name.clone(),
                        relation: rel.to_owned(),
                    });
                }
            }
        }
        let mut global = Schema::new();
        for a in &agents {
            global = global.union(&a.schema)?;
        }
        Ok(ACProgram {
            domain,
            declared_bound,
            agents,
            global_schema: Arc::new(global),
        })
    }

    pub fn global_schema(&self) -> &Arc<Schema> {
        &self.global_schema
    }

    /// C_ACP: the union of initial active domains and rule constants.
    pub fn constants(&self) -> BTreeSet<Value> {
        let mut out = BTreeSet::new();
        for a in &self.agents {
            out.extend(a.init.active_domain());
            for r in &a.rules {
                out.extend(r.consts.iter().cloned());
            }
        }
        out
    }

    /// N_ACP: the maximum number of distinct parameters in a joint action.
    pub fn n_acp(&self) -> usize {
        self.agents
            .iter()
            .map(|a| a.rules.iter().map(|r| r.params.len()).max().unwrap_or(0))
            .sum()
    }

    pub fn metrics(&self) -> ProgramMetrics {
        ProgramMetrics {
            n_acp: self.n_acp(),
            c_acp: self.constants(),
            declared_bound: self.declared_bound,
        }
    }

    /// The initial global instance: the union of all agents' initial locals.
    pub fn initial_global(&self) -> Instance {
        let mut global = Instance::empty(self.global_schema.clone());
        for a in &self.agents {
            for (rel, tuples) in a.init.relations() {
                for t in tuples {
                    global.insert(rel, t.clone()).expect("local schemas within global");
                }
            }
        }
        global
    }

    /// Project a global instance onto each agent's local schema. Viewed
    /// relations appear in every local that declares them, which is what
    /// makes their contents part of the viewing agent's knowledge.
    pub fn project(&self, global: &Instance) -> GlobalState {
        let locals = self
            .agents
            .iter()
            .map(|a| {
                let mut local = Instance::empty(a.schema.clone());
                for (rel, _) in a.schema.relations() {
                    for t in global.get(rel) {
                        local.insert(rel, t.clone()).expect("schema checked");
                    }
                }
                local
            })
            .collect();
        GlobalState::new(locals)
    }

    pub fn initial_state(&self) -> GlobalState {
        self.project(&self.initial_global())
    }

    /// The agent list of the induced model (rules become action signatures).
    pub fn induced_agents(&self) -> Vec<Agent> {
        self.agents
            .iter()
            .map(|a| Agent {
                name: a.name.clone(),
                schema: a.schema.clone(),
                actions: a
                    .rules
                    .iter()
                    .map(|r| ActionSig {
                        name: r.name.clone(),
                        params: r.params.clone(),
                        precondition: r.pre.clone(),
                    })
                    .collect(),
            })
            .collect()
    }
}

/// Options for model induction.
#[derive(Clone, Debug)]
pub struct InduceOptions {
    pub budget: ExplorationBudget,
    /// Cap on simultaneously fired non-skip components per joint action.
    pub max_nonskip: Option<usize>,
    /// Route every rule through the generic enumerate-and-filter engine
    /// (used to cross-validate the constructive engine).
    pub force_generic: bool,
}

impl Default for InduceOptions {
    fn default() -> Self {
        InduceOptions {
            budget: ExplorationBudget::default(),
            max_nonskip: None,
            force_generic: false,
        }
    }
}

/// All parameter vectors over the domain, in canonical (odometer) order.
fn all_args(k: usize, domain: &[Value]) -> Vec<Vec<Value>> {
    let mut out: Vec<Vec<Value>> = vec![Vec::new()];
    for _ in 0..k {
        let mut next = Vec::with_capacity(out.len() * domain.len());
        for prefix in &out {
            for v in domain {
                let mut t = prefix.clone();
                t.push(v.clone());
                next.push(t);
            }
        }
        out = next;
    }
    out
}

/// Extend partial parameter bindings by matching one precondition atom
/// against the local tuples (planner-style grounding). A binding survives a
/// tuple when every constant term matches and every variable term is either
/// unbound or bound to the matching value.
fn match_atom(
    partials: Vec<BTreeMap<String, Value>>,
    terms: &[Term],
    tuples: &BTreeSet<Vec<Value>>,
) -> Vec<BTreeMap<String, Value>> {
    let mut next = Vec::new();
    for b in partials {
        'tuples: for t in tuples {
            let mut ext = b.clone();
            for (term, v) in terms.iter().zip(t) {
                match term {
                    Term::Const(c) => {
                        if c != v {
                            continue 'tuples;
                        }
                    }
                    Term::Var(x) => match ext.get(x) {
                        Some(bound) if bound != v => continue 'tuples,
                        Some(_) => {}
                        None => {
                            ext.insert(x.clone(), v.clone());
                        }
                    },
                }
            }
            next.push(ext);
        }
    }
    next
}

/// Candidate parameter vectors for one rule at a local instance: bindings
/// implied by the positive atom conjuncts of the precondition, with any
/// leftover parameters enumerated over the domain. Complete (every σ
/// satisfying the precondition is produced) because the atoms are necessary
/// conditions; the caller still confirms each candidate by evaluation.
fn pre_candidates(rule: &ActionRule, local: &Instance, domain: &[Value]) -> BTreeSet<Vec<Value>> {
    let mut conjuncts = Vec::new();
    flatten_conj(&rule.pre, &mut conjuncts);
    let mut partials: Vec<BTreeMap<String, Value>> = alloc::vec![BTreeMap::new()];
    for c in conjuncts {
        if let FOFormula::Atom(rel, terms) = c {
            partials = match_atom(partials, terms, local.get(rel));
        }
    }
    let mut out = BTreeSet::new();
    for b in partials {
        let open: Vec<usize> = (0..rule.params.len())
            .filter(|i| !b.contains_key(&rule.params[*i]))
            .collect();
        for completion in all_args(open.len(), domain) {
            let mut slots: Vec<Option<Value>> =
                rule.params.iter().map(|p| b.get(p).cloned()).collect();
            for (slot, v) in open.iter().zip(completion) {
                slots[*slot] = Some(v);
            }
            out.insert(slots.into_iter().map(|v| v.expect("all slots filled")).collect());
        }
    }
    out
}

fn nonskip_protocol(
    ap: &AgentProgram,
    local: &Instance,
    domain: &[Value],
) -> Result<Vec<(usize, Vec<Value>)>, ProgramError> {
    let mut out = Vec::new();
    for (ri, rule) in ap.rules.iter().enumerate() {
        for args in pre_candidates(rule, local, domain) {
            let sigma = Assignment::from_pairs(rule.params.iter().cloned().zip(args.iter().cloned()));
            if fo_eval(local, &sigma, &rule.pre)? {
                out.push((ri, args));
            }
        }
    }
    Ok(out)
}

/// The protocol of one agent at a local instance: all ground instantiations
/// of its rules whose precondition holds, plus skip.
pub fn induced_protocol(
    p: &ACProgram,
    agent: usize,
    local: &Instance,
    domain: &BTreeSet<Value>,
) -> Result<BTreeSet<(String, Vec<Value>)>, ProgramError> {
    let ap = p.agents.get(agent).ok_or(ProgramError::BadAgent(agent))?;
    let domain_vec: Vec<Value> = domain.iter().cloned().collect();
    let mut out = BTreeSet::new();
    out.insert((SKIP.to_owned(), Vec::new()));
    for (ri, args) in nonskip_protocol(ap, local, &domain_vec)? {
        out.insert((ap.rules[ri].name.clone(), args));
    }
    Ok(out)
}

fn term_arg(term: &Term, rule: &ActionRule, args: &[Value]) -> Value {
    match term {
        Term::Const(c) => c.clone(),
        Term::Var(v) => {
            let i = rule.params.iter().position(|p| p == v).expect("free vars are params");
            args[i].clone()
        }
    }
}

/// Verify a candidate successor against the joint-action semantics: frames on
/// unwritten relations, the active-domain containment clause, and every fired
/// postcondition on the instance join.
fn verify_candidate(
    s_global: &Instance,
    cand: &Instance,
    fired: &[(&ActionRule, &[Value])],
    global_schema: &Schema,
) -> Result<bool, ProgramError> {
    let mut written: BTreeSet<&str> = BTreeSet::new();
    for (rule, _) in fired {
        written.extend(rule.writes.iter().map(String::as_str));
    }
    for (rel, _) in global_schema.relations() {
        if !written.contains(rel) && cand.get(rel) != s_global.get(rel) {
            return Ok(false);
        }
    }
    let mut allowed = s_global.active_domain();
    for (rule, args) in fired {
        allowed.extend(args.iter().cloned());
        allowed.extend(rule.post_consts.iter().cloned());
    }
    if !cand.active_domain().is_subset(&allowed) {
        return Ok(false);
    }
    let join = oplus(s_global, cand)?;
    for (rule, args) in fired {
        let sigma =
            Assignment::from_pairs(rule.params.iter().cloned().zip(args.iter().cloned()));
        if !fo_eval(&join, &sigma, &rule.post)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// The minimal-change successor: apply all deletes, then all inserts.
fn delta_apply(s_global: &Instance, fired: &[(&ActionRule, &[Value])]) -> Instance {
    let mut next = s_global.clone();
    for (rule, args) in fired {
        for clause in rule.effects.as_deref().expect("constructive") {
            if let EffectClause::Delete { rel, terms } = clause {
                let tuple: Tuple = terms.iter().map(|t| term_arg(t, rule, args)).collect();
                next.remove(rel, &tuple);
            }
        }
    }
    for (rule, args) in fired {
        for clause in rule.effects.as_deref().expect("constructive") {
            if let EffectClause::Insert { rel, terms } = clause {
                let tuple: Tuple = terms.iter().map(|t| term_arg(t, rule, args)).collect();
                next.insert(rel, tuple).expect("writes are schema relations");
            }
        }
    }
    next
}

/// All candidate successors over the allowed value set: written relations
/// range over every tuple subset, unwritten ones are copied (the frame
/// condition makes any other choice fail verification anyway).
fn generic_candidates(
    s_global: &Instance,
    fired: &[(&ActionRule, &[Value])],
    global_schema: &Arc<Schema>,
    budget: &ExplorationBudget,
    label: &str,
) -> Result<Vec<Instance>, ProgramError> {
    let mut written: BTreeSet<&str> = BTreeSet::new();
    for (rule, _) in fired {
        written.extend(rule.writes.iter().map(String::as_str));
    }
    let mut allowed = s_global.active_domain();
    for (rule, args) in fired {
        allowed.extend(args.iter().cloned());
        allowed.extend(rule.post_consts.iter().cloned());
    }
    let allowed: Vec<Value> = allowed.into_iter().collect();

    let mut pools: Vec<(&str, Vec<Tuple>)> = Vec::new();
    let mut total = 1u128;
    for (rel, arity) in global_schema.relations() {
        if !written.contains(rel) {
            continue;
        }
        let tuples = all_tuples(&allowed, arity);
        if tuples.len() > 127 {
            return Err(ModelError::CandidateBudget {
                limit: budget.max_candidates,
                action: label.to_owned(),
            }
            .into());
        }
        total = total.saturating_mul(1u128 << tuples.len());
        pools.push((rel, tuples));
    }
    if total > budget.max_candidates as u128 {
        return Err(ModelError::CandidateBudget {
            limit: budget.max_candidates,
            action: label.to_owned(),
        }
        .into());
    }

    let mut base = Instance::empty(global_schema.clone());
    for (rel, _) in global_schema.relations() {
        if written.contains(rel) {
            continue;
        }
        for t in s_global.get(rel) {
            base.insert(rel, t.clone()).expect("schema checked");
        }
    }

    let mut out = Vec::new();
    let mut masks = vec![0u128; pools.len()];
    loop {
        let mut cand = base.clone();
        for ((rel, tuples), mask) in pools.iter().zip(&masks) {
            for (i, t) in tuples.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    cand.insert(rel, t.clone()).expect("tuple fits schema");
                }
            }
        }
        out.push(cand);
        let mut i = 0;
        loop {
            if i == masks.len() {
                return Ok(out);
            }
            masks[i] += 1;
            if masks[i] < (1u128 << pools[i].1.len()) {
                break;
            }
            masks[i] = 0;
            i += 1;
        }
    }
}

/// Enumerate joint choices (per agent: skip or one enabled ground action)
/// with at most `cap` non-skip components.
fn joint_choices<'a>(
    per_agent: &'a [Vec<(usize, Vec<Value>)>],
    cap: Option<usize>,
) -> Vec<Vec<Option<&'a (usize, Vec<Value>)>>> {
    let mut out = Vec::new();
    let mut cur: Vec<Option<&(usize, Vec<Value>)>> = Vec::with_capacity(per_agent.len());
    fn rec<'a>(
        per_agent: &'a [Vec<(usize, Vec<Value>)>],
        cap: Option<usize>,
        used: usize,
        cur: &mut Vec<Option<&'a (usize, Vec<Value>)>>,
        out: &mut Vec<Vec<Option<&'a (usize, Vec<Value>)>>>,
    ) {
        let i = cur.len();
        if i == per_agent.len() {
            out.push(cur.clone());
            return;
        }
        cur.push(None);
        rec(per_agent, cap, used, cur, out);
        cur.pop();
        if cap.is_none_or(|c| used < c) {
            for choice in &per_agent[i] {
                cur.push(Some(choice));
                rec(per_agent, cap, used + 1, cur, out);
                cur.pop();
            }
        }
    }
    rec(per_agent, cap, 0, &mut cur, &mut out);
    out
}

/// Build the induced model: the reachable closure of the initial state under
/// joint ground actions. Seriality holds because the all-skip joint action is
/// always a self-loop.
pub fn induced_acmas(
    p: &ACProgram,
    domain: &BTreeSet<Value>,
    opts: &InduceOptions,
) -> Result<Acmas, ProgramError> {
    let c_acp = p.constants();
    for v in &c_acp {
        if !domain.contains(v) {
            return Err(ProgramError::DomainTooSmall(v.clone()));
        }
    }
    let agents = p.induced_agents();
    let global_schema = global_schema_of(&agents)?;
    let domain_vec: Vec<Value> = domain.iter().cloned().collect();

    let mut builder = AcmasBuilder::new(agents, domain.clone(), c_acp, p.initial_state())?;
    let mut protocols: BTreeMap<(usize, Instance), Arc<Vec<(usize, Vec<Value>)>>> = BTreeMap::new();
    let mut frontier: Vec<StateId> = vec![0];
    while let Some(sid) = frontier.pop() {
        let state = builder.state(sid).clone();
        let s_global = state.global_instance(&global_schema);

        let mut per_agent: Vec<Arc<Vec<(usize, Vec<Value>)>>> = Vec::with_capacity(p.agents.len());
        for (i, ap) in p.agents.iter().enumerate() {
            let key = (i, state.locals[i].clone());
            let enabled = match protocols.get(&key) {
                Some(e) => e.clone(),
                None => {
                    let e = Arc::new(nonskip_protocol(ap, &state.locals[i], &domain_vec)?);
                    protocols.insert(key, e.clone());
                    e
                }
            };
            per_agent.push(enabled);
        }
        let per_agent_refs: Vec<Vec<(usize, Vec<Value>)>> =
            per_agent.iter().map(|e| e.as_ref().clone()).collect();

        // Solo verdicts: whether one constructive ground component, fired
        // alone, yields a valid successor from this state. When the fired
        // components have pairwise-disjoint write sets, the joint action
        // succeeds exactly when every component succeeds alone, because
        // each postcondition's primed atoms mention only that component's
        // writes and its unprimed atoms read the shared source state.
        let mut solo: BTreeMap<(usize, usize, Vec<Value>), bool> = BTreeMap::new();

        for joint in joint_choices(&per_agent_refs, opts.max_nonskip) {
            let mut fired: Vec<(&ActionRule, &[Value])> = Vec::new();
            let mut keys: Vec<(usize, usize, Vec<Value>)> = Vec::new();
            let mut components: Vec<(String, Vec<Value>)> = Vec::with_capacity(p.agents.len());
            for (i, choice) in joint.iter().enumerate() {
                match choice {
                    None => components.push((SKIP.to_owned(), Vec::new())),
                    Some((ri, args)) => {
                        let rule = &p.agents[i].rules[*ri];
                        fired.push((rule, args.as_slice()));
                        keys.push((i, *ri, args.clone()));
                        components.push((rule.name.clone(), args.clone()));
                    }
                }
            }
            let action = GroundAction { components };

            let constructive =
                !opts.force_generic && fired.iter().all(|(r, _)| r.is_constructive());
            let disjoint_writes = {
                let mut union: BTreeSet<&str> = BTreeSet::new();
                let total: usize = fired.iter().map(|(r, _)| r.writes.len()).sum();
                for (r, _) in &fired {
                    union.extend(r.writes.iter().map(String::as_str));
                }
                union.len() == total
            };
            if constructive && disjoint_writes {
                let mut all_pass = true;
                for (k, (rule, args)) in keys.iter().zip(&fired) {
                    let pass = match solo.get(k) {
                        Some(&p) => p,
                        None => {
                            let one = [(*rule, *args)];
                            let cand = delta_apply(&s_global, &one);
                            let p = verify_candidate(&s_global, &cand, &one, &global_schema)?;
                            solo.insert(k.clone(), p);
                            p
                        }
                    };
                    if !pass {
                        all_pass = false;
                        break;
                    }
                }
                if !all_pass {
                    continue;
                }
            }
            let prechecked = constructive && disjoint_writes;
            let candidates = if constructive {
                vec![delta_apply(&s_global, &fired)]
            } else {
                generic_candidates(&s_global, &fired, &global_schema, &opts.budget, &action.label())?
            };

            for cand in candidates {
                if !prechecked && !verify_candidate(&s_global, &cand, &fired, &global_schema)? {
                    continue;
                }
                if let Some(bound) = p.declared_bound {
                    let found = cand.active_domain().len();
                    if found > bound {
                        return Err(ProgramError::BoundExceeded { bound, found });
                    }
                }
                let target = p.project(&cand);
                let fresh = builder.lookup(&target).is_none();
                let tid = builder.intern(target)?;
                if builder.state_count() > opts.budget.max_states {
                    return Err(ModelError::StateBudget {
                        limit: opts.budget.max_states,
                        at: sid,
                    }
                    .into());
                }
                builder.add_transition(sid, action.clone(), tid);
                if fresh {
                    frontier.push(tid);
                }
            }
        }
    }
    Ok(builder.finish(false)?)
}

/// Build the induced model over the program's own (finite) domain.
pub fn induced(p: &ACProgram, opts: &InduceOptions) -> Result<Acmas, ProgramError> {
    match &p.domain {
        DomainDecl::Finite(u) => induced_acmas(p, &u.clone(), opts),
        DomainDecl::Symbolic(_) => Err(ProgramError::SymbolicDomain),
    }
}

/// Constants implied by a formula's token stream: every identifier that is
/// not a keyword, a relation name, a declared parameter, or bound by a
/// quantifier within the formula denotes a rigid value.
fn implied_constants(toks: &[Token], params: &[String], schema: &Schema) -> BTreeSet<Value> {
    let mut bound: BTreeSet<&str> = BTreeSet::new();
    let mut i = 0;
    while i < toks.len() {
        if matches!(&toks[i].kind, Tok::Ident(w) if w == "forall" || w == "exists") {
            i += 1;
            while i < toks.len() {
                if let Tok::Ident(w) = &toks[i].kind {
                    bound.insert(w);
                    i += 1;
                } else {
                    break;
                }
                if i < toks.len() && toks[i].kind == Tok::Comma {
                    i += 1;
                } else {
                    break;
                }
            }
        } else {
            i += 1;
        }
    }
    let mut out = BTreeSet::new();
    for t in toks {
        if let Tok::Ident(w) = &t.kind {
            if !is_keyword(w)
                && !schema.contains(w)
                && !params.iter().any(|p| p == w)
                && !bound.contains(w.as_str())
            {
                out.insert(Value::new(w));
            }
        }
    }
    out
}

struct RawAction {
    name: String,
    params: Vec<String>,
    pre_toks: Vec<Token>,
    post_toks: Vec<Token>,
}

struct RawAgent {
    name: String,
    schema: Schema,
    owned: BTreeSet<String>,
    init_tuples: Vec<(String, Tuple)>,
    actions: Vec<RawAction>,
}

/// Parse a `.acp` program file.
pub fn parse_program(text: &str) -> Result<ACProgram, ProgramError> {
    let toks = lex(text).map_err(|(line, col, message)| SpecError::Syntax { line, col, message })?;
    let mut p = SecParser::new(toks);

    let mut domain: Option<DomainDecl> = None;
    let mut declared_bound: Option<usize> = None;
    let mut raw_agents: Vec<RawAgent> = Vec::new();

    while p.peek().is_some() {
        let section = p.take_ident().map_err(ProgramError::Parse)?;
        match section.as_str() {
            "DOMAIN" => {
                let symbolic = p.eat_ident("symbolic");
                p.expect(&Tok::LBrace).map_err(ProgramError::Parse)?;
                let mut values = BTreeSet::new();
                while !p.eat(&Tok::RBrace) {
                    values.insert(Value::new(&p.take_ident().map_err(ProgramError::Parse)?));
                    p.expect(&Tok::Semi).map_err(ProgramError::Parse)?;
                }
                domain = Some(if symbolic {
                    DomainDecl::Symbolic(values)
                } else {
                    DomainDecl::Finite(values)
                });
            }
            "BOUND" => {
                p.expect(&Tok::LBrace).map_err(ProgramError::Parse)?;
                let word = p.take_ident().map_err(ProgramError::Parse)?;
                let b: usize = word
                    .parse()
                    .map_err(|_| ProgramError::Parse(p.err(format!("bad bound '{word}'"))))?;
                declared_bound = Some(b);
                p.expect(&Tok::Semi).map_err(ProgramError::Parse)?;
                p.expect(&Tok::RBrace).map_err(ProgramError::Parse)?;
            }
            "AGENT" => {
                let name = p.take_ident().map_err(ProgramError::Parse)?;
                p.expect(&Tok::LBrace).map_err(ProgramError::Parse)?;
                let mut agent = RawAgent {
                    name,
                    schema: Schema::new(),
                    owned: BTreeSet::new(),
                    init_tuples: Vec::new(),
                    actions: Vec::new(),
                };
                while !p.eat(&Tok::RBrace) {
                    let sub = p.take_ident().map_err(ProgramError::Parse)?;
                    match sub.as_str() {
                        "SCHEMA" => {
                            p.expect(&Tok::LBrace).map_err(ProgramError::Parse)?;
                            while !p.eat(&Tok::RBrace) {
                                let view = p.eat_ident("view");
                                let rel = p.take_ident().map_err(ProgramError::Parse)?;
                                p.expect(&Tok::LParen).map_err(ProgramError::Parse)?;
                                let word = p.take_ident().map_err(ProgramError::Parse)?;
                                let arity: usize = word.parse().map_err(|_| {
                                    ProgramError::Parse(p.err(format!("bad arity '{word}'")))
                                })?;
                                p.expect(&Tok::RParen).map_err(ProgramError::Parse)?;
                                p.expect(&Tok::Semi).map_err(ProgramError::Parse)?;
                                agent
                                    .schema
                                    .declare(&rel, arity)
                                    .map_err(|e| ProgramError::Parse(p.err(e.to_string())))?;
                                if !view {
                                    agent.owned.insert(rel);
                                }
                            }
                        }
                        "INIT" => {
                            p.expect(&Tok::LBrace).map_err(ProgramError::Parse)?;
                            while !p.eat(&Tok::RBrace) {
                                let rel = p.take_ident().map_err(ProgramError::Parse)?;
                                let mut tuple = Vec::new();
                                p.expect(&Tok::LParen).map_err(ProgramError::Parse)?;
                                if !p.eat(&Tok::RParen) {
                                    loop {
                                        tuple.push(Value::new(
                                            &p.take_ident().map_err(ProgramError::Parse)?,
                                        ));
                                        if !p.eat(&Tok::Comma) {
                                            break;
                                        }
                                    }
                                    p.expect(&Tok::RParen).map_err(ProgramError::Parse)?;
                                }
                                p.expect(&Tok::Semi).map_err(ProgramError::Parse)?;
                                agent.init_tuples.push((rel, tuple));
                            }
                        }
                        "ACTION" => {
                            let name = p.take_ident().map_err(ProgramError::Parse)?;
                            p.expect(&Tok::LParen).map_err(ProgramError::Parse)?;
                            let mut params = Vec::new();
                            if !p.eat(&Tok::RParen) {
                                loop {
                                    params.push(p.take_ident().map_err(ProgramError::Parse)?);
                                    if !p.eat(&Tok::Comma) {
                                        break;
                                    }
                                }
                                p.expect(&Tok::RParen).map_err(ProgramError::Parse)?;
                            }
                            if !p.eat_ident("PRE") {
                                return Err(ProgramError::Parse(p.err("expected 'PRE'")));
                            }
                            let pre_toks =
                                p.formula_tokens_until("POST").map_err(ProgramError::Parse)?;
                            let post_toks = p.formula_tokens().map_err(ProgramError::Parse)?;
                            agent.actions.push(RawAction {
                                name,
                                params,
                                pre_toks,
                                post_toks,
                            });
                        }
                        other => {
                            return Err(ProgramError::Parse(
                                p.err(format!("unknown agent section '{other}'")),
                            ))
                        }
                    }
                }
                raw_agents.push(agent);
            }
            other => {
                return Err(ProgramError::Parse(p.err(format!("unknown section '{other}'"))))
            }
        }
    }

    let domain = domain.ok_or_else(|| {
        ProgramError::Parse(SpecError::Syntax {
            line: 1,
            col: 1,
            message: String::from("missing DOMAIN section"),
        })
    })?;
    if raw_agents.is_empty() {
        return Err(ProgramError::Parse(SpecError::Syntax {
            line: 1,
            col: 1,
            message: String::from("program declares no agents"),
        }));
    }

    let mut global = Schema::new();
    for a in &raw_agents {
        global = global.union(&a.schema)?;
    }
    let doubled = global.doubled();

    let mut agents = Vec::new();
    for raw in raw_agents {
        let schema = Arc::new(raw.schema);
        let mut init = Instance::empty(schema.clone());
        for (rel, tuple) in raw.init_tuples {
            if let DomainDecl::Finite(u) = &domain {
                for v in &tuple {
                    if !u.contains(v) {
                        return Err(ProgramError::Parse(SpecError::Syntax {
                            line: 1,
                            col: 1,
                            message: format!("INIT value '{v}' not in DOMAIN"),
                        }));
                    }
                }
            }
            init.insert(&rel, tuple).map_err(|e| {
                ProgramError::Parse(SpecError::Syntax {
                    line: 1,
                    col: 1,
                    message: e.to_string(),
                })
            })?;
        }
        let mut rules = Vec::new();
        for action in raw.actions {
            let modal = |name: &str| {
                ProgramError::Parse(SpecError::Syntax {
                    line: 1,
                    col: 1,
                    message: format!("action '{name}': modal operators are not allowed"),
                })
            };
            let pre_consts = implied_constants(&action.pre_toks, &action.params, &schema);
            let pre = parse_formula_tokens(action.pre_toks, &schema, &[], &pre_consts)?
                .as_fo()
                .ok_or_else(|| modal(&action.name))?;
            let post_consts = implied_constants(&action.post_toks, &action.params, &doubled);
            let post = parse_formula_tokens(action.post_toks, &doubled, &[], &post_consts)?
                .as_fo()
                .ok_or_else(|| modal(&action.name))?;
            rules.push(ActionRule::new(&action.name, action.params, pre, post)?);
        }
        agents.push(AgentProgram {
            name: raw.name,
            schema,
            owned: raw.owned,
            init,
            rules,
        });
    }

    let program = ACProgram::new(domain, declared_bound, agents)?;
    if let DomainDecl::Finite(u) = &program.domain {
        for v in program.constants() {
            if !u.contains(&v) {
                return Err(ProgramError::DomainTooSmall(v));
            }
        }
    }
    Ok(program)
}
