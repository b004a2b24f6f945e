//! Explicit artifact-centric multi-agent systems.
//!
//! A model is a finite set of global states — tuples of local database
//! instances, environment first — with labelled temporal transitions and
//! derived epistemic relations (two states are indistinguishable to an agent
//! iff its local instances are equal). Models are built through
//! [`AcmasBuilder`] or from an explicit encoding whose transition formulas
//! over a doubled schema define successors via the instance join.
//!
//! The `.acm` text format (see [`parse_acm`]) carries such encodings:
//!
//! ```text
//! OPTIONS { noskip; }            # optional; skip self-loops are on by default
//! DOMAIN { 0; 1; const b; }      # values, constants marked with `const`
//! AGENTS { env { P(1); } }       # relation(arity) lists per agent
//! INIT { env { P(0); } }         # ground atoms per agent
//! ACTIONS { inc : forall x. (P(x) -> not P'(x)); }
//! ```

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use thiserror::Error;

use crate::lex::{lex, Tok, Token};
use crate::logic::{parse_formula_tokens, SpecError};
use crate::relational::{
    fo_eval, joint_active_domain, oplus, unprimed, Assignment, EvalError, FOFormula, Instance,
    Schema, SchemaError, Term, Tuple, Value,
};

/// The reserved action name for the do-nothing action.
pub const SKIP: &str = "skip";

/// An action signature: name, formal parameters, and the local-schema
/// precondition governing when the agent may perform it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionSig {
    pub name: String,
    pub params: Vec<String>,
    pub precondition: FOFormula,
}

/// An agent: a local schema plus its repertoire of parametrised actions.
/// The environment is the agent at index 0 of a model's agent list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Agent {
    pub name: String,
    pub schema: Arc<Schema>,
    pub actions: Vec<ActionSig>,
}

impl Agent {
    pub fn new(name: &str, schema: Arc<Schema>) -> Self {
        Agent {
            name: name.to_owned(),
            schema,
            actions: Vec::new(),
        }
    }
}

/// A global state: one local instance per agent, environment first.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GlobalState {
    pub locals: Vec<Instance>,
}

impl GlobalState {
    pub fn new(locals: Vec<Instance>) -> Self {
        GlobalState { locals }
    }

    /// adom(s): the union of the local active domains.
    pub fn active_domain(&self) -> BTreeSet<Value> {
        joint_active_domain(&self.locals)
    }

    /// The associated global instance D_s: each relation of the global schema
    /// interpreted as the union of its interpretations across agents.
    pub fn global_instance(&self, global_schema: &Arc<Schema>) -> Instance {
        let mut inst = Instance::empty(global_schema.clone());
        for local in &self.locals {
            for (rel, tuples) in local.relations() {
                for t in tuples {
                    inst.insert(rel, t.clone()).expect("local schemas within global");
                }
            }
        }
        inst
    }
}

/// A joint ground action: per agent, an action name with actual parameters.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct GroundAction {
    pub components: Vec<(String, Vec<Value>)>,
}

impl GroundAction {
    /// The joint action in which every agent performs `skip`.
    pub fn skip(agent_count: usize) -> Self {
        GroundAction {
            components: (0..agent_count).map(|_| (SKIP.to_owned(), Vec::new())).collect(),
        }
    }

    /// A parameterless action of the given name performed jointly by all
    /// agents (used for encoding-level transition formulas).
    pub fn joint_named(name: &str, agent_count: usize) -> Self {
        GroundAction {
            components: (0..agent_count).map(|_| (name.to_owned(), Vec::new())).collect(),
        }
    }

    pub fn is_skip(&self) -> bool {
        self.components.iter().all(|(n, p)| n == SKIP && p.is_empty())
    }

    /// A flat label suitable for reports and the `.acm` dump format.
    pub fn label(&self) -> String {
        let parts: Vec<String> = self
            .components
            .iter()
            .map(|(n, ps)| {
                if ps.is_empty() {
                    n.clone()
                } else {
                    let args: Vec<String> = ps.iter().map(|v| v.to_string()).collect();
                    format!("{n}_{}", args.join("_"))
                }
            })
            .collect();
        // All components equal (e.g. joint skip) collapse to one label.
        if parts.windows(2).all(|w| w[0] == w[1]) {
            parts.into_iter().next().unwrap_or_default()
        } else {
            parts.join("__")
        }
    }
}

pub type StateId = usize;

/// Model construction and query errors.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error(transparent)]
    Schema(#[from] SchemaError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error(transparent)]
    Parse(#[from] SpecError),

    #[error("agent index {0} out of range (epistemic operators exclude the environment)")]
    BadAgentIndex(usize),

    #[error("unknown state id {0}")]
    UnknownState(StateId),

    #[error("state has {found} locals but the model has {expected} agents")]
    AgentMismatch { expected: usize, found: usize },

    #[error("state uses value '{0}' outside the declared domain")]
    DomainViolation(Value),

    #[error("transition relation not serial: state {0} has no successor")]
    NonSerial(StateId),

    #[error("state budget of {limit} exceeded while expanding state {at}")]
    StateBudget { limit: usize, at: StateId },

    #[error("candidate budget of {limit} exceeded while grounding action '{action}'")]
    CandidateBudget { limit: usize, action: String },
}

/// Exploration budgets; construction fails loudly when exceeded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExplorationBudget {
    /// Maximum number of reachable states.
    pub max_states: usize,
    /// Maximum successor candidates considered per state/action pair.
    pub max_candidates: usize,
}

impl Default for ExplorationBudget {
    fn default() -> Self {
        ExplorationBudget {
            max_states: 1_000_000,
            max_candidates: 1 << 16,
        }
    }
}

/// A finite AC-MAS: interned global states, labelled transitions, and
/// derived epistemic partitions. Immutable once built; queries are pure.
#[derive(Clone, Debug)]
pub struct Acmas {
    agents: Vec<Agent>,
    domain: BTreeSet<Value>,
    constants: BTreeSet<Value>,
    global_schema: Arc<Schema>,
    states: Vec<GlobalState>,
    globals: Vec<Instance>,
    transitions: Vec<BTreeSet<(GroundAction, StateId)>>,
    /// Per agent, state id → epistemic class id; classes group equal locals.
    classes: Vec<Vec<usize>>,
    class_members: Vec<Vec<BTreeSet<StateId>>>,
}

impl Acmas {
    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    /// Number of non-environment agents (the `n` in agents 0..=n).
    pub fn n(&self) -> usize {
        self.agents.len() - 1
    }

    pub fn domain(&self) -> &BTreeSet<Value> {
        &self.domain
    }

    pub fn constants(&self) -> &BTreeSet<Value> {
        &self.constants
    }

    pub fn global_schema(&self) -> &Arc<Schema> {
        &self.global_schema
    }

    pub fn initial(&self) -> StateId {
        0
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn state(&self, id: StateId) -> &GlobalState {
        &self.states[id]
    }

    pub fn state_ids(&self) -> impl Iterator<Item = StateId> {
        0..self.states.len()
    }

    /// D_s for a state (precomputed).
    pub fn global_instance(&self, id: StateId) -> &Instance {
        &self.globals[id]
    }

    /// Outgoing labelled transitions of a state.
    pub fn transitions(&self, id: StateId) -> Result<&BTreeSet<(GroundAction, StateId)>, ModelError> {
        self.transitions.get(id).ok_or(ModelError::UnknownState(id))
    }

    pub fn transition_count(&self) -> usize {
        self.transitions.iter().map(BTreeSet::len).sum()
    }

    /// One-step temporal successors.
    pub fn successors(&self, id: StateId) -> Result<BTreeSet<StateId>, ModelError> {
        Ok(self.transitions(id)?.iter().map(|(_, t)| *t).collect())
    }

    /// All reachable states agent `i` cannot distinguish from `id`
    /// (equal local instance; includes `id`). Requires 0 < i ≤ n.
    pub fn epistemic_neighbors(&self, id: StateId, i: usize) -> Result<&BTreeSet<StateId>, ModelError> {
        if i == 0 || i >= self.agents.len() {
            return Err(ModelError::BadAgentIndex(i));
        }
        if id >= self.states.len() {
            return Err(ModelError::UnknownState(id));
        }
        Ok(&self.class_members[i][self.classes[i][id]])
    }

    /// Internal variant valid for every agent including the environment.
    fn indistinguishable(&self, id: StateId, i: usize) -> &BTreeSet<StateId> {
        &self.class_members[i][self.classes[i][id]]
    }

    /// The partition of the state space induced by ∼_i, as a slice of
    /// classes. Requires 0 < i ≤ n. K_i is constant on each class, so
    /// checkers can evaluate it once per class instead of once per state.
    pub fn epistemic_classes(&self, i: usize) -> Result<&[BTreeSet<StateId>], ModelError> {
        if i == 0 || i >= self.agents.len() {
            return Err(ModelError::BadAgentIndex(i));
        }
        Ok(&self.class_members[i])
    }

    /// The common-knowledge reach: reflexive-transitive closure of the union
    /// of the epistemic relations of agents 1..=n.
    pub fn common_knowledge_closure(&self, id: StateId) -> Result<BTreeSet<StateId>, ModelError> {
        if id >= self.states.len() {
            return Err(ModelError::UnknownState(id));
        }
        let mut seen: BTreeSet<StateId> = [id].into();
        let mut frontier: Vec<StateId> = alloc::vec![id];
        while let Some(s) = frontier.pop() {
            for i in 1..self.agents.len() {
                for &t in self.indistinguishable(s, i) {
                    if seen.insert(t) {
                        frontier.push(t);
                    }
                }
            }
        }
        Ok(seen)
    }

    /// States reachable by interleaving temporal steps and epistemic steps of
    /// any agent (environment included).
    pub fn te_reachable(&self, id: StateId) -> Result<BTreeSet<StateId>, ModelError> {
        if id >= self.states.len() {
            return Err(ModelError::UnknownState(id));
        }
        let mut seen: BTreeSet<StateId> = [id].into();
        let mut frontier: Vec<StateId> = alloc::vec![id];
        while let Some(s) = frontier.pop() {
            for (_, t) in &self.transitions[s] {
                if seen.insert(*t) {
                    frontier.push(*t);
                }
            }
            for i in 0..self.agents.len() {
                for &t in self.indistinguishable(s, i) {
                    if seen.insert(t) {
                        frontier.push(t);
                    }
                }
            }
        }
        Ok(seen)
    }
}

/// Incremental model construction with state interning. States become ids on
/// first sight; `finish` computes the reachable closure from the initial
/// state, drops anything unreachable, optionally injects skip self-loops, and
/// checks seriality.
pub struct AcmasBuilder {
    agents: Vec<Agent>,
    domain: BTreeSet<Value>,
    constants: BTreeSet<Value>,
    global_schema: Arc<Schema>,
    states: Vec<GlobalState>,
    index: BTreeMap<GlobalState, StateId>,
    transitions: Vec<BTreeSet<(GroundAction, StateId)>>,
}

/// The union of the agents' local schemas.
pub fn global_schema_of(agents: &[Agent]) -> Result<Arc<Schema>, SchemaError> {
    let mut schema = Schema::new();
    for a in agents {
        schema = schema.union(&a.schema)?;
    }
    Ok(Arc::new(schema))
}

impl AcmasBuilder {
    pub fn new(
        agents: Vec<Agent>,
        domain: BTreeSet<Value>,
        constants: BTreeSet<Value>,
        initial: GlobalState,
    ) -> Result<Self, ModelError> {
        let global_schema = global_schema_of(&agents)?;
        let mut b = AcmasBuilder {
            agents,
            domain,
            constants,
            global_schema,
            states: Vec::new(),
            index: BTreeMap::new(),
            transitions: Vec::new(),
        };
        b.intern(initial)?;
        Ok(b)
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn state(&self, id: StateId) -> &GlobalState {
        &self.states[id]
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn lookup(&self, s: &GlobalState) -> Option<StateId> {
        self.index.get(s).copied()
    }

    /// Intern a state, validating shape: one local per agent, matching
    /// schemas, and active domain within the declared domain.
    pub fn intern(&mut self, s: GlobalState) -> Result<StateId, ModelError> {
        if let Some(&id) = self.index.get(&s) {
            return Ok(id);
        }
        if s.locals.len() != self.agents.len() {
            return Err(ModelError::AgentMismatch {
                expected: self.agents.len(),
                found: s.locals.len(),
            });
        }
        for (agent, local) in self.agents.iter().zip(&s.locals) {
            if *local.schema() != agent.schema {
                return Err(SchemaError::SchemaMismatch.into());
            }
        }
        if let Some(v) = s.active_domain().difference(&self.domain).next() {
            return Err(ModelError::DomainViolation(v.clone()));
        }
        let id = self.states.len();
        self.states.push(s.clone());
        self.transitions.push(BTreeSet::new());
        self.index.insert(s, id);
        Ok(id)
    }

    pub fn add_transition(&mut self, from: StateId, action: GroundAction, to: StateId) {
        self.transitions[from].insert((action, to));
    }

    pub fn finish(mut self, inject_skip: bool) -> Result<Acmas, ModelError> {
        if inject_skip {
            let skip = GroundAction::skip(self.agents.len());
            for (id, outs) in self.transitions.iter_mut().enumerate() {
                outs.insert((skip.clone(), id));
            }
        }

        // Reachable closure from the initial state; canonical renumbering in
        // breadth-first visit order.
        let mut order: Vec<StateId> = Vec::new();
        let mut remap: BTreeMap<StateId, StateId> = BTreeMap::new();
        remap.insert(0, 0);
        let mut head = 0;
        order.push(0);
        while head < order.len() {
            let s = order[head];
            head += 1;
            for (_, t) in &self.transitions[s] {
                if !remap.contains_key(t) {
                    remap.insert(*t, order.len());
                    order.push(*t);
                }
            }
        }

        let states: Vec<GlobalState> = order.iter().map(|&old| self.states[old].clone()).collect();
        let transitions: Vec<BTreeSet<(GroundAction, StateId)>> = order
            .iter()
            .map(|&old| {
                self.transitions[old]
                    .iter()
                    .map(|(a, t)| (a.clone(), remap[t]))
                    .collect()
            })
            .collect();

        for (id, outs) in transitions.iter().enumerate() {
            if outs.is_empty() {
                return Err(ModelError::NonSerial(id));
            }
        }

        // Epistemic partitions: bucket states by each agent's local instance.
        let mut classes: Vec<Vec<usize>> = Vec::new();
        let mut class_members: Vec<Vec<BTreeSet<StateId>>> = Vec::new();
        for i in 0..self.agents.len() {
            let mut by_local: BTreeMap<&Instance, usize> = BTreeMap::new();
            let mut ids = Vec::with_capacity(states.len());
            let mut members: Vec<BTreeSet<StateId>> = Vec::new();
            for (sid, s) in states.iter().enumerate() {
                let class = *by_local.entry(&s.locals[i]).or_insert_with(|| {
                    members.push(BTreeSet::new());
                    members.len() - 1
                });
                ids.push(class);
                members[class].insert(sid);
            }
            classes.push(ids);
            class_members.push(members);
        }

        let globals = states
            .iter()
            .map(|s| s.global_instance(&self.global_schema))
            .collect();

        Ok(Acmas {
            agents: self.agents,
            domain: self.domain,
            constants: self.constants,
            global_schema: self.global_schema,
            states,
            globals,
            transitions,
            classes,
            class_members,
        })
    }
}

/// An explicit model encoding: a finite domain, global schema, initial global
/// instance, and one transition formula per action over the doubled schema.
/// A pair (s, s') is an α-transition iff s ⊕ s' satisfies φ_α.
#[derive(Clone, Debug)]
pub struct ExplicitEncoding {
    pub domain: BTreeSet<Value>,
    pub constants: BTreeSet<Value>,
    pub schema: Arc<Schema>,
    pub initial: Instance,
    pub actions: BTreeMap<String, FOFormula>,
}

/// Restrict a global instance to each agent's local schema. Relations shared
/// between agents land in every local that declares them.
pub(crate) fn decompose(global: &Instance, agents: &[Agent]) -> GlobalState {
    let locals = agents
        .iter()
        .map(|agent| {
            let mut local = Instance::empty(agent.schema.clone());
            for (rel, _) in agent.schema.relations() {
                for t in global.get(rel) {
                    local.insert(rel, t.clone()).expect("schema checked");
                }
            }
            local
        })
        .collect();
    GlobalState::new(locals)
}

/// Enumerate every instance of `schema` whose tuples draw values from
/// `domain`, in canonical order. The caller bounds the candidate count.
struct InstanceEnum {
    schema: Arc<Schema>,
    rels: Vec<(String, Vec<Tuple>)>,
    masks: Vec<u128>,
    done: bool,
}

pub(crate) fn all_tuples(domain: &[Value], arity: usize) -> Vec<Tuple> {
    let mut out: Vec<Tuple> = alloc::vec![Vec::new()];
    for _ in 0..arity {
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

impl InstanceEnum {
    fn new(schema: &Arc<Schema>, domain: &[Value]) -> Option<Self> {
        let mut rels = Vec::new();
        for (name, arity) in schema.relations() {
            let tuples = all_tuples(domain, arity);
            if tuples.len() > 127 {
                return None; // candidate space certainly exceeds any sane budget
            }
            rels.push((name.to_owned(), tuples));
        }
        let masks = alloc::vec![0u128; rels.len()];
        Some(InstanceEnum {
            schema: schema.clone(),
            rels,
            masks,
            done: false,
        })
    }

    /// Total number of instances this enumeration will produce, saturating.
    fn size(&self) -> u128 {
        self.rels
            .iter()
            .map(|(_, ts)| 1u128 << ts.len())
            .fold(1u128, |a, b| a.saturating_mul(b))
    }
}

impl Iterator for InstanceEnum {
    type Item = Instance;

    fn next(&mut self) -> Option<Instance> {
        if self.done {
            return None;
        }
        let mut inst = Instance::empty(self.schema.clone());
        for ((name, tuples), mask) in self.rels.iter().zip(&self.masks) {
            for (i, t) in tuples.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    inst.insert(name, t.clone()).expect("tuple fits schema");
                }
            }
        }
        // Odometer increment over the per-relation masks.
        let mut i = 0;
        loop {
            if i == self.masks.len() {
                self.done = true;
                break;
            }
            self.masks[i] += 1;
            if self.masks[i] < (1u128 << self.rels[i].1.len()) {
                break;
            }
            self.masks[i] = 0;
            i += 1;
        }
        if self.masks.is_empty() {
            self.done = true;
        }
        Some(inst)
    }
}

/// Un-desugar ∨ (stored as ¬a → b) into a disjunct list.
fn flatten_or<'a>(phi: &'a FOFormula, out: &mut Vec<&'a FOFormula>) {
    if let FOFormula::Implies(a, b) = phi {
        if let FOFormula::Not(inner) = &**a {
            flatten_or(inner, out);
            flatten_or(b, out);
            return;
        }
    }
    out.push(phi);
}

/// Un-desugar ∧ (stored as ¬(a → ¬b)) into a conjunct list.
fn flatten_and<'a>(phi: &'a FOFormula, out: &mut Vec<&'a FOFormula>) {
    if let FOFormula::Not(inner) = phi {
        if let FOFormula::Implies(a, b) = &**inner {
            if let FOFormula::Not(rhs) = &**b {
                flatten_and(a, out);
                flatten_and(rhs, out);
                return;
            }
        }
    }
    out.push(phi);
}

fn contains_atom(phi: &FOFormula) -> bool {
    match phi {
        FOFormula::Atom(..) => true,
        FOFormula::Eq(..) => false,
        FOFormula::Not(f) | FOFormula::Forall(_, f) => contains_atom(f),
        FOFormula::Implies(a, b) => contains_atom(a) || contains_atom(b),
    }
}

/// Recognize a transition formula that is a disjunction of exact
/// source/target descriptions — the shape `to_acm` emits — and extract the
/// described (source, target) pairs. Each disjunct must pin both copies of
/// every relation: ground atoms list the tuples, and per-relation
/// completeness clauses (∀x̄ R(x̄) → ⋁ x̄ = t̄, or ∀x̄ ¬R(x̄), or a bare
/// (¬)R for arity 0) exclude everything else. Returns None on any other
/// shape, in which case the caller falls back to blind enumeration.
fn exact_pairs(phi: &FOFormula, schema: &Arc<Schema>) -> Option<Vec<(Instance, Instance)>> {
    let mut disjuncts = Vec::new();
    flatten_or(phi, &mut disjuncts);
    let mut pairs = Vec::new();
    for d in disjuncts {
        let mut conjuncts = Vec::new();
        flatten_and(d, &mut conjuncts);
        let mut src = Instance::empty(schema.clone());
        let mut dst = Instance::empty(schema.clone());
        // Relations whose extension is fully determined, per copy.
        let mut closed_src: BTreeSet<String> = BTreeSet::new();
        let mut closed_dst: BTreeSet<String> = BTreeSet::new();
        for c in conjuncts {
            match c {
                FOFormula::Atom(name, terms) => {
                    let tuple: Vec<Value> = terms
                        .iter()
                        .map(|t| match t {
                            Term::Const(v) => Some(v.clone()),
                            Term::Var(_) => None,
                        })
                        .collect::<Option<_>>()?;
                    let nullary = tuple.is_empty();
                    let (inst, closed, rel) = match unprimed(name) {
                        Some(rel) => (&mut dst, &mut closed_dst, rel),
                        None => (&mut src, &mut closed_src, name.as_str()),
                    };
                    inst.insert(rel, tuple).ok()?;
                    if nullary {
                        closed.insert(rel.to_owned());
                    }
                }
                FOFormula::Not(inner) => match &**inner {
                    // Bare negation closes an (absent) nullary relation.
                    FOFormula::Atom(name, terms) if terms.is_empty() => {
                        match unprimed(name) {
                            Some(rel) => closed_dst.insert(rel.to_owned()),
                            None => closed_src.insert(name.clone()),
                        };
                    }
                    _ => return None,
                },
                FOFormula::Forall(..) => {
                    let mut vars = Vec::new();
                    let mut body = c;
                    while let FOFormula::Forall(v, f) = body {
                        vars.push(v.as_str());
                        body = f;
                    }
                    let (name, terms) = match body {
                        FOFormula::Implies(a, b) if !contains_atom(b) => match &**a {
                            FOFormula::Atom(name, terms) => (name, terms),
                            _ => return None,
                        },
                        FOFormula::Not(f) => match &**f {
                            FOFormula::Atom(name, terms) => (name, terms),
                            _ => return None,
                        },
                        // ∀-closed pure-equality clause (e.g. the tautology).
                        _ if !contains_atom(body) => continue,
                        _ => return None,
                    };
                    if terms.len() != vars.len()
                        || !terms
                            .iter()
                            .zip(&vars)
                            .all(|(t, v)| matches!(t, Term::Var(x) if x == v))
                    {
                        return None;
                    }
                    match unprimed(name) {
                        Some(rel) => closed_dst.insert(rel.to_owned()),
                        None => closed_src.insert(name.clone()),
                    };
                }
                _ if !contains_atom(c) => {}
                _ => return None,
            }
        }
        for (rel, _) in schema.relations() {
            if !closed_src.contains(rel) || !closed_dst.contains(rel) {
                return None;
            }
        }
        pairs.push((src, dst));
    }
    Some(pairs)
}

/// Build the reachable model of an explicit encoding by fixpoint exploration:
/// candidate successors are all instances over the domain, filtered by the
/// transition formulas evaluated on the instance join. Transition formulas in
/// the exact-description shape skip the enumeration: their candidates are
/// read off the formula directly (and still verified by evaluation).
pub fn from_encoding(
    e: &ExplicitEncoding,
    agents: Vec<Agent>,
    inject_skip: bool,
    budget: &ExplorationBudget,
) -> Result<Acmas, ModelError> {
    let global_schema = global_schema_of(&agents)?;
    if *global_schema != *e.schema {
        return Err(SchemaError::SchemaMismatch.into());
    }
    let doubled = Arc::new(e.schema.doubled());
    for phi in e.actions.values() {
        phi.validate(&doubled)?;
    }

    let initial = decompose(&e.initial, &agents);
    let mut builder = AcmasBuilder::new(
        agents,
        e.domain.clone(),
        e.constants.clone(),
        initial,
    )?;

    // Per action: either an exact source -> targets table, or None meaning
    // the candidate space must be enumerated blindly.
    let mut exact: BTreeMap<&str, BTreeMap<Instance, Vec<Instance>>> = BTreeMap::new();
    for (name, phi) in &e.actions {
        if let Some(pairs) = exact_pairs(phi, &e.schema) {
            let mut table: BTreeMap<Instance, Vec<Instance>> = BTreeMap::new();
            for (src, dst) in pairs {
                table.entry(src).or_default().push(dst);
            }
            exact.insert(name, table);
        }
    }

    let domain_vec: Vec<Value> = e.domain.iter().cloned().collect();
    let empty_sigma = Assignment::new();
    let mut frontier: Vec<StateId> = alloc::vec![0];
    while let Some(sid) = frontier.pop() {
        let s_global = builder.state(sid).global_instance(&builder.global_schema);
        for (name, phi) in &e.actions {
            let candidates: Vec<Instance> = match exact.get(name.as_str()) {
                Some(table) => table.get(&s_global).cloned().unwrap_or_default(),
                None => {
                    let candidates =
                        InstanceEnum::new(&e.schema, &domain_vec).ok_or_else(|| {
                            ModelError::CandidateBudget {
                                limit: budget.max_candidates,
                                action: name.clone(),
                            }
                        })?;
                    if candidates.size() > budget.max_candidates as u128 {
                        return Err(ModelError::CandidateBudget {
                            limit: budget.max_candidates,
                            action: name.clone(),
                        });
                    }
                    candidates.collect()
                }
            };
            for candidate in candidates {
                let joined = oplus(&s_global, &candidate)?;
                if !fo_eval(&joined, &empty_sigma, phi)? {
                    continue;
                }
                let target = decompose(&candidate, builder.agents());
                let fresh = builder.lookup(&target).is_none();
                let tid = builder.intern(target)?;
                if builder.state_count() > budget.max_states {
                    return Err(ModelError::StateBudget {
                        limit: budget.max_states,
                        at: sid,
                    });
                }
                let action = GroundAction::joint_named(name, builder.agents().len());
                builder.add_transition(sid, action, tid);
                if fresh {
                    frontier.push(tid);
                }
            }
        }
    }
    builder.finish(inject_skip)
}

/// A parsed `.acm` model file.
#[derive(Clone, Debug)]
pub struct AcmModel {
    pub encoding: ExplicitEncoding,
    pub agents: Vec<Agent>,
    pub inject_skip: bool,
}

impl AcmModel {
    pub fn build(&self, budget: &ExplorationBudget) -> Result<Acmas, ModelError> {
        from_encoding(&self.encoding, self.agents.clone(), self.inject_skip, budget)
    }

    /// Agent name list, for resolving `K[name]` in accompanying formulas.
    pub fn agent_names(&self) -> Vec<String> {
        self.agents.iter().map(|a| a.name.clone()).collect()
    }

    /// The vocabulary treated as rigid constants when parsing formulas
    /// against this model: declared constants plus all domain values.
    pub fn formula_constants(&self) -> BTreeSet<Value> {
        self.encoding.domain.union(&self.encoding.constants).cloned().collect()
    }
}

pub(crate) struct SecParser {
    toks: Vec<Token>,
    pos: usize,
}

impl SecParser {
    pub(crate) fn new(toks: Vec<Token>) -> Self {
        SecParser { toks, pos: 0 }
    }

    pub(crate) fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    pub(crate) fn err(&self, message: impl Into<String>) -> SpecError {
        let (line, col) = self.peek().map_or((0, 0), |t| (t.line, t.col));
        SpecError::Syntax {
            line,
            col,
            message: message.into(),
        }
    }

    pub(crate) fn take_ident(&mut self) -> Result<String, SpecError> {
        match self.peek() {
            Some(Token {
                kind: Tok::Ident(w),
                ..
            }) => {
                let w = w.clone();
                self.pos += 1;
                Ok(w)
            }
            _ => Err(self.err("expected identifier")),
        }
    }

    pub(crate) fn eat(&mut self, kind: &Tok) -> bool {
        if matches!(self.peek(), Some(t) if t.kind == *kind) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub(crate) fn eat_ident(&mut self, word: &str) -> bool {
        if matches!(self.peek(), Some(Token { kind: Tok::Ident(w), .. }) if w == word) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub(crate) fn expect(&mut self, kind: &Tok) -> Result<(), SpecError> {
        if self.eat(kind) {
            Ok(())
        } else {
            Err(self.err(format!("expected {kind}")))
        }
    }

    /// Collect the tokens of one formula, up to (not including) the `;` that
    /// terminates it.
    pub(crate) fn formula_tokens(&mut self) -> Result<Vec<Token>, SpecError> {
        let start = self.pos;
        while let Some(t) = self.peek() {
            if t.kind == Tok::Semi {
                let toks = self.toks[start..self.pos].to_vec();
                self.pos += 1;
                return Ok(toks);
            }
            if t.kind == Tok::LBrace || t.kind == Tok::RBrace {
                break;
            }
            self.pos += 1;
        }
        Err(self.err("unterminated formula (missing ';')"))
    }

    /// Collect formula tokens up to a given stop identifier, consuming it.
    pub(crate) fn formula_tokens_until(&mut self, stop: &str) -> Result<Vec<Token>, SpecError> {
        let start = self.pos;
        while let Some(t) = self.peek() {
            if matches!(&t.kind, Tok::Ident(w) if w == stop) {
                let toks = self.toks[start..self.pos].to_vec();
                self.pos += 1;
                return Ok(toks);
            }
            if t.kind == Tok::LBrace || t.kind == Tok::RBrace || t.kind == Tok::Semi {
                break;
            }
            self.pos += 1;
        }
        Err(self.err(format!("unterminated formula (missing '{stop}')")))
    }
}

/// Parse a `.acm` model file.
pub fn parse_acm(text: &str) -> Result<AcmModel, SpecError> {
    let toks = lex(text).map_err(|(line, col, message)| SpecError::Syntax { line, col, message })?;
    let mut p = SecParser { toks, pos: 0 };

    let mut inject_skip = true;
    let mut domain: BTreeSet<Value> = BTreeSet::new();
    let mut constants: BTreeSet<Value> = BTreeSet::new();
    let mut agents: Vec<Agent> = Vec::new();
    let mut init_tuples: Vec<(String, String, Tuple)> = Vec::new(); // (agent, rel, tuple)
    let mut action_texts: Vec<(String, Vec<Token>)> = Vec::new();

    while p.peek().is_some() {
        let section = p.take_ident()?;
        p.expect(&Tok::LBrace)?;
        match section.as_str() {
            "OPTIONS" => {
                while !p.eat(&Tok::RBrace) {
                    let opt = p.take_ident()?;
                    match opt.as_str() {
                        "noskip" => inject_skip = false,
                        other => return Err(p.err(format!("unknown option '{other}'"))),
                    }
                    p.expect(&Tok::Semi)?;
                }
            }
            "DOMAIN" => {
                while !p.eat(&Tok::RBrace) {
                    let word = p.take_ident()?;
                    let (value, is_const) = if word == "const" {
                        (p.take_ident()?, true)
                    } else {
                        (word, false)
                    };
                    let v = Value::new(&value);
                    domain.insert(v.clone());
                    if is_const {
                        constants.insert(v);
                    }
                    p.expect(&Tok::Semi)?;
                }
            }
            "AGENTS" => {
                while !p.eat(&Tok::RBrace) {
                    let name = p.take_ident()?;
                    p.expect(&Tok::LBrace)?;
                    let mut schema = Schema::new();
                    while !p.eat(&Tok::RBrace) {
                        let rel = p.take_ident()?;
                        p.expect(&Tok::LParen)?;
                        let arity_word = p.take_ident()?;
                        let arity: usize = arity_word
                            .parse()
                            .map_err(|_| p.err(format!("bad arity '{arity_word}'")))?;
                        p.expect(&Tok::RParen)?;
                        p.expect(&Tok::Semi)?;
                        schema
                            .declare(&rel, arity)
                            .map_err(|e| p.err(e.to_string()))?;
                    }
                    agents.push(Agent::new(&name, Arc::new(schema)));
                }
            }
            "INIT" => {
                while !p.eat(&Tok::RBrace) {
                    let agent = p.take_ident()?;
                    p.expect(&Tok::LBrace)?;
                    while !p.eat(&Tok::RBrace) {
                        let rel = p.take_ident()?;
                        let mut tuple = Vec::new();
                        p.expect(&Tok::LParen)?;
                        if !p.eat(&Tok::RParen) {
                            loop {
                                tuple.push(Value::new(&p.take_ident()?));
                                if !p.eat(&Tok::Comma) {
                                    break;
                                }
                            }
                            p.expect(&Tok::RParen)?;
                        }
                        p.expect(&Tok::Semi)?;
                        init_tuples.push((agent.clone(), rel, tuple));
                    }
                }
            }
            "ACTIONS" => {
                while !p.eat(&Tok::RBrace) {
                    let name = p.take_ident()?;
                    p.expect(&Tok::Colon)?;
                    action_texts.push((name, p.formula_tokens()?));
                }
            }
            other => return Err(p.err(format!("unknown section '{other}'"))),
        }
    }

    if agents.is_empty() {
        return Err(SpecError::Syntax {
            line: 1,
            col: 1,
            message: String::from("model declares no agents"),
        });
    }

    // Agents may share relations (a shared relation is part of every
    // declaring agent's local state); arity conflicts are caught by the
    // schema union below.
    let global_schema = global_schema_of(&agents).map_err(|e| SpecError::Syntax {
        line: 1,
        col: 1,
        message: e.to_string(),
    })?;

    let mut initial = Instance::empty(global_schema.clone());
    for (agent_name, rel, tuple) in init_tuples {
        let agent = agents
            .iter()
            .find(|a| a.name == agent_name)
            .ok_or_else(|| SpecError::Syntax {
                line: 1,
                col: 1,
                message: format!("INIT mentions unknown agent '{agent_name}'"),
            })?;
        if !agent.schema.contains(&rel) {
            return Err(SpecError::Syntax {
                line: 1,
                col: 1,
                message: format!("relation '{rel}' is not in agent '{agent_name}' schema"),
            });
        }
        for v in &tuple {
            if !domain.contains(v) {
                return Err(SpecError::Syntax {
                    line: 1,
                    col: 1,
                    message: format!("INIT value '{v}' not in DOMAIN"),
                });
            }
        }
        initial.insert(&rel, tuple).map_err(|e| SpecError::Syntax {
            line: 1,
            col: 1,
            message: e.to_string(),
        })?;
    }

    // Transition formulas live over the doubled schema; every domain value
    // (and declared constant) is a rigid constant in formula text.
    let doubled = global_schema.doubled();
    let formula_consts: BTreeSet<Value> = domain.union(&constants).cloned().collect();
    let mut actions = BTreeMap::new();
    for (name, toks) in action_texts {
        let phi = parse_formula_tokens(toks, &doubled, &[], &formula_consts)?;
        let phi = phi.as_fo().ok_or_else(|| SpecError::Syntax {
            line: 1,
            col: 1,
            message: format!("transition formula '{name}' contains modal operators"),
        })?;
        actions.insert(name, phi);
    }

    Ok(AcmModel {
        encoding: ExplicitEncoding {
            domain,
            constants,
            schema: global_schema,
            initial,
            actions,
        },
        agents,
        inject_skip,
    })
}

/// An FO formula exactly describing an instance within a join: all present
/// tuples asserted, and completeness clauses excluding any other tuple over
/// the (joined) active domain. `prime` selects the primed copies.
fn describe(inst: &Instance, schema: &Schema, prime: bool) -> FOFormula {
    let mut parts = Vec::new();
    for (rel, arity) in schema.relations() {
        let target = if prime {
            crate::relational::primed(rel)
        } else {
            rel.to_owned()
        };
        let tuples = inst.get(rel);
        if arity == 0 {
            let atom = FOFormula::atom(&target, Vec::new());
            parts.push(if tuples.is_empty() {
                FOFormula::not(atom)
            } else {
                atom
            });
            continue;
        }
        for t in tuples {
            parts.push(FOFormula::atom(
                &target,
                t.iter().map(|v| Term::Const(v.clone())).collect(),
            ));
        }
        // ∀x̄ (P(x̄) → ⋁_tuples x̄ = t̄): no other tuples over the active domain.
        let vars: Vec<String> = (0..arity).map(|i| format!("x{i}")).collect();
        let var_terms: Vec<Term> = vars.iter().map(|v| Term::var(v)).collect();
        let matches = tuples.iter().map(|t| {
            FOFormula::conj(
                t.iter()
                    .zip(&var_terms)
                    .map(|(v, x)| FOFormula::Eq(x.clone(), Term::Const(v.clone()))),
            )
        });
        let any_match = matches.fold(None::<FOFormula>, |acc, m| {
            Some(match acc {
                None => m,
                Some(a) => FOFormula::or(a, m),
            })
        });
        let body = match any_match {
            Some(disj) => FOFormula::implies(FOFormula::atom(&target, var_terms.clone()), disj),
            None => FOFormula::not(FOFormula::atom(&target, var_terms.clone())),
        };
        let mut closed = body;
        for v in vars.iter().rev() {
            closed = FOFormula::forall(v, closed);
        }
        parts.push(closed);
    }
    FOFormula::conj(parts)
}

fn fo_to_text(phi: &FOFormula) -> String {
    crate::logic::SpecFormula::from_fo(phi).to_string()
}

/// Serialize a model to the `.acm` format. Transitions are encoded exactly,
/// one action per transition label, each formula the disjunction of precise
/// source/target descriptions; parsing the dump rebuilds the same state graph.
pub fn to_acm(m: &Acmas) -> String {
    let mut out = String::new();
    out.push_str("OPTIONS { noskip; }\n");
    out.push_str("DOMAIN {\n");
    for v in m.domain() {
        if m.constants().contains(v) {
            out.push_str(&format!("  const {v};\n"));
        } else {
            out.push_str(&format!("  {v};\n"));
        }
    }
    out.push_str("}\n");

    out.push_str("AGENTS {\n");
    for a in m.agents() {
        out.push_str(&format!("  {} {{\n", a.name));
        for (rel, arity) in a.schema.relations() {
            out.push_str(&format!("    {rel}({arity});\n"));
        }
        out.push_str("  }\n");
    }
    out.push_str("}\n");

    out.push_str("INIT {\n");
    let initial = m.state(m.initial());
    for (agent, local) in m.agents().iter().zip(&initial.locals) {
        out.push_str(&format!("  {} {{\n", agent.name));
        for (rel, tuples) in local.relations() {
            for t in tuples {
                let args: Vec<String> = t.iter().map(|v| v.to_string()).collect();
                out.push_str(&format!("    {rel}({});\n", args.join(", ")));
            }
        }
        out.push_str("  }\n");
    }
    out.push_str("}\n");

    // Group transitions by action label, then encode each as a disjunction of
    // exact (source, target) descriptions.
    let mut by_label: BTreeMap<String, Vec<FOFormula>> = BTreeMap::new();
    for sid in m.state_ids() {
        for (action, tid) in m.transitions(sid).expect("valid id") {
            let src = describe(m.global_instance(sid), m.global_schema(), false);
            let dst = describe(m.global_instance(*tid), m.global_schema(), true);
            by_label
                .entry(action.label())
                .or_default()
                .push(FOFormula::and(src, dst));
        }
    }
    out.push_str("ACTIONS {\n");
    for (label, cases) in by_label {
        let mut iter = cases.into_iter();
        let first = iter.next().expect("non-empty group");
        let phi = iter.fold(first, FOFormula::or);
        out.push_str(&format!("  {label} : {};\n", fo_to_text(&phi)));
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn v(s: &str) -> Value {
        Value::new(s)
    }

    /// The mod-2 counter: one non-environment agent holding P/1 over {0, 1};
    /// τ = {⟨{i}, {(i+1) mod 2}⟩}. Encoded with an explicit transition formula.
    const COUNTER_ACM: &str = "\
OPTIONS { noskip; }
DOMAIN { 0; 1; }
AGENTS {
  env { }
  counter { P(1); }
}
INIT {
  counter { P(1); }
}
ACTIONS {
  inc : (exists x. P(x) and not P'(x)) and (exists x. P'(x) and not P(x))
        and (forall x,y. P(x) and P(y) -> x = y)
        and (forall x,y. P'(x) and P'(y) -> x = y);
}
";

    fn counter_model() -> Acmas {
        parse_acm(COUNTER_ACM)
            .unwrap()
            .build(&ExplorationBudget::default())
            .unwrap()
    }

    #[test]
    fn counter_is_a_two_state_cycle() {
        let m = counter_model();
        assert_eq!(m.state_count(), 2);
        let s0 = m.initial();
        let succ = m.successors(s0).unwrap();
        assert_eq!(succ.len(), 1);
        let s1 = *succ.iter().next().unwrap();
        assert_ne!(s1, s0);
        assert_eq!(m.successors(s1).unwrap(), [s0].into());
        // Successor of {P={1}} is exactly {P={2 mod 2 = 0}}.
        assert!(m.state(s1).locals[1].contains("P", &vec![v("0")]));
    }

    #[test]
    fn frame_only_formula_yields_self_loop() {
        let text = "\
OPTIONS { noskip; }
DOMAIN { a; }
AGENTS { env { P(1); } }
INIT { env { P(a); } }
ACTIONS { stay : forall x. (P(x) -> P'(x)) and (P'(x) -> P(x)); }
";
        let m = parse_acm(text).unwrap().build(&ExplorationBudget::default()).unwrap();
        // Self-loop plus possibly the empty-instance… the frame formula pins
        // P' = P on the joined active domain, so only the copy survives.
        assert_eq!(m.state_count(), 1);
        assert_eq!(m.successors(0).unwrap(), [0].into());
    }

    #[test]
    fn unsatisfiable_formula_with_skip_keeps_seriality() {
        let text = "\
DOMAIN { a; }
AGENTS { env { P(1); } }
INIT { env { P(a); } }
ACTIONS { never : false; }
";
        let m = parse_acm(text).unwrap().build(&ExplorationBudget::default()).unwrap();
        assert_eq!(m.state_count(), 1);
        let outs = m.transitions(0).unwrap();
        assert_eq!(outs.len(), 1);
        assert!(outs.iter().next().unwrap().0.is_skip());
    }

    #[test]
    fn unsatisfiable_formula_without_skip_is_non_serial() {
        let text = "\
OPTIONS { noskip; }
DOMAIN { a; }
AGENTS { env { P(1); } }
INIT { env { P(a); } }
ACTIONS { never : false; }
";
        let err = parse_acm(text).unwrap().build(&ExplorationBudget::default()).unwrap_err();
        assert!(matches!(err, ModelError::NonSerial(_)));
    }

    #[test]
    fn epistemic_relation_is_an_equivalence() {
        let m = counter_model();
        for i in 1..=m.n() {
            for s in m.state_ids() {
                let ns = m.epistemic_neighbors(s, i).unwrap();
                assert!(ns.contains(&s), "reflexive");
                for &t in ns {
                    assert!(
                        m.epistemic_neighbors(t, i).unwrap().contains(&s),
                        "symmetric"
                    );
                    assert_eq!(m.epistemic_neighbors(t, i).unwrap(), ns, "transitive");
                }
            }
        }
    }

    #[test]
    fn environment_index_rejected_for_knowledge() {
        let m = counter_model();
        assert!(matches!(
            m.epistemic_neighbors(0, 0),
            Err(ModelError::BadAgentIndex(0))
        ));
        assert!(matches!(
            m.epistemic_neighbors(0, 7),
            Err(ModelError::BadAgentIndex(7))
        ));
    }

    #[test]
    fn environment_difference_invisible_to_agents() {
        // Two states differing only in the environment local are mutual
        // epistemic neighbors for every proper agent.
        let text = "\
OPTIONS { noskip; }
DOMAIN { a; b; }
AGENTS {
  env { E(1); }
  a1 { Q(1); }
}
INIT { env { E(a); } a1 { Q(a); } }
ACTIONS {
  move : (forall x. Q(x) -> Q'(x)) and (forall x. Q'(x) -> Q(x))
         and (exists x. not E(x) and E'(x)) and (forall x. E(x) -> not E'(x))
         and (forall x,y. E'(x) and E'(y) -> x = y);
}
";
        let m = parse_acm(text).unwrap().build(&ExplorationBudget::default()).unwrap();
        assert_eq!(m.state_count(), 2);
        let ns = m.epistemic_neighbors(0, 1).unwrap();
        assert_eq!(*ns, [0, 1].into());
    }

    #[test]
    fn common_knowledge_closure_matches_bfs_oracle() {
        let m = counter_model();
        for s in m.state_ids() {
            // Oracle: plain BFS over the union of agent relations.
            let mut seen: BTreeSet<StateId> = [s].into();
            loop {
                let mut grew = false;
                for &x in seen.clone().iter() {
                    for i in 1..=m.n() {
                        for &t in m.epistemic_neighbors(x, i).unwrap() {
                            grew |= seen.insert(t);
                        }
                    }
                }
                if !grew {
                    break;
                }
            }
            assert_eq!(m.common_knowledge_closure(s).unwrap(), seen);
        }
    }

    #[test]
    fn te_reachability_includes_both_relations() {
        let m = counter_model();
        // Counter: temporal reachability alone already covers both states.
        assert_eq!(m.te_reachable(0).unwrap().len(), 2);
    }

    #[test]
    fn acm_dump_round_trips() {
        let m = counter_model();
        let dump = to_acm(&m);
        let m2 = parse_acm(&dump).unwrap().build(&ExplorationBudget::default()).unwrap();
        assert_eq!(m.state_count(), m2.state_count());
        assert_eq!(m.transition_count(), m2.transition_count());
        for sid in m.state_ids() {
            assert_eq!(m.state(sid), m2.state(sid), "state renumbering must agree");
            let succ1 = m.successors(sid).unwrap();
            let succ2 = m2.successors(sid).unwrap();
            assert_eq!(succ1, succ2);
        }
    }

    /// Two agents viewing the same relation: the shared tuples live in both
    /// locals, and the dump (which lists them under each declaring agent)
    /// parses back to the same model.
    #[test]
    fn shared_relation_round_trips() {
        let text = "\
OPTIONS { noskip; }
DOMAIN { a; b; }
AGENTS {
  env { }
  p { S(1); }
  q { S(1); }
}
INIT {
  p { S(a); }
  q { S(a); }
}
ACTIONS {
  swap : (forall x. S'(x) -> not S(x)) and (forall x. S(x) -> not S'(x))
         and (exists x. S'(x)) and (forall x,y. S'(x) and S'(y) -> x = y);
}
";
        let m = parse_acm(text)
            .unwrap()
            .build(&ExplorationBudget::default())
            .unwrap();
        assert_eq!(m.state_count(), 2);
        for sid in m.state_ids() {
            assert_eq!(m.state(sid).locals[1], m.state(sid).locals[2]);
        }
        let dump = to_acm(&m);
        let m2 = parse_acm(&dump)
            .unwrap()
            .build(&ExplorationBudget::default())
            .unwrap();
        assert_eq!(to_acm(&m2), dump);
    }

    #[test]
    fn parse_errors_are_positioned() {
        let err = parse_acm("DOMAIN { 0; 1 }").unwrap_err();
        assert!(matches!(err, SpecError::Syntax { .. }));
    }
}
