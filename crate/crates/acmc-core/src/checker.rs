//! Fixpoint model checking of FO-CTLK formulas on finite models.
//!
//! Each subformula is labelled bottom-up with the set of states satisfying it
//! under a given assignment of its free variables; until operators are least
//! fixpoints, knowledge operators are conjunctions over epistemic classes.
//! Labelings are memoized per (subformula, assignment restriction), which
//! keeps the table polynomial in |S| · |U|^|free|.
//!
//! Open formulas support two notions of truth: *all-assignments* (the formula
//! holds under every valuation of its free variables over the domain) and
//! *exists-assignment* (some valuation makes it hold; a witness is returned).
//! The two coincide on sentences.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use thiserror::Error;

use crate::acmas::{Acmas, ModelError, StateId};
use crate::logic::{SpecError, SpecFormula};
use crate::relational::{Assignment, EvalError, Term, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Search for some assignment of the free variables; report a witness.
    ExistsAssignment,
    /// Require the formula under every assignment over the domain.
    AllAssignments,
}

/// Work budget; a unit of work is one state-set computation for one
/// (subformula, assignment) pair, including each fixpoint pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CheckBudget {
    pub max_steps: usize,
}

impl Default for CheckBudget {
    fn default() -> Self {
        CheckBudget { max_steps: 10_000_000 }
    }
}

pub struct CheckRequest<'a> {
    pub model: &'a Acmas,
    pub formula: SpecFormula,
    pub mode: Mode,
    pub budget: CheckBudget,
}

/// Evidence attached to a refuted top-level operator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Diagnostic {
    /// A run refuting an until/invariant: `states[cycle_start..]` repeats
    /// forever when present, otherwise the trace is a finite prefix ending at
    /// the offending state.
    Lasso {
        states: Vec<StateId>,
        cycle_start: Option<usize>,
    },
    /// An epistemic neighbor (of the named agent) where the body fails.
    EpistemicNeighbor { agent: usize, state: StateId },
    /// A member of the common-knowledge reach where the body fails.
    CommonReach { state: StateId },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CheckStats {
    pub steps: usize,
    pub memo_entries: usize,
    pub memo_hits: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckResult {
    pub verdict: bool,
    pub witness: Option<Assignment>,
    pub diagnostic: Option<Diagnostic>,
    pub stats: CheckStats,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheckError {
    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error(transparent)]
    Spec(#[from] SpecError),

    #[error("work budget of {limit} steps exceeded")]
    Budget { limit: usize },
}

/// Assignments as canonical sorted pairs, for use as ordered map keys.
pub type AssignmentKey = Vec<(String, Value)>;

/// Dense bitset over the model's state ids; the labeling tables hold one of
/// these per (subformula, assignment), so compactness matters.
#[derive(Clone, Debug, PartialEq, Eq)]
struct StateSet {
    words: Vec<u64>,
    n: usize,
}

impl StateSet {
    fn empty(n: usize) -> Self {
        StateSet { words: alloc::vec![0u64; n.div_ceil(64)], n }
    }

    fn full(n: usize) -> Self {
        let mut s = StateSet { words: alloc::vec![!0u64; n.div_ceil(64)], n };
        s.mask_tail();
        s
    }

    /// Zero the bits past `n` in the last word.
    fn mask_tail(&mut self) {
        if self.n % 64 != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << (self.n % 64)) - 1;
            }
        }
    }

    fn insert(&mut self, i: StateId) {
        self.words[i / 64] |= 1u64 << (i % 64);
    }

    fn remove(&mut self, i: StateId) {
        self.words[i / 64] &= !(1u64 << (i % 64));
    }

    fn contains(&self, i: StateId) -> bool {
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    fn complement(&self) -> StateSet {
        let mut out = StateSet { words: self.words.iter().map(|w| !w).collect(), n: self.n };
        out.mask_tail();
        out
    }

    fn iter(&self) -> impl Iterator<Item = StateId> + '_ {
        (0..self.n).filter(move |&i| self.contains(i))
    }
}

fn key_of(sigma: &Assignment) -> AssignmentKey {
    sigma.bindings().map(|(v, u)| (v.to_string(), u.clone())).collect()
}

struct Evaluator<'a> {
    model: &'a Acmas,
    budget: CheckBudget,
    // Keyed by subformula address: every subformula of the request's
    // formula is alive (and immovable) for the evaluator's whole lifetime,
    // which avoids re-rendering formula strings on the hot path.
    memo: BTreeMap<(usize, AssignmentKey), Arc<StateSet>>,
    names: BTreeMap<usize, String>,
    free_cache: BTreeMap<usize, Arc<BTreeSet<String>>>,
    adoms: Vec<BTreeSet<Value>>,
    adom_union: BTreeSet<Value>,
    // Connected components of the union of the ∼_i relations, computed on
    // first use; C is constant on each component.
    common_components: Option<Vec<BTreeSet<StateId>>>,
    stats: CheckStats,
}

impl<'a> Evaluator<'a> {
    fn new(model: &'a Acmas, budget: CheckBudget) -> Self {
        let adoms: Vec<BTreeSet<Value>> =
            model.state_ids().map(|s| model.state(s).active_domain()).collect();
        let adom_union = adoms.iter().flatten().cloned().collect();
        Evaluator {
            model,
            budget,
            memo: BTreeMap::new(),
            names: BTreeMap::new(),
            free_cache: BTreeMap::new(),
            adoms,
            adom_union,
            common_components: None,
            stats: CheckStats::default(),
        }
    }

    fn step(&mut self) -> Result<(), CheckError> {
        self.stats.steps += 1;
        if self.stats.steps > self.budget.max_steps {
            Err(CheckError::Budget { limit: self.budget.max_steps })
        } else {
            Ok(())
        }
    }

    fn all_states(&self) -> StateSet {
        StateSet::full(self.model.state_count())
    }

    fn components(&mut self) -> Result<&[BTreeSet<StateId>], CheckError> {
        if self.common_components.is_none() {
            let mut comps = Vec::new();
            let mut seen = alloc::vec![false; self.model.state_count()];
            for s in self.model.state_ids() {
                if seen[s] {
                    continue;
                }
                let comp = self.model.common_knowledge_closure(s)?;
                for &t in &comp {
                    seen[t] = true;
                }
                comps.push(comp);
            }
            self.common_components = Some(comps);
        }
        Ok(self.common_components.as_deref().unwrap())
    }

    fn value_of(&self, sigma: &Assignment, t: &Term) -> Result<Value, CheckError> {
        match t {
            Term::Const(c) => Ok(c.clone()),
            Term::Var(v) => sigma
                .get(v)
                .cloned()
                .ok_or_else(|| EvalError::UnboundVariable(v.clone()).into()),
        }
    }

    /// The set of states satisfying `phi` under `sigma`, which must bind all
    /// of `phi`'s free variables. Memoized on the restriction to free(phi).
    fn sat(&mut self, phi: &SpecFormula, sigma: &Assignment) -> Result<Arc<StateSet>, CheckError> {
        let ptr = phi as *const SpecFormula as usize;
        let free = self
            .free_cache
            .entry(ptr)
            .or_insert_with(|| Arc::new(phi.free_vars()))
            .clone();
        let restricted = sigma.restrict(&free);
        let key = (ptr, key_of(&restricted));
        if let Some(hit) = self.memo.get(&key) {
            self.stats.memo_hits += 1;
            return Ok(hit.clone());
        }
        self.names.entry(key.0).or_insert_with(|| phi.to_string());
        self.step()?;
        let set = self.compute(phi, &restricted)?;
        let set = Arc::new(set);
        self.memo.insert(key, set.clone());
        self.stats.memo_entries = self.memo.len();
        Ok(set)
    }

    fn compute(&mut self, phi: &SpecFormula, sigma: &Assignment) -> Result<StateSet, CheckError> {
        match phi {
            SpecFormula::Eq(a, b) => {
                if self.value_of(sigma, a)? == self.value_of(sigma, b)? {
                    Ok(self.all_states())
                } else {
                    Ok(StateSet::empty(self.model.state_count()))
                }
            }
            SpecFormula::Atom(rel, terms) => {
                let tuple: Vec<Value> = terms
                    .iter()
                    .map(|t| self.value_of(sigma, t))
                    .collect::<Result<_, _>>()?;
                let mut out = StateSet::empty(self.model.state_count());
                for s in self.model.state_ids() {
                    if self.model.global_instance(s).contains(rel, &tuple) {
                        out.insert(s);
                    }
                }
                Ok(out)
            }
            SpecFormula::Not(f) => {
                let inner = self.sat(f, sigma)?;
                Ok(inner.complement())
            }
            SpecFormula::Implies(a, b) => {
                let sa = self.sat(a, sigma)?;
                let sb = self.sat(b, sigma)?;
                let mut out = sa.complement();
                for (w, wb) in out.words.iter_mut().zip(&sb.words) {
                    *w |= wb;
                }
                Ok(out)
            }
            SpecFormula::Forall(x, f) => {
                // s ⊨ ∀x f iff f holds at s for every u ∈ adom(s). Evaluated
                // value-first (one recursive call per value in the union of
                // all active domains) so nested quantifiers cost the product
                // of the value counts, not of value counts and states.
                let mut out = self.all_states();
                let values: Vec<Value> = self.adom_union.iter().cloned().collect();
                for u in values {
                    let ext = sigma.updated(x, u.clone());
                    let sf = self.sat(f, &ext)?;
                    for s in self.model.state_ids() {
                        if out.contains(s) && self.adoms[s].contains(&u) && !sf.contains(s) {
                            out.remove(s);
                        }
                    }
                }
                Ok(out)
            }
            SpecFormula::AX(f) => {
                let sf = self.sat(f, sigma)?;
                let mut out = StateSet::empty(self.model.state_count());
                for s in self.model.state_ids() {
                    if self.model.successors(s)?.iter().all(|&t| sf.contains(t)) {
                        out.insert(s);
                    }
                }
                Ok(out)
            }
            SpecFormula::AU(a, b) => self.until(a, b, sigma, true),
            SpecFormula::EU(a, b) => self.until(a, b, sigma, false),
            SpecFormula::Know(i, f) => {
                // K_i is constant on each ∼_i class: decide per class.
                let sf = self.sat(f, sigma)?;
                let mut out = StateSet::empty(self.model.state_count());
                for class in self.model.epistemic_classes(*i)? {
                    if class.iter().all(|&t| sf.contains(t)) {
                        for &t in class {
                            out.insert(t);
                        }
                    }
                }
                Ok(out)
            }
            SpecFormula::Common(f) => {
                let sf = self.sat(f, sigma)?;
                let n = self.model.state_count();
                let components = self.components()?;
                let mut out = StateSet::empty(n);
                for comp in components.iter() {
                    if comp.iter().all(|&t| sf.contains(t)) {
                        for &t in comp {
                            out.insert(t);
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    /// Least fixpoint Z = b ∪ (a ∩ ⟨AX|EX⟩ Z).
    fn until(
        &mut self,
        a: &SpecFormula,
        b: &SpecFormula,
        sigma: &Assignment,
        universal: bool,
    ) -> Result<StateSet, CheckError> {
        let sa = self.sat(a, sigma)?;
        let sb = self.sat(b, sigma)?;
        let mut z: StateSet = (*sb).clone();
        loop {
            self.step()?;
            let mut grew = false;
            for s in self.model.state_ids() {
                if z.contains(s) || !sa.contains(s) {
                    continue;
                }
                let succ = self.model.successors(s)?;
                let pass = if universal {
                    succ.iter().all(|&t| z.contains(t))
                } else {
                    succ.iter().any(|&t| z.contains(t))
                };
                if pass {
                    z.insert(s);
                    grew = true;
                }
            }
            if !grew {
                return Ok(z);
            }
        }
    }

    /// Attach evidence for a refuted top-level operator, if the shape admits one.
    fn diagnose(&mut self, phi: &SpecFormula, sigma: &Assignment) -> Result<Option<Diagnostic>, CheckError> {
        let s0 = self.model.initial();
        match phi {
            // ¬E a U g holding nowhere ⇒ a finite prefix realizing the until.
            SpecFormula::Not(inner) => {
                if let SpecFormula::EU(a, g) = &**inner {
                    let sa = self.sat(a, sigma)?;
                    let sg = self.sat(g, sigma)?;
                    let eu = self.sat(inner, sigma)?;
                    if !eu.contains(s0) {
                        return Ok(None);
                    }
                    // Shortest path realizing the until: BFS through
                    // a-states satisfying EU until a g-state is reached.
                    let mut parent: BTreeMap<StateId, StateId> = BTreeMap::new();
                    let mut queue = alloc::collections::VecDeque::from([s0]);
                    let mut goal = sg.contains(s0).then_some(s0);
                    while goal.is_none() {
                        let Some(cur) = queue.pop_front() else { break };
                        if !sa.contains(cur) {
                            continue;
                        }
                        for t in self.model.successors(cur)? {
                            if t == s0 || parent.contains_key(&t) || !eu.contains(t) {
                                continue;
                            }
                            parent.insert(t, cur);
                            if sg.contains(t) {
                                goal = Some(t);
                                break;
                            }
                            queue.push_back(t);
                        }
                    }
                    let mut trace = alloc::vec::Vec::new();
                    let mut cur = goal;
                    while let Some(c) = cur {
                        trace.push(c);
                        cur = parent.get(&c).copied();
                    }
                    trace.reverse();
                    return Ok(Some(Diagnostic::Lasso { states: trace, cycle_start: None }));
                }
                Ok(None)
            }
            // Refuted A a U b ⇒ a lasso along states where AU fails.
            SpecFormula::AU(_, _) => {
                let au = self.sat(phi, sigma)?;
                let mut trace = alloc::vec![s0];
                let mut seen: BTreeMap<StateId, usize> = BTreeMap::new();
                seen.insert(s0, 0);
                let mut cur = s0;
                loop {
                    let next = self.model.successors(cur)?.into_iter().find(|&t| !au.contains(t));
                    let Some(t) = next else {
                        return Ok(Some(Diagnostic::Lasso { states: trace, cycle_start: None }));
                    };
                    if let Some(&at) = seen.get(&t) {
                        trace.push(t);
                        return Ok(Some(Diagnostic::Lasso { states: trace, cycle_start: Some(at) }));
                    }
                    seen.insert(t, trace.len());
                    trace.push(t);
                    cur = t;
                }
            }
            SpecFormula::Know(i, f) => {
                let sf = self.sat(f, sigma)?;
                let bad = self
                    .model
                    .epistemic_neighbors(s0, *i)?
                    .iter()
                    .find(|&&t| !sf.contains(t))
                    .copied();
                Ok(bad.map(|state| Diagnostic::EpistemicNeighbor { agent: *i, state }))
            }
            SpecFormula::Common(f) => {
                let sf = self.sat(f, sigma)?;
                let bad = self
                    .model
                    .common_knowledge_closure(s0)?
                    .into_iter()
                    .find(|&t| !sf.contains(t));
                Ok(bad.map(|state| Diagnostic::CommonReach { state }))
            }
            _ => Ok(None),
        }
    }
}

/// Enumerate assignments of `vars` to domain values, declared constants
/// first, then the remaining values in canonical order.
fn assignment_space(model: &Acmas, vars: &BTreeSet<String>) -> Vec<Assignment> {
    let mut values: Vec<Value> = model.constants().iter().cloned().collect();
    for v in model.domain() {
        if !model.constants().contains(v) {
            values.push(v.clone());
        }
    }
    let mut out = alloc::vec![Assignment::new()];
    for var in vars {
        let mut next = Vec::with_capacity(out.len() * values.len());
        for sigma in &out {
            for u in &values {
                next.push(sigma.updated(var, u.clone()));
            }
        }
        out = next;
    }
    if vars.is_empty() {
        out
    } else if model.domain().is_empty() {
        Vec::new()
    } else {
        out
    }
}

pub fn check(req: &CheckRequest<'_>) -> Result<CheckResult, CheckError> {
    req.formula.validate(req.model.global_schema(), req.model.n())?;
    let mut ev = Evaluator::new(req.model, req.budget);
    let s0 = req.model.initial();
    let free = req.formula.free_vars();

    if free.is_empty() {
        let sat = ev.sat(&req.formula, &Assignment::new())?;
        let verdict = sat.contains(&s0);
        let diagnostic = if verdict {
            None
        } else {
            ev.diagnose(&req.formula, &Assignment::new())?
        };
        return Ok(CheckResult { verdict, witness: None, diagnostic, stats: ev.stats });
    }

    let space = assignment_space(req.model, &free);
    match req.mode {
        Mode::ExistsAssignment => {
            for sigma in space {
                if ev.sat(&req.formula, &sigma)?.contains(&s0) {
                    return Ok(CheckResult {
                        verdict: true,
                        witness: Some(sigma),
                        diagnostic: None,
                        stats: ev.stats,
                    });
                }
            }
            Ok(CheckResult { verdict: false, witness: None, diagnostic: None, stats: ev.stats })
        }
        Mode::AllAssignments => {
            for sigma in space {
                if !ev.sat(&req.formula, &sigma)?.contains(&s0) {
                    let diagnostic = ev.diagnose(&req.formula, &sigma)?;
                    return Ok(CheckResult {
                        verdict: false,
                        witness: Some(sigma),
                        diagnostic,
                        stats: ev.stats,
                    });
                }
            }
            Ok(CheckResult { verdict: true, witness: None, diagnostic: None, stats: ev.stats })
        }
    }
}

/// Whether a sentence holds at the initial state.
pub fn check_closed(model: &Acmas, phi: &SpecFormula) -> Result<bool, CheckError> {
    let req = CheckRequest {
        model,
        formula: phi.clone(),
        mode: Mode::AllAssignments,
        budget: CheckBudget::default(),
    };
    Ok(check(&req)?.verdict)
}

/// The full bottom-up extension table: for every subformula and every
/// relevant restriction of the assignment, the set of satisfying states.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Labeling {
    pub table: BTreeMap<(String, AssignmentKey), BTreeSet<StateId>>,
}

impl Labeling {
    pub fn holds(&self, subformula: &str, key: &AssignmentKey, state: StateId) -> Option<bool> {
        self.table
            .get(&(subformula.to_string(), key.clone()))
            .map(|set| set.contains(&state))
    }

    /// Number of (state, assignment) cells in the table.
    pub fn entry_count(&self, state_count: usize) -> usize {
        self.table.len() * state_count
    }
}

/// Label every subformula of `phi` in every state, under every assignment of
/// the free variables over the model domain.
pub fn check_labeled(model: &Acmas, phi: &SpecFormula) -> Result<Labeling, CheckError> {
    phi.validate(model.global_schema(), model.n())?;
    let mut ev = Evaluator::new(model, CheckBudget::default());
    for sigma in assignment_space(model, &phi.free_vars()) {
        ev.sat(phi, &sigma)?;
    }
    if phi.free_vars().is_empty() {
        ev.sat(phi, &Assignment::new())?;
    }
    let names = ev.names;
    Ok(Labeling {
        table: ev
            .memo
            .into_iter()
            .map(|((p, a), v)| ((names[&p].clone(), a), (*v).clone()))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acmas::{Agent, AcmasBuilder, ExplorationBudget, GlobalState, GroundAction, parse_acm};
    use crate::logic::parse_spec;
    use crate::relational::{Instance, Schema};
    use alloc::vec;

    fn v(s: &str) -> Value {
        Value::new(s)
    }

    /// Two agents (plus a mute environment); agent 1 holds P/1, the
    /// environment holds E/1. States are hand-assembled.
    fn two_agent_model(
        states: &[(&[&str], &[&str])],
        edges: &[(usize, usize)],
    ) -> Acmas {
        let env_schema = Arc::new(Schema::from_relations([("E", 1)]).unwrap());
        let ag_schema = Arc::new(Schema::from_relations([("P", 1)]).unwrap());
        let agents = vec![
            Agent::new("env", env_schema.clone()),
            Agent::new("a1", ag_schema.clone()),
        ];
        let domain: BTreeSet<Value> = ["a", "b", "c", "d"].iter().map(|s| v(s)).collect();
        let mk = |(es, ps): &(&[&str], &[&str])| {
            let mut env = Instance::empty(env_schema.clone());
            for e in *es {
                env.insert("E", vec![v(e)]).unwrap();
            }
            let mut ag = Instance::empty(ag_schema.clone());
            for p in *ps {
                ag.insert("P", vec![v(p)]).unwrap();
            }
            GlobalState::new(vec![env, ag])
        };
        let mut b = AcmasBuilder::new(agents, domain, BTreeSet::new(), mk(&states[0])).unwrap();
        let ids: Vec<_> = states.iter().map(|s| b.intern(mk(s)).unwrap()).collect();
        for &(x, y) in edges {
            b.add_transition(ids[x], GroundAction::skip(2), ids[y]);
        }
        b.finish(false).unwrap()
    }

    fn parse_on(m: &Acmas, text: &str) -> SpecFormula {
        let agents: Vec<String> = m.agents().iter().map(|a| a.name.clone()).collect();
        // Domain values are rigid names in formula text, as in the file formats.
        let consts: BTreeSet<Value> = m.domain().union(m.constants()).cloned().collect();
        parse_spec(text, m.global_schema(), &agents, &consts).unwrap()
    }

    #[test]
    fn tautology_and_contradiction() {
        let m = two_agent_model(&[(&["a"], &["a"])], &[(0, 0)]);
        assert!(check_closed(&m, &parse_on(&m, "AG true")).unwrap());
        assert!(!check_closed(&m, &parse_on(&m, "EF false")).unwrap());
    }

    #[test]
    fn counter_refutes_persistence_formula() {
        // The two-state flip-flop satisfies AX AX-return but refutes the
        // claim that a held value is never held again.
        let m = parse_acm(
            "OPTIONS { noskip; }\nDOMAIN { 0; 1; }\nAGENTS { env { } c { P(1); } }\nINIT { c { P(1); } }\nACTIONS { inc : (exists x. P(x) and not P'(x)) and (exists x. P'(x) and not P(x)) and (forall x,y. P(x) and P(y) -> x = y) and (forall x,y. P'(x) and P'(y) -> x = y); }\n",
        )
        .unwrap()
        .build(&ExplorationBudget::default())
        .unwrap();
        let phi = parse_on(&m, "AG forall x. (P(x) -> AX AG not P(x))");
        assert!(!check_closed(&m, &phi).unwrap());
        let req = CheckRequest {
            model: &m,
            formula: phi,
            mode: Mode::AllAssignments,
            budget: CheckBudget::default(),
        };
        let res = check(&req).unwrap();
        assert!(!res.verdict);
        assert!(res.diagnostic.is_some(), "refuted invariant should carry a trace");
    }

    #[test]
    fn knowledge_requires_truth_in_all_neighbors() {
        // s0 and s1 share the agent local (P = {a}) but differ in the
        // environment, so agent 1 cannot tell them apart; E(b) holds only in
        // s0, so K[a1] E(b) is false while K[a1] P(a) is true.
        let m = two_agent_model(
            &[(&["b"], &["a"]), (&["c"], &["a"]), (&["c"], &["b"])],
            &[(0, 1), (1, 2), (2, 2)],
        );
        assert!(!check_closed(&m, &parse_on(&m, "K[a1] E(b)")).unwrap());
        assert!(check_closed(&m, &parse_on(&m, "K[a1] P(a)")).unwrap());
        // C is at least as strong as K.
        assert!(!check_closed(&m, &parse_on(&m, "C E(b)")).unwrap());
    }

    #[test]
    fn refuted_knowledge_names_a_neighbor() {
        let m = two_agent_model(
            &[(&["b"], &["a"]), (&["c"], &["a"])],
            &[(0, 1), (1, 0)],
        );
        let req = CheckRequest {
            model: &m,
            formula: parse_on(&m, "K[a1] E(b)"),
            mode: Mode::AllAssignments,
            budget: CheckBudget::default(),
        };
        let res = check(&req).unwrap();
        assert!(!res.verdict);
        assert_eq!(
            res.diagnostic,
            Some(Diagnostic::EpistemicNeighbor { agent: 1, state: 1 })
        );
    }

    #[test]
    fn duality_on_closed_formulas() {
        let m = two_agent_model(
            &[(&["b"], &["a"]), (&["c"], &["b"]), (&[], &["a", "b"])],
            &[(0, 1), (1, 2), (2, 0), (1, 1)],
        );
        for text in [
            "AG exists x. P(x)",
            "EF P(b)",
            "AU(P(a), P(b))",
            "K[a1] exists x. E(x)",
            "AX (P(b) or E(c))",
        ] {
            let phi = parse_on(&m, text);
            let lhs = check_closed(&m, &SpecFormula::not(phi.clone())).unwrap();
            let rhs = !check_closed(&m, &phi).unwrap();
            assert_eq!(lhs, rhs, "duality failed on {text}");
        }
    }

    #[test]
    fn exists_assignment_finds_witness_in_canonical_order() {
        let m = two_agent_model(&[(&["b"], &["a", "b"])], &[(0, 0)]);
        let req = CheckRequest {
            model: &m,
            formula: parse_on(&m, "P(x)"),
            mode: Mode::ExistsAssignment,
            budget: CheckBudget::default(),
        };
        let res = check(&req).unwrap();
        assert!(res.verdict);
        assert_eq!(res.witness.unwrap().get("x"), Some(&v("a")));
    }

    #[test]
    fn variable_bound_outside_target_active_domain() {
        // x can be bound to a value from s0 and tested at s1 where it is
        // absent from adom; the atom is then simply false.
        let m = two_agent_model(&[(&[], &["a"]), (&[], &["b"])], &[(0, 1), (1, 1)]);
        let req = CheckRequest {
            model: &m,
            formula: parse_on(&m, "P(x) and AX not P(x)"),
            mode: Mode::ExistsAssignment,
            budget: CheckBudget::default(),
        };
        let res = check(&req).unwrap();
        assert!(res.verdict);
        assert_eq!(res.witness.unwrap().get("x"), Some(&v("a")));
    }

    #[test]
    fn quantifier_ranges_over_state_active_domain_only() {
        // ∀x P(x) holds at a state iff adom(s) ⊆ P; values elsewhere in the
        // model domain are irrelevant.
        let m = two_agent_model(&[(&[], &["a"]), (&["b"], &["a"])], &[(0, 1), (1, 0)]);
        assert!(check_closed(&m, &parse_on(&m, "forall x. P(x)")).unwrap());
        assert!(!check_closed(&m, &parse_on(&m, "AX forall x. P(x)")).unwrap());
    }

    #[test]
    fn labeled_table_consistent_with_check() {
        let m = two_agent_model(
            &[(&["b"], &["a"]), (&["c"], &["b"])],
            &[(0, 1), (1, 0)],
        );
        let phi = parse_on(&m, "EF P(b)");
        let lab = check_labeled(&m, &phi).unwrap();
        let top = lab.holds(&phi.to_string(), &Vec::new(), m.initial()).unwrap();
        assert_eq!(top, check_closed(&m, &phi).unwrap());
    }

    #[test]
    fn labeled_open_formula_enumerates_assignments() {
        let m = two_agent_model(&[(&[], &["a"]), (&[], &["b"])], &[(0, 1), (1, 0)]);
        let phi = parse_on(&m, "P(x)");
        let lab = check_labeled(&m, &phi).unwrap();
        // One row per domain value for the lone subformula P(x).
        let rows: Vec<_> = lab
            .table
            .keys()
            .filter(|(f, _)| f == "P(x)")
            .collect();
        assert_eq!(rows.len(), m.domain().len());
        assert!(lab
            .holds("P(x)", &vec![(String::from("x"), v("a"))], 0)
            .unwrap());
        assert!(!lab
            .holds("P(x)", &vec![(String::from("x"), v("a"))], 1)
            .unwrap());
    }

    #[test]
    fn budget_exhaustion_is_an_error() {
        let m = two_agent_model(&[(&["b"], &["a"])], &[(0, 0)]);
        let req = CheckRequest {
            model: &m,
            formula: parse_on(&m, "AG EF AG EF P(a)"),
            mode: Mode::AllAssignments,
            budget: CheckBudget { max_steps: 2 },
        };
        assert_eq!(check(&req).unwrap_err(), CheckError::Budget { limit: 2 });
    }
}
