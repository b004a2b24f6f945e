//! Bisimulation, uniformity, and boundedness checking.
//!
//! Bisimulations here refine the classical notion by requiring related
//! states to be isomorphic; the ⊕ variants additionally require matched
//! moves (temporal and epistemic) to have isomorphic instance joins. The
//! largest relation is computed by greatest-fixpoint refinement seeded with
//! all isomorphic state pairs, and returned certificates are re-verified by
//! an independent condition checker before being handed out.
//!
//! Uniformity asks that the transition (and epistemic) structure be closed
//! under constant-preserving injective renamings of the data: whenever a
//! renamed source is itself a state, the correspondingly renamed transition
//! must exist. When adom(s0) ⊆ C, closure of the transition relation alone
//! suffices and the epistemic requirement is skipped.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::acmas::{Acmas, GlobalState, GroundAction, StateId};
use crate::relational::{find_isomorphism, rename, Instance, IsoWitness, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RelationKind {
    Simulation,
    Bisimulation,
    OplusSimulation,
    OplusBisimulation,
}

/// A matched move with its join isomorphism: `left` is a move s → t (or
/// s ∼_i t) in the first model, `right` the matching move in the second,
/// and `mapping` the isomorphism between the two instance joins.
#[derive(Clone, Debug)]
pub struct JointWitness {
    pub left: (StateId, StateId),
    pub right: (StateId, StateId),
    pub agent: Option<usize>,
    pub mapping: IsoWitness,
}

#[derive(Clone, Debug)]
pub struct RelationCertificate {
    pub kind: RelationKind,
    pub pairs: BTreeSet<(StateId, StateId)>,
    pub witnesses: Vec<JointWitness>,
}

fn shared_constants(a: &Acmas, b: &Acmas) -> BTreeSet<Value> {
    a.constants().union(b.constants()).cloned().collect()
}

fn joined_locals(s: &GlobalState, t: &GlobalState) -> Vec<Instance> {
    let mut v = s.locals.clone();
    v.extend(t.locals.iter().cloned());
    v
}

/// Isomorphism of states: a single constant-preserving bijection carrying
/// every local instance of one onto the corresponding local of the other.
fn state_iso(a: &Acmas, sa: StateId, b: &Acmas, sb: StateId, c: &BTreeSet<Value>) -> Option<IsoWitness> {
    find_isomorphism(&a.state(sa).locals, &b.state(sb).locals, c)
}

/// Isomorphism of instance joins s ⊕ t vs s′ ⊕ t′: one bijection preserving
/// the locals of the sources and targets simultaneously.
fn join_iso(
    a: &Acmas,
    s: StateId,
    t: StateId,
    b: &Acmas,
    s2: StateId,
    t2: StateId,
    c: &BTreeSet<Value>,
) -> Option<IsoWitness> {
    find_isomorphism(
        &joined_locals(a.state(s), a.state(t)),
        &joined_locals(b.state(s2), b.state(t2)),
        c,
    )
}

struct Refiner<'m> {
    a: &'m Acmas,
    b: &'m Acmas,
    oplus: bool,
    constants: BTreeSet<Value>,
}

impl<'m> Refiner<'m> {
    /// Does `pairs` satisfy the forward simulation conditions at (s, s2)?
    fn forward_ok(&self, s: StateId, s2: StateId, pairs: &BTreeSet<(StateId, StateId)>) -> bool {
        let succ2: Vec<StateId> = self.b.successors(s2).expect("valid").into_iter().collect();
        for t in self.a.successors(s).expect("valid") {
            let matched = succ2.iter().any(|&t2| {
                pairs.contains(&(t, t2))
                    && (!self.oplus || join_iso(self.a, s, t, self.b, s2, t2, &self.constants).is_some())
            });
            if !matched {
                return false;
            }
        }
        if self.oplus {
            for i in 1..=self.a.n() {
                for &t in self.a.epistemic_neighbors(s, i).expect("valid") {
                    let matched = self
                        .b
                        .epistemic_neighbors(s2, i)
                        .expect("valid")
                        .iter()
                        .any(|&t2| {
                            pairs.contains(&(t, t2))
                                && join_iso(self.a, s, t, self.b, s2, t2, &self.constants).is_some()
                        });
                    if !matched {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Forward conditions of the inverse relation at (s, s2): every move of
    /// the second model is matched by one of the first.
    fn backward_ok(&self, s: StateId, s2: StateId, pairs: &BTreeSet<(StateId, StateId)>) -> bool {
        let succ: Vec<StateId> = self.a.successors(s).expect("valid").into_iter().collect();
        for t2 in self.b.successors(s2).expect("valid") {
            let matched = succ.iter().any(|&t| {
                pairs.contains(&(t, t2))
                    && (!self.oplus || join_iso(self.a, s, t, self.b, s2, t2, &self.constants).is_some())
            });
            if !matched {
                return false;
            }
        }
        if self.oplus {
            for i in 1..=self.b.n() {
                for &t2 in self.b.epistemic_neighbors(s2, i).expect("valid") {
                    let matched = self
                        .a
                        .epistemic_neighbors(s, i)
                        .expect("valid")
                        .iter()
                        .any(|&t| {
                            pairs.contains(&(t, t2))
                                && join_iso(self.a, s, t, self.b, s2, t2, &self.constants).is_some()
                        });
                    if !matched {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// Compute the largest (⊕-)bisimulation between two models and return a
/// certificate iff it relates the initial states.
pub fn check_bisimulation(a: &Acmas, b: &Acmas, oplus: bool) -> Option<RelationCertificate> {
    if a.agents().len() != b.agents().len() {
        return None;
    }
    let constants = shared_constants(a, b);
    let refiner = Refiner { a, b, oplus, constants: constants.clone() };

    // Seed: condition 1 admits only isomorphic pairs.
    let mut pairs: BTreeSet<(StateId, StateId)> = BTreeSet::new();
    for s in a.state_ids() {
        for s2 in b.state_ids() {
            if state_iso(a, s, b, s2, &constants).is_some() {
                pairs.insert((s, s2));
            }
        }
    }

    loop {
        let keep: BTreeSet<(StateId, StateId)> = pairs
            .iter()
            .copied()
            .filter(|&(s, s2)| refiner.forward_ok(s, s2, &pairs) && refiner.backward_ok(s, s2, &pairs))
            .collect();
        let stable = keep.len() == pairs.len();
        pairs = keep;
        if stable {
            break;
        }
    }

    if !pairs.contains(&(a.initial(), b.initial())) {
        return None;
    }

    // Collect join witnesses for the matched moves out of every pair.
    let mut witnesses = Vec::new();
    if oplus {
        for &(s, s2) in &pairs {
            for t in a.successors(s).expect("valid") {
                if let Some((t2, w)) = b.successors(s2).expect("valid").into_iter().find_map(|t2| {
                    if !pairs.contains(&(t, t2)) {
                        return None;
                    }
                    join_iso(a, s, t, b, s2, t2, &constants).map(|w| (t2, w))
                }) {
                    witnesses.push(JointWitness { left: (s, t), right: (s2, t2), agent: None, mapping: w });
                }
            }
            for i in 1..=a.n() {
                for &t in a.epistemic_neighbors(s, i).expect("valid") {
                    if let Some((t2, w)) =
                        b.epistemic_neighbors(s2, i).expect("valid").iter().find_map(|&t2| {
                            if !pairs.contains(&(t, t2)) {
                                return None;
                            }
                            join_iso(a, s, t, b, s2, t2, &constants).map(|w| (t2, w))
                        })
                    {
                        witnesses.push(JointWitness {
                            left: (s, t),
                            right: (s2, t2),
                            agent: Some(i),
                            mapping: w,
                        });
                    }
                }
            }
        }
    }

    let cert = RelationCertificate {
        kind: if oplus { RelationKind::OplusBisimulation } else { RelationKind::Bisimulation },
        pairs,
        witnesses,
    };
    debug_assert!(verify_certificate(a, b, &cert));
    if verify_certificate(a, b, &cert) {
        Some(cert)
    } else {
        None
    }
}

/// Independent re-check of a certificate: every pair isomorphic, every move
/// matched under the certificate's own pairs, and the initial pair present.
pub fn verify_certificate(a: &Acmas, b: &Acmas, cert: &RelationCertificate) -> bool {
    let constants = shared_constants(a, b);
    let oplus = matches!(cert.kind, RelationKind::OplusSimulation | RelationKind::OplusBisimulation);
    let two_way = matches!(cert.kind, RelationKind::Bisimulation | RelationKind::OplusBisimulation);
    let refiner = Refiner { a, b, oplus, constants: constants.clone() };
    if !cert.pairs.contains(&(a.initial(), b.initial())) {
        return false;
    }
    for &(s, s2) in &cert.pairs {
        if state_iso(a, s, b, s2, &constants).is_none() {
            return false;
        }
        if !refiner.forward_ok(s, s2, &cert.pairs) {
            return false;
        }
        if two_way && !refiner.backward_ok(s, s2, &cert.pairs) {
            return false;
        }
    }
    for w in &cert.witnesses {
        let lhs = joined_locals(a.state(w.left.0), a.state(w.left.1));
        let rhs = joined_locals(b.state(w.right.0), b.state(w.right.1));
        if !w.mapping.verify(&lhs, &rhs, &constants) {
            return false;
        }
    }
    true
}

/// A renaming that breaks closure of the transition or epistemic structure.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UniformityViolation {
    pub source: StateId,
    pub target: StateId,
    /// The transition's action, or `None` for the epistemic requirement.
    pub action: Option<GroundAction>,
    pub agent: Option<usize>,
    pub mapping: BTreeMap<Value, Value>,
    pub renamed_source: StateId,
}

#[derive(Clone, Debug)]
pub struct UniformityReport {
    pub uniform: bool,
    pub violation: Option<UniformityViolation>,
    /// Epistemic requirement skipped because adom(s0) ⊆ C implies it.
    pub epistemic_implied: bool,
}

/// All injective maps over `keys` that fix constants and send the rest into
/// `targets`, in canonical order.
fn injections(
    keys: &[Value],
    constants: &BTreeSet<Value>,
    targets: &[Value],
) -> Vec<BTreeMap<Value, Value>> {
    let movable: Vec<&Value> = keys.iter().filter(|v| !constants.contains(*v)).collect();
    let mut out = Vec::new();
    let mut current: BTreeMap<Value, Value> = keys
        .iter()
        .filter(|v| constants.contains(*v))
        .map(|v| (v.clone(), v.clone()))
        .collect();
    fn go(
        movable: &[&Value],
        idx: usize,
        targets: &[Value],
        used: &mut BTreeSet<Value>,
        current: &mut BTreeMap<Value, Value>,
        out: &mut Vec<BTreeMap<Value, Value>>,
    ) {
        if idx == movable.len() {
            out.push(current.clone());
            return;
        }
        for t in targets {
            if used.insert(t.clone()) {
                current.insert(movable[idx].clone(), t.clone());
                go(movable, idx + 1, targets, used, current, out);
                current.remove(movable[idx]);
                used.remove(t);
            }
        }
    }
    go(&movable, 0, targets, &mut BTreeSet::new(), &mut current, &mut out);
    out
}

fn apply_to_state(s: &GlobalState, f: &BTreeMap<Value, Value>, c: &BTreeSet<Value>) -> GlobalState {
    GlobalState::new(rename(&s.locals, f, c).expect("total injective map"))
}

fn apply_to_action(action: &GroundAction, f: &BTreeMap<Value, Value>) -> GroundAction {
    GroundAction {
        components: action
            .components
            .iter()
            .map(|(n, ps)| (n.clone(), ps.iter().map(|v| f[v].clone()).collect()))
            .collect(),
    }
}

/// Check uniformity by enumerating every constant-preserving injective
/// renaming of each transition's (and epistemic pair's) data into the model
/// domain; absence of the renamed move when the renamed source is a state is
/// a violation.
pub fn check_uniform(m: &Acmas) -> UniformityReport {
    let c = m.constants().clone();
    let targets: Vec<Value> = m.domain().iter().filter(|v| !c.contains(*v)).cloned().collect();
    let index: BTreeMap<&GlobalState, StateId> = m.state_ids().map(|id| (m.state(id), id)).collect();

    for s in m.state_ids() {
        for (action, t) in m.transitions(s).expect("valid") {
            let mut keys: BTreeSet<Value> = m.state(s).active_domain();
            keys.extend(m.state(*t).active_domain());
            keys.extend(c.iter().cloned());
            for (_, params) in &action.components {
                keys.extend(params.iter().cloned());
            }
            let keys: Vec<Value> = keys.into_iter().collect();
            for f in injections(&keys, &c, &targets) {
                let s_img = apply_to_state(m.state(s), &f, &c);
                let Some(&sid) = index.get(&s_img) else { continue };
                let t_img = apply_to_state(m.state(*t), &f, &c);
                let a_img = apply_to_action(action, &f);
                let present = index
                    .get(&t_img)
                    .map(|&tid| m.transitions(sid).expect("valid").contains(&(a_img.clone(), tid)))
                    .unwrap_or(false);
                if !present {
                    return UniformityReport {
                        uniform: false,
                        violation: Some(UniformityViolation {
                            source: s,
                            target: *t,
                            action: Some(action.clone()),
                            agent: None,
                            mapping: f,
                            renamed_source: sid,
                        }),
                        epistemic_implied: false,
                    };
                }
            }
        }
    }

    // adom(s0) ⊆ C makes the epistemic requirement a consequence of the
    // transition requirement just established.
    let epistemic_implied = m.state(m.initial()).active_domain().is_subset(&c);
    if !epistemic_implied {
        for i in 1..=m.n() {
            for s in m.state_ids() {
                for &t in m.epistemic_neighbors(s, i).expect("valid") {
                    let mut keys: BTreeSet<Value> = m.state(s).active_domain();
                    keys.extend(m.state(t).active_domain());
                    keys.extend(c.iter().cloned());
                    let keys: Vec<Value> = keys.into_iter().collect();
                    for f in injections(&keys, &c, &targets) {
                        let s_img = apply_to_state(m.state(s), &f, &c);
                        let Some(&sid) = index.get(&s_img) else { continue };
                        let t_img = apply_to_state(m.state(t), &f, &c);
                        let related = index
                            .get(&t_img)
                            .map(|&tid| m.epistemic_neighbors(sid, i).expect("valid").contains(&tid))
                            .unwrap_or(false);
                        if !related {
                            return UniformityReport {
                                uniform: false,
                                violation: Some(UniformityViolation {
                                    source: s,
                                    target: t,
                                    action: None,
                                    agent: Some(i),
                                    mapping: f,
                                    renamed_source: sid,
                                }),
                                epistemic_implied: false,
                            };
                        }
                    }
                }
            }
        }
    }

    UniformityReport { uniform: true, violation: None, epistemic_implied }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundednessReport {
    pub bounded: bool,
    pub offending: Option<StateId>,
}

/// True iff every reachable state has an active domain of size ≤ b.
pub fn check_bounded(m: &Acmas, b: usize) -> BoundednessReport {
    for s in m.state_ids() {
        if m.state(s).active_domain().len() > b {
            return BoundednessReport { bounded: false, offending: Some(s) };
        }
    }
    BoundednessReport { bounded: true, offending: None }
}
