//! Finite-abstraction sizing, abstract-domain synthesis, and bounded checking.
//!
//! For a b-bounded program, verification over any sufficiently large finite
//! domain decides the infinite-domain question: the required cardinality is
//! `b + |C| + N` for sentence-atomic CTL and `2b + |C| + max{N, |vars(φ)|}`
//! for full FO-CTLK, where C collects the program's constants and N the
//! maximum number of distinct parameters in a joint action. This module
//! computes those sizes, synthesizes a matching abstract domain, builds the
//! induced model over it and checks formulas there.
//!
//! Independently of abstraction, `b_restrict` cuts a model down to states
//! whose active domain fits a bound; existential formulas (FO-ECTLK) that
//! hold on the restriction hold on the full model, which
//! `ectlk_bounded_check` exploits on an increasing bound schedule.

use alloc::format;
use alloc::vec::Vec;
use alloc::{vec, collections::BTreeSet};

use thiserror::Error;

use crate::acmas::{Acmas, AcmasBuilder, GroundAction, ModelError, StateId};
use crate::checker::{check, CheckBudget, CheckError, CheckRequest, CheckResult, Mode};
use crate::equivalence::{check_bounded, check_uniform};
use crate::logic::{classify, SpecFormula};
use crate::program::{induced_acmas, ACProgram, InduceOptions, ProgramError};
use crate::relational::Value;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AbstractionError {
    #[error(transparent)]
    Program(#[from] ProgramError),

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Check(#[from] CheckError),

    #[error("bound {bound} is below the initial footprint {required} (|adom(s0) ∪ C|)")]
    BoundTooSmall { bound: usize, required: usize },

    #[error("the sa regime requires a sentence-atomic CTL formula")]
    NotSentenceAtomic,

    #[error("bounded checking requires an FO-ECTLK formula")]
    NotExistential,

    #[error("abstract model is not {bound}-bounded (state {state}); the boundedness assertion on the concrete program does not hold")]
    NotBounded { bound: usize, state: StateId },
}

/// The cardinality regime for abstract-domain sizing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    /// Sentence-atomic CTL only: required = b + |C| + N.
    Sa,
    /// Full FO-CTLK via ⊕-bisimulation: required = 2b + |C| + max{N, |vars(φ)|}.
    Oplus,
}

/// Breakdown of a domain-size computation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SizingReport {
    pub bound: usize,
    /// |C|: constants of the program (initial values and rule constants).
    pub constants: usize,
    /// N: maximum number of distinct parameters in a joint action.
    pub n: usize,
    /// |vars(φ)|: distinct variables of the formula (counted in ⊕ regime).
    pub vars: usize,
    /// Minimum abstract-domain cardinality.
    pub required: usize,
    pub regime: Regime,
}

/// Compute the minimal abstract-domain cardinality for checking `phi` on a
/// `b`-bounded run of `p`.
pub fn size_domain(
    p: &ACProgram,
    phi: &SpecFormula,
    b: usize,
    regime: Regime,
) -> Result<SizingReport, AbstractionError> {
    // C already contains adom(s0), so the initial footprint is |C|.
    let constants = p.constants().len();
    if b < constants {
        return Err(AbstractionError::BoundTooSmall { bound: b, required: constants });
    }
    let cls = classify(phi);
    let n = p.n_acp();
    let vars = cls.min_vars;
    let required = match regime {
        Regime::Sa => {
            if !cls.is_sa_fo_ctl() {
                return Err(AbstractionError::NotSentenceAtomic);
            }
            b + constants + n
        }
        Regime::Oplus => 2 * b + constants + n.max(vars),
    };
    Ok(SizingReport { bound: b, constants, n, vars, required, regime })
}

/// Synthesize an abstract domain of the required cardinality: the program's
/// constants and initial values, topped up with fresh values `v1, v2, …`
/// drawn from a namespace disjoint from the existing ones.
pub fn synthesize_domain(report: &SizingReport, p: &ACProgram) -> BTreeSet<Value> {
    let mut domain = p.constants();
    domain.extend(p.initial_global().active_domain());
    let mut i = 1usize;
    while domain.len() < report.required {
        let fresh = Value::new(&format!("v{i}"));
        i += 1;
        domain.insert(fresh);
    }
    domain
}

/// The outcome of an abstract check: the sizing used, the synthesized
/// domain, sanity classifications of the built model, and the verdict (which
/// transfers to the concrete program when its runs are b-bounded).
#[derive(Clone, Debug)]
pub struct AbstractOutcome {
    pub sizing: SizingReport,
    pub domain: BTreeSet<Value>,
    pub states: usize,
    pub uniform: bool,
    pub result: CheckResult,
}

/// Size, synthesize, build and check. The caller asserts that the concrete
/// program is `b`-bounded; the abstract model is verified to be so (an error
/// here is evidence the assertion was wrong).
pub fn abstract_check(
    p: &ACProgram,
    phi: &SpecFormula,
    b: usize,
    regime: Regime,
    opts: &InduceOptions,
    budget: CheckBudget,
) -> Result<AbstractOutcome, AbstractionError> {
    let sizing = size_domain(p, phi, b, regime)?;
    let domain = synthesize_domain(&sizing, p);
    let model = induced_acmas(p, &domain, opts)?;
    let bounded = check_bounded(&model, b);
    if !bounded.bounded {
        return Err(AbstractionError::NotBounded {
            bound: b,
            state: bounded.offending.unwrap_or(0),
        });
    }
    let uniform = check_uniform(&model).uniform;
    let result = check(&CheckRequest {
        model: &model,
        formula: phi.clone(),
        mode: Mode::AllAssignments,
        budget,
    })?;
    Ok(AbstractOutcome {
        sizing,
        domain,
        states: model.state_count(),
        uniform,
        result,
    })
}

/// Restrict a model to the states whose active domain has at most `b`
/// values, keeping transitions with both endpoints inside and re-computing
/// the reachable closure from the initial state. States left without a
/// successor get a skip self-loop so the result stays serial.
pub fn b_restrict(m: &Acmas, b: usize) -> Result<Acmas, AbstractionError> {
    let mut footprint = m.state(m.initial()).active_domain();
    footprint.extend(m.constants().iter().cloned());
    if b < footprint.len() {
        return Err(AbstractionError::BoundTooSmall { bound: b, required: footprint.len() });
    }

    let kept: Vec<bool> = m
        .state_ids()
        .map(|s| m.state(s).active_domain().len() <= b)
        .collect();
    let mut builder = AcmasBuilder::new(
        m.agents().to_vec(),
        m.domain().clone(),
        m.constants().clone(),
        m.state(m.initial()).clone(),
    )?;
    // Intern every kept state up front so ids can be mapped, then copy the
    // surviving transitions; finish() prunes whatever became unreachable.
    let mut map: Vec<Option<StateId>> = vec![None; kept.len()];
    for s in m.state_ids() {
        if kept[s] {
            map[s] = Some(builder.intern(m.state(s).clone())?);
        }
    }
    let skip = GroundAction::skip(m.agents().len());
    for s in m.state_ids() {
        let Some(from) = map[s] else { continue };
        let mut any = false;
        for (action, t) in m.transitions(s)? {
            if let Some(to) = map[*t] {
                builder.add_transition(from, action.clone(), to);
                any = true;
            }
        }
        if !any {
            builder.add_transition(from, skip.clone(), from);
        }
    }
    Ok(builder.finish(false)?)
}

/// The result of an incremental bounded check.
#[derive(Clone, Debug)]
pub enum BoundedVerdict {
    /// φ holds on the b-restriction, hence on the full model.
    True { bound: usize, result: CheckResult },
    /// The schedule was exhausted without a witness; nothing follows.
    Unknown,
}

/// Check an FO-ECTLK formula against b-restrictions for each bound in the
/// (increasing) schedule, returning at the first success. A true verdict is
/// sound for the unrestricted model; exhaustion is inconclusive.
pub fn ectlk_bounded_check<F>(
    mut build: F,
    phi: &SpecFormula,
    schedule: &[usize],
    budget: CheckBudget,
) -> Result<BoundedVerdict, AbstractionError>
where
    F: FnMut(usize) -> Result<Acmas, AbstractionError>,
{
    if !classify(phi).is_fo_ectlk() {
        return Err(AbstractionError::NotExistential);
    }
    for &b in schedule {
        let model = build(b)?;
        let result = check(&CheckRequest {
            model: &model,
            formula: phi.clone(),
            mode: Mode::AllAssignments,
            budget,
        })?;
        if result.verdict {
            return Ok(BoundedVerdict::True { bound: b, result });
        }
    }
    Ok(BoundedVerdict::Unknown)
}
