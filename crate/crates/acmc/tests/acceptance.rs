//! Acceptance suite: one test per criterion, each printing a single
//! PASS/FAIL line (run with `--nocapture` to see them). The randomized
//! criteria use fixed seeds so the suite is deterministic.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, resume_unwind, UnwindSafe};
use std::process::Command;
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use acmc_core::abstraction::{b_restrict, size_domain, Regime};
use acmc_core::acmas::{
    parse_acm, Acmas, AcmasBuilder, Agent, ExplorationBudget, GlobalState, GroundAction,
    ModelError, StateId,
};
use acmc_core::checker::check_closed;
use acmc_core::equivalence::{check_bisimulation, check_bounded, check_uniform};
use acmc_core::logic::{classify, SpecFormula};
use acmc_core::program::{
    induced_acmas, ACProgram, ActionRule, AgentProgram, DomainDecl, InduceOptions, ProgramError,
};
use acmc_core::relational::{find_isomorphism, FOFormula, Instance, Schema, Term, Value};

fn criterion(n: usize, title: &str, body: impl FnOnce() + UnwindSafe) {
    match catch_unwind(body) {
        Ok(()) => println!("ACCEPTANCE {n} ({title}): PASS"),
        Err(e) => {
            println!("ACCEPTANCE {n} ({title}): FAIL");
            resume_unwind(e);
        }
    }
}

fn fixture(name: &str) -> String {
    format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn v(s: &str) -> Value {
    Value::new(s)
}

// ---------------------------------------------------------------------------
// Criterion 1: order-to-cash regression, end to end through the CLI.

#[test]
fn criterion_1_order_to_cash_regression() {
    criterion(1, "order-to-cash regression", || {
        let out = Command::new(env!("CARGO_BIN_EXE_acmc"))
            .args([
                "check",
                &fixture("otc.acp"),
                &fixture("otc.spec"),
                "--max-states",
                "1000000",
                "--format",
                "json",
            ])
            .output()
            .expect("run acmc");
        // Exit 1: at least one formula refuted (phi_fulfil).
        assert_eq!(
            out.status.code(),
            Some(1),
            "stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let report: serde_json::Value = serde_json::from_slice(&out.stdout).expect("json report");
        let mut verdicts = BTreeMap::new();
        for f in report["formulas"].as_array().expect("formulas array") {
            verdicts.insert(
                f["name"].as_str().unwrap().to_owned(),
                f["verdict"].as_str().unwrap().to_owned(),
            );
        }
        assert_eq!(verdicts["phi_match"], "true");
        assert_eq!(verdicts["phi_budget"], "true");
        assert_eq!(verdicts["phi_cost"], "true");
        assert_eq!(verdicts["phi_fulfil"], "false");
    });
}

// ---------------------------------------------------------------------------
// Criterion 2: the mod-2 counter refutes AG ∀x (P(x) → AX AG ¬P(x)), and its
// embedding into a larger domain is not uniform.

// The mod-2 counter, explicitly: P flips between the literal values 1 and 2
// (so the transition relation is pinned to concrete data, with no constants).
const COUNTER_ACM: &str = "\
OPTIONS { noskip; }
DOMAIN { 1; 2; }
AGENTS {
  env { }
  counter { P(1); }
}
INIT {
  counter { P(1); }
}
ACTIONS {
  inc : (forall x,y. P(x) and P'(y) -> ((x = 1 -> y = 2) and (x = 2 -> y = 1)))
        and (exists x. P'(x))
        and (forall x,y. P(x) and P(y) -> x = y)
        and (forall x,y. P'(x) and P'(y) -> x = y);
}
";

#[test]
fn criterion_2_counter_refutation_and_nonuniformity() {
    criterion(2, "counter refutation and non-uniformity", || {
        let m = parse_acm(COUNTER_ACM)
            .unwrap()
            .build(&ExplorationBudget::default())
            .unwrap();
        // AG ∀x (P(x) → AX AG ¬P(x)): "once seen, never again" — refuted
        // because the counter revisits both values forever.
        let phi = SpecFormula::ag(SpecFormula::forall(
            "x",
            SpecFormula::implies(
                SpecFormula::atom("P", vec![Term::var("x")]),
                SpecFormula::ax(SpecFormula::ag(SpecFormula::not(SpecFormula::atom(
                    "P",
                    vec![Term::var("x")],
                )))),
            ),
        ));
        assert!(!check_closed(&m, &phi).unwrap());

        // The same system embedded into {0,1,2} is not uniform: renaming an
        // active value onto the spare 0 yields a transition with no match,
        // because the relation is pinned to the literal values 1 and 2.
        let embedded = COUNTER_ACM.replace("DOMAIN { 1; 2; }", "DOMAIN { 0; 1; 2; }");
        let m3 = parse_acm(&embedded)
            .unwrap()
            .build(&ExplorationBudget::default())
            .unwrap();
        assert!(!check_uniform(&m3).uniform);
    });
}

// ---------------------------------------------------------------------------
// Criterion 3: isomorphism witness suite.

fn iso_schema() -> Arc<Schema> {
    Arc::new(Schema::from_relations([("P1", 2), ("P2", 1)]).unwrap())
}

fn iso_inst(p1: &[(&str, &str)], p2: &[&str]) -> Instance {
    let mut i = Instance::empty(iso_schema());
    for (a, b) in p1 {
        i.insert("P1", vec![v(a), v(b)]).unwrap();
    }
    for a in p2 {
        i.insert("P2", vec![v(a)]).unwrap();
    }
    i
}

#[test]
fn criterion_3_isomorphism_suite() {
    criterion(3, "isomorphism witness suite", || {
        let l = iso_inst(&[("a", "b"), ("b", "d")], &["a"]);
        let l2 = iso_inst(&[("c", "b"), ("b", "e")], &["c"]);
        let l3 = iso_inst(&[("f", "d"), ("d", "e")], &["f"]);
        let constants: BTreeSet<Value> = [v("b")].into();

        let w = find_isomorphism(&[l.clone()], &[l2.clone()], &constants).expect("l ≃ l'");
        assert_eq!(w.apply(&v("a")), Some(&v("c")));
        assert_eq!(w.apply(&v("b")), Some(&v("b")));
        assert_eq!(w.apply(&v("d")), Some(&v("e")));
        assert!(w.verify(&[l.clone()], &[l2], &constants));

        // l vs l'': same shape but the constant b would have to move.
        assert!(find_isomorphism(&[l], &[l3], &constants).is_none());
    });
}

// ---------------------------------------------------------------------------
// Shared machinery for the randomized criteria: a generator of small bounded
// programs in the constructive rule language, and random formula generators.

fn eq_tuple(vars: &[String], terms: &[Term]) -> FOFormula {
    FOFormula::conj(
        vars.iter()
            .zip(terms)
            .map(|(q, t)| FOFormula::Eq(Term::var(q), t.clone())),
    )
}

fn close(vars: &[String], body: FOFormula) -> FOFormula {
    vars.iter().rev().fold(body, |f, q| FOFormula::forall(q, f))
}

/// R' = R ∪ {t}, stated with explicit preservation and exclusion clauses.
fn insert_exact(rel: &str, arity: usize, terms: &[Term]) -> FOFormula {
    let qs: Vec<String> = (0..arity).map(|i| format!("q{i}")).collect();
    let qts: Vec<Term> = qs.iter().map(|q| Term::var(q)).collect();
    let rp = format!("{rel}'");
    FOFormula::conj([
        FOFormula::atom(&rp, terms.to_vec()),
        close(
            &qs,
            FOFormula::implies(
                FOFormula::atom(rel, qts.clone()),
                FOFormula::atom(&rp, qts.clone()),
            ),
        ),
        close(
            &qs,
            FOFormula::implies(
                FOFormula::atom(&rp, qts.clone()),
                FOFormula::or(FOFormula::atom(rel, qts.clone()), eq_tuple(&qs, terms)),
            ),
        ),
    ])
}

/// R' = R \ {t}.
fn delete_exact(rel: &str, arity: usize, terms: &[Term]) -> FOFormula {
    let qs: Vec<String> = (0..arity).map(|i| format!("q{i}")).collect();
    let qts: Vec<Term> = qs.iter().map(|q| Term::var(q)).collect();
    let rp = format!("{rel}'");
    FOFormula::conj([
        FOFormula::not(FOFormula::atom(&rp, terms.to_vec())),
        close(
            &qs,
            FOFormula::implies(
                FOFormula::atom(rel, qts.clone()),
                FOFormula::implies(
                    FOFormula::not(eq_tuple(&qs, terms)),
                    FOFormula::atom(&rp, qts.clone()),
                ),
            ),
        ),
        close(
            &qs,
            FOFormula::implies(
                FOFormula::atom(&rp, qts.clone()),
                FOFormula::atom(rel, qts.clone()),
            ),
        ),
    ])
}

/// R' = (R \ {old}) ∪ {new}.
fn flip_exact(rel: &str, arity: usize, old: &[Term], new: &[Term]) -> FOFormula {
    let qs: Vec<String> = (0..arity).map(|i| format!("q{i}")).collect();
    let qts: Vec<Term> = qs.iter().map(|q| Term::var(q)).collect();
    let rp = format!("{rel}'");
    FOFormula::conj([
        FOFormula::atom(&rp, new.to_vec()),
        FOFormula::not(FOFormula::atom(&rp, old.to_vec())),
        close(
            &qs,
            FOFormula::implies(
                FOFormula::atom(rel, qts.clone()),
                FOFormula::implies(
                    FOFormula::not(eq_tuple(&qs, old)),
                    FOFormula::atom(&rp, qts.clone()),
                ),
            ),
        ),
        close(
            &qs,
            FOFormula::implies(
                FOFormula::atom(&rp, qts.clone()),
                FOFormula::or(FOFormula::atom(rel, qts.clone()), eq_tuple(&qs, new)),
            ),
        ),
    ])
}

/// ∀x̄ ¬R(x̄): the relation is empty (usable as a precondition).
fn empty_pre(rel: &str, arity: usize) -> FOFormula {
    let qs: Vec<String> = (0..arity).map(|i| format!("q{i}")).collect();
    let qts: Vec<Term> = qs.iter().map(|q| Term::var(q)).collect();
    close(&qs, FOFormula::not(FOFormula::atom(rel, qts)))
}

/// A random small program: 1-2 worker agents plus the environment, each
/// owning a capacity-one binary relation with a take/step/drop lifecycle and
/// optionally a unary status flag. Every postcondition is in the exact
/// constructive language, so the induced model is uniform and stays within a
/// small active-domain bound (verified by the callers).
fn gen_program(rng: &mut StdRng) -> ACProgram {
    let c1 = Term::constant("c1");
    let c2 = Term::constant("c2");
    let empty_schema = Arc::new(Schema::new());
    let mut agents = vec![AgentProgram {
        name: "env".into(),
        schema: empty_schema.clone(),
        owned: BTreeSet::new(),
        init: Instance::empty(empty_schema),
        rules: Vec::new(),
    }];

    let n_workers = rng.gen_range(1..=2);
    for k in 1..=n_workers {
        let w = format!("W{k}");
        let s = format!("S{k}");
        let with_status = n_workers == 1 && rng.gen_bool(0.5);
        let mut schema = Schema::new();
        schema.declare(&w, 2).unwrap();
        if with_status {
            schema.declare(&s, 1).unwrap();
        }
        let schema = Arc::new(schema);
        let owned: BTreeSet<String> = schema.relations().map(|(r, _)| r.to_owned()).collect();

        let mut init = Instance::empty(schema.clone());
        if with_status {
            init.insert(&s, vec![v("c1")]).unwrap();
        }

        let mut rules = Vec::new();
        rules.push(
            ActionRule::new(
                "take",
                vec!["x".into()],
                empty_pre(&w, 2),
                insert_exact(&w, 2, &[Term::var("x"), c1.clone()]),
            )
            .unwrap(),
        );
        if rng.gen_bool(0.8) {
            rules.push(
                ActionRule::new(
                    "step",
                    vec!["x".into()],
                    FOFormula::atom(&w, vec![Term::var("x"), c1.clone()]),
                    flip_exact(
                        &w,
                        2,
                        &[Term::var("x"), c1.clone()],
                        &[Term::var("x"), c2.clone()],
                    ),
                )
                .unwrap(),
            );
        }
        if rng.gen_bool(0.7) {
            let done = if rng.gen_bool(0.5) { &c1 } else { &c2 };
            rules.push(
                ActionRule::new(
                    "drop",
                    vec!["x".into()],
                    FOFormula::atom(&w, vec![Term::var("x"), done.clone()]),
                    delete_exact(&w, 2, &[Term::var("x"), done.clone()]),
                )
                .unwrap(),
            );
        }
        if with_status {
            rules.push(
                ActionRule::new(
                    "raise",
                    Vec::new(),
                    FOFormula::atom(&s, vec![c1.clone()]),
                    flip_exact(&s, 1, &[c1.clone()], &[c2.clone()]),
                )
                .unwrap(),
            );
            if rng.gen_bool(0.5) {
                rules.push(
                    ActionRule::new(
                        "lower",
                        Vec::new(),
                        FOFormula::atom(&s, vec![c2.clone()]),
                        flip_exact(&s, 1, &[c2.clone()], &[c1.clone()]),
                    )
                    .unwrap(),
                );
            }
        }

        agents.push(AgentProgram {
            name: format!("a{k}"),
            schema,
            owned,
            init,
            rules,
        });
    }

    let constants: BTreeSet<Value> = [v("c1"), v("c2")].into();
    ACProgram::new(DomainDecl::Symbolic(constants), None, agents).unwrap()
}

/// `C_ACP` plus `extra` synthetic values `p1, p2, …` (a disjoint namespace
/// from the generator's constants).
fn domain_for(p: &ACProgram, extra: usize, prefix: &str) -> BTreeSet<Value> {
    let mut d = p.constants();
    d.extend(p.initial_global().active_domain());
    for i in 1..=extra {
        d.insert(v(&format!("{prefix}{i}")));
    }
    d
}

fn relations_of(p: &ACProgram) -> Vec<(String, usize)> {
    p.global_schema()
        .relations()
        .map(|(r, a)| (r.to_owned(), a))
        .collect()
}

fn max_adom(m: &Acmas) -> usize {
    m.state_ids()
        .map(|s| m.state(s).active_domain().len())
        .max()
        .unwrap_or(0)
}

/// A random term over the variables in scope and the given constants.
fn gen_term(rng: &mut StdRng, scope: &[String], consts: &[Value]) -> Term {
    if !scope.is_empty() && rng.gen_bool(0.6) {
        Term::var(&scope[rng.gen_range(0..scope.len())])
    } else {
        Term::Const(consts[rng.gen_range(0..consts.len())].clone())
    }
}

fn gen_fo_atom(
    rng: &mut StdRng,
    rels: &[(String, usize)],
    scope: &[String],
    consts: &[Value],
) -> SpecFormula {
    if rels.is_empty() || rng.gen_bool(0.2) {
        return SpecFormula::Eq(gen_term(rng, scope, consts), gen_term(rng, scope, consts));
    }
    let (r, arity) = &rels[rng.gen_range(0..rels.len())];
    let terms = (0..*arity).map(|_| gen_term(rng, scope, consts)).collect();
    SpecFormula::atom(r, terms)
}

/// A random closed FO-CTLK formula with at most two variables.
fn gen_ctlk(
    rng: &mut StdRng,
    rels: &[(String, usize)],
    consts: &[Value],
    n_agents: usize,
    scope: &mut Vec<String>,
    depth: usize,
) -> SpecFormula {
    if depth == 0 {
        return gen_fo_atom(rng, rels, scope, consts);
    }
    match rng.gen_range(0..12) {
        0 => SpecFormula::not(gen_ctlk(rng, rels, consts, n_agents, scope, depth - 1)),
        1 => SpecFormula::ax(gen_ctlk(rng, rels, consts, n_agents, scope, depth - 1)),
        2 => SpecFormula::ag(gen_ctlk(rng, rels, consts, n_agents, scope, depth - 1)),
        3 => SpecFormula::ef(gen_ctlk(rng, rels, consts, n_agents, scope, depth - 1)),
        4 => SpecFormula::au(
            gen_ctlk(rng, rels, consts, n_agents, scope, depth - 1),
            gen_ctlk(rng, rels, consts, n_agents, scope, depth - 1),
        ),
        5 => SpecFormula::eu(
            gen_ctlk(rng, rels, consts, n_agents, scope, depth - 1),
            gen_ctlk(rng, rels, consts, n_agents, scope, depth - 1),
        ),
        6 => SpecFormula::know(
            rng.gen_range(1..=n_agents),
            gen_ctlk(rng, rels, consts, n_agents, scope, depth - 1),
        ),
        7 => SpecFormula::common(gen_ctlk(rng, rels, consts, n_agents, scope, depth - 1)),
        8 => SpecFormula::and(
            gen_ctlk(rng, rels, consts, n_agents, scope, depth - 1),
            gen_ctlk(rng, rels, consts, n_agents, scope, depth - 1),
        ),
        9 => SpecFormula::implies(
            gen_ctlk(rng, rels, consts, n_agents, scope, depth - 1),
            gen_ctlk(rng, rels, consts, n_agents, scope, depth - 1),
        ),
        _ if scope.len() < 2 => {
            let var = format!("z{}", scope.len() + 1);
            scope.push(var.clone());
            let body = gen_ctlk(rng, rels, consts, n_agents, scope, depth - 1);
            scope.pop();
            if rng.gen_bool(0.5) {
                SpecFormula::forall(&var, body)
            } else {
                SpecFormula::exists(&var, body)
            }
        }
        _ => gen_fo_atom(rng, rels, scope, consts),
    }
}

/// A random closed pure-FO sentence (quantifiers, connectives, atoms).
fn gen_fo_sentence(
    rng: &mut StdRng,
    rels: &[(String, usize)],
    consts: &[Value],
    scope: &mut Vec<String>,
    depth: usize,
) -> SpecFormula {
    if depth == 0 {
        return gen_fo_atom(rng, rels, scope, consts);
    }
    match rng.gen_range(0..6) {
        0 => SpecFormula::not(gen_fo_sentence(rng, rels, consts, scope, depth - 1)),
        1 => SpecFormula::and(
            gen_fo_sentence(rng, rels, consts, scope, depth - 1),
            gen_fo_sentence(rng, rels, consts, scope, depth - 1),
        ),
        2 => SpecFormula::implies(
            gen_fo_sentence(rng, rels, consts, scope, depth - 1),
            gen_fo_sentence(rng, rels, consts, scope, depth - 1),
        ),
        3 | 4 if scope.len() < 2 => {
            let var = format!("z{}", scope.len() + 1);
            scope.push(var.clone());
            let body = gen_fo_sentence(rng, rels, consts, scope, depth - 1);
            scope.pop();
            if rng.gen_bool(0.5) {
                SpecFormula::forall(&var, body)
            } else {
                SpecFormula::exists(&var, body)
            }
        }
        _ => gen_fo_atom(rng, rels, scope, consts),
    }
}

/// A random SA-FO-CTL sentence: CTL skeleton over closed FO sentences.
fn gen_sa(rng: &mut StdRng, rels: &[(String, usize)], consts: &[Value], depth: usize) -> SpecFormula {
    if depth == 0 {
        return gen_fo_sentence(rng, rels, consts, &mut Vec::new(), 2);
    }
    match rng.gen_range(0..7) {
        0 => SpecFormula::not(gen_sa(rng, rels, consts, depth - 1)),
        1 => SpecFormula::ax(gen_sa(rng, rels, consts, depth - 1)),
        2 => SpecFormula::ag(gen_sa(rng, rels, consts, depth - 1)),
        3 => SpecFormula::au(
            gen_sa(rng, rels, consts, depth - 1),
            gen_sa(rng, rels, consts, depth - 1),
        ),
        4 => SpecFormula::eu(
            gen_sa(rng, rels, consts, depth - 1),
            gen_sa(rng, rels, consts, depth - 1),
        ),
        5 => SpecFormula::implies(
            gen_sa(rng, rels, consts, depth - 1),
            gen_sa(rng, rels, consts, depth - 1),
        ),
        _ => gen_fo_sentence(rng, rels, consts, &mut Vec::new(), 2),
    }
}

/// A random FO-ECTLK formula: existential skeleton over closed FO sentences.
fn gen_ectlk(
    rng: &mut StdRng,
    rels: &[(String, usize)],
    consts: &[Value],
    n_agents: usize,
    depth: usize,
) -> SpecFormula {
    if depth == 0 {
        return gen_fo_sentence(rng, rels, consts, &mut Vec::new(), 2);
    }
    match rng.gen_range(0..7) {
        0 => SpecFormula::ex(gen_ectlk(rng, rels, consts, n_agents, depth - 1)),
        1 => SpecFormula::ef(gen_ectlk(rng, rels, consts, n_agents, depth - 1)),
        2 => SpecFormula::eu(
            gen_ectlk(rng, rels, consts, n_agents, depth - 1),
            gen_ectlk(rng, rels, consts, n_agents, depth - 1),
        ),
        3 => SpecFormula::know_bar(
            rng.gen_range(1..=n_agents),
            gen_ectlk(rng, rels, consts, n_agents, depth - 1),
        ),
        4 => SpecFormula::common_bar(gen_ectlk(rng, rels, consts, n_agents, depth - 1)),
        5 => SpecFormula::and(
            gen_ectlk(rng, rels, consts, n_agents, depth - 1),
            gen_ectlk(rng, rels, consts, n_agents, depth - 1),
        ),
        _ => SpecFormula::or(
            gen_ectlk(rng, rels, consts, n_agents, depth - 1),
            gen_ectlk(rng, rels, consts, n_agents, depth - 1),
        ),
    }
}

// ---------------------------------------------------------------------------
// Criterion 4: verdicts over a larger finite domain and over the synthesized
// abstract domain agree.

#[test]
fn criterion_4_abstraction_soundness() {
    criterion(4, "abstraction verdict agreement", || {
        let mut rng = StdRng::seed_from_u64(0x5eed_0004);
        let opts = InduceOptions::default();
        let mut accepted = 0usize;
        let mut checked = 0usize;
        while accepted < 50 {
            let p = gen_program(&mut rng);
            let rels = relations_of(&p);
            let n_agents = p.agents.len() - 1;
            let consts: Vec<Value> = p.constants().into_iter().collect();

            let formulas: Vec<SpecFormula> = (0..10)
                .map(|_| gen_ctlk(&mut rng, &rels, &consts, n_agents, &mut Vec::new(), 3))
                .collect();

            // Size the abstract domain for the worst formula at the bound
            // the larger instantiation actually exhibits.
            let probe = induced_acmas(&p, &domain_for(&p, 6, "p"), &opts).unwrap();
            let b = max_adom(&probe).max(p.constants().len());
            if b > 3 {
                continue; // criterion asks for b ≤ 3
            }
            let required = formulas
                .iter()
                .map(|f| size_domain(&p, f, b, Regime::Oplus).unwrap().required)
                .max()
                .unwrap();

            let base = p.constants().len();
            let u2 = domain_for(&p, required.saturating_sub(base), "p");
            let u1 = domain_for(&p, required.saturating_sub(base) + 3, "p");
            let m2 = induced_acmas(&p, &u2, &opts).unwrap();
            let m1 = induced_acmas(&p, &u1, &opts).unwrap();
            assert!(check_bounded(&m1, b).bounded);
            assert!(check_bounded(&m2, b).bounded);

            for f in &formulas {
                let v1 = check_closed(&m1, f).unwrap();
                let v2 = check_closed(&m2, f).unwrap();
                assert_eq!(v1, v2, "disagreement on program {accepted}: {f}");
                checked += 1;
            }
            accepted += 1;
        }
        assert!(checked >= 500);
    });
}

// ---------------------------------------------------------------------------
// Criterion 5: plain-bisimilar renamed models satisfy the same SA-FO-CTL
// sentences.

#[test]
fn criterion_5_sa_preservation() {
    criterion(5, "SA-FO-CTL preservation under renaming", || {
        let mut rng = StdRng::seed_from_u64(0x5eed_0005);
        let opts = InduceOptions::default();
        for pair in 0..50 {
            let p = gen_program(&mut rng);
            let rels = relations_of(&p);
            let consts: Vec<Value> = p.constants().into_iter().collect();

            // Same program instantiated over two disjointly-named value
            // pools of equal size: the models are copies up to renaming.
            let k = rng.gen_range(2..=4);
            let ma = induced_acmas(&p, &domain_for(&p, k, "x"), &opts).unwrap();
            let mb = induced_acmas(&p, &domain_for(&p, k, "y"), &opts).unwrap();
            assert!(
                check_bisimulation(&ma, &mb, false).is_some(),
                "renamed pair {pair} not bisimilar"
            );

            for _ in 0..5 {
                let f = gen_sa(&mut rng, &rels, &consts, 3);
                assert!(classify(&f).is_sa_fo_ctl(), "generator escaped SA: {f}");
                assert_eq!(
                    check_closed(&ma, &f).unwrap(),
                    check_closed(&mb, &f).unwrap(),
                    "pair {pair} disagrees on {f}"
                );
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Criterion 6: FO-ECTLK truth on a b-restriction implies truth on the full
// model, and universal formulas are not preserved.

#[test]
fn criterion_6_ectlk_one_sided_soundness() {
    criterion(6, "FO-ECTLK one-sided soundness", || {
        let mut rng = StdRng::seed_from_u64(0x5eed_0006);
        let opts = InduceOptions::default();
        let mut restrictions = 0usize;
        while restrictions < 50 {
            let p = gen_program(&mut rng);
            let rels = relations_of(&p);
            let n_agents = p.agents.len() - 1;
            let consts: Vec<Value> = p.constants().into_iter().collect();

            let m = induced_acmas(&p, &domain_for(&p, rng.gen_range(2..=4), "u"), &opts).unwrap();
            let mut footprint = m.state(m.initial()).active_domain();
            footprint.extend(m.constants().iter().cloned());
            let hi = max_adom(&m);
            if footprint.len() >= hi {
                continue; // nothing to cut off
            }
            let b = rng.gen_range(footprint.len()..hi);
            let r = b_restrict(&m, b).unwrap();
            assert!(r.state_count() <= m.state_count());

            for _ in 0..6 {
                let f = gen_ectlk(&mut rng, &rels, &consts, n_agents, 3);
                assert!(classify(&f).is_fo_ectlk(), "generator escaped ECTLK: {f}");
                if check_closed(&r, &f).unwrap() {
                    assert!(
                        check_closed(&m, &f).unwrap(),
                        "restriction {restrictions} satisfied {f} but the full model refutes it"
                    );
                }
            }
            restrictions += 1;
        }

        // The §-style negative witness: a growth chain whose b-restriction
        // satisfies "never more than b distinct values" while the full model
        // keeps growing past it. Checked at two bounds.
        let grow = grow_model();
        for b in [2usize, 3] {
            let phi = at_most_distinct(b);
            let r = b_restrict(&grow, b).unwrap();
            assert!(check_closed(&r, &phi).unwrap());
            assert!(!check_closed(&grow, &phi).unwrap());
        }
    });
}

/// A one-agent chain whose unary relation T gains one fresh value per step:
/// adom grows 1, 2, …, 5 and the last state loops.
fn grow_model() -> Acmas {
    let schema = Arc::new(Schema::from_relations([("T", 1)]).unwrap());
    let env_schema = Arc::new(Schema::new());
    let agents = vec![
        Agent::new("env", env_schema.clone()),
        Agent::new("grower", schema.clone()),
    ];
    let domain: BTreeSet<Value> = (1..=5).map(|i| v(&format!("u{i}"))).collect();

    let state = |k: usize| {
        let mut t = Instance::empty(schema.clone());
        for i in 1..=k {
            t.insert("T", vec![v(&format!("u{i}"))]).unwrap();
        }
        GlobalState::new(vec![Instance::empty(env_schema.clone()), t])
    };

    let mut builder =
        AcmasBuilder::new(agents, domain, [v("u1")].into(), state(1)).unwrap();
    let grow = GroundAction::joint_named("grow", 2);
    for k in 1..5 {
        let from = builder.intern(state(k)).unwrap();
        let to = builder.intern(state(k + 1)).unwrap();
        builder.add_transition(from, grow.clone(), to);
    }
    let last = builder.intern(state(5)).unwrap();
    builder.add_transition(last, GroundAction::skip(2), last);
    builder.finish(false).unwrap()
}

/// AG ∀x1…x_{b+1}: some two of the b+1 values of T coincide.
fn at_most_distinct(b: usize) -> SpecFormula {
    let vars: Vec<String> = (1..=b + 1).map(|i| format!("x{i}")).collect();
    let mut some_equal = SpecFormula::not(SpecFormula::tautology());
    for i in 0..vars.len() {
        for j in i + 1..vars.len() {
            some_equal = SpecFormula::or(
                some_equal,
                SpecFormula::Eq(Term::var(&vars[i]), Term::var(&vars[j])),
            );
        }
    }
    let all_in_t = vars
        .iter()
        .map(|x| SpecFormula::atom("T", vec![Term::var(x)]))
        .reduce(SpecFormula::and)
        .unwrap();
    let body = SpecFormula::implies(all_in_t, some_equal);
    SpecFormula::ag(vars.iter().rev().fold(body, |f, x| SpecFormula::forall(x, f)))
}

// ---------------------------------------------------------------------------
// Criterion 7: fixpoint labeling agrees with a brute-force oracle on small
// random models for a 30-formula battery.

fn oracle_schema() -> (Arc<Schema>, Arc<Schema>, Arc<Schema>) {
    (
        Arc::new(Schema::new()),
        Arc::new(Schema::from_relations([("P", 1)]).unwrap()),
        Arc::new(Schema::from_relations([("Q", 2)]).unwrap()),
    )
}

/// A random serial model: ≤ 6 states over domain {a, b, c}, two non-env
/// agents holding P/1 and Q/2.
fn gen_small_model(rng: &mut StdRng) -> Acmas {
    let (env_s, p_s, q_s) = oracle_schema();
    let agents = vec![
        Agent::new("env", env_s.clone()),
        Agent::new("a1", p_s.clone()),
        Agent::new("a2", q_s.clone()),
    ];
    let dom = [v("a"), v("b"), v("c")];
    let domain: BTreeSet<Value> = dom.iter().cloned().collect();

    let mut states = Vec::new();
    let n = rng.gen_range(2..=6);
    for _ in 0..n {
        let mut p = Instance::empty(p_s.clone());
        for _ in 0..rng.gen_range(0..=2) {
            p.insert("P", vec![dom[rng.gen_range(0..3)].clone()]).unwrap();
        }
        let mut q = Instance::empty(q_s.clone());
        for _ in 0..rng.gen_range(0..=2) {
            q.insert(
                "Q",
                vec![dom[rng.gen_range(0..3)].clone(), dom[rng.gen_range(0..3)].clone()],
            )
            .unwrap();
        }
        states.push(GlobalState::new(vec![Instance::empty(env_s.clone()), p, q]));
    }

    let mut builder =
        AcmasBuilder::new(agents, domain, [v("a")].into(), states[0].clone()).unwrap();
    let ids: Vec<StateId> = states
        .iter()
        .map(|s| builder.intern(s.clone()).unwrap())
        .collect();
    let act = GroundAction::joint_named("t", 3);
    let distinct: BTreeSet<StateId> = ids.iter().copied().collect();
    for &from in &distinct {
        for _ in 0..rng.gen_range(1..=2) {
            let to = ids[rng.gen_range(0..ids.len())];
            builder.add_transition(from, act.clone(), to);
        }
    }
    builder.finish(false).unwrap()
}

fn term_value(t: &Term, sigma: &BTreeMap<String, Value>) -> Value {
    match t {
        Term::Const(c) => c.clone(),
        Term::Var(x) => sigma.get(x).expect("closed formula").clone(),
    }
}

/// Path-enumeration / clause-unfolding semantics, written independently of
/// the fixpoint checker: AU/EU unfold along paths with cycle detection, and
/// the epistemic relations are recomputed from raw local-state equality.
fn oracle(m: &Acmas, s: StateId, sigma: &BTreeMap<String, Value>, phi: &SpecFormula) -> bool {
    match phi {
        SpecFormula::Eq(a, b) => term_value(a, sigma) == term_value(b, sigma),
        SpecFormula::Atom(r, terms) => {
            let tuple: Vec<Value> = terms.iter().map(|t| term_value(t, sigma)).collect();
            m.global_instance(s).contains(r, &tuple)
        }
        SpecFormula::Not(f) => !oracle(m, s, sigma, f),
        SpecFormula::Implies(a, b) => !oracle(m, s, sigma, a) || oracle(m, s, sigma, b),
        SpecFormula::Forall(x, f) => m.state(s).active_domain().iter().all(|u| {
            let mut ext = sigma.clone();
            ext.insert(x.clone(), u.clone());
            oracle(m, s, &ext, f)
        }),
        SpecFormula::AX(f) => m
            .successors(s)
            .unwrap()
            .iter()
            .all(|&t| oracle(m, t, sigma, f)),
        SpecFormula::AU(a, b) => oracle_au(m, s, sigma, a, b, &mut BTreeSet::new()),
        SpecFormula::EU(a, b) => oracle_eu(m, s, sigma, a, b, &mut BTreeSet::new()),
        SpecFormula::Know(i, f) => m
            .state_ids()
            .filter(|&t| m.state(t).locals[*i] == m.state(s).locals[*i])
            .all(|t| oracle(m, t, sigma, f)),
        SpecFormula::Common(f) => {
            let mut seen: BTreeSet<StateId> = [s].into();
            let mut frontier = vec![s];
            while let Some(cur) = frontier.pop() {
                for i in 1..m.agents().len() {
                    for t in m.state_ids() {
                        if m.state(t).locals[i] == m.state(cur).locals[i] && seen.insert(t) {
                            frontier.push(t);
                        }
                    }
                }
            }
            seen.into_iter().all(|t| oracle(m, t, sigma, f))
        }
    }
}

/// A [a U b]: b now, or a now and every successor continues; a cycle of
/// a-states without b is a refuting run.
fn oracle_au(
    m: &Acmas,
    s: StateId,
    sigma: &BTreeMap<String, Value>,
    a: &SpecFormula,
    b: &SpecFormula,
    path: &mut BTreeSet<StateId>,
) -> bool {
    if oracle(m, s, sigma, b) {
        return true;
    }
    if !oracle(m, s, sigma, a) || path.contains(&s) {
        return false;
    }
    path.insert(s);
    let ok = m
        .successors(s)
        .unwrap()
        .iter()
        .all(|&t| oracle_au(m, t, sigma, a, b, path));
    path.remove(&s);
    ok
}

/// E [a U b]: a simple a-path to a b-state.
fn oracle_eu(
    m: &Acmas,
    s: StateId,
    sigma: &BTreeMap<String, Value>,
    a: &SpecFormula,
    b: &SpecFormula,
    visited: &mut BTreeSet<StateId>,
) -> bool {
    if oracle(m, s, sigma, b) {
        return true;
    }
    if !oracle(m, s, sigma, a) || !visited.insert(s) {
        return false;
    }
    m.successors(s)
        .unwrap()
        .iter()
        .any(|&t| oracle_eu(m, t, sigma, a, b, visited))
}

/// The fixed battery: 30 closed formulas covering AX, AU, EU, K, C, ∀ and =.
fn battery() -> Vec<SpecFormula> {
    use SpecFormula as F;
    let p = |t: Term| F::atom("P", vec![t]);
    let q = |t1: Term, t2: Term| F::atom("Q", vec![t1, t2]);
    let a = || Term::constant("a");
    let b = || Term::constant("b");
    let x = || Term::var("x");
    let y = || Term::var("y");
    let some_p = || F::exists("x", p(x()));
    let some_q = || F::exists("x", F::exists("y", q(x(), y())));

    vec![
        some_p(),
        F::forall("x", F::implies(p(x()), q(x(), x()))),
        F::Eq(a(), a()),
        F::not(F::Eq(a(), b())),
        F::exists("x", F::and(p(x()), F::not(F::Eq(x(), a())))),
        F::ax(some_p()),
        F::ax(F::ax(F::not(some_q()))),
        F::ax(F::forall("x", F::implies(p(x()), F::ax(p(x()))))),
        F::au(some_p(), some_q()),
        F::au(F::tautology(), F::not(some_p())),
        F::au(F::not(some_q()), F::Eq(a(), a())),
        F::eu(some_p(), some_q()),
        F::eu(F::tautology(), F::and(some_p(), some_q())),
        F::eu(F::not(some_p()), q(a(), b())),
        F::af(F::not(some_p())),
        F::ef(F::forall("x", F::implies(p(x()), F::Eq(x(), a())))),
        F::ag(F::implies(some_q(), some_p())),
        F::eg(some_p()),
        F::know(1, F::implies(p(a()), some_p())),
        F::know(1, F::not(p(b()))),
        F::know(2, some_q()),
        F::know(2, F::forall("x", F::implies(q(x(), x()), p(x())))),
        F::common(F::implies(some_p(), some_q())),
        F::common(F::not(F::and(p(a()), q(a(), a())))),
        F::know(1, F::ax(some_p())),
        F::eu(F::know(1, F::not(p(b()))), some_q()),
        F::forall("x", F::ax(F::implies(p(x()), F::ef(F::not(p(x())))))),
        F::forall("x", F::forall("y", F::implies(q(x(), y()), F::Eq(x(), y())))),
        F::exists("x", F::know(1, F::implies(p(x()), F::Eq(x(), a())))),
        F::ag(F::common(F::implies(q(a(), a()), F::ef(p(a()))))),
    ]
}

#[test]
fn criterion_7_checker_oracle_equivalence() {
    criterion(7, "fixpoint vs brute-force oracle", || {
        let mut rng = StdRng::seed_from_u64(0x5eed_0007);
        let battery = battery();
        assert_eq!(battery.len(), 30);
        for model_no in 0..40 {
            let m = gen_small_model(&mut rng);
            assert!(m.state_count() <= 6);
            for (i, phi) in battery.iter().enumerate() {
                let fixpoint = check_closed(&m, phi).unwrap();
                let brute = oracle(&m, m.initial(), &BTreeMap::new(), phi);
                assert_eq!(
                    fixpoint, brute,
                    "model {model_no}, formula {i} ({phi}): fixpoint {fixpoint} vs oracle {brute}"
                );
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Criterion 8: scaling stays within the (astronomical) worst-case bound and
// budgets fail gracefully.

#[test]
fn criterion_8_scaling_and_budgets() {
    criterion(8, "scaling and graceful budgets", || {
        let mut rng = StdRng::seed_from_u64(0x5eed_0008);
        let p = gen_program(&mut rng);
        let opts = InduceOptions::default();

        // State counts grow with the domain but remain minuscule next to the
        // doubly-exponential worst case (recorded for completeness).
        let mut previous = 0usize;
        for extra in 1..=4 {
            let m = induced_acmas(&p, &domain_for(&p, extra, "u"), &opts).unwrap();
            println!(
                "  scaling: |U| = {} -> {} states, {} transitions",
                m.domain().len(),
                m.state_count(),
                m.transition_count()
            );
            assert!(m.state_count() >= previous);
            assert!(m.state_count() < 1_000_000);
            previous = m.state_count();
        }

        // Budgets: a tiny state cap fails with a structured error rather
        // than exhausting memory, both in the library and through the CLI.
        let starved = InduceOptions {
            budget: ExplorationBudget { max_states: 3, max_candidates: 1 << 16 },
            ..Default::default()
        };
        let err = induced_acmas(&p, &domain_for(&p, 4, "u"), &starved).unwrap_err();
        assert!(matches!(
            err,
            ProgramError::Model(ModelError::StateBudget { limit: 3, .. })
        ));

        let out = Command::new(env!("CARGO_BIN_EXE_acmc"))
            .args([
                "check",
                &fixture("otc.acp"),
                &fixture("otc.spec"),
                "--max-states",
                "100",
            ])
            .output()
            .expect("run acmc");
        assert_eq!(out.status.code(), Some(3), "budget exhaustion exit code");
    });
}
