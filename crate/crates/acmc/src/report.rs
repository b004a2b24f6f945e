//! Structured and human-readable reports.
//!
//! The JSON form is versioned and deterministic (ordered maps, fixed field
//! order) so runs can be diffed against golden files; the text form is for
//! humans and carries no stability promise.

use std::collections::BTreeMap;

use serde::Serialize;

use acmc_core::abstraction::{Regime, SizingReport};
use acmc_core::acmas::Acmas;
use acmc_core::checker::{CheckResult, Diagnostic};
use acmc_core::logic::SpecFormula;
use acmc_core::relational::Value;

use crate::Failure;

pub const REPORT_VERSION: u32 = 1;

#[derive(Serialize)]
pub struct ModelStats {
    pub states: usize,
    pub transitions: usize,
    pub agents: Vec<String>,
    pub domain_size: usize,
    pub constants: Vec<String>,
    /// Histogram: active-domain size -> number of states.
    pub adom_histogram: BTreeMap<usize, usize>,
    /// The least b such that the model is b-bounded.
    pub max_adom: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uniform: Option<bool>,
}

pub fn model_stats(m: &Acmas, uniform: Option<bool>) -> ModelStats {
    let mut histogram: BTreeMap<usize, usize> = BTreeMap::new();
    for s in m.state_ids() {
        *histogram.entry(m.state(s).active_domain().len()).or_default() += 1;
    }
    let transitions = m
        .state_ids()
        .map(|s| m.transitions(s).map(|t| t.len()).unwrap_or(0))
        .sum();
    ModelStats {
        states: m.state_count(),
        transitions,
        agents: m.agents().iter().map(|a| a.name.clone()).collect(),
        domain_size: m.domain().len(),
        constants: m.constants().iter().map(Value::to_string).collect(),
        max_adom: histogram.keys().next_back().copied().unwrap_or(0),
        adom_histogram: histogram,
        uniform,
    }
}

#[derive(Serialize)]
pub struct SizingJson {
    pub regime: String,
    pub bound: usize,
    pub constants: usize,
    pub n: usize,
    pub vars: usize,
    pub required: usize,
    pub domain: Vec<String>,
}

pub fn sizing_json(s: &SizingReport, domain: &std::collections::BTreeSet<Value>) -> SizingJson {
    SizingJson {
        regime: match s.regime {
            Regime::Sa => "sa".into(),
            Regime::Oplus => "oplus".into(),
        },
        bound: s.bound,
        constants: s.constants,
        n: s.n,
        vars: s.vars,
        required: s.required,
        domain: domain.iter().map(Value::to_string).collect(),
    }
}

#[derive(Serialize)]
#[serde(tag = "kind")]
pub enum DiagnosticJson {
    Lasso {
        states: Vec<usize>,
        #[serde(skip_serializing_if = "Option::is_none")]
        cycle_start: Option<usize>,
    },
    EpistemicNeighbor {
        agent: usize,
        state: usize,
    },
    CommonReach {
        state: usize,
    },
}

#[derive(Serialize)]
pub struct FormulaReport {
    pub name: String,
    pub formula: String,
    pub verdict: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<BTreeMap<String, String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<DiagnosticJson>,
    pub steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sizing: Option<SizingJson>,
}

impl FormulaReport {
    pub fn from_result(name: &str, phi: &SpecFormula, r: &CheckResult) -> Self {
        FormulaReport {
            name: name.to_string(),
            formula: phi.to_string(),
            verdict: if r.verdict { "true".into() } else { "false".into() },
            bound: None,
            witness: r.witness.as_ref().map(|w| {
                w.bindings()
                    .map(|(v, u)| (v.to_string(), u.to_string()))
                    .collect()
            }),
            diagnostic: r.diagnostic.as_ref().map(|d| match d {
                Diagnostic::Lasso { states, cycle_start } => DiagnosticJson::Lasso {
                    states: states.clone(),
                    cycle_start: *cycle_start,
                },
                Diagnostic::EpistemicNeighbor { agent, state } => {
                    DiagnosticJson::EpistemicNeighbor { agent: *agent, state: *state }
                }
                Diagnostic::CommonReach { state } => DiagnosticJson::CommonReach { state: *state },
            }),
            steps: r.stats.steps,
            sizing: None,
        }
    }

    pub fn unknown(name: &str, phi: &SpecFormula) -> Self {
        FormulaReport {
            name: name.to_string(),
            formula: phi.to_string(),
            verdict: "unknown".into(),
            bound: None,
            witness: None,
            diagnostic: None,
            steps: 0,
            sizing: None,
        }
    }

    pub fn with_bound(mut self, b: usize) -> Self {
        self.bound = Some(b);
        self
    }

    pub fn with_sizing(mut self, s: SizingJson) -> Self {
        self.sizing = Some(s);
        self
    }
}

#[derive(Serialize)]
pub struct CheckReport {
    pub report_version: u32,
    pub command: String,
    pub model: ModelStats,
    pub formulas: Vec<FormulaReport>,
}

#[derive(Serialize)]
pub struct InspectReport {
    pub report_version: u32,
    pub command: String,
    pub model: ModelStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dump: Option<String>,
}

#[derive(Serialize)]
pub struct BisimReport {
    pub report_version: u32,
    pub command: String,
    pub oplus: bool,
    pub bisimilar: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Vec<[usize; 2]>>,
}

#[derive(Serialize)]
pub struct UniformViolationJson {
    pub source: usize,
    pub target: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agent: Option<usize>,
    pub renamed_source: usize,
}

#[derive(Serialize)]
pub struct UniformReport {
    pub report_version: u32,
    pub command: String,
    pub uniform: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violation: Option<UniformViolationJson>,
}

#[derive(Serialize)]
pub struct SizeEntry {
    pub formula: String,
    pub sizing: SizingJson,
}

#[derive(Serialize)]
pub struct SizeReport {
    pub report_version: u32,
    pub command: String,
    pub entries: Vec<SizeEntry>,
}

/// Render a report: pretty JSON when `json`, otherwise a plain text view.
pub fn render<T: Serialize + TextRender>(report: &T, json: bool) -> Result<String, Failure> {
    if json {
        serde_json::to_string_pretty(report)
            .map_err(|e| Failure::new(crate::EXIT_PARSE, e.to_string()))
    } else {
        Ok(report.text())
    }
}

/// Human-readable rendering; no stability promise.
pub trait TextRender {
    fn text(&self) -> String;
}

fn stats_text(m: &ModelStats, out: &mut String) {
    out.push_str(&format!(
        "model: {} states, {} transitions, agents [{}]\n",
        m.states,
        m.transitions,
        m.agents.join(", ")
    ));
    out.push_str(&format!(
        "domain: {} values, {} constants; max |adom| = {}\n",
        m.domain_size,
        m.constants.len(),
        m.max_adom
    ));
    let histogram: Vec<String> = m
        .adom_histogram
        .iter()
        .map(|(k, v)| format!("{k}:{v}"))
        .collect();
    out.push_str(&format!("adom histogram: {}\n", histogram.join(" ")));
    if let Some(u) = m.uniform {
        out.push_str(&format!("uniform: {u}\n"));
    }
}

impl TextRender for CheckReport {
    fn text(&self) -> String {
        let mut out = String::new();
        stats_text(&self.model, &mut out);
        for f in &self.formulas {
            out.push_str(&format!("{}: {}", f.name, f.verdict));
            if let Some(b) = f.bound {
                out.push_str(&format!(" (at bound {b})"));
            }
            if let Some(s) = &f.sizing {
                out.push_str(&format!(" (|U'| = {})", s.required));
            }
            out.push('\n');
            if let Some(w) = &f.witness {
                let pairs: Vec<String> = w.iter().map(|(k, v)| format!("{k}={v}")).collect();
                out.push_str(&format!("  witness: {}\n", pairs.join(", ")));
            }
            if let Some(d) = &f.diagnostic {
                match d {
                    DiagnosticJson::Lasso { states, cycle_start } => {
                        let path: Vec<String> =
                            states.iter().map(|s| format!("s{s}")).collect();
                        out.push_str(&format!("  trace: {}", path.join(" -> ")));
                        if let Some(c) = cycle_start {
                            out.push_str(&format!(" (loops to position {c})"));
                        }
                        out.push('\n');
                    }
                    DiagnosticJson::EpistemicNeighbor { agent, state } => {
                        out.push_str(&format!(
                            "  counterexample: agent {agent} considers state s{state} possible\n"
                        ));
                    }
                    DiagnosticJson::CommonReach { state } => {
                        out.push_str(&format!(
                            "  counterexample: state s{state} in the common-knowledge reach\n"
                        ));
                    }
                }
            }
        }
        out.trim_end().to_string()
    }
}

impl TextRender for InspectReport {
    fn text(&self) -> String {
        let mut out = String::new();
        stats_text(&self.model, &mut out);
        if let Some(dump) = &self.dump {
            out.push_str(dump);
        }
        out.trim_end().to_string()
    }
}

impl TextRender for BisimReport {
    fn text(&self) -> String {
        let mut out = format!(
            "{}bisimilar: {}",
            if self.oplus { "⊕-" } else { "" },
            self.bisimilar
        );
        if let Some(n) = self.pairs {
            out.push_str(&format!(" ({n} related pairs)"));
        }
        if let Some(cert) = &self.certificate {
            for [a, b] in cert {
                out.push_str(&format!("\n  s{a} ~ t{b}"));
            }
        }
        out
    }
}

impl TextRender for UniformReport {
    fn text(&self) -> String {
        let mut out = format!("uniform: {}", self.uniform);
        if let Some(v) = &self.violation {
            out.push_str(&format!(
                "\n  violation: transition s{} -> s{} has no counterpart from renamed s{}",
                v.source, v.target, v.renamed_source
            ));
            if let Some(a) = &v.action {
                out.push_str(&format!(" (action {a})"));
            }
            if let Some(i) = v.agent {
                out.push_str(&format!(" (epistemic, agent {i})"));
            }
        }
        out
    }
}

impl TextRender for SizeReport {
    fn text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let s = &e.sizing;
            out.push_str(&format!(
                "{}: regime {}, b={}, |C|={}, N={}, |vars|={} => required |U'| = {} ({} values synthesized)\n",
                e.formula, s.regime, s.bound, s.constants, s.n, s.vars, s.required,
                s.domain.len()
            ));
        }
        out.trim_end().to_string()
    }
}
