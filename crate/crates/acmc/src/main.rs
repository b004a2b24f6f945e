//! acmc — batch driver for artifact-centric multi-agent model checking.
//!
//! Loads models from explicit encodings (`.acm`) or declarative programs
//! (`.acp`), formulas from `.spec` files, and runs checking, inspection,
//! equivalence, restriction, and abstraction sizing as single-shot commands.
//!
//! Exit codes are stable: 0 success (all formulas hold / bisimilar /
//! uniform), 1 refutation (some formula fails / not bisimilar / not
//! uniform), 2 parse or configuration error, 3 budget exhausted, 4
//! boundedness violation, 5 inconclusive (bounded schedule exhausted).

mod report;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use acmc_core::abstraction::{
    abstract_check, b_restrict, ectlk_bounded_check, size_domain, AbstractionError,
    BoundedVerdict, Regime,
};
use acmc_core::acmas::{parse_acm, to_acm, Acmas, ExplorationBudget, ModelError};
use acmc_core::checker::{check, CheckBudget, CheckError, CheckRequest, Mode};
use acmc_core::equivalence::{check_bisimulation, check_uniform};
use acmc_core::logic::{parse_spec_file, SpecError, SpecFormula};
use acmc_core::program::{induced_acmas, parse_program, ACProgram, InduceOptions, ProgramError};
use acmc_core::relational::Value;

use report::*;

const EXIT_OK: u8 = 0;
const EXIT_REFUTED: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_BUDGET: u8 = 3;
const EXIT_BOUND: u8 = 4;
const EXIT_UNKNOWN: u8 = 5;

#[derive(Parser)]
#[command(
    name = "acmc",
    about = "Model checker for artifact-centric multi-agent systems",
    long_about = "Model checker for artifact-centric multi-agent systems.\n\n\
        Models are explicit encodings (.acm) or declarative agent programs \
        (.acp); specifications are FO-CTLK formulas (.spec).\n\n\
        Exit codes: 0 success, 1 refutation, 2 parse/config error, \
        3 budget exhausted, 4 boundedness violation, 5 inconclusive."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    /// Human-readable; no stability promise.
    Text,
    /// Versioned JSON; byte-identical for identical inputs and config.
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RegimeArg {
    /// Sentence-atomic CTL sizing: b + |C| + N.
    Sa,
    /// Full FO-CTLK sizing: 2b + |C| + max{N, |vars|}.
    Oplus,
}

impl From<RegimeArg> for Regime {
    fn from(r: RegimeArg) -> Regime {
        match r {
            RegimeArg::Sa => Regime::Sa,
            RegimeArg::Oplus => Regime::Oplus,
        }
    }
}

/// Budget flags; `ACMC_BUDGET_MAX_STATES`, `ACMC_BUDGET_MAX_CANDIDATES` and
/// `ACMC_BUDGET_MAX_STEPS` override the defaults, flags override both.
#[derive(Args)]
struct BudgetArgs {
    /// Maximum number of explored states.
    #[arg(long)]
    max_states: Option<usize>,
    /// Maximum successor candidates per action.
    #[arg(long)]
    max_candidates: Option<usize>,
    /// Maximum model-checking work steps.
    #[arg(long)]
    max_steps: Option<usize>,
}

fn env_budget(name: &str) -> Option<usize> {
    std::env::var(name).ok().and_then(|v| v.parse().ok())
}

impl BudgetArgs {
    fn exploration(&self) -> ExplorationBudget {
        let defaults = ExplorationBudget::default();
        ExplorationBudget {
            max_states: self
                .max_states
                .or_else(|| env_budget("ACMC_BUDGET_MAX_STATES"))
                .unwrap_or(defaults.max_states),
            max_candidates: self
                .max_candidates
                .or_else(|| env_budget("ACMC_BUDGET_MAX_CANDIDATES"))
                .unwrap_or(defaults.max_candidates),
        }
    }

    fn checking(&self) -> CheckBudget {
        CheckBudget {
            max_steps: self
                .max_steps
                .or_else(|| env_budget("ACMC_BUDGET_MAX_STEPS"))
                .unwrap_or(CheckBudget::default().max_steps),
        }
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Report format.
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Write the report to a file instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check every formula of a spec file against a model.
    Check {
        /// Model file (.acm explicit encoding or .acp program).
        model: PathBuf,
        /// Specification file (.spec).
        spec: PathBuf,
        /// Check via a sized finite abstraction (programs only); asserts the
        /// program is BOUND-bounded.
        #[arg(long)]
        bound: Option<usize>,
        /// Sizing regime used with --bound.
        #[arg(long, value_enum, default_value = "oplus")]
        regime: RegimeArg,
        /// Increasing bounds for one-sided FO-ECTLK checking over
        /// b-restrictions (comma-separated); true verdicts are sound,
        /// exhaustion is inconclusive.
        #[arg(long, value_delimiter = ',')]
        schedule: Vec<usize>,
        /// Cap simultaneous non-skip components per joint action (programs).
        #[arg(long)]
        max_nonskip: Option<usize>,
        /// Cap worker threads.
        #[arg(long)]
        threads: Option<usize>,
        #[command(flatten)]
        budget: BudgetArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Print model statistics (states, transitions, adom histogram,
    /// boundedness, uniformity).
    Inspect {
        model: PathBuf,
        /// Also dump the full state graph as an .acm model.
        #[arg(long)]
        dump: bool,
        #[command(flatten)]
        budget: BudgetArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Decide (⊕-)bisimilarity of two models. Exit 0 iff bisimilar.
    Bisim {
        left: PathBuf,
        right: PathBuf,
        /// Require isomorphic ⊕-joins on matched moves.
        #[arg(long)]
        oplus: bool,
        /// Include the relation certificate in the report.
        #[arg(long)]
        certificate: bool,
        #[command(flatten)]
        budget: BudgetArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Check uniformity. Exit 0 iff uniform.
    Uniform {
        model: PathBuf,
        #[command(flatten)]
        budget: BudgetArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Emit the b-restriction of a model as an .acm file.
    Restrict {
        model: PathBuf,
        #[arg(long)]
        bound: usize,
        #[command(flatten)]
        budget: BudgetArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Compute the abstract-domain sizing report for a program and spec.
    Size {
        program: PathBuf,
        spec: PathBuf,
        #[arg(long)]
        bound: usize,
        #[arg(long, value_enum, default_value = "oplus")]
        regime: RegimeArg,
        #[command(flatten)]
        out: OutputArgs,
    },
}

/// A command failure carrying the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure { code, message: message.into() }
    }
}

impl From<SpecError> for Failure {
    fn from(e: SpecError) -> Self {
        Failure::new(EXIT_PARSE, e.to_string())
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        let code = match e {
            ModelError::StateBudget { .. } | ModelError::CandidateBudget { .. } => EXIT_BUDGET,
            _ => EXIT_PARSE,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<ProgramError> for Failure {
    fn from(e: ProgramError) -> Self {
        match e {
            ProgramError::Model(m) => m.into(),
            ProgramError::BoundExceeded { .. } => Failure::new(EXIT_BOUND, e.to_string()),
            other => Failure::new(EXIT_PARSE, other.to_string()),
        }
    }
}

impl From<CheckError> for Failure {
    fn from(e: CheckError) -> Self {
        let code = match e {
            CheckError::Budget { .. } => EXIT_BUDGET,
            CheckError::Model(ModelError::StateBudget { .. })
            | CheckError::Model(ModelError::CandidateBudget { .. }) => EXIT_BUDGET,
            _ => EXIT_PARSE,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<AbstractionError> for Failure {
    fn from(e: AbstractionError) -> Self {
        match e {
            AbstractionError::Program(p) => p.into(),
            AbstractionError::Model(m) => m.into(),
            AbstractionError::Check(c) => c.into(),
            AbstractionError::BoundTooSmall { .. } | AbstractionError::NotBounded { .. } => {
                Failure::new(EXIT_BOUND, e.to_string())
            }
            other => Failure::new(EXIT_PARSE, other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(EXIT_PARSE, e.to_string())
    }
}

/// A model plus, when it came from a program, the program itself (needed for
/// abstraction sizing).
struct Loaded {
    model: Acmas,
    program: Option<ACProgram>,
}

fn load_model(
    path: &Path,
    budget: &ExplorationBudget,
    max_nonskip: Option<usize>,
) -> Result<Loaded, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", path.display())))?;
    let is_program = path.extension().is_some_and(|e| e == "acp");
    if is_program {
        let program = parse_program(&text)?;
        let domain = match &program.domain {
            acmc_core::program::DomainDecl::Finite(u) => u.clone(),
            acmc_core::program::DomainDecl::Symbolic(_) => {
                return Err(Failure::new(
                    EXIT_PARSE,
                    "program domain is symbolic; use `check --bound` to size a finite one",
                ));
            }
        };
        let opts = InduceOptions {
            budget: budget.clone(),
            max_nonskip,
            force_generic: false,
        };
        let model = induced_acmas(&program, &domain, &opts)?;
        Ok(Loaded { model, program: Some(program) })
    } else {
        let model = parse_acm(&text)?.build(budget)?;
        Ok(Loaded { model, program: None })
    }
}

fn load_spec(path: &Path, model: &Acmas) -> Result<Vec<(String, SpecFormula)>, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", path.display())))?;
    let agents: Vec<String> = model.agents().iter().map(|a| a.name.clone()).collect();
    let constants: BTreeSet<Value> = model.domain().union(model.constants()).cloned().collect();
    Ok(parse_spec_file(&text, model.global_schema(), &agents, &constants)?)
}

fn emit(out: &OutputArgs, text: String) -> Result<(), Failure> {
    match &out.output {
        Some(path) => fs::write(path, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_check(
    model_path: &Path,
    spec_path: &Path,
    bound: Option<usize>,
    regime: RegimeArg,
    schedule: &[usize],
    max_nonskip: Option<usize>,
    threads: Option<usize>,
    budget: &BudgetArgs,
    out: &OutputArgs,
) -> Result<u8, Failure> {
    if let Some(n) = threads {
        // Global pool; ignore failure if a pool already exists (tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let exploration = budget.exploration();
    let checking = budget.checking();
    let loaded = load_model(model_path, &exploration, max_nonskip)?;
    let formulas = load_spec(spec_path, &loaded.model)?;

    let mut reports = Vec::new();
    let mut all_hold = true;
    let mut any_unknown = false;

    if !schedule.is_empty() {
        // One-sided bounded checking over b-restrictions.
        for (name, phi) in &formulas {
            let verdict = ectlk_bounded_check(
                |b| b_restrict(&loaded.model, b),
                phi,
                schedule,
                checking,
            )?;
            let fr = match verdict {
                BoundedVerdict::True { bound, result } => {
                    FormulaReport::from_result(name, phi, &result).with_bound(bound)
                }
                BoundedVerdict::Unknown => {
                    any_unknown = true;
                    FormulaReport::unknown(name, phi)
                }
            };
            reports.push(fr);
        }
    } else if let Some(b) = bound {
        let program = loaded.program.as_ref().ok_or_else(|| {
            Failure::new(EXIT_PARSE, "--bound requires an .acp program input")
        })?;
        for (name, phi) in &formulas {
            let opts = InduceOptions {
                budget: exploration.clone(),
                max_nonskip,
                force_generic: false,
            };
            let outcome = abstract_check(program, phi, b, regime.into(), &opts, checking)?;
            all_hold &= outcome.result.verdict;
            reports.push(
                FormulaReport::from_result(name, phi, &outcome.result)
                    .with_sizing(sizing_json(&outcome.sizing, &outcome.domain)),
            );
        }
    } else {
        use rayon::prelude::*;
        let results: Vec<Result<_, CheckError>> = formulas
            .par_iter()
            .map(|(name, phi)| {
                let result = check(&CheckRequest {
                    model: &loaded.model,
                    formula: phi.clone(),
                    mode: Mode::AllAssignments,
                    budget: checking,
                })?;
                Ok((name, phi, result))
            })
            .collect();
        for r in results {
            let (name, phi, result) = r.map_err(Failure::from)?;
            all_hold &= result.verdict;
            reports.push(FormulaReport::from_result(name, phi, &result));
        }
    }
    for fr in &reports {
        if fr.verdict == "false" {
            all_hold = false;
        }
    }

    let report = CheckReport {
        report_version: REPORT_VERSION,
        command: "check".into(),
        model: model_stats(&loaded.model, None),
        formulas: reports,
    };
    emit(out, render(&report, out.format == Format::Json)?)?;
    if any_unknown && all_hold {
        Ok(EXIT_UNKNOWN)
    } else if all_hold {
        Ok(EXIT_OK)
    } else {
        Ok(EXIT_REFUTED)
    }
}

fn cmd_inspect(
    model_path: &Path,
    dump: bool,
    budget: &BudgetArgs,
    out: &OutputArgs,
) -> Result<u8, Failure> {
    let loaded = load_model(model_path, &budget.exploration(), None)?;
    let uniform = check_uniform(&loaded.model).uniform;
    let report = InspectReport {
        report_version: REPORT_VERSION,
        command: "inspect".into(),
        model: model_stats(&loaded.model, Some(uniform)),
        dump: dump.then(|| to_acm(&loaded.model)),
    };
    emit(out, render(&report, out.format == Format::Json)?)?;
    Ok(EXIT_OK)
}

fn cmd_bisim(
    left: &Path,
    right: &Path,
    oplus: bool,
    certificate: bool,
    budget: &BudgetArgs,
    out: &OutputArgs,
) -> Result<u8, Failure> {
    let exploration = budget.exploration();
    let a = load_model(left, &exploration, None)?;
    let b = load_model(right, &exploration, None)?;
    let cert = check_bisimulation(&a.model, &b.model, oplus);
    let bisimilar = cert.is_some();
    let report = BisimReport {
        report_version: REPORT_VERSION,
        command: "bisim".into(),
        oplus,
        bisimilar,
        pairs: cert.as_ref().map(|c| c.pairs.len()),
        certificate: cert
            .filter(|_| certificate)
            .map(|c| c.pairs.iter().map(|&(x, y)| [x, y]).collect()),
    };
    emit(out, render(&report, out.format == Format::Json)?)?;
    Ok(if bisimilar { EXIT_OK } else { EXIT_REFUTED })
}

fn cmd_uniform(model_path: &Path, budget: &BudgetArgs, out: &OutputArgs) -> Result<u8, Failure> {
    let loaded = load_model(model_path, &budget.exploration(), None)?;
    let r = check_uniform(&loaded.model);
    let report = UniformReport {
        report_version: REPORT_VERSION,
        command: "uniform".into(),
        uniform: r.uniform,
        violation: r.violation.map(|v| UniformViolationJson {
            source: v.source,
            target: v.target,
            action: v.action.map(|a| a.label()),
            agent: v.agent,
            renamed_source: v.renamed_source,
        }),
    };
    let uniform = report.uniform;
    emit(out, render(&report, out.format == Format::Json)?)?;
    Ok(if uniform { EXIT_OK } else { EXIT_REFUTED })
}

fn cmd_restrict(
    model_path: &Path,
    bound: usize,
    budget: &BudgetArgs,
    out: &OutputArgs,
) -> Result<u8, Failure> {
    let loaded = load_model(model_path, &budget.exploration(), None)?;
    let restricted = b_restrict(&loaded.model, bound)?;
    emit(out, to_acm(&restricted))?;
    Ok(EXIT_OK)
}

fn cmd_size(
    program_path: &Path,
    spec_path: &Path,
    bound: usize,
    regime: RegimeArg,
    out: &OutputArgs,
) -> Result<u8, Failure> {
    let text = fs::read_to_string(program_path)
        .map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", program_path.display())))?;
    let program = parse_program(&text)?;
    // Spec parsing needs the schema only, so size never builds a model.
    let spec_text = fs::read_to_string(spec_path)
        .map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", spec_path.display())))?;
    let agent_names: Vec<String> = program.agents.iter().map(|a| a.name.clone()).collect();
    let mut constants = program.constants();
    let (acmc_core::program::DomainDecl::Finite(u)
    | acmc_core::program::DomainDecl::Symbolic(u)) = &program.domain;
    constants.extend(u.iter().cloned());
    let formulas = parse_spec_file(&spec_text, program.global_schema(), &agent_names, &constants)?;

    let mut entries = Vec::new();
    for (name, phi) in &formulas {
        let sizing = size_domain(&program, phi, bound, regime.into())?;
        let domain = acmc_core::abstraction::synthesize_domain(&sizing, &program);
        entries.push(SizeEntry {
            formula: name.clone(),
            sizing: sizing_json(&sizing, &domain),
        });
    }
    let report = SizeReport {
        report_version: REPORT_VERSION,
        command: "size".into(),
        entries,
    };
    emit(out, render(&report, out.format == Format::Json)?)?;
    Ok(EXIT_OK)
}

fn run() -> Result<u8, Failure> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Check {
            model,
            spec,
            bound,
            regime,
            schedule,
            max_nonskip,
            threads,
            budget,
            out,
        } => cmd_check(
            model, spec, *bound, *regime, schedule, *max_nonskip, *threads, budget, out,
        ),
        Command::Inspect { model, dump, budget, out } => cmd_inspect(model, *dump, budget, out),
        Command::Bisim { left, right, oplus, certificate, budget, out } => {
            cmd_bisim(left, right, *oplus, *certificate, budget, out)
        }
        Command::Uniform { model, budget, out } => cmd_uniform(model, budget, out),
        Command::Restrict { model, bound, budget, out } => {
            cmd_restrict(model, *bound, budget, out)
        }
        Command::Size { program, spec, bound, regime, out } => {
            cmd_size(program, spec, *bound, *regime, out)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
