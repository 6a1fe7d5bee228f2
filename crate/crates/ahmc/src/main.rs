//! Command-line front end: check a model against a hyperproperty (SMT
//! pipeline or explicit-state oracle), generate the built-in case studies,
//! and validate model files.
//!
//! Exit codes: 0 property holds, 1 property fails, 2 unknown or timeout,
//! 3 usage or input error.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use ahmc::cases::{build_acdb, build_ce, build_tl, CaseStudyFixture};
use ahmc::encoder::{encode, EncodeOptions};
use ahmc::formula::{negate_prefix, parse_formula, prefix_class, HyperFormula, PrefixClass};
use ahmc::model::Mdp;
use ahmc::oracle::{check_by_enumeration, SchedulerDomain, DEFAULT_ENUMERATION_CAP};
use ahmc::rational::parse_rational;
use ahmc::solver::{report_verdict, run_solver, CheckStatus, SolverConfig};

#[derive(Parser)]
#[command(
    name = "ahmc",
    about = "Asynchronous probabilistic hyperproperty model checker"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a model against a hyperproperty.
    Check(CheckArgs),
    /// Generate a built-in case study (model and formula files).
    Fixture(FixtureArgs),
    /// Check the structural invariants of a model file.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct CheckArgs {
    /// Model file in the `.mdp` text format.
    #[arg(long)]
    model: PathBuf,
    /// Formula file path, or the formula text itself.
    #[arg(long)]
    formula: String,
    /// Memory bound for the counting stutter-schedulers.
    #[arg(long, default_value_t = 1)]
    memory: usize,
    /// Use the explicit-state enumeration oracle instead of the solver.
    #[arg(long, conflicts_with = "smt")]
    oracle: bool,
    /// Use the SMT pipeline (the default).
    #[arg(long)]
    smt: bool,
    /// Solver command; defaults to $AHMC_SOLVER or `z3`.
    #[arg(long)]
    solver: Option<String>,
    /// Solver timeout in seconds.
    #[arg(long)]
    timeout: Option<u64>,
    /// Write the generated SMT-LIB script to this path.
    #[arg(long)]
    dump_smt: Option<PathBuf>,
    /// Disable the relevant-quantifier variable reduction.
    #[arg(long)]
    no_opt: bool,
    /// Print encoding/solving statistics as key=value lines.
    #[arg(long)]
    stats: bool,
    /// Oracle scheduler domain: auto, single, det, or grid:<step>.
    #[arg(long, default_value = "auto")]
    policy: String,
    /// Enumeration size guard for the oracle.
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
    cap: u128,
}

#[derive(Args)]
struct FixtureArgs {
    /// Case study: CE, TL, or ACDB.
    name: String,
    /// CE: the two secret values (default 0 1); TL: the key length
    /// (default 1); ACDB: none.
    params: Vec<u32>,
    /// Restrict the TL conjunction to the first observable.
    #[arg(long)]
    restrict_l0: bool,
    /// Output directory for model.mdp and formula.txt.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    model: PathBuf,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version travel through clap's error path but are not
            // usage errors
            if e.use_stderr() {
                eprint!("{e}");
                std::process::exit(3);
            }
            print!("{e}");
            std::process::exit(0);
        }
    };
    let code = match cli.cmd {
        Cmd::Check(args) => run_check(&args),
        Cmd::Fixture(args) => run_fixture(&args),
        Cmd::Validate(args) => run_validate(&args),
    };
    match code {
        Ok(code) => std::process::exit(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            std::process::exit(3);
        }
    }
}

fn load_model(path: &Path) -> Result<Mdp, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read model `{}`: {e}", path.display()))?;
    Mdp::parse(&text).map_err(|e| format!("model `{}`: {e}", path.display()))
}

fn load_formula(spec: &str) -> Result<HyperFormula, String> {
    let text = if Path::new(spec).is_file() {
        std::fs::read_to_string(spec).map_err(|e| format!("cannot read formula `{spec}`: {e}"))?
    } else {
        spec.to_string()
    };
    parse_formula(&text).map_err(|e| format!("formula: {e}"))
}

fn run_check(args: &CheckArgs) -> Result<i32, String> {
    let mdp = load_model(&args.model)?;
    let violations = mdp.validate();
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("model violation: {v}");
        }
        return Err("model fails validation".to_string());
    }
    let formula = load_formula(&args.formula)?;
    if args.memory == 0 {
        return Err("memory bound must be at least 1".to_string());
    }
    if args.oracle {
        check_with_oracle(args, &mdp, &formula)
    } else {
        check_with_smt(args, &mdp, &formula)
    }
}

fn check_with_oracle(args: &CheckArgs, mdp: &Mdp, formula: &HyperFormula) -> Result<i32, String> {
    let domain = match args.policy.as_str() {
        "auto" => {
            let single = (0..mdp.state_count()).all(|s| mdp.enabled_actions(s).len() == 1);
            if single {
                SchedulerDomain::SingleAction
            } else {
                SchedulerDomain::Deterministic
            }
        }
        "single" => SchedulerDomain::SingleAction,
        "det" => SchedulerDomain::Deterministic,
        "grid" => SchedulerDomain::Grid(parse_rational("1/4").unwrap()),
        other => match other.strip_prefix("grid:") {
            Some(step) => SchedulerDomain::Grid(
                parse_rational(step).map_err(|e| format!("bad grid step: {e}"))?,
            ),
            None => return Err(format!("unknown policy `{other}`")),
        },
    };
    let started = Instant::now();
    let outcome = check_by_enumeration(mdp, formula, args.memory, domain, args.cap)
        .map_err(|e| format!("oracle: {e}"))?;
    if args.stats {
        println!("oracle_ms={}", started.elapsed().as_millis());
    }
    if !outcome.conclusive {
        println!(
            "result: unknown (no witness in the enumerated scheduler domain; \
             the domain under-approximates)"
        );
        return Ok(2);
    }
    println!("result: {}", if outcome.holds { "holds" } else { "fails" });
    Ok(if outcome.holds { 0 } else { 1 })
}

fn check_with_smt(args: &CheckArgs, mdp: &Mdp, formula: &HyperFormula) -> Result<i32, String> {
    let (target, dualized) = match prefix_class(formula) {
        PrefixClass::Existential => (formula.clone(), false),
        PrefixClass::Universal => (negate_prefix(formula).map_err(|e| e.to_string())?, true),
        PrefixClass::Mixed => {
            return Err(
                "unsupported fragment: mixed scheduler/stutter quantifier alternation \
                 (use an existential or purely universal prefix)"
                    .to_string(),
            )
        }
    };
    let options = EncodeOptions {
        relevant_quantifiers: !args.no_opt,
    };
    let encode_started = Instant::now();
    let system = encode(mdp, &target, args.memory, options).map_err(|e| format!("encode: {e}"))?;
    let encode_time = encode_started.elapsed();
    if let Some(path) = &args.dump_smt {
        std::fs::write(path, system.to_smtlib())
            .map_err(|e| format!("cannot write `{}`: {e}", path.display()))?;
    }
    let mut config = SolverConfig::default();
    if let Some(cmd) = &args.solver {
        config.command = cmd.clone();
    }
    if let Some(secs) = args.timeout {
        config = config.with_timeout_secs(secs);
    }
    let result = run_solver(&system, &config).map_err(|e| format!("solver: {e}"))?;
    let outcome = report_verdict(result, dualized);
    if args.stats {
        let metrics = system.metrics();
        println!("variables={}", metrics.variables);
        println!("assertions={}", metrics.assertions);
        println!("subformulas={}", metrics.subformulas);
        println!("encode_ms={}", encode_time.as_millis());
        println!("solve_ms={}", outcome.result.stats.wall_time.as_millis());
        println!("solver_verdict={}", outcome.result.verdict);
    }
    println!("result: {}", outcome.status);
    if let Some(witness) = &outcome.result.witness {
        let kind = if dualized && outcome.status == CheckStatus::Fails {
            "counterexample"
        } else {
            "witness"
        };
        for ((set, action), p) in &witness.scheduler_probs {
            println!("{kind} scheduler[{{{}}} -> {action}] = {p}", set.join(","));
        }
        for ((i, state, action), j) in &witness.stutter_durations {
            println!("{kind} stutter[{i}][{state},{action}] = {j}");
        }
        if witness.approximate {
            println!("note: some values are solver-side decimal approximations");
        }
    }
    Ok(outcome.exit_code())
}

fn run_fixture(args: &FixtureArgs) -> Result<i32, String> {
    let fixture: CaseStudyFixture = match args.name.to_ascii_uppercase().as_str() {
        "CE" => {
            let (h1, h2) = match args.params.as_slice() {
                [] => (0, 1),
                [a, b] => (*a, *b),
                _ => return Err("CE takes two parameters: <h1> <h2>".to_string()),
            };
            build_ce(h1, h2).map_err(|e| e.to_string())?
        }
        "TL" => {
            let k = match args.params.as_slice() {
                [] => 1,
                [k] => *k,
                _ => return Err("TL takes one parameter: <key-length>".to_string()),
            };
            build_tl(k, args.restrict_l0).map_err(|e| e.to_string())?
        }
        "ACDB" => {
            if !args.params.is_empty() {
                return Err("ACDB takes no parameters".to_string());
            }
            build_acdb().map_err(|e| e.to_string())?
        }
        other => return Err(format!("unknown case study `{other}` (use CE, TL or ACDB)")),
    };
    std::fs::create_dir_all(&args.out)
        .map_err(|e| format!("cannot create `{}`: {e}", args.out.display()))?;
    let model_path = args.out.join("model.mdp");
    let formula_path = args.out.join("formula.txt");
    std::fs::write(&model_path, fixture.mdp.to_text())
        .map_err(|e| format!("cannot write `{}`: {e}", model_path.display()))?;
    std::fs::write(&formula_path, format!("{}\n", fixture.formula_text))
        .map_err(|e| format!("cannot write `{}`: {e}", formula_path.display()))?;
    println!(
        "{}: {} states, {} transitions",
        fixture.name,
        fixture.mdp.state_count(),
        fixture.transition_count()
    );
    for warning in fixture.count_warnings() {
        eprintln!("warning: {warning}");
    }
    println!("wrote {}", model_path.display());
    println!("wrote {}", formula_path.display());
    Ok(0)
}

fn run_validate(args: &ValidateArgs) -> Result<i32, String> {
    let mdp = load_model(&args.model)?;
    let violations = mdp.validate();
    if violations.is_empty() {
        println!("ok: {} states, no violations", mdp.state_count());
        Ok(0)
    } else {
        for v in &violations {
            println!("violation: {v}");
        }
        Ok(1)
    }
}
