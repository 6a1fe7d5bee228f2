//! External SMT solver driver: writes the system as an SMT-LIB script,
//! runs one solver process per check, enforces the timeout by killing the
//! child, and decodes verdicts and witnesses from the output.
//!
//! Interaction is file-based and one-shot (script ending in `(check-sat)`
//! followed by a single `(get-value ...)`), which works across solver
//! binaries without relying on interactive mode.

use std::collections::BTreeMap;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::encoder::{encode, ConstraintSystem, EncodeError, EncodeOptions, VarRole, Witness};
use crate::formula::{negate_prefix, prefix_class, FormulaError, HyperFormula, PrefixClass};
use crate::model::Mdp;
use crate::rational::{ratio, Rational};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("failed to start solver `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed solver output: {0}")]
    Malformed(String),
    #[error("bad witness: {0}")]
    BadWitness(String),
}

/// Errors of the combined encode-and-solve pipeline.
#[derive(Debug, Error)]
pub enum CheckError {
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Sat,
    Unsat,
    Unknown,
    Timeout,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::Sat => "sat",
            Verdict::Unsat => "unsat",
            Verdict::Unknown => "unknown",
            Verdict::Timeout => "timeout",
        };
        write!(f, "{s}")
    }
}

/// A value reported by the solver; `approximate` marks decimals the solver
/// flagged as rounded algebraic reals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Value {
    pub rational: Rational,
    pub approximate: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverStats {
    pub wall_time: Duration,
    pub variables: usize,
    pub assertions: usize,
}

#[derive(Debug)]
pub struct SolverResult {
    pub verdict: Verdict,
    pub witness: Option<Witness>,
    /// All queried values by variable name (scheduler/stutter variables
    /// plus any extra queries).
    pub values: BTreeMap<String, Value>,
    pub stats: SolverStats,
    /// Everything the solver printed (partial when it was killed on
    /// timeout); useful to distinguish solver-side parse errors.
    pub raw_output: String,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Solver command line; the script path is appended as the last
    /// argument. Whitespace-separated (e.g. `z3` or `cvc5 --no-stats`).
    pub command: String,
    pub timeout: Option<Duration>,
    /// Extra variable names to query on SAT, e.g. a probability variable.
    pub extra_queries: Vec<String>,
}

pub const SOLVER_ENV_VAR: &str = "AHMC_SOLVER";

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            command: std::env::var(SOLVER_ENV_VAR).unwrap_or_else(|_| "z3".to_string()),
            timeout: None,
            extra_queries: Vec::new(),
        }
    }
}

impl SolverConfig {
    pub fn with_timeout_secs(mut self, secs: u64) -> Self {
        self.timeout = Some(Duration::from_secs(secs));
        self
    }
}

/// Run the solver on the system, decode the verdict, and on SAT decode the
/// scheduler/stutter witness plus any extra queried values. A timeout kills
/// and reaps the child and yields the `Timeout` verdict rather than an
/// error.
pub fn run_solver(
    system: &ConstraintSystem,
    config: &SolverConfig,
) -> Result<SolverResult, SolverError> {
    let queries: Vec<String> = system
        .witness_query_vars()
        .iter()
        .map(|v| v.name.clone())
        .chain(config.extra_queries.iter().cloned())
        .collect();
    let script = build_script(system, &queries, false);
    let started = Instant::now();
    let metrics = system.metrics();
    let stats = |wall: Duration| SolverStats {
        wall_time: wall,
        variables: metrics.variables,
        assertions: metrics.assertions,
    };

    let output = match run_once(&config.command, &script, config.timeout)? {
        RunOutcome::Finished(text) => text,
        RunOutcome::TimedOut(partial) => {
            return Ok(SolverResult {
                verdict: Verdict::Timeout,
                witness: None,
                values: BTreeMap::new(),
                stats: stats(started.elapsed()),
                raw_output: partial,
            })
        }
    };
    let (verdict, mut rest) = parse_verdict(&output)?;
    let mut values = BTreeMap::new();
    if verdict == Verdict::Sat && !queries.is_empty() {
        if rest.contains("root-obj") {
            // algebraic reals: rerun asking for flagged decimal
            // approximations instead
            let script = build_script(system, &queries, true);
            match run_once(&config.command, &script, config.timeout)? {
                RunOutcome::Finished(text) => {
                    let (v2, rest2) = parse_verdict(&text)?;
                    if v2 != Verdict::Sat {
                        return Err(SolverError::Malformed(format!(
                            "decimal rerun produced verdict {v2}"
                        )));
                    }
                    rest = rest2;
                }
                RunOutcome::TimedOut(partial) => {
                    return Ok(SolverResult {
                        verdict: Verdict::Timeout,
                        witness: None,
                        values: BTreeMap::new(),
                        stats: stats(started.elapsed()),
                        raw_output: partial,
                    })
                }
            }
        }
        values = parse_values(&rest)?;
    }
    let witness = if verdict == Verdict::Sat {
        Some(decode_witness(system, &values)?)
    } else {
        None
    };
    Ok(SolverResult {
        verdict,
        witness,
        values,
        stats: stats(started.elapsed()),
        raw_output: output,
    })
}

fn build_script(system: &ConstraintSystem, queries: &[String], decimal: bool) -> String {
    let mut script = String::new();
    if decimal {
        script.push_str("(set-option :pp.decimal true)\n");
        script.push_str("(set-option :pp.decimal_precision 30)\n");
    }
    script.push_str(&system.to_smtlib());
    if !queries.is_empty() {
        script.push_str("(get-value (");
        script.push_str(&queries.join(" "));
        script.push_str("))\n");
    }
    script
}

enum RunOutcome {
    Finished(String),
    /// Killed at the deadline; carries whatever output was flushed.
    TimedOut(String),
}

fn run_once(
    command: &str,
    script: &str,
    timeout: Option<Duration>,
) -> Result<RunOutcome, SolverError> {
    let dir = tempfile::tempdir()?;
    let script_path = dir.path().join("query.smt2");
    std::fs::write(&script_path, script)?;
    let stdout_path = dir.path().join("stdout.txt");
    let stdout_file = std::fs::File::create(&stdout_path)?;
    let stderr_file = stdout_file.try_clone()?;

    let mut words = command.split_whitespace();
    let program = words.next().unwrap_or("z3");
    let mut cmd = Command::new(program);
    cmd.args(words)
        .arg(&script_path)
        .stdin(Stdio::null())
        .stdout(Stdio::from(stdout_file))
        .stderr(Stdio::from(stderr_file));
    let mut child = cmd.spawn().map_err(|source| SolverError::Spawn {
        command: command.to_string(),
        source,
    })?;

    let deadline = timeout.map(|t| Instant::now() + t);
    loop {
        if let Some(status) = child.try_wait()? {
            let _ = status;
            break;
        }
        if let Some(d) = deadline {
            if Instant::now() >= d {
                child.kill().ok();
                child.wait()?; // reap
                let partial = std::fs::read_to_string(&stdout_path).unwrap_or_default();
                return Ok(RunOutcome::TimedOut(partial));
            }
        }
        std::thread::sleep(Duration::from_millis(2));
    }
    Ok(RunOutcome::Finished(std::fs::read_to_string(&stdout_path)?))
}

/// Split solver output into the verdict and the remaining text.
fn parse_verdict(output: &str) -> Result<(Verdict, String), SolverError> {
    for (i, line) in output.lines().enumerate() {
        let verdict = match line.trim() {
            "sat" => Verdict::Sat,
            "unsat" => Verdict::Unsat,
            "unknown" => Verdict::Unknown,
            "timeout" => Verdict::Timeout,
            _ => continue,
        };
        let rest = output.lines().skip(i + 1).collect::<Vec<_>>().join("\n");
        return Ok((verdict, rest));
    }
    Err(SolverError::Malformed(format!(
        "no verdict line in solver output: {}",
        output.lines().take(5).collect::<Vec<_>>().join(" | ")
    )))
}

// ---------------------------------------------------------------------------
// Value parsing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

fn parse_sexps(input: &str) -> Result<Vec<Sexp>, SolverError> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for c in input.chars() {
        match c {
            '(' | ')' => {
                if !cur.is_empty() {
                    tokens.push(std::mem::take(&mut cur));
                }
                tokens.push(c.to_string());
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    tokens.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
    for t in tokens {
        match t.as_str() {
            "(" => stack.push(Vec::new()),
            ")" => {
                let done = stack
                    .pop()
                    .ok_or_else(|| SolverError::Malformed("unbalanced )".to_string()))?;
                stack
                    .last_mut()
                    .ok_or_else(|| SolverError::Malformed("unbalanced )".to_string()))?
                    .push(Sexp::List(done));
            }
            _ => stack.last_mut().unwrap().push(Sexp::Atom(t)),
        }
    }
    if stack.len() != 1 {
        return Err(SolverError::Malformed("unbalanced (".to_string()));
    }
    Ok(stack.pop().unwrap())
}

/// Parse one solver-printed value: integers, decimals (`?`-flagged ones are
/// approximations), `(/ a b)`, `(- x)`, and the Booleans.
fn parse_value(sexp: &Sexp) -> Result<Value, SolverError> {
    match sexp {
        Sexp::Atom(a) => {
            if a == "true" {
                return Ok(Value {
                    rational: Rational::one(),
                    approximate: false,
                });
            }
            if a == "false" {
                return Ok(Value {
                    rational: Rational::zero(),
                    approximate: false,
                });
            }
            let (text, approximate) = match a.strip_suffix('?') {
                Some(t) => (t, true),
                None => (a.as_str(), false),
            };
            let negative = text.starts_with('-');
            let trimmed = text.trim_start_matches('-');
            let mut rational = crate::rational::parse_rational(trimmed)
                .map_err(|e| SolverError::Malformed(format!("bad numeral `{a}`: {e}")))?;
            if negative {
                rational = -rational;
            }
            Ok(Value {
                rational,
                approximate,
            })
        }
        Sexp::List(items) => match items.as_slice() {
            [Sexp::Atom(op), x] if op == "-" => {
                let v = parse_value(x)?;
                Ok(Value {
                    rational: -v.rational,
                    approximate: v.approximate,
                })
            }
            [Sexp::Atom(op), a, b] if op == "/" => {
                let num = parse_value(a)?;
                let den = parse_value(b)?;
                if den.rational.is_zero() {
                    return Err(SolverError::Malformed("division by zero".to_string()));
                }
                Ok(Value {
                    rational: num.rational / den.rational,
                    approximate: num.approximate || den.approximate,
                })
            }
            _ => Err(SolverError::Malformed(format!(
                "unsupported value shape: {sexp:?}"
            ))),
        },
    }
}

/// Parse the `((name value) ...)` block of a get-value answer.
fn parse_values(text: &str) -> Result<BTreeMap<String, Value>, SolverError> {
    let mut out = BTreeMap::new();
    for top in parse_sexps(text)? {
        let Sexp::List(pairs) = top else { continue };
        for pair in pairs {
            if let Sexp::List(items) = pair {
                if let [Sexp::Atom(name), value] = items.as_slice() {
                    out.insert(name.clone(), parse_value(value)?);
                }
            }
        }
    }
    Ok(out)
}

/// Decode scheduler probabilities and stutter durations from queried
/// values, validating the witness invariants: distributions sum to 1
/// within 1e-9 per action set and durations are integral.
fn decode_witness(
    system: &ConstraintSystem,
    values: &BTreeMap<String, Value>,
) -> Result<Witness, SolverError> {
    let mut witness = Witness {
        scheduler_probs: BTreeMap::new(),
        stutter_durations: BTreeMap::new(),
        approximate: false,
    };
    let slack = ratio(1, 1_000_000_000);
    for decl in system.witness_query_vars() {
        let value = values.get(&decl.name).ok_or_else(|| {
            SolverError::Malformed(format!("no value for `{}` in solver output", decl.name))
        })?;
        witness.approximate |= value.approximate;
        match &decl.role {
            VarRole::Sigma { set, action } => {
                witness
                    .scheduler_probs
                    .insert((set.clone(), action.clone()), value.rational.clone());
            }
            VarRole::Tau {
                experiment,
                state,
                action,
            } => {
                let rounded = value.rational.round();
                if (&value.rational - &rounded).abs() > slack {
                    return Err(SolverError::BadWitness(format!(
                        "duration `{}` = {} is not integral",
                        decl.name, value.rational
                    )));
                }
                let j: i64 = rounded.to_integer().try_into().map_err(|_| {
                    SolverError::BadWitness(format!("duration `{}` out of range", decl.name))
                })?;
                if j < 0 {
                    return Err(SolverError::BadWitness(format!(
                        "duration `{}` is negative",
                        decl.name
                    )));
                }
                witness
                    .stutter_durations
                    .insert((*experiment, state.clone(), action.clone()), j as usize);
            }
            _ => {}
        }
    }
    // per-set distributions must sum to 1
    let mut sums: BTreeMap<Vec<String>, Rational> = BTreeMap::new();
    for ((set, _), p) in &witness.scheduler_probs {
        *sums.entry(set.clone()).or_insert_with(Rational::zero) += p;
    }
    for (set, sum) in sums {
        if (sum.clone() - Rational::one()).abs() > slack {
            return Err(SolverError::BadWitness(format!(
                "scheduler distribution for {{{}}} sums to {sum}",
                set.join(", ")
            )));
        }
    }
    Ok(witness)
}

// ---------------------------------------------------------------------------
// Verdict reporting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Holds,
    Fails,
    Unknown,
    Timeout,
}

impl std::fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CheckStatus::Holds => "holds",
            CheckStatus::Fails => "fails",
            CheckStatus::Unknown => "unknown",
            CheckStatus::Timeout => "timeout",
        };
        write!(f, "{s}")
    }
}

/// Final outcome of a check: the property verdict, whether it was reached
/// through dualization, and the raw solver result (whose witness is a
/// counterexample instantiation when `dualized`).
#[derive(Debug)]
pub struct CheckOutcome {
    pub status: CheckStatus,
    pub dualized: bool,
    pub result: SolverResult,
}

impl CheckOutcome {
    /// Process exit code: 0 holds, 1 fails, 2 unknown/timeout.
    pub fn exit_code(&self) -> i32 {
        match self.status {
            CheckStatus::Holds => 0,
            CheckStatus::Fails => 1,
            CheckStatus::Unknown | CheckStatus::Timeout => 2,
        }
    }
}

/// Map a solver verdict to the property verdict. For existential prefixes
/// SAT means the property holds; for dualized (originally universal)
/// prefixes SAT refutes the property and UNSAT establishes it.
pub fn report_verdict(result: SolverResult, dualized: bool) -> CheckOutcome {
    let status = match (result.verdict, dualized) {
        (Verdict::Sat, false) => CheckStatus::Holds,
        (Verdict::Unsat, false) => CheckStatus::Fails,
        (Verdict::Sat, true) => CheckStatus::Fails,
        (Verdict::Unsat, true) => CheckStatus::Holds,
        (Verdict::Unknown, _) => CheckStatus::Unknown,
        (Verdict::Timeout, _) => CheckStatus::Timeout,
    };
    CheckOutcome {
        status,
        dualized,
        result,
    }
}

/// Full pipeline: route the prefix (dualizing universal ones), encode,
/// solve, and report. Returns the outcome together with the encoded system.
pub fn check_smt(
    mdp: &Mdp,
    f: &HyperFormula,
    memory: usize,
    options: EncodeOptions,
    config: &SolverConfig,
) -> Result<(CheckOutcome, ConstraintSystem), CheckError> {
    let (target, dualized) = match prefix_class(f) {
        PrefixClass::Existential => (f.clone(), false),
        PrefixClass::Universal => (negate_prefix(f)?, true),
        PrefixClass::Mixed => {
            return Err(CheckError::Formula(FormulaError::UnsupportedFragment(
                "mixed scheduler/stutter quantifier alternation".to_string(),
            )))
        }
    };
    let system = encode(mdp, &target, memory, options)?;
    let result = run_solver(&system, config)?;
    Ok((report_verdict(result, dualized), system))
}
