//! Exact explicit-state evaluation: reachability probabilities by exact
//! linear solving, truth of non-quantified bodies on concrete
//! instantiations, and brute-force evaluation of the whole quantifier
//! prefix on small instances. This is the ground-truth reference the SMT
//! pipeline is checked against.

use std::collections::BTreeSet;

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::formula::{
    desugar, experiment_map, well_formed, ArithOp, CmpOp, HyperFormula, NonQuantFormula,
    PathFormula, ProbExpr, QuantKind, StutterRef,
};
use crate::model::{
    compose, indexed_ap, induce_dtmc, CountingStutterScheduler, Dtmc, Mdp, MemorylessScheduler,
    ModelError,
};
use crate::rational::Rational;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Formula(#[from] crate::formula::FormulaError),
    #[error("linear system is singular; the yes/no partition should prevent this")]
    SingularSystem,
    #[error("body contains sugar; desugar before evaluation")]
    NotDesugared,
    #[error("atom refers to stutter variable `{0}`; apply the experiment map first")]
    NotIndexed(String),
    #[error("state index {0} out of range")]
    BadState(usize),
    #[error("instantiation mismatch: {0}")]
    BadInstantiation(String),
    #[error("enumeration space too large: {size} exceeds cap {cap}")]
    TooLarge { size: u128, cap: u128 },
    #[error("model is not single-action: state `{0}` has {1} enabled actions")]
    NotSingleAction(String, usize),
}

// ---------------------------------------------------------------------------
// Reachability probabilities
// ---------------------------------------------------------------------------

/// Exact probabilities of `phi1 U phi2` from every state of `d`, by the
/// standard partition: 1 on phi2, 0 where phi2 cannot be reached through
/// phi1-states, and an exact linear solve for the rest.
pub fn until_vector(d: &Dtmc, phi1: &[bool], phi2: &[bool]) -> Result<Vec<Rational>, OracleError> {
    let n = d.state_count();
    assert_eq!(phi1.len(), n);
    assert_eq!(phi2.len(), n);
    // backward least fixpoint: states that can satisfy the until
    let mut can = phi2.to_vec();
    loop {
        let mut changed = false;
        for s in 0..n {
            if can[s] || !phi1[s] {
                continue;
            }
            if d.successors(s).any(|(t, _)| can[t]) {
                can[s] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let unknowns: Vec<usize> = (0..n).filter(|&s| can[s] && !phi2[s]).collect();
    let mut pos = vec![usize::MAX; n];
    for (i, &s) in unknowns.iter().enumerate() {
        pos[s] = i;
    }
    let k = unknowns.len();
    let mut matrix = vec![vec![Rational::zero(); k]; k];
    let mut rhs = vec![Rational::zero(); k];
    for (i, &s) in unknowns.iter().enumerate() {
        matrix[i][i] = Rational::one();
        for (t, p) in d.successors(s) {
            if phi2[t] {
                rhs[i] += p;
            } else if pos[t] != usize::MAX {
                matrix[i][pos[t]] -= p;
            }
        }
    }
    let solved = solve_linear(matrix, rhs)?;
    let mut out = vec![Rational::zero(); n];
    for s in 0..n {
        if phi2[s] {
            out[s] = Rational::one();
        } else if pos[s] != usize::MAX {
            out[s] = solved[pos[s]].clone();
        }
    }
    Ok(out)
}

/// Probability of `phi1 U phi2` from one state.
pub fn until_probability(
    d: &Dtmc,
    from: usize,
    phi1: &BTreeSet<usize>,
    phi2: &BTreeSet<usize>,
) -> Result<Rational, OracleError> {
    let n = d.state_count();
    if from >= n {
        return Err(OracleError::BadState(from));
    }
    let mask = |set: &BTreeSet<usize>| {
        let mut v = vec![false; n];
        for &s in set {
            v[s] = true;
        }
        v
    };
    Ok(until_vector(d, &mask(phi1), &mask(phi2))?[from].clone())
}

/// One-step probability mass into `phi`.
pub fn next_probability(
    d: &Dtmc,
    from: usize,
    phi: &BTreeSet<usize>,
) -> Result<Rational, OracleError> {
    if from >= d.state_count() {
        return Err(OracleError::BadState(from));
    }
    let mut sum = Rational::zero();
    for (t, p) in d.successors(from) {
        if phi.contains(&t) {
            sum += p;
        }
    }
    Ok(sum)
}

/// Exact Gaussian elimination with partial pivoting.
#[allow(clippy::needless_range_loop)] // two rows of one matrix are indexed
fn solve_linear(
    mut a: Vec<Vec<Rational>>,
    mut b: Vec<Rational>,
) -> Result<Vec<Rational>, OracleError> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .find(|&r| !a[r][col].is_zero())
            .ok_or(OracleError::SingularSystem)?;
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in col + 1..n {
            if a[r][col].is_zero() {
                continue;
            }
            let factor = &a[r][col] / &a[col][col];
            for c in col..n {
                let delta = &factor * &a[col][c];
                a[r][c] -= delta;
            }
            let delta = &factor * &b[col];
            b[r] -= delta;
        }
    }
    let mut x = vec![Rational::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row].clone();
        for c in row + 1..n {
            acc -= &a[row][c] * &x[c];
        }
        x[row] = acc / &a[row][row];
    }
    Ok(x)
}

// ---------------------------------------------------------------------------
// Body evaluation on a concrete instantiation
// ---------------------------------------------------------------------------

/// A concrete assignment for the quantifier prefix: one scheduler, `l` start
/// states, `n` counting stutter-schedulers, and the experiment map `k`
/// binding each experiment to the state quantifier it starts from.
#[derive(Debug, Clone)]
pub struct Instantiation {
    pub scheduler: MemorylessScheduler,
    pub start_states: Vec<usize>,
    pub stutterers: Vec<CountingStutterScheduler>,
    pub k: Vec<usize>,
}

/// Evaluates desugared, experiment-indexed bodies on the composed chain of
/// one (scheduler, stutter-scheduler tuple) choice. Satisfaction sets and
/// probability vectors cover every composed state, so evaluating many start
/// tuples against the same instantiation costs one analysis.
pub struct BodyEvaluator {
    chain: Dtmc,
    part_sizes: Vec<usize>,
    memories: Vec<usize>,
    k: Vec<usize>,
    tolerance: Option<Rational>,
}

impl BodyEvaluator {
    pub fn new(
        mdp: &Mdp,
        scheduler: &MemorylessScheduler,
        stutterers: &[CountingStutterScheduler],
        k: Vec<usize>,
    ) -> Result<Self, OracleError> {
        let parts = stutterers
            .iter()
            .map(|t| induce_dtmc(mdp, scheduler, t))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_chains(parts, stutterers.iter().map(|t| t.memory()).collect(), k)
    }

    /// Build from already-induced per-experiment chains.
    pub fn from_chains(
        parts: Vec<Dtmc>,
        memories: Vec<usize>,
        k: Vec<usize>,
    ) -> Result<Self, OracleError> {
        if parts.len() != k.len() || parts.len() != memories.len() {
            return Err(OracleError::BadInstantiation(format!(
                "{} chains, {} memories, {} experiment bindings",
                parts.len(),
                memories.len(),
                k.len()
            )));
        }
        let part_sizes = parts.iter().map(|d| d.state_count()).collect();
        let chain = compose(&parts)?;
        Ok(Self {
            chain,
            part_sizes,
            memories,
            k,
            tolerance: None,
        })
    }

    /// Compare probabilities with slack: `=` becomes |l-r| <= tol and the
    /// strict/weak orders are loosened by tol. Used to re-verify witnesses
    /// decoded from approximate solver output.
    pub fn with_tolerance(mut self, tolerance: Rational) -> Self {
        self.tolerance = Some(tolerance);
        self
    }

    pub fn chain(&self) -> &Dtmc {
        &self.chain
    }

    /// Flat index of the composed start state with every counter at 0, for
    /// start states chosen per state quantifier.
    pub fn start_index(&self, start_states: &[usize]) -> Result<usize, OracleError> {
        let mut idx = 0usize;
        for (i, (&ki, &size)) in self.k.iter().zip(&self.part_sizes).enumerate() {
            let s = *start_states.get(ki).ok_or_else(|| {
                OracleError::BadInstantiation(format!(
                    "experiment {} starts from state quantifier {} but only {} start states given",
                    i + 1,
                    ki + 1,
                    start_states.len()
                ))
            })?;
            let local = s * self.memories[i];
            if local >= size {
                return Err(OracleError::BadState(s));
            }
            idx = idx * size + local;
        }
        Ok(idx)
    }

    /// Satisfaction set of a desugared, indexed body over all composed states.
    pub fn sat_vector(&self, body: &NonQuantFormula) -> Result<Vec<bool>, OracleError> {
        let n = self.chain.state_count();
        use NonQuantFormula::*;
        Ok(match body {
            True => vec![true; n],
            False | Or(..) | Implies(..) => return Err(OracleError::NotDesugared),
            Atom { ap, exp } => {
                let i = match exp {
                    StutterRef::Experiment(i) => *i,
                    StutterRef::Var(v) => return Err(OracleError::NotIndexed(v.clone())),
                };
                let name = indexed_ap(ap, i);
                (0..n)
                    .map(|s| self.chain.labels(s).contains(&name))
                    .collect()
            }
            Not(x) => {
                let mut v = self.sat_vector(x)?;
                for b in &mut v {
                    *b = !*b;
                }
                v
            }
            And(a, b) => {
                let va = self.sat_vector(a)?;
                let vb = self.sat_vector(b)?;
                va.into_iter().zip(vb).map(|(x, y)| x && y).collect()
            }
            Compare(op, l, r) => {
                let vl = self.value_vector(l)?;
                let vr = self.value_vector(r)?;
                vl.into_iter()
                    .zip(vr)
                    .map(|(x, y)| self.compare(*op, &x, &y))
                    .collect()
            }
        })
    }

    fn compare(&self, op: CmpOp, l: &Rational, r: &Rational) -> bool {
        match &self.tolerance {
            None => op.eval(l, r),
            Some(tol) => match op {
                CmpOp::Eq => (l - r).abs() <= *tol,
                CmpOp::Ne => (l - r).abs() > *tol,
                CmpOp::Le => *l <= r + tol,
                CmpOp::Lt => *l < r + tol,
                CmpOp::Ge => *l >= r - tol,
                CmpOp::Gt => *l > r - tol,
            },
        }
    }

    /// Values of a probability expression at every composed state.
    pub fn value_vector(&self, expr: &ProbExpr) -> Result<Vec<Rational>, OracleError> {
        let n = self.chain.state_count();
        Ok(match expr {
            ProbExpr::Const(c) => vec![c.clone(); n],
            ProbExpr::Arith(op, l, r) => {
                let vl = self.value_vector(l)?;
                let vr = self.value_vector(r)?;
                vl.into_iter()
                    .zip(vr)
                    .map(|(x, y)| match op {
                        ArithOp::Add => x + y,
                        ArithOp::Sub => x - y,
                        ArithOp::Mul => x * y,
                    })
                    .collect()
            }
            ProbExpr::Prob(path) => match path.as_ref() {
                PathFormula::Next(x) => {
                    let sat = self.sat_vector(x)?;
                    (0..n)
                        .map(|s| {
                            self.chain
                                .successors(s)
                                .filter(|(t, _)| sat[*t])
                                .fold(Rational::zero(), |acc, (_, p)| acc + p)
                        })
                        .collect()
                }
                PathFormula::Until(a, b) => {
                    let sa = self.sat_vector(a)?;
                    let sb = self.sat_vector(b)?;
                    until_vector(&self.chain, &sa, &sb)?
                }
                PathFormula::Finally(_) | PathFormula::Globally(_) => {
                    return Err(OracleError::NotDesugared)
                }
            },
        })
    }

    /// Truth of the body at the composed start of the given start states.
    pub fn eval_at(
        &self,
        body: &NonQuantFormula,
        start_states: &[usize],
    ) -> Result<bool, OracleError> {
        let idx = self.start_index(start_states)?;
        Ok(self.sat_vector(body)?[idx])
    }
}

/// Truth of a desugared, indexed body under a concrete instantiation, at
/// the composed start state with all counters 0.
pub fn eval_body(
    mdp: &Mdp,
    inst: &Instantiation,
    body: &NonQuantFormula,
) -> Result<bool, OracleError> {
    let eval = BodyEvaluator::new(mdp, &inst.scheduler, &inst.stutterers, inst.k.clone())?;
    eval.eval_at(body, &inst.start_states)
}

/// [`eval_body`] with slack on probability comparisons.
pub fn eval_body_with_tolerance(
    mdp: &Mdp,
    inst: &Instantiation,
    body: &NonQuantFormula,
    tolerance: Rational,
) -> Result<bool, OracleError> {
    let eval = BodyEvaluator::new(mdp, &inst.scheduler, &inst.stutterers, inst.k.clone())?
        .with_tolerance(tolerance);
    eval.eval_at(body, &inst.start_states)
}

// ---------------------------------------------------------------------------
// Quantifier enumeration
// ---------------------------------------------------------------------------

/// How scheduler quantifiers are enumerated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SchedulerDomain {
    /// The model has exactly one enabled action per state; the single
    /// trivial scheduler covers the whole semantic domain.
    SingleAction,
    /// All deterministic action-set-uniform schedulers (a strict subset of
    /// the probabilistic domain).
    Deterministic,
    /// A rational grid over scheduler probabilities with the given step
    /// (must be 1/q for an integer q).
    Grid(Rational),
}

pub const DEFAULT_ENUMERATION_CAP: u128 = 1 << 20;

/// Outcome of an enumeration run. `conclusive` is false when the scheduler
/// domain only under-approximates the semantic domain and the quantified
/// verdict was not settled by a witness within it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationOutcome {
    pub holds: bool,
    pub conclusive: bool,
}

/// All counting stutter-schedulers for `mdp` with the given memory bound.
pub fn all_counting_stutterers(mdp: &Mdp, memory: usize) -> Vec<CountingStutterScheduler> {
    let mut pairs = Vec::new();
    for s in 0..mdp.state_count() {
        for &a in mdp.enabled_actions(s) {
            pairs.push((
                mdp.state_name(s).to_string(),
                mdp.action_name(a).to_string(),
            ));
        }
    }
    let mut out = Vec::new();
    let mut counters = vec![0usize; pairs.len()];
    loop {
        let durations = pairs
            .iter()
            .cloned()
            .zip(counters.iter().copied())
            .collect::<Vec<_>>();
        out.push(CountingStutterScheduler::new(memory, durations).expect("in range"));
        let mut i = pairs.len();
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            counters[i] += 1;
            if counters[i] < memory {
                break;
            }
            counters[i] = 0;
        }
    }
}

/// All deterministic action-set-uniform schedulers.
pub fn deterministic_schedulers(mdp: &Mdp) -> Vec<MemorylessScheduler> {
    let sets = mdp.occurring_action_sets();
    let mut out = Vec::new();
    let mut choice = vec![0usize; sets.len()];
    loop {
        let entries = sets
            .iter()
            .zip(&choice)
            .map(|(set, &c)| {
                let d = set
                    .iter()
                    .enumerate()
                    .map(|(i, a)| {
                        (
                            a.clone(),
                            if i == c {
                                Rational::one()
                            } else {
                                Rational::zero()
                            },
                        )
                    })
                    .collect();
                (set.clone(), d)
            })
            .collect();
        out.push(MemorylessScheduler::new(entries).expect("deterministic choice"));
        let mut i = sets.len();
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            choice[i] += 1;
            if choice[i] < sets[i].len() {
                break;
            }
            choice[i] = 0;
        }
    }
}

/// Grid schedulers with probabilities that are multiples of `step`.
fn grid_schedulers(mdp: &Mdp, step: &Rational) -> Result<Vec<MemorylessScheduler>, OracleError> {
    if step.is_zero() || !step.numer().is_one() || *step > Rational::one() {
        return Err(OracleError::BadInstantiation(format!(
            "grid step must be 1/q with q >= 1, got {step}"
        )));
    }
    let q: u64 = step
        .denom()
        .try_into()
        .map_err(|_| OracleError::BadInstantiation("grid step too fine".to_string()))?;
    let sets = mdp.occurring_action_sets();
    // per set: all compositions of q into |set| non-negative parts
    let mut per_set: Vec<Vec<Vec<(String, Rational)>>> = Vec::new();
    for set in &sets {
        let mut dists = Vec::new();
        let mut parts = vec![0u64; set.len()];
        compositions(q, set.len(), 0, &mut parts, &mut |parts| {
            dists.push(
                set.iter()
                    .zip(parts)
                    .map(|(a, &w)| {
                        (
                            a.clone(),
                            Rational::new((w as i64).into(), (q as i64).into()),
                        )
                    })
                    .collect(),
            );
        });
        per_set.push(dists);
    }
    let mut out = Vec::new();
    let mut choice = vec![0usize; sets.len()];
    loop {
        let entries = sets
            .iter()
            .zip(&choice)
            .enumerate()
            .map(|(i, (set, &c))| (set.clone(), per_set[i][c].clone()))
            .collect();
        out.push(MemorylessScheduler::new(entries).expect("grid distribution"));
        let mut i = sets.len();
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            choice[i] += 1;
            if choice[i] < per_set[i].len() {
                break;
            }
            choice[i] = 0;
        }
    }
}

fn compositions(
    remaining: u64,
    slots: usize,
    at: usize,
    parts: &mut Vec<u64>,
    emit: &mut impl FnMut(&Vec<u64>),
) {
    if at + 1 == slots {
        parts[at] = remaining;
        emit(parts);
        return;
    }
    for w in 0..=remaining {
        parts[at] = w;
        compositions(remaining - w, slots, at + 1, parts, emit);
    }
}

/// Evaluate the full quantifier prefix by finite enumeration: the scheduler
/// per `domain`, state quantifiers over all states, stutter quantifiers
/// over all counting stutter-schedulers with the given memory bound.
/// Refuses when the composed state space or the stutter-scheduler tuple
/// space exceeds `cap`.
pub fn check_by_enumeration(
    mdp: &Mdp,
    f: &HyperFormula,
    memory: usize,
    domain: SchedulerDomain,
    cap: u128,
) -> Result<EnumerationOutcome, OracleError> {
    well_formed(f)?;
    let (map, indexed) = experiment_map(f)?;
    let body = desugar(&indexed);
    let states = mdp.state_count();

    let composed = ((states as u128) * (memory as u128))
        .checked_pow(map.n as u32)
        .unwrap_or(u128::MAX);
    if composed > cap {
        return Err(OracleError::TooLarge {
            size: composed,
            cap,
        });
    }
    let pair_count: usize = (0..states).map(|s| mdp.enabled_actions(s).len()).sum();
    let per_exp = (memory as u128)
        .checked_pow(pair_count as u32)
        .unwrap_or(u128::MAX);
    let tau_total = per_exp.checked_pow(map.n as u32).unwrap_or(u128::MAX);
    if tau_total > cap {
        return Err(OracleError::TooLarge {
            size: tau_total,
            cap,
        });
    }

    let schedulers = match &domain {
        SchedulerDomain::SingleAction => {
            for s in 0..states {
                let count = mdp.enabled_actions(s).len();
                if count != 1 {
                    return Err(OracleError::NotSingleAction(
                        mdp.state_name(s).to_string(),
                        count,
                    ));
                }
            }
            deterministic_schedulers(mdp)
        }
        SchedulerDomain::Deterministic => deterministic_schedulers(mdp),
        SchedulerDomain::Grid(step) => grid_schedulers(mdp, step)?,
    };

    let stutterers = all_counting_stutterers(mdp, memory);
    let t_count = stutterers.len();

    let eval_for = |scheduler: &MemorylessScheduler| -> Result<bool, OracleError> {
        // per-candidate induced chains, shared by all experiment positions
        let induced = stutterers
            .iter()
            .map(|t| induce_dtmc(mdp, scheduler, t))
            .collect::<Result<Vec<_>, _>>()?;
        // satisfaction table per stutter-scheduler tuple
        let mut tables: Vec<Vec<bool>> = Vec::new();
        let mut tuple = vec![0usize; map.n];
        loop {
            let parts: Vec<Dtmc> = tuple.iter().map(|&i| induced[i].clone()).collect();
            let eval = BodyEvaluator::from_chains(parts, vec![memory; map.n], map.k.clone())?;
            tables.push(eval.sat_vector(&body)?);
            let mut i = map.n;
            loop {
                if i == 0 {
                    // all tables ready: fold the state quantifiers
                    return Ok(eval_state_level(
                        mdp,
                        f,
                        &map.k,
                        memory,
                        &tables,
                        t_count,
                        0,
                        &mut Vec::new(),
                    ));
                }
                i -= 1;
                tuple[i] += 1;
                if tuple[i] < t_count {
                    break;
                }
                tuple[i] = 0;
            }
        }
    };

    let exists_sched = f.sched_kind == QuantKind::Exists;
    let mut holds = !exists_sched;
    for scheduler in &schedulers {
        let value = eval_for(scheduler)?;
        if exists_sched && value {
            holds = true;
            break;
        }
        if !exists_sched && !value {
            holds = false;
            break;
        }
    }

    let conclusive = match domain {
        SchedulerDomain::SingleAction => true,
        // under-approximations settle the verdict only via a witness
        SchedulerDomain::Deterministic | SchedulerDomain::Grid(_) => holds == exists_sched,
    };
    Ok(EnumerationOutcome { holds, conclusive })
}

#[allow(clippy::too_many_arguments)]
fn eval_state_level(
    mdp: &Mdp,
    f: &HyperFormula,
    k: &[usize],
    memory: usize,
    tables: &[Vec<bool>],
    t_count: usize,
    level: usize,
    chosen: &mut Vec<usize>,
) -> bool {
    if level == f.state_quants.len() {
        return eval_stutter_level(
            mdp,
            f,
            k,
            memory,
            tables,
            t_count,
            0,
            &mut Vec::new(),
            chosen,
        );
    }
    let exists = f.state_quants[level].kind == QuantKind::Exists;
    for s in 0..mdp.state_count() {
        chosen.push(s);
        let v = eval_state_level(mdp, f, k, memory, tables, t_count, level + 1, chosen);
        chosen.pop();
        if exists && v {
            return true;
        }
        if !exists && !v {
            return false;
        }
    }
    !exists
}

#[allow(clippy::too_many_arguments)]
fn eval_stutter_level(
    mdp: &Mdp,
    f: &HyperFormula,
    k: &[usize],
    memory: usize,
    tables: &[Vec<bool>],
    t_count: usize,
    level: usize,
    tau_choice: &mut Vec<usize>,
    states: &[usize],
) -> bool {
    if level == f.stutter_quants.len() {
        let table_idx = tau_choice.iter().fold(0usize, |acc, &i| acc * t_count + i);
        let start = k.iter().fold(0usize, |acc, &ki| {
            acc * mdp.state_count() * memory + states[ki] * memory
        });
        return tables[table_idx][start];
    }
    let exists = f.stutter_quants[level].kind == QuantKind::Exists;
    for i in 0..t_count {
        tau_choice.push(i);
        let v = eval_stutter_level(
            mdp,
            f,
            k,
            memory,
            tables,
            t_count,
            level + 1,
            tau_choice,
            states,
        );
        tau_choice.pop();
        if exists && v {
            return true;
        }
        if !exists && !v {
            return false;
        }
    }
    !exists
}
