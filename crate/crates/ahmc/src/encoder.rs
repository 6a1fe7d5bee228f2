//! Compilation of (MDP, hyperproperty, memory bound) into a quantifier-free
//! nonlinear real-arithmetic constraint system.
//!
//! The system has three blocks: scheduler/stutter choice (probability
//! simplex per occurring action set, one bounded counter per experiment,
//! state and action, plus the go/tr successor machinery), the semantics of
//! every subformula at every relevant composed state, and the truth block
//! folding the state quantifiers over the composed start states.
//!
//! Identical subformulas share one set of semantic variables. With the
//! relevant-quantifier reduction enabled (the default), holds/prob
//! variables are indexed only by the experiments occurring in their
//! subformula; disabling it indexes every subformula by all experiments.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use num_traits::One;
use thiserror::Error;

use crate::formula::{
    desugar, experiment_map, prefix_class, well_formed, ArithOp, CmpOp, ExperimentMap,
    HyperFormula, NonQuantFormula, PathFormula, PrefixClass, ProbExpr, QuantKind, StutterRef,
};
use crate::model::{succ_plus, Mdp, ModelError};
use crate::rational::{smtlib_real, Rational};

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error(transparent)]
    Formula(#[from] crate::formula::FormulaError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("unsupported fragment: {0}")]
    UnsupportedFragment(String),
    #[error("internal: encountered sugar after desugaring")]
    NotDesugared,
}

// ---------------------------------------------------------------------------
// Terms and variables
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sort {
    Bool,
    Real,
}

/// Why a variable exists; carries enough indexing to decode witnesses and
/// to audit variable counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VarRole {
    /// Scheduler probability for (action set, action).
    Sigma { set: Vec<String>, action: String },
    /// Stutter duration for (experiment, state, action); integer-valued real.
    Tau {
        experiment: usize,
        state: String,
        action: String,
    },
    /// Successor selector in {0,1} for one potential transition.
    Go { experiment: usize },
    /// Transition weight of one potential transition.
    Tr { experiment: usize },
    /// Truth of a Boolean subformula at a composed state.
    Holds {
        subformula: usize,
        key: Vec<(usize, usize)>,
    },
    /// {0,1} mirror of a holds variable (next-step encoding).
    HoldsInt {
        subformula: usize,
        key: Vec<(usize, usize)>,
    },
    /// Value of a probability expression at a composed state.
    Prob {
        subformula: usize,
        key: Vec<(usize, usize)>,
    },
    /// Ranking value forcing least-fixpoint semantics of an until.
    Rank {
        subformula: usize,
        key: Vec<(usize, usize)>,
    },
}

#[derive(Debug, Clone)]
pub struct VarDecl {
    pub name: String,
    pub sort: Sort,
    pub role: VarRole,
}

/// SMT term over registered variables.
#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    BoolLit(bool),
    Num(Rational),
    Var(usize),
    Not(Box<Term>),
    And(Vec<Term>),
    Or(Vec<Term>),
    Implies(Box<Term>, Box<Term>),
    Iff(Box<Term>, Box<Term>),
    Xor(Box<Term>, Box<Term>),
    Add(Vec<Term>),
    Mul(Vec<Term>),
    Sub(Box<Term>, Box<Term>),
    Cmp(CmpOp, Box<Term>, Box<Term>),
}

impl Term {
    fn num(r: Rational) -> Term {
        Term::Num(r)
    }

    fn int(n: i64) -> Term {
        Term::Num(crate::rational::int(n))
    }

    fn eq(l: Term, r: Term) -> Term {
        Term::Cmp(CmpOp::Eq, Box::new(l), Box::new(r))
    }
}

/// Which subformulas produce which variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubKind {
    Boolean,
    Probability,
}

/// Flattened subformula node; children are subformula ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SubNode {
    True,
    Atom { ap: String, experiment: usize },
    Not(usize),
    And(usize, usize),
    Compare(CmpOp, usize, usize),
    ProbNext(usize),
    ProbUntil(usize, usize),
    Const(Rational),
    Arith(ArithOp, usize, usize),
}

#[derive(Debug, Clone)]
pub struct Subformula {
    pub node: SubNode,
    pub kind: SubKind,
    /// 1-based experiments occurring in the subformula.
    pub experiments: BTreeSet<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct EncodeMetrics {
    pub variables: usize,
    pub assertions: usize,
    pub subformulas: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct EncodeOptions {
    /// Index holds/prob variables only by the experiments occurring in the
    /// subformula instead of all of them.
    pub relevant_quantifiers: bool,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        Self {
            relevant_quantifiers: true,
        }
    }
}

/// The generated constraint system: declarations, assertions, subformula
/// table and metrics. Emission order is deterministic; identical inputs
/// produce byte-identical SMT-LIB text.
#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    vars: Vec<VarDecl>,
    assertions: Vec<Term>,
    subformulas: Vec<Subformula>,
    body_id: usize,
}

impl ConstraintSystem {
    pub fn vars(&self) -> &[VarDecl] {
        &self.vars
    }

    pub fn assertions(&self) -> &[Term] {
        &self.assertions
    }

    pub fn subformulas(&self) -> &[Subformula] {
        &self.subformulas
    }

    /// Id of the body's root subformula.
    pub fn body_id(&self) -> usize {
        self.body_id
    }

    pub fn metrics(&self) -> EncodeMetrics {
        EncodeMetrics {
            variables: self.vars.len(),
            assertions: self.assertions.len(),
            subformulas: self.subformulas.len(),
        }
    }

    pub fn find_var(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    /// Ids of until subformulas, in table order.
    pub fn until_ids(&self) -> Vec<usize> {
        self.subformulas
            .iter()
            .enumerate()
            .filter(|(_, s)| matches!(s.node, SubNode::ProbUntil(..)))
            .map(|(i, _)| i)
            .collect()
    }

    /// Names of the scheduler and stutter variables, the model values a
    /// witness is decoded from.
    pub fn witness_query_vars(&self) -> Vec<&VarDecl> {
        self.vars
            .iter()
            .filter(|v| matches!(v.role, VarRole::Sigma { .. } | VarRole::Tau { .. }))
            .collect()
    }

    /// Render the whole system as SMT-LIB 2 text ending in `(check-sat)`.
    pub fn to_smtlib(&self) -> String {
        let mut out = String::new();
        out.push_str("(set-option :produce-models true)\n");
        out.push_str("(set-logic QF_NRA)\n");
        for v in &self.vars {
            let sort = match v.sort {
                Sort::Bool => "Bool",
                Sort::Real => "Real",
            };
            let _ = writeln!(out, "(declare-const {} {})", v.name, sort);
        }
        for a in &self.assertions {
            out.push_str("(assert ");
            self.write_term(&mut out, a);
            out.push_str(")\n");
        }
        out.push_str("(check-sat)\n");
        out
    }

    fn write_term(&self, out: &mut String, t: &Term) {
        match t {
            Term::BoolLit(true) => out.push_str("true"),
            Term::BoolLit(false) => out.push_str("false"),
            Term::Num(r) => out.push_str(&smtlib_real(r)),
            Term::Var(i) => out.push_str(&self.vars[*i].name),
            Term::Not(x) => {
                out.push_str("(not ");
                self.write_term(out, x);
                out.push(')');
            }
            Term::And(xs) => self.write_nary(out, "and", xs, "true"),
            Term::Or(xs) => self.write_nary(out, "or", xs, "false"),
            Term::Implies(a, b) => self.write_binary(out, "=>", a, b),
            Term::Iff(a, b) => self.write_binary(out, "=", a, b),
            Term::Xor(a, b) => self.write_binary(out, "xor", a, b),
            Term::Add(xs) => self.write_nary(out, "+", xs, "0.0"),
            Term::Mul(xs) => self.write_nary(out, "*", xs, "1.0"),
            Term::Sub(a, b) => self.write_binary(out, "-", a, b),
            Term::Cmp(op, a, b) => match op {
                CmpOp::Ne => {
                    out.push_str("(not ");
                    self.write_binary(out, "=", a, b);
                    out.push(')');
                }
                CmpOp::Le => self.write_binary(out, "<=", a, b),
                CmpOp::Lt => self.write_binary(out, "<", a, b),
                CmpOp::Eq => self.write_binary(out, "=", a, b),
                CmpOp::Gt => self.write_binary(out, ">", a, b),
                CmpOp::Ge => self.write_binary(out, ">=", a, b),
            },
        }
    }

    fn write_nary(&self, out: &mut String, op: &str, xs: &[Term], empty: &str) {
        match xs.len() {
            0 => out.push_str(empty),
            1 => self.write_term(out, &xs[0]),
            _ => {
                out.push('(');
                out.push_str(op);
                for x in xs {
                    out.push(' ');
                    self.write_term(out, x);
                }
                out.push(')');
            }
        }
    }

    fn write_binary(&self, out: &mut String, op: &str, a: &Term, b: &Term) {
        out.push('(');
        out.push_str(op);
        out.push(' ');
        self.write_term(out, a);
        out.push(' ');
        self.write_term(out, b);
        out.push(')');
    }
}

/// A decoded satisfying assignment of the scheduler/stutter variables.
#[derive(Debug, Clone)]
pub struct Witness {
    /// (sorted action set, action) -> probability.
    pub scheduler_probs: BTreeMap<(Vec<String>, String), Rational>,
    /// (experiment, state, action) -> stutter duration.
    pub stutter_durations: BTreeMap<(usize, String, String), usize>,
    /// True when any decoded value was a flagged approximation of an
    /// algebraic real.
    pub approximate: bool,
}

impl Witness {
    pub fn to_scheduler(&self) -> Result<crate::model::MemorylessScheduler, ModelError> {
        let mut per_set: BTreeMap<Vec<String>, Vec<(String, Rational)>> = BTreeMap::new();
        for ((set, action), p) in &self.scheduler_probs {
            per_set
                .entry(set.clone())
                .or_default()
                .push((action.clone(), p.clone()));
        }
        crate::model::MemorylessScheduler::new(per_set.into_iter().collect())
    }

    pub fn to_stutterers(
        &self,
        experiments: usize,
        memory: usize,
    ) -> Result<Vec<crate::model::CountingStutterScheduler>, ModelError> {
        (1..=experiments)
            .map(|i| {
                let durations = self
                    .stutter_durations
                    .iter()
                    .filter(|((e, _, _), _)| *e == i)
                    .map(|((_, s, a), &j)| ((s.clone(), a.clone()), j))
                    .collect();
                crate::model::CountingStutterScheduler::new(memory, durations)
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Subformula table
// ---------------------------------------------------------------------------

struct SubTable {
    subs: Vec<Subformula>,
    intern: BTreeMap<String, usize>,
}

impl SubTable {
    fn new() -> Self {
        Self {
            subs: Vec::new(),
            intern: BTreeMap::new(),
        }
    }

    fn add(&mut self, node: SubNode, kind: SubKind) -> usize {
        let key = match &node {
            SubNode::True => "T".to_string(),
            SubNode::Atom { ap, experiment } => format!("a:{ap}@{experiment}"),
            SubNode::Not(x) => format!("!:{x}"),
            SubNode::And(a, b) => format!("&:{a},{b}"),
            SubNode::Compare(op, l, r) => format!("c{op}:{l},{r}"),
            SubNode::ProbNext(x) => format!("X:{x}"),
            SubNode::ProbUntil(a, b) => format!("U:{a},{b}"),
            SubNode::Const(c) => format!("k:{c}"),
            SubNode::Arith(op, l, r) => format!("r{op}:{l},{r}"),
        };
        if let Some(&id) = self.intern.get(&key) {
            return id;
        }
        let experiments = match &node {
            SubNode::True | SubNode::Const(_) => BTreeSet::new(),
            SubNode::Atom { experiment, .. } => [*experiment].into_iter().collect(),
            SubNode::Not(x) | SubNode::ProbNext(x) => self.subs[*x].experiments.clone(),
            SubNode::And(a, b)
            | SubNode::Compare(_, a, b)
            | SubNode::ProbUntil(a, b)
            | SubNode::Arith(_, a, b) => self.subs[*a]
                .experiments
                .union(&self.subs[*b].experiments)
                .copied()
                .collect(),
        };
        let id = self.subs.len();
        self.subs.push(Subformula {
            node,
            kind,
            experiments,
        });
        self.intern.insert(key, id);
        id
    }

    fn of_formula(&mut self, f: &NonQuantFormula) -> Result<usize, EncodeError> {
        use NonQuantFormula::*;
        Ok(match f {
            True => self.add(SubNode::True, SubKind::Boolean),
            False | Or(..) | Implies(..) => return Err(EncodeError::NotDesugared),
            Atom { ap, exp } => {
                let experiment = match exp {
                    StutterRef::Experiment(i) => *i,
                    StutterRef::Var(v) => {
                        return Err(EncodeError::Formula(crate::formula::FormulaError::Unbound(
                            v.clone(),
                        )))
                    }
                };
                self.add(
                    SubNode::Atom {
                        ap: ap.clone(),
                        experiment,
                    },
                    SubKind::Boolean,
                )
            }
            Not(x) => {
                let c = self.of_formula(x)?;
                self.add(SubNode::Not(c), SubKind::Boolean)
            }
            And(a, b) => {
                let ca = self.of_formula(a)?;
                let cb = self.of_formula(b)?;
                self.add(SubNode::And(ca, cb), SubKind::Boolean)
            }
            Compare(op, l, r) => {
                let cl = self.of_expr(l)?;
                let cr = self.of_expr(r)?;
                self.add(SubNode::Compare(*op, cl, cr), SubKind::Boolean)
            }
        })
    }

    fn of_expr(&mut self, e: &ProbExpr) -> Result<usize, EncodeError> {
        Ok(match e {
            ProbExpr::Const(c) => self.add(SubNode::Const(c.clone()), SubKind::Probability),
            ProbExpr::Arith(op, l, r) => {
                let cl = self.of_expr(l)?;
                let cr = self.of_expr(r)?;
                self.add(SubNode::Arith(*op, cl, cr), SubKind::Probability)
            }
            ProbExpr::Prob(path) => match path.as_ref() {
                PathFormula::Next(x) => {
                    let c = self.of_formula(x)?;
                    self.add(SubNode::ProbNext(c), SubKind::Probability)
                }
                PathFormula::Until(a, b) => {
                    let ca = self.of_formula(a)?;
                    let cb = self.of_formula(b)?;
                    self.add(SubNode::ProbUntil(ca, cb), SubKind::Probability)
                }
                PathFormula::Finally(_) | PathFormula::Globally(_) => {
                    return Err(EncodeError::NotDesugared)
                }
            },
        })
    }
}

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

/// Drives the three encoding blocks over one (model, body, memory) triple.
pub struct Encoder<'a> {
    mdp: &'a Mdp,
    map: ExperimentMap,
    memory: usize,
    options: EncodeOptions,
    table: SubTable,
    body_id: usize,
    vars: Vec<VarDecl>,
    assertions: Vec<Term>,
    sigma: BTreeMap<(usize, usize), usize>,
    tau: BTreeMap<(usize, usize, usize), usize>,
    go: BTreeMap<(usize, usize, usize, usize, usize, usize), usize>,
    tr: BTreeMap<(usize, usize, usize, usize, usize, usize), usize>,
    holds: BTreeMap<(usize, Vec<(usize, usize)>), usize>,
    holds_int: BTreeMap<(usize, Vec<(usize, usize)>), usize>,
    prob: BTreeMap<(usize, Vec<(usize, usize)>), usize>,
    rank: BTreeMap<(usize, Vec<(usize, usize)>), usize>,
    channeled: BTreeSet<usize>,
    action_sets: Vec<Vec<usize>>,
    set_of_state: Vec<usize>,
}

impl<'a> Encoder<'a> {
    /// Prepare an encoder for the desugared, experiment-indexed `body`.
    pub fn new(
        mdp: &'a Mdp,
        map: ExperimentMap,
        body: &NonQuantFormula,
        memory: usize,
        options: EncodeOptions,
    ) -> Result<Self, EncodeError> {
        let mut table = SubTable::new();
        let body_id = table.of_formula(body)?;
        // occurring action sets as sorted action-index lists, first-use order
        let mut action_sets: Vec<Vec<usize>> = Vec::new();
        let mut set_of_state = Vec::with_capacity(mdp.state_count());
        for s in 0..mdp.state_count() {
            let mut set = mdp.enabled_actions(s).to_vec();
            set.sort();
            let idx = action_sets
                .iter()
                .position(|x| *x == set)
                .unwrap_or_else(|| {
                    action_sets.push(set.clone());
                    action_sets.len() - 1
                });
            set_of_state.push(idx);
        }
        Ok(Self {
            mdp,
            map,
            memory,
            options,
            table,
            body_id,
            vars: Vec::new(),
            assertions: Vec::new(),
            sigma: BTreeMap::new(),
            tau: BTreeMap::new(),
            go: BTreeMap::new(),
            tr: BTreeMap::new(),
            holds: BTreeMap::new(),
            holds_int: BTreeMap::new(),
            prob: BTreeMap::new(),
            rank: BTreeMap::new(),
            channeled: BTreeSet::new(),
            action_sets,
            set_of_state,
        })
    }

    fn fresh(&mut self, name: String, sort: Sort, role: VarRole) -> usize {
        self.vars.push(VarDecl { name, sort, role });
        self.vars.len() - 1
    }

    fn assert(&mut self, t: Term) {
        self.assertions.push(t);
    }

    fn set_name(&self, set_idx: usize) -> String {
        self.action_sets[set_idx]
            .iter()
            .map(|&a| self.mdp.action_name(a))
            .collect::<Vec<_>>()
            .join(".")
    }

    fn set_names(&self, set_idx: usize) -> Vec<String> {
        self.action_sets[set_idx]
            .iter()
            .map(|&a| self.mdp.action_name(a).to_string())
            .collect()
    }

    fn sigma_var(&mut self, set_idx: usize, action: usize) -> usize {
        if let Some(&v) = self.sigma.get(&(set_idx, action)) {
            return v;
        }
        let name = format!(
            "sigma_{}_{}",
            self.set_name(set_idx),
            self.mdp.action_name(action)
        );
        let v = self.fresh(
            name,
            Sort::Real,
            VarRole::Sigma {
                set: self.set_names(set_idx),
                action: self.mdp.action_name(action).to_string(),
            },
        );
        self.sigma.insert((set_idx, action), v);
        v
    }

    fn tau_var(&mut self, experiment: usize, s: usize, a: usize) -> usize {
        if let Some(&v) = self.tau.get(&(experiment, s, a)) {
            return v;
        }
        let name = format!(
            "tau_{experiment}_{}_{}",
            self.mdp.state_name(s),
            self.mdp.action_name(a)
        );
        let v = self.fresh(
            name,
            Sort::Real,
            VarRole::Tau {
                experiment,
                state: self.mdp.state_name(s).to_string(),
                action: self.mdp.action_name(a).to_string(),
            },
        );
        self.tau.insert((experiment, s, a), v);
        v
    }

    #[allow(clippy::too_many_arguments)]
    fn go_tr_var(
        &mut self,
        is_go: bool,
        i: usize,
        s: usize,
        j: usize,
        a: usize,
        t: usize,
        tj: usize,
    ) -> usize {
        let map = if is_go { &self.go } else { &self.tr };
        if let Some(&v) = map.get(&(i, s, j, a, t, tj)) {
            return v;
        }
        let prefix = if is_go { "go" } else { "tr" };
        let name = format!(
            "{prefix}_{i}_{}.{j}_{}_{}.{tj}",
            self.mdp.state_name(s),
            self.mdp.action_name(a),
            self.mdp.state_name(t)
        );
        let role = if is_go {
            VarRole::Go { experiment: i }
        } else {
            VarRole::Tr { experiment: i }
        };
        let v = self.fresh(name, Sort::Real, role);
        if is_go {
            self.go.insert((i, s, j, a, t, tj), v);
        } else {
            self.tr.insert((i, s, j, a, t, tj), v);
        }
        v
    }

    fn key_name(key: &[(usize, usize)], mdp: &Mdp) -> String {
        if key.is_empty() {
            return "nil".to_string();
        }
        key.iter()
            .map(|&(s, j)| format!("{}.{j}", mdp.state_name(s)))
            .collect::<Vec<_>>()
            .join(".")
    }

    fn holds_var(&mut self, sub: usize, key: Vec<(usize, usize)>) -> usize {
        if let Some(&v) = self.holds.get(&(sub, key.clone())) {
            return v;
        }
        let name = format!("holds_{}_f{sub}", Self::key_name(&key, self.mdp));
        let v = self.fresh(
            name,
            Sort::Bool,
            VarRole::Holds {
                subformula: sub,
                key: key.clone(),
            },
        );
        self.holds.insert((sub, key), v);
        v
    }

    fn holds_int_var(&mut self, sub: usize, key: Vec<(usize, usize)>) -> usize {
        if let Some(&v) = self.holds_int.get(&(sub, key.clone())) {
            return v;
        }
        let name = format!("hint_{}_f{sub}", Self::key_name(&key, self.mdp));
        let v = self.fresh(
            name,
            Sort::Real,
            VarRole::HoldsInt {
                subformula: sub,
                key: key.clone(),
            },
        );
        self.holds_int.insert((sub, key), v);
        v
    }

    fn prob_var(&mut self, sub: usize, key: Vec<(usize, usize)>) -> usize {
        if let Some(&v) = self.prob.get(&(sub, key.clone())) {
            return v;
        }
        let name = format!("prob_{}_f{sub}", Self::key_name(&key, self.mdp));
        let v = self.fresh(
            name,
            Sort::Real,
            VarRole::Prob {
                subformula: sub,
                key: key.clone(),
            },
        );
        self.prob.insert((sub, key), v);
        v
    }

    fn rank_var(&mut self, sub: usize, key: Vec<(usize, usize)>) -> usize {
        if let Some(&v) = self.rank.get(&(sub, key.clone())) {
            return v;
        }
        let name = format!("d_{}_f{sub}", Self::key_name(&key, self.mdp));
        let v = self.fresh(
            name,
            Sort::Real,
            VarRole::Rank {
                subformula: sub,
                key: key.clone(),
            },
        );
        self.rank.insert((sub, key), v);
        v
    }

    /// Sorted experiment list a subformula's variables are indexed by.
    fn plate(&self, sub: usize) -> Vec<usize> {
        if self.options.relevant_quantifiers {
            self.table.subs[sub].experiments.iter().copied().collect()
        } else {
            (1..=self.map.n).collect()
        }
    }

    /// All (state, counter) tuples for the given experiment list.
    fn plate_states(&self, exps: &[usize]) -> Vec<Vec<(usize, usize)>> {
        let n = self.mdp.state_count();
        let mut out = Vec::new();
        let mut current = vec![(0usize, 0usize); exps.len()];
        loop {
            out.push(current.clone());
            let mut i = exps.len();
            loop {
                if i == 0 {
                    return out;
                }
                i -= 1;
                let (ref mut s, ref mut j) = current[i];
                *j += 1;
                if *j < self.memory {
                    break;
                }
                *j = 0;
                *s += 1;
                if *s < n {
                    break;
                }
                *s = 0;
            }
        }
    }

    /// Project a tuple over `outer` experiments to the `inner` subset.
    fn project(outer: &[usize], key: &[(usize, usize)], inner: &[usize]) -> Vec<(usize, usize)> {
        inner
            .iter()
            .map(|e| {
                let pos = outer
                    .iter()
                    .position(|o| o == e)
                    .expect("child plate inside parent");
                key[pos]
            })
            .collect()
    }

    /// Scheduler choice: a probability simplex per occurring action set.
    pub fn scheduler_choice(&mut self) {
        for set_idx in 0..self.action_sets.len() {
            let actions = self.action_sets[set_idx].clone();
            let mut sum = Vec::new();
            for a in actions {
                let v = self.sigma_var(set_idx, a);
                self.assert(Term::Cmp(
                    CmpOp::Ge,
                    Box::new(Term::Var(v)),
                    Box::new(Term::int(0)),
                ));
                self.assert(Term::Cmp(
                    CmpOp::Le,
                    Box::new(Term::Var(v)),
                    Box::new(Term::int(1)),
                ));
                sum.push(Term::Var(v));
            }
            self.assert(Term::eq(Term::Add(sum), Term::int(1)));
        }
    }

    /// Stutter choice: each duration variable takes a value in [0, m).
    pub fn stutter_choice(&mut self) {
        for i in 1..=self.map.n {
            for s in 0..self.mdp.state_count() {
                for &a in self.mdp.enabled_actions(s) {
                    let v = self.tau_var(i, s, a);
                    let choices = (0..self.memory)
                        .map(|j| Term::eq(Term::Var(v), Term::int(j as i64)))
                        .collect();
                    self.assert(Term::Or(choices));
                }
            }
        }
    }

    /// Successor machinery: go in {0,1} switched by the stutter counter
    /// against the duration, tr carrying the transition weight.
    pub fn go_tr(&mut self) -> Result<(), EncodeError> {
        for i in 1..=self.map.n {
            for s in 0..self.mdp.state_count() {
                for j in 0..self.memory {
                    for &a in self.mdp.enabled_actions(s) {
                        for (t, tj) in succ_plus(self.mdp, s, j, a, self.memory)? {
                            let go = self.go_tr_var(true, i, s, j, a, t, tj);
                            let tau = self.tau_var(i, s, a);
                            self.assert(Term::Or(vec![
                                Term::eq(Term::Var(go), Term::int(0)),
                                Term::eq(Term::Var(go), Term::int(1)),
                            ]));
                            // stutter edges are taken below the duration,
                            // proceed edges at or above it
                            let active = if tj == j + 1 {
                                Term::Cmp(
                                    CmpOp::Gt,
                                    Box::new(Term::Var(tau)),
                                    Box::new(Term::int(j as i64)),
                                )
                            } else {
                                Term::Cmp(
                                    CmpOp::Le,
                                    Box::new(Term::Var(tau)),
                                    Box::new(Term::int(j as i64)),
                                )
                            };
                            self.assert(Term::Iff(
                                Box::new(Term::eq(Term::Var(go), Term::int(1))),
                                Box::new(active),
                            ));
                            let tr = self.go_tr_var(false, i, s, j, a, t, tj);
                            let weight = if tj == j + 1 {
                                Rational::one()
                            } else {
                                self.mdp.prob(s, a, t)
                            };
                            self.assert(Term::eq(Term::Var(tr), Term::num(weight)));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Semantics of every subformula at every relevant composed state.
    pub fn semantics(&mut self) -> Result<(), EncodeError> {
        for sub in 0..self.table.subs.len() {
            self.encode_subformula(sub)?;
        }
        Ok(())
    }

    fn encode_subformula(&mut self, sub: usize) -> Result<(), EncodeError> {
        let node = self.table.subs[sub].node.clone();
        let exps = self.plate(sub);
        match node {
            SubNode::True => {
                for key in self.plate_states(&exps) {
                    let h = self.holds_var(sub, key);
                    self.assert(Term::Var(h));
                }
            }
            SubNode::Atom { ap, experiment } => {
                for key in self.plate_states(&exps) {
                    let h = self.holds_var(sub, key.clone());
                    let pos = exps
                        .iter()
                        .position(|&e| e == experiment)
                        .expect("atom experiment in plate");
                    let labeled = self.mdp.labels(key[pos].0).contains(&ap);
                    if labeled {
                        self.assert(Term::Var(h));
                    } else {
                        self.assert(Term::Not(Box::new(Term::Var(h))));
                    }
                }
            }
            SubNode::Not(x) => {
                let child_exps = self.plate(x);
                for key in self.plate_states(&exps) {
                    let h = self.holds_var(sub, key.clone());
                    let ck = Self::project(&exps, &key, &child_exps);
                    let hx = self.holds_var(x, ck);
                    self.assert(Term::Xor(Box::new(Term::Var(h)), Box::new(Term::Var(hx))));
                }
            }
            SubNode::And(a, b) => {
                let ea = self.plate(a);
                let eb = self.plate(b);
                for key in self.plate_states(&exps) {
                    let h = self.holds_var(sub, key.clone());
                    let ha = self.holds_var(a, Self::project(&exps, &key, &ea));
                    let hb = self.holds_var(b, Self::project(&exps, &key, &eb));
                    let both = Term::And(vec![Term::Var(ha), Term::Var(hb)]);
                    self.assert(Term::Or(vec![
                        Term::And(vec![Term::Var(h), both.clone()]),
                        Term::And(vec![
                            Term::Not(Box::new(Term::Var(h))),
                            Term::Not(Box::new(both)),
                        ]),
                    ]));
                }
            }
            SubNode::Compare(op, l, r) => {
                let el = self.plate(l);
                let er = self.plate(r);
                for key in self.plate_states(&exps) {
                    let h = self.holds_var(sub, key.clone());
                    let pl = self.prob_var(l, Self::project(&exps, &key, &el));
                    let pr = self.prob_var(r, Self::project(&exps, &key, &er));
                    let cmp = Term::Cmp(op, Box::new(Term::Var(pl)), Box::new(Term::Var(pr)));
                    let ncmp = Term::Cmp(
                        op.negated(),
                        Box::new(Term::Var(pl)),
                        Box::new(Term::Var(pr)),
                    );
                    self.assert(Term::Or(vec![
                        Term::And(vec![Term::Var(h), cmp]),
                        Term::And(vec![Term::Not(Box::new(Term::Var(h))), ncmp]),
                    ]));
                }
            }
            SubNode::Const(c) => {
                for key in self.plate_states(&exps) {
                    let p = self.prob_var(sub, key);
                    self.assert(Term::eq(Term::Var(p), Term::num(c.clone())));
                }
            }
            SubNode::Arith(op, l, r) => {
                let el = self.plate(l);
                let er = self.plate(r);
                for key in self.plate_states(&exps) {
                    let p = self.prob_var(sub, key.clone());
                    let pl = Term::Var(self.prob_var(l, Self::project(&exps, &key, &el)));
                    let pr = Term::Var(self.prob_var(r, Self::project(&exps, &key, &er)));
                    let rhs = match op {
                        ArithOp::Add => Term::Add(vec![pl, pr]),
                        ArithOp::Sub => Term::Sub(Box::new(pl), Box::new(pr)),
                        ArithOp::Mul => Term::Mul(vec![pl, pr]),
                    };
                    self.assert(Term::eq(Term::Var(p), rhs));
                }
            }
            SubNode::ProbNext(x) => self.encode_next(sub, x)?,
            SubNode::ProbUntil(a, b) => self.encode_until(sub, a, b)?,
        }
        Ok(())
    }

    /// {0,1} mirror of the child's holds variables, once per child.
    fn channel_holds_int(&mut self, x: usize) {
        if !self.channeled.insert(x) {
            return;
        }
        let exps = self.plate(x);
        for key in self.plate_states(&exps) {
            let h = self.holds_var(x, key.clone());
            let hi = self.holds_int_var(x, key);
            self.assert(Term::Or(vec![
                Term::And(vec![Term::eq(Term::Var(hi), Term::int(1)), Term::Var(h)]),
                Term::And(vec![
                    Term::eq(Term::Var(hi), Term::int(0)),
                    Term::Not(Box::new(Term::Var(h))),
                ]),
            ]));
        }
    }

    /// Action tuples over the plate: per experiment an enabled action of
    /// its current state.
    fn action_tuples(&self, exps: &[usize], key: &[(usize, usize)]) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new()];
        for (pos, _) in exps.iter().enumerate() {
            let acts = self.mdp.enabled_actions(key[pos].0);
            let mut next = Vec::with_capacity(out.len() * acts.len());
            for prefix in &out {
                for &a in acts {
                    let mut item = prefix.clone();
                    item.push(a);
                    next.push(item);
                }
            }
            out = next;
        }
        out
    }

    /// Potential successor tuples under an action tuple.
    fn successor_tuples(
        &self,
        exps: &[usize],
        key: &[(usize, usize)],
        actions: &[usize],
    ) -> Result<Vec<Vec<(usize, usize)>>, EncodeError> {
        let mut out = vec![Vec::new()];
        for (pos, _) in exps.iter().enumerate() {
            let (s, j) = key[pos];
            let succs = succ_plus(self.mdp, s, j, actions[pos], self.memory)?;
            let mut next = Vec::with_capacity(out.len() * succs.len());
            for prefix in &out {
                for &sj in &succs {
                    let mut item = prefix.clone();
                    item.push(sj);
                    next.push(item);
                }
            }
            out = next;
        }
        Ok(out)
    }

    /// Product of sigma, go and tr factors across the plate for one
    /// (source, action tuple, successor tuple) choice.
    fn step_factors(
        &mut self,
        exps: &[usize],
        key: &[(usize, usize)],
        actions: &[usize],
        succ: &[(usize, usize)],
        include_tr: bool,
    ) -> Vec<Term> {
        let mut factors = Vec::new();
        for (pos, &e) in exps.iter().enumerate() {
            let (s, j) = key[pos];
            let a = actions[pos];
            let (t, tj) = succ[pos];
            let sigma = self.sigma_var(self.set_of_state[s], a);
            factors.push(Term::Var(sigma));
            let go = self.go_tr_var(true, e, s, j, a, t, tj);
            factors.push(Term::Var(go));
            if include_tr {
                let tr = self.go_tr_var(false, e, s, j, a, t, tj);
                factors.push(Term::Var(tr));
            }
        }
        factors
    }

    fn encode_next(&mut self, sub: usize, x: usize) -> Result<(), EncodeError> {
        self.channel_holds_int(x);
        let exps = self.plate(sub);
        let child_exps = self.plate(x);
        for key in self.plate_states(&exps) {
            let p = self.prob_var(sub, key.clone());
            self.assert(Term::Cmp(
                CmpOp::Ge,
                Box::new(Term::Var(p)),
                Box::new(Term::int(0)),
            ));
            self.assert(Term::Cmp(
                CmpOp::Le,
                Box::new(Term::Var(p)),
                Box::new(Term::int(1)),
            ));
            let mut summands = Vec::new();
            for actions in self.action_tuples(&exps, &key) {
                for succ in self.successor_tuples(&exps, &key, &actions)? {
                    let mut factors = self.step_factors(&exps, &key, &actions, &succ, true);
                    let ck = Self::project(&exps, &succ, &child_exps);
                    let hi = self.holds_int_var(x, ck);
                    factors.push(Term::Var(hi));
                    summands.push(Term::Mul(factors));
                }
            }
            self.assert(Term::eq(Term::Var(p), Term::Add(summands)));
        }
        Ok(())
    }

    fn encode_until(&mut self, sub: usize, a: usize, b: usize) -> Result<(), EncodeError> {
        let exps = self.plate(sub);
        let ea = self.plate(a);
        let eb = self.plate(b);
        for key in self.plate_states(&exps) {
            let p = self.prob_var(sub, key.clone());
            self.assert(Term::Cmp(
                CmpOp::Ge,
                Box::new(Term::Var(p)),
                Box::new(Term::int(0)),
            ));
            self.assert(Term::Cmp(
                CmpOp::Le,
                Box::new(Term::Var(p)),
                Box::new(Term::int(1)),
            ));
            let ha = self.holds_var(a, Self::project(&exps, &key, &ea));
            let hb = self.holds_var(b, Self::project(&exps, &key, &eb));
            self.assert(Term::Implies(
                Box::new(Term::Var(hb)),
                Box::new(Term::eq(Term::Var(p), Term::int(1))),
            ));
            self.assert(Term::Implies(
                Box::new(Term::And(vec![
                    Term::Not(Box::new(Term::Var(ha))),
                    Term::Not(Box::new(Term::Var(hb))),
                ])),
                Box::new(Term::eq(Term::Var(p), Term::int(0))),
            ));

            // the interesting case: phi1 holds, phi2 does not
            let mut summands = Vec::new();
            let mut witnesses = Vec::new();
            let d_here = self.rank_var(sub, key.clone());
            for actions in self.action_tuples(&exps, &key) {
                for succ in self.successor_tuples(&exps, &key, &actions)? {
                    let mut factors = self.step_factors(&exps, &key, &actions, &succ, true);
                    let p_succ = self.prob_var(sub, succ.clone());
                    factors.push(Term::Var(p_succ));
                    summands.push(Term::Mul(factors));

                    let sel = self.step_factors(&exps, &key, &actions, &succ, false);
                    let hb_succ = self.holds_var(b, Self::project(&exps, &succ, &eb));
                    let d_succ = self.rank_var(sub, succ.clone());
                    witnesses.push(Term::And(vec![
                        Term::Cmp(CmpOp::Gt, Box::new(Term::Mul(sel)), Box::new(Term::int(0))),
                        Term::Or(vec![
                            Term::Var(hb_succ),
                            Term::Cmp(
                                CmpOp::Gt,
                                Box::new(Term::Var(d_here)),
                                Box::new(Term::Var(d_succ)),
                            ),
                        ]),
                    ]));
                }
            }
            let middle = Term::And(vec![
                Term::eq(Term::Var(p), Term::Add(summands)),
                Term::Implies(
                    Box::new(Term::Cmp(
                        CmpOp::Gt,
                        Box::new(Term::Var(p)),
                        Box::new(Term::int(0)),
                    )),
                    Box::new(Term::Or(witnesses)),
                ),
            ]);
            self.assert(Term::Implies(
                Box::new(Term::And(vec![
                    Term::Var(ha),
                    Term::Not(Box::new(Term::Var(hb))),
                ])),
                Box::new(middle),
            ));
        }
        Ok(())
    }

    /// Truth block: fold the state quantifiers over the holds variable of
    /// the body at the composed start states (all counters 0).
    pub fn truth(&mut self, quants: &[QuantKind], k: &[usize]) -> Result<(), EncodeError> {
        let term = self.truth_level(quants, k, 0, &mut Vec::new());
        self.assert(term);
        Ok(())
    }

    fn truth_level(
        &mut self,
        quants: &[QuantKind],
        k: &[usize],
        level: usize,
        chosen: &mut Vec<usize>,
    ) -> Term {
        if level == quants.len() {
            let exps = self.plate(self.body_id);
            let key: Vec<(usize, usize)> =
                exps.iter().map(|&e| (chosen[k[e - 1]], 0usize)).collect();
            let h = self.holds_var(self.body_id, key);
            return Term::Var(h);
        }
        let mut children = Vec::with_capacity(self.mdp.state_count());
        for s in 0..self.mdp.state_count() {
            chosen.push(s);
            children.push(self.truth_level(quants, k, level + 1, chosen));
            chosen.pop();
        }
        match quants[level] {
            QuantKind::Forall => Term::And(children),
            QuantKind::Exists => Term::Or(children),
        }
    }

    /// Consume the encoder into the finished system.
    pub fn finish(self) -> ConstraintSystem {
        ConstraintSystem {
            vars: self.vars,
            assertions: self.assertions,
            subformulas: self.table.subs,
            body_id: self.body_id,
        }
    }
}

/// Compile the full system for a formula in the existential fragment
/// (existential scheduler and stutter quantifiers; state quantifiers free).
/// Universal-prefix formulas must be dualized first. The model is assumed
/// to pass [`Mdp::validate`].
pub fn encode(
    mdp: &Mdp,
    f: &HyperFormula,
    memory: usize,
    options: EncodeOptions,
) -> Result<ConstraintSystem, EncodeError> {
    well_formed(f)?;
    match prefix_class(f) {
        PrefixClass::Existential => {}
        PrefixClass::Universal => {
            return Err(EncodeError::UnsupportedFragment(
                "universal prefix: dualize with negate_prefix first".to_string(),
            ))
        }
        PrefixClass::Mixed => {
            return Err(EncodeError::UnsupportedFragment(
                "mixed scheduler/stutter quantifier alternation".to_string(),
            ))
        }
    }
    let (map, indexed) = experiment_map(f)?;
    let body = desugar(&indexed);
    let quants: Vec<QuantKind> = f.state_quants.iter().map(|q| q.kind).collect();
    let k = map.k.clone();
    let mut enc = Encoder::new(mdp, map, &body, memory, options)?;
    enc.scheduler_choice();
    enc.stutter_choice();
    enc.go_tr()?;
    enc.semantics()?;
    enc.truth(&quants, &k)?;
    Ok(enc.finish())
}
