//! Markov decision processes, Markov chains, restricted schedulers and
//! counting stutter-schedulers, plus the product constructions that give the
//! per-experiment and composed chains the rest of the crate works on.
//!
//! Probabilities are exact rationals throughout. State and action ids are
//! strings; all orderings follow declaration order, so every derived artifact
//! (variable names, emitted files) is deterministic.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::rational::{parse_rational, Rational};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("duplicate state `{0}`")]
    DuplicateState(String),
    #[error("duplicate action `{action}` for state `{state}`")]
    DuplicateAction { state: String, action: String },
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("duplicate successor `{succ}` in distribution of ({state}, {action})")]
    DuplicateSuccessor {
        state: String,
        action: String,
        succ: String,
    },
    #[error("action `{action}` is not enabled in state `{state}`")]
    NotEnabled { state: String, action: String },
    #[error("stutter counter {j} out of range [0, {memory})")]
    StutterOutOfRange { j: usize, memory: usize },
    #[error("scheduler has no distribution for action set {{{}}}", .0.join(", "))]
    SchedulerMissingActionSet(Vec<String>),
    #[error("bad distribution: {0}")]
    BadDistribution(String),
    #[error("stutter duration {duration} for ({state}, {action}) exceeds memory bound {memory}")]
    BadStutterDuration {
        state: String,
        action: String,
        duration: usize,
        memory: usize,
    },
    #[error("memory bound must be at least 1")]
    ZeroMemory,
    #[error("cannot compose an empty list of DTMCs")]
    EmptyComposition,
    #[error("malformed DTMC: {0}")]
    MalformedDtmc(String),
}

/// A probability distribution over named targets (successor states or
/// actions).
pub type Distribution = Vec<(String, Rational)>;

/// Identifiers in models are plain names: letter or `_`, then letters,
/// digits or `_`. Keeping them this tame makes the derived SMT variable
/// names unambiguous.
pub fn valid_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

// ---------------------------------------------------------------------------
// MDP
// ---------------------------------------------------------------------------

/// A finite MDP with labeled states and action-indexed distributions.
///
/// Construction does not enforce the probabilistic invariants; use
/// [`Mdp::validate`] to obtain the list of violations. An action counts as
/// enabled in a state exactly when its row sums to 1.
#[derive(Debug, Clone)]
pub struct Mdp {
    states: Vec<String>,
    state_index: HashMap<String, usize>,
    aps: Vec<String>,
    labels: Vec<BTreeSet<String>>,
    actions: Vec<String>,
    action_index: HashMap<String, usize>,
    rows: BTreeMap<(usize, usize), Vec<(usize, Rational)>>,
    enabled: Vec<Vec<usize>>,
}

/// One violated MDP invariant; diagnostics name the state/action involved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NoEnabledAction {
        state: String,
    },
    BadRowSum {
        state: String,
        action: String,
        sum: Rational,
    },
    ProbOutOfRange {
        state: String,
        action: String,
        succ: String,
        prob: Rational,
    },
    UndeclaredAp {
        state: String,
        ap: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoEnabledAction { state } => {
                write!(f, "state `{state}` has no enabled action")
            }
            Violation::BadRowSum { state, action, sum } => write!(
                f,
                "distribution of ({state}, {action}) sums to {sum}, expected exactly 0 or 1"
            ),
            Violation::ProbOutOfRange {
                state,
                action,
                succ,
                prob,
            } => write!(
                f,
                "probability {prob} of ({state}, {action}) -> {succ} lies outside [0, 1]"
            ),
            Violation::UndeclaredAp { state, ap } => {
                write!(
                    f,
                    "state `{state}` is labeled with undeclared proposition `{ap}`"
                )
            }
        }
    }
}

impl Mdp {
    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn state_name(&self, s: usize) -> &str {
        &self.states[s]
    }

    pub fn state_id(&self, name: &str) -> Option<usize> {
        self.state_index.get(name).copied()
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn action_name(&self, a: usize) -> &str {
        &self.actions[a]
    }

    pub fn action_id(&self, name: &str) -> Option<usize> {
        self.action_index.get(name).copied()
    }

    pub fn aps(&self) -> &[String] {
        &self.aps
    }

    pub fn labels(&self, s: usize) -> &BTreeSet<String> {
        &self.labels[s]
    }

    /// The declared distribution of (state, action), if any.
    pub fn action_row(&self, s: usize, a: usize) -> Option<&[(usize, Rational)]> {
        self.rows.get(&(s, a)).map(|v| v.as_slice())
    }

    /// Transition probability P(s, a, s'); absent entries are 0.
    pub fn prob(&self, s: usize, a: usize, succ: usize) -> Rational {
        self.rows
            .get(&(s, a))
            .and_then(|row| row.iter().find(|(t, _)| *t == succ))
            .map(|(_, p)| p.clone())
            .unwrap_or_else(Rational::zero)
    }

    /// Indices of the actions enabled in `s` (rows summing to exactly 1).
    pub fn enabled_actions(&self, s: usize) -> &[usize] {
        &self.enabled[s]
    }

    /// Name-based variant; errors on unknown state ids.
    pub fn enabled_actions_of(&self, state: &str) -> Result<Vec<String>, ModelError> {
        let s = self
            .state_id(state)
            .ok_or_else(|| ModelError::UnknownState(state.to_string()))?;
        Ok(self.enabled[s]
            .iter()
            .map(|&a| self.actions[a].clone())
            .collect())
    }

    /// The enabled action set of `s` as sorted action names, the key shape
    /// used by [`MemorylessScheduler`].
    pub fn action_set(&self, s: usize) -> Vec<String> {
        let mut set: Vec<String> = self.enabled[s]
            .iter()
            .map(|&a| self.actions[a].clone())
            .collect();
        set.sort();
        set
    }

    /// Distinct enabled action sets in first-occurrence order over states.
    pub fn occurring_action_sets(&self) -> Vec<Vec<String>> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for s in 0..self.state_count() {
            let set = self.action_set(s);
            if seen.insert(set.clone()) {
                out.push(set);
            }
        }
        out
    }

    /// Check all structural invariants; empty iff the MDP is well-formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let declared: BTreeSet<&String> = self.aps.iter().collect();
        for ((s, a), row) in &self.rows {
            let mut sum = Rational::zero();
            for (succ, p) in row {
                if p.is_negative() || *p > Rational::one() {
                    out.push(Violation::ProbOutOfRange {
                        state: self.states[*s].clone(),
                        action: self.actions[*a].clone(),
                        succ: self.states[*succ].clone(),
                        prob: p.clone(),
                    });
                }
                sum += p;
            }
            if !sum.is_zero() && !sum.is_one() {
                out.push(Violation::BadRowSum {
                    state: self.states[*s].clone(),
                    action: self.actions[*a].clone(),
                    sum,
                });
            }
        }
        for s in 0..self.state_count() {
            if self.enabled[s].is_empty() {
                out.push(Violation::NoEnabledAction {
                    state: self.states[s].clone(),
                });
            }
            for ap in &self.labels[s] {
                if !declared.contains(ap) {
                    out.push(Violation::UndeclaredAp {
                        state: self.states[s].clone(),
                        ap: ap.clone(),
                    });
                }
            }
        }
        out
    }

    /// Parse the line-based `.mdp` text format.
    pub fn parse(text: &str) -> Result<Mdp, ModelError> {
        parse_mdp(text)
    }

    /// Render in the `.mdp` text format (inverse of [`Mdp::parse`] up to
    /// comments and whitespace).
    pub fn to_text(&self) -> String {
        let mut out = String::from("mdp\n");
        for (s, name) in self.states.iter().enumerate() {
            out.push_str("state ");
            out.push_str(name);
            for ap in &self.labels[s] {
                out.push(' ');
                out.push_str(ap);
            }
            out.push('\n');
        }
        for ((s, a), row) in &self.rows {
            out.push_str(&format!(
                "action {} {} :",
                self.states[*s], self.actions[*a]
            ));
            for (i, (succ, p)) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&format!(" {} {}", self.states[*succ], p));
            }
            out.push('\n');
        }
        out
    }
}

/// Incremental MDP constructor used by the text parser and the case-study
/// generators. Duplicate declarations are rejected; successor states may be
/// declared after first use.
#[derive(Debug, Default)]
pub struct MdpBuilder {
    states: Vec<(String, Vec<String>)>,
    actions: Vec<(String, String, Distribution)>,
    extra_aps: Vec<String>,
}

impl MdpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn state<S: Into<String>>(&mut self, id: S, labels: &[&str]) -> &mut Self {
        self.states
            .push((id.into(), labels.iter().map(|s| s.to_string()).collect()));
        self
    }

    pub fn action<S: Into<String>, A: Into<String>>(
        &mut self,
        state: S,
        action: A,
        dist: &[(&str, Rational)],
    ) -> &mut Self {
        self.actions.push((
            state.into(),
            action.into(),
            dist.iter()
                .map(|(t, p)| (t.to_string(), p.clone()))
                .collect(),
        ));
        self
    }

    /// Declare an atomic proposition that may not occur on any state.
    pub fn ap<S: Into<String>>(&mut self, name: S) -> &mut Self {
        self.extra_aps.push(name.into());
        self
    }

    pub fn finish(self) -> Result<Mdp, ModelError> {
        let mut states = Vec::new();
        let mut state_index = HashMap::new();
        let mut labels = Vec::new();
        let mut aps = Vec::new();
        let mut ap_seen = BTreeSet::new();
        for ap in &self.extra_aps {
            if ap_seen.insert(ap.clone()) {
                aps.push(ap.clone());
            }
        }
        for (id, labs) in self.states {
            if state_index.contains_key(&id) {
                return Err(ModelError::DuplicateState(id));
            }
            state_index.insert(id.clone(), states.len());
            states.push(id);
            let mut set = BTreeSet::new();
            for ap in labs {
                if ap_seen.insert(ap.clone()) {
                    aps.push(ap.clone());
                }
                set.insert(ap);
            }
            labels.push(set);
        }
        let mut actions = Vec::new();
        let mut action_index: HashMap<String, usize> = HashMap::new();
        let mut rows = BTreeMap::new();
        for (state, action, dist) in self.actions {
            let s = *state_index
                .get(&state)
                .ok_or_else(|| ModelError::UnknownState(state.clone()))?;
            let a = *action_index.entry(action.clone()).or_insert_with(|| {
                actions.push(action.clone());
                actions.len() - 1
            });
            let mut row = Vec::new();
            let mut seen = BTreeSet::new();
            for (succ, p) in dist {
                let t = *state_index
                    .get(&succ)
                    .ok_or_else(|| ModelError::UnknownState(succ.clone()))?;
                if !seen.insert(t) {
                    return Err(ModelError::DuplicateSuccessor {
                        state,
                        action,
                        succ,
                    });
                }
                row.push((t, p));
            }
            if rows.insert((s, a), row).is_some() {
                return Err(ModelError::DuplicateAction { state, action });
            }
        }
        let enabled = (0..states.len())
            .map(|s| {
                (0..actions.len())
                    .filter(|a| {
                        rows.get(&(s, *a))
                            .map(|row| {
                                row.iter()
                                    .fold(Rational::zero(), |acc, (_, p)| acc + p)
                                    .is_one()
                            })
                            .unwrap_or(false)
                    })
                    .collect()
            })
            .collect();
        Ok(Mdp {
            states,
            state_index,
            aps,
            labels,
            actions,
            action_index,
            rows,
            enabled,
        })
    }
}

fn parse_mdp(text: &str) -> Result<Mdp, ModelError> {
    let err = |line: usize, msg: String| ModelError::Parse { line, msg };
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let content = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let content = content.trim();
        if !content.is_empty() {
            lines.push((i + 1, content.to_string()));
        }
    }
    let mut it = lines.into_iter();
    match it.next() {
        Some((_, head)) if head == "mdp" => {}
        Some((n, head)) => return Err(err(n, format!("expected `mdp` header, found `{head}`"))),
        None => return Err(err(1, "empty model file".to_string())),
    }
    let mut builder = MdpBuilder::new();
    for (n, line) in it {
        let mut words = line.split_whitespace();
        match words.next() {
            Some("state") => {
                let id = words
                    .next()
                    .ok_or_else(|| err(n, "missing state id".to_string()))?;
                if !valid_ident(id) {
                    return Err(err(n, format!("invalid state id `{id}`")));
                }
                let labels: Vec<&str> = words.collect();
                for ap in &labels {
                    if !valid_ident(ap) {
                        return Err(err(n, format!("invalid proposition name `{ap}`")));
                    }
                }
                builder.state(id, &labels);
            }
            Some("action") => {
                let rest = line["action".len()..].trim();
                let (head, dist) = rest
                    .split_once(':')
                    .ok_or_else(|| err(n, "missing `:` in action line".to_string()))?;
                let mut head_words = head.split_whitespace();
                let state = head_words
                    .next()
                    .ok_or_else(|| err(n, "missing state id in action line".to_string()))?;
                let action = head_words
                    .next()
                    .ok_or_else(|| err(n, "missing action id in action line".to_string()))?;
                if head_words.next().is_some() {
                    return Err(err(n, "unexpected tokens before `:`".to_string()));
                }
                if !valid_ident(state) || !valid_ident(action) {
                    return Err(err(n, format!("invalid id in `{head}`")));
                }
                let mut entries = Vec::new();
                for part in dist.split(',') {
                    let mut bits = part.split_whitespace();
                    let succ = bits
                        .next()
                        .ok_or_else(|| err(n, "missing successor id".to_string()))?;
                    let prob = bits
                        .next()
                        .ok_or_else(|| err(n, format!("missing probability after `{succ}`")))?;
                    if bits.next().is_some() {
                        return Err(err(n, format!("unexpected tokens after `{succ} {prob}`")));
                    }
                    if !valid_ident(succ) {
                        return Err(err(n, format!("invalid state id `{succ}`")));
                    }
                    let p = parse_rational(prob).map_err(|e| err(n, e))?;
                    entries.push((succ.to_string(), p));
                }
                let refs: Vec<(&str, Rational)> = entries
                    .iter()
                    .map(|(s, p)| (s.as_str(), p.clone()))
                    .collect();
                builder.action(state, action, &refs);
            }
            Some(other) => {
                return Err(err(
                    n,
                    format!("expected `state` or `action`, found `{other}`"),
                ))
            }
            None => unreachable!(),
        }
    }
    builder.finish().map_err(|e| match e {
        ModelError::Parse { .. } => e,
        other => ModelError::Parse {
            line: 0,
            msg: other.to_string(),
        },
    })
}

// ---------------------------------------------------------------------------
// Schedulers
// ---------------------------------------------------------------------------

/// A probabilistic memoryless scheduler keyed by enabled-action sets.
///
/// Keying by the action set (rather than the state) bakes in the restriction
/// that states with identical enabled actions receive identical distributions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemorylessScheduler {
    dist: BTreeMap<Vec<String>, Distribution>,
}

impl MemorylessScheduler {
    /// Build from explicit per-action-set distributions. Keys are sorted
    /// internally; each distribution must sum to 1 with support inside its set.
    pub fn new(entries: Vec<(Vec<String>, Distribution)>) -> Result<Self, ModelError> {
        let mut dist = BTreeMap::new();
        for (mut set, d) in entries {
            set.sort();
            set.dedup();
            if set.is_empty() {
                return Err(ModelError::BadDistribution("empty action set".to_string()));
            }
            let mut sum = Rational::zero();
            for (a, p) in &d {
                if p.is_negative() || *p > Rational::one() {
                    return Err(ModelError::BadDistribution(format!(
                        "probability {p} for `{a}` outside [0, 1]"
                    )));
                }
                if !p.is_zero() && !set.contains(a) {
                    return Err(ModelError::BadDistribution(format!(
                        "action `{a}` has positive probability but is not in the set"
                    )));
                }
                sum += p;
            }
            if !sum.is_one() {
                return Err(ModelError::BadDistribution(format!(
                    "distribution for {{{}}} sums to {sum}",
                    set.join(", ")
                )));
            }
            if dist.insert(set.clone(), d).is_some() {
                return Err(ModelError::BadDistribution(format!(
                    "duplicate distribution for {{{}}}",
                    set.join(", ")
                )));
            }
        }
        Ok(Self { dist })
    }

    /// The uniform scheduler over every action set occurring in `mdp`.
    pub fn uniform_for(mdp: &Mdp) -> Self {
        let mut entries = Vec::new();
        for set in mdp.occurring_action_sets() {
            let k = set.len() as i64;
            let d = set
                .iter()
                .map(|a| (a.clone(), Rational::new(1.into(), k.into())))
                .collect();
            entries.push((set, d));
        }
        Self::new(entries).expect("uniform distributions are valid")
    }

    pub fn lookup(&self, set: &[String]) -> Option<&[(String, Rational)]> {
        self.dist.get(set).map(|v| v.as_slice())
    }

    /// Probability assigned to `action` for the given set (0 if unlisted).
    pub fn prob(&self, set: &[String], action: &str) -> Option<Rational> {
        self.dist.get(set).map(|d| {
            d.iter()
                .find(|(a, _)| a == action)
                .map(|(_, p)| p.clone())
                .unwrap_or_else(Rational::zero)
        })
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Vec<String>, &Distribution)> {
        self.dist.iter()
    }
}

/// An m-bounded counting stutter-scheduler: for each (state, action) a
/// duration j < m; the scheduler stutters exactly j times in that state
/// before letting the action through, so it can never stutter forever.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountingStutterScheduler {
    memory: usize,
    durations: BTreeMap<(String, String), usize>,
}

impl CountingStutterScheduler {
    /// Durations absent from the map default to 0 (no stuttering).
    pub fn new(
        memory: usize,
        durations: Vec<((String, String), usize)>,
    ) -> Result<Self, ModelError> {
        if memory == 0 {
            return Err(ModelError::ZeroMemory);
        }
        let mut map = BTreeMap::new();
        for ((state, action), j) in durations {
            if j >= memory {
                return Err(ModelError::BadStutterDuration {
                    state,
                    action,
                    duration: j,
                    memory,
                });
            }
            map.insert((state, action), j);
        }
        Ok(Self {
            memory,
            durations: map,
        })
    }

    /// The never-stuttering scheduler with the given memory bound.
    pub fn trivial(memory: usize) -> Self {
        Self::new(memory, Vec::new()).expect("positive memory")
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn duration(&self, state: &str, action: &str) -> usize {
        self.durations
            .get(&(state.to_string(), action.to_string()))
            .copied()
            .unwrap_or(0)
    }

    pub fn durations(&self) -> impl Iterator<Item = (&(String, String), &usize)> {
        self.durations.iter()
    }
}

// ---------------------------------------------------------------------------
// DTMCs
// ---------------------------------------------------------------------------

/// A labeled DTMC with a dense transition matrix of exact rationals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dtmc {
    state_names: Vec<String>,
    aps: Vec<String>,
    labels: Vec<BTreeSet<String>>,
    rows: Vec<Vec<Rational>>,
}

impl Dtmc {
    /// Validates shape and exact row-stochasticity.
    pub fn new(
        state_names: Vec<String>,
        aps: Vec<String>,
        labels: Vec<BTreeSet<String>>,
        rows: Vec<Vec<Rational>>,
    ) -> Result<Self, ModelError> {
        let n = state_names.len();
        if n == 0 {
            return Err(ModelError::MalformedDtmc("no states".to_string()));
        }
        if labels.len() != n || rows.len() != n {
            return Err(ModelError::MalformedDtmc(
                "labels/rows length mismatch".to_string(),
            ));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(ModelError::MalformedDtmc(format!(
                    "row {i} has length {} (expected {n})",
                    row.len()
                )));
            }
            let sum = row.iter().fold(Rational::zero(), |acc, p| acc + p);
            if !sum.is_one() {
                return Err(ModelError::MalformedDtmc(format!(
                    "row of `{}` sums to {sum}",
                    state_names[i]
                )));
            }
            if row.iter().any(|p| p.is_negative()) {
                return Err(ModelError::MalformedDtmc(format!(
                    "row of `{}` has a negative entry",
                    state_names[i]
                )));
            }
        }
        Ok(Self {
            state_names,
            aps,
            labels,
            rows,
        })
    }

    pub fn state_count(&self) -> usize {
        self.state_names.len()
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn state_name(&self, i: usize) -> &str {
        &self.state_names[i]
    }

    pub fn find_state(&self, name: &str) -> Option<usize> {
        self.state_names.iter().position(|n| n == name)
    }

    pub fn aps(&self) -> &[String] {
        &self.aps
    }

    pub fn labels(&self, i: usize) -> &BTreeSet<String> {
        &self.labels[i]
    }

    pub fn prob(&self, from: usize, to: usize) -> &Rational {
        &self.rows[from][to]
    }

    pub fn row(&self, from: usize) -> &[Rational] {
        &self.rows[from]
    }

    /// Successors with positive probability.
    pub fn successors(&self, from: usize) -> impl Iterator<Item = (usize, &Rational)> {
        self.rows[from]
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.is_zero())
    }

    /// Restriction to the states reachable from `roots` (the optional
    /// pruning pass; the induced chain keeps the full space by default).
    pub fn restrict_reachable(&self, roots: &[usize]) -> Dtmc {
        let n = self.state_count();
        let mut keep = vec![false; n];
        let mut stack: Vec<usize> = roots.to_vec();
        while let Some(s) = stack.pop() {
            if keep[s] {
                continue;
            }
            keep[s] = true;
            for (t, _) in self.successors(s) {
                if !keep[t] {
                    stack.push(t);
                }
            }
        }
        let old: Vec<usize> = (0..n).filter(|&s| keep[s]).collect();
        let mut remap = vec![usize::MAX; n];
        for (new, &o) in old.iter().enumerate() {
            remap[o] = new;
        }
        let rows = old
            .iter()
            .map(|&s| old.iter().map(|&t| self.rows[s][t].clone()).collect())
            .collect();
        Dtmc {
            state_names: old.iter().map(|&s| self.state_names[s].clone()).collect(),
            aps: self.aps.clone(),
            labels: old.iter().map(|&s| self.labels[s].clone()).collect(),
            rows,
        }
    }
}

/// Stutter-mode-annotated state name, shared by the induced chain and the
/// encoder's variable names.
pub fn mode_state_name(state: &str, j: usize) -> String {
    format!("{state}.{j}")
}

/// Indexed atomic proposition `a_i` for experiment `i` (1-based).
pub fn indexed_ap(ap: &str, experiment: usize) -> String {
    format!("{ap}_{experiment}")
}

/// The DTMC induced on `mdp` by a memoryless scheduler and a counting
/// stutter-scheduler.
///
/// States are all (s, j) pairs with j below the memory bound, ordered so
/// that (s, j) has index `s * m + j`; the full space is kept without
/// reachability pruning (see [`Dtmc::restrict_reachable`]). From (s, j) a
/// chosen action stutters deterministically iff j is below its duration:
/// stuttering moves to (s, j+1), proceeding moves to (s', 0) with the
/// original transition probabilities.
pub fn induce_dtmc(
    mdp: &Mdp,
    scheduler: &MemorylessScheduler,
    stutter: &CountingStutterScheduler,
) -> Result<Dtmc, ModelError> {
    let m = stutter.memory();
    let n = mdp.state_count();
    let total = n * m;
    let mut names = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    let mut rows = vec![vec![Rational::zero(); total]; total];
    for s in 0..n {
        let set = mdp.action_set(s);
        let dist = scheduler
            .lookup(&set)
            .ok_or_else(|| ModelError::SchedulerMissingActionSet(set.clone()))?;
        for j in 0..m {
            names.push(mode_state_name(mdp.state_name(s), j));
            labels.push(mdp.labels(s).clone());
            let from = s * m + j;
            for &a in mdp.enabled_actions(s) {
                let action = mdp.action_name(a);
                let p_act = dist
                    .iter()
                    .find(|(x, _)| x == action)
                    .map(|(_, p)| p.clone())
                    .unwrap_or_else(Rational::zero);
                if p_act.is_zero() {
                    continue;
                }
                let dur = stutter.duration(mdp.state_name(s), action);
                if dur >= m {
                    return Err(ModelError::StutterOutOfRange { j: dur, memory: m });
                }
                if j < dur {
                    rows[from][s * m + (j + 1)] += &p_act;
                } else if let Some(row) = mdp.action_row(s, a) {
                    for (succ, p) in row {
                        rows[from][succ * m] += p_act.clone() * p;
                    }
                }
            }
        }
    }
    Dtmc::new(names, mdp.aps().to_vec(), labels, rows)
}

/// Product of DTMCs with experiment-indexed propositions.
///
/// The composed state (x_1, ..., x_n) has index
/// `((x_1 * n_2) + x_2) * n_3 + ...` (last component fastest), its label set
/// is the union of per-component labels tagged `a_i`, and its transition
/// probabilities are products of the per-component probabilities.
pub fn compose(parts: &[Dtmc]) -> Result<Dtmc, ModelError> {
    if parts.is_empty() {
        return Err(ModelError::EmptyComposition);
    }
    let sizes: Vec<usize> = parts.iter().map(|d| d.state_count()).collect();
    let total: usize = sizes.iter().product();
    let mut aps = Vec::new();
    for (i, d) in parts.iter().enumerate() {
        for ap in d.aps() {
            aps.push(indexed_ap(ap, i + 1));
        }
    }
    let mut names = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    let mut tuples = Vec::with_capacity(total);
    let mut current = vec![0usize; parts.len()];
    loop {
        let name = current
            .iter()
            .zip(parts)
            .map(|(&x, d)| d.state_name(x).to_string())
            .collect::<Vec<_>>()
            .join("|");
        let mut labs = BTreeSet::new();
        for (i, (&x, d)) in current.iter().zip(parts).enumerate() {
            for ap in d.labels(x) {
                labs.insert(indexed_ap(ap, i + 1));
            }
        }
        names.push(name);
        labels.push(labs);
        tuples.push(current.clone());
        let mut k = parts.len();
        loop {
            if k == 0 {
                break;
            }
            k -= 1;
            current[k] += 1;
            if current[k] < sizes[k] {
                break;
            }
            current[k] = 0;
            if k == 0 {
                k = usize::MAX;
                break;
            }
        }
        if k == usize::MAX || tuples.len() == total {
            break;
        }
    }
    let mut rows = vec![vec![Rational::zero(); total]; total];
    for (from, ft) in tuples.iter().enumerate() {
        for (to, tt) in tuples.iter().enumerate() {
            let mut p = Rational::one();
            for ((&f, &t), d) in ft.iter().zip(tt).zip(parts) {
                p *= d.prob(f, t);
                if p.is_zero() {
                    break;
                }
            }
            rows[from][to] = p;
        }
    }
    Dtmc::new(names, aps, labels, rows)
}

/// The n-experiment composition induced by one scheduler and a tuple of
/// stutter-schedulers (all experiments run in the same MDP).
pub fn induced_composition(
    mdp: &Mdp,
    scheduler: &MemorylessScheduler,
    stutterers: &[CountingStutterScheduler],
) -> Result<Dtmc, ModelError> {
    let parts = stutterers
        .iter()
        .map(|t| induce_dtmc(mdp, scheduler, t))
        .collect::<Result<Vec<_>, _>>()?;
    compose(&parts)
}

/// A composed state: one (state index, stutter counter) pair per experiment.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ComposedState {
    pub parts: Vec<(usize, usize)>,
}

impl ComposedState {
    pub fn new(parts: Vec<(usize, usize)>) -> Self {
        Self { parts }
    }

    /// One pair per experiment, states in range, counters below the bound.
    pub fn is_valid(&self, mdp: &Mdp, experiments: usize, memory: usize) -> bool {
        self.parts.len() == experiments
            && self
                .parts
                .iter()
                .all(|&(s, j)| s < mdp.state_count() && j < memory)
    }

    /// Index into the row order of [`induced_composition`] for memory `m`
    /// over a model with `states` states.
    pub fn flat_index(&self, states: usize, m: usize) -> usize {
        self.parts
            .iter()
            .fold(0, |acc, &(s, j)| acc * states * m + s * m + j)
    }
}

/// Potential successors of (s, j) under `action` for any stutter-scheduler
/// with memory bound `memory`: the stutter step (s, j+1) when the counter
/// can still grow, plus every (s', 0) with positive transition probability.
pub fn succ_plus(
    mdp: &Mdp,
    s: usize,
    j: usize,
    action: usize,
    memory: usize,
) -> Result<Vec<(usize, usize)>, ModelError> {
    if j >= memory {
        return Err(ModelError::StutterOutOfRange { j, memory });
    }
    if !mdp.enabled_actions(s).contains(&action) {
        return Err(ModelError::NotEnabled {
            state: mdp.state_name(s).to_string(),
            action: mdp.action_name(action).to_string(),
        });
    }
    let mut out = Vec::new();
    if j + 1 < memory {
        out.push((s, j + 1));
    }
    if let Some(row) = mdp.action_row(s, action) {
        for (succ, p) in row {
            if !p.is_zero() {
                out.push((*succ, 0));
            }
        }
    }
    Ok(out)
}
