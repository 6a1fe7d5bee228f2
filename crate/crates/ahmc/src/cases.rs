//! Built-in case-study generators: interleaving MDPs for three small
//! multi-threaded programs together with the hyperproperty each one is
//! checked against. Every generator is deterministic. Each fixture carries
//! the state and transition counts its construction is expected to produce;
//! mismatches are reported as soft warnings rather than errors, since the
//! exact program-to-MDP translation such counts presuppose is a modeling
//! choice.
//!
//! CE: two threads race on a public output; the secret is how long the
//! first thread loops before writing. TL: a modular-exponentiation thread
//! timed by a counter thread. ACDB: two threads synchronizing on a
//! semaphore with output order observable.

use thiserror::Error;

use crate::formula::{parse_formula, well_formed, HyperFormula};
use crate::model::{Mdp, MdpBuilder};
use crate::rational::int;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("bad case-study parameters: {0}")]
    BadParams(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// A generated model plus the formula text it is meant to be checked with.
#[derive(Debug, Clone)]
pub struct CaseStudyFixture {
    pub name: String,
    pub mdp: Mdp,
    pub formula_text: String,
    /// State/transition counts this construction aims for.
    pub target_states: usize,
    pub target_transitions: usize,
}

impl CaseStudyFixture {
    pub fn formula(&self) -> HyperFormula {
        let f = parse_formula(&self.formula_text).expect("generated formula parses");
        well_formed(&f).expect("generated formula is well-formed");
        f
    }

    /// Number of positive (state, action, successor) entries.
    pub fn transition_count(&self) -> usize {
        let mut count = 0;
        for s in 0..self.mdp.state_count() {
            for a in 0..self.mdp.actions().len() {
                if let Some(row) = self.mdp.action_row(s, a) {
                    count += row.len();
                }
            }
        }
        count
    }

    /// Soft-check messages for count mismatches against the targets.
    pub fn count_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.mdp.state_count() != self.target_states {
            out.push(format!(
                "{}: {} states generated, target {}",
                self.name,
                self.mdp.state_count(),
                self.target_states
            ));
        }
        let transitions = self.transition_count();
        if transitions != self.target_transitions {
            out.push(format!(
                "{}: {} transitions generated, target {}",
                self.name, transitions, self.target_transitions
            ));
        }
        out
    }
}

/// The premise "the two experiments start in differently-labeled initial
/// states", over labels `h<a>` and `h<b>`.
fn secret_premise(a: u32, b: u32) -> String {
    format!("(((h{a}(t1) & h{b}(t2)) | (h{b}(t1) & h{a}(t2))) & init(t1) & init(t2))")
}

/// Two threads sharing a public variable: one loops on the secret before
/// writing 2, the other immediately writes 1. State (r, b) tracks the
/// remaining steps of the looping thread and whether the writer thread has
/// run; the final value of the public variable depends on which thread
/// finished last.
pub fn build_ce(h1: u32, h2: u32) -> Result<CaseStudyFixture, CaseError> {
    if h1 == h2 {
        return Err(CaseError::BadParams(
            "the two secret values must differ".to_string(),
        ));
    }
    let hmax = h1.max(h2);
    let mut b = MdpBuilder::new();
    let running = |r: u32| format!("r{r}_w");
    let writer_done = |r: u32| format!("r{r}_d");

    // (r, 0): looper has r steps left, writer not yet run
    for r in (0..=hmax + 1).rev() {
        let labels: Vec<String> = [
            (r == h1 + 1).then(|| format!("h{h1}")),
            (r == h2 + 1).then(|| format!("h{h2}")),
            (r == h1 + 1 || r == h2 + 1).then(|| "init".to_string()),
        ]
        .into_iter()
        .flatten()
        .collect();
        let refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
        b.state(running(r), &refs);
    }
    // (r, 1): writer done (wrote 1), looper still has r >= 1 steps
    for r in (1..=hmax + 1).rev() {
        b.state(writer_done(r), &[]);
    }
    b.state("fin_l1", &["l1"]);
    b.state("fin_l2", &["l2"]);

    for r in 1..=hmax + 1 {
        b.action(running(r), "th", &[(&running(r - 1), int(1))]);
        b.action(running(r), "tp", &[(&writer_done(r), int(1))]);
    }
    // looper done first: the writer's 1 lands last
    b.action(running(0), "tp", &[("fin_l1", int(1))]);
    for r in 1..=hmax + 1 {
        let target = if r == 1 {
            "fin_l2".to_string()
        } else {
            writer_done(r - 1)
        };
        b.action(writer_done(r), "th", &[(target.as_str(), int(1))]);
    }
    b.action("fin_l1", "th", &[("fin_l1", int(1))]);
    b.action("fin_l2", "th", &[("fin_l2", int(1))]);

    let formula_text = format!(
        "exists sched sg . forall state s1(sg) . forall state s2(sg) . \
         exists stutter t1(s1) . exists stutter t2(s2) . \
         {} -> ((P(F l1(t1)) = P(F l1(t2))) & (P(F l2(t1)) = P(F l2(t2))))",
        secret_premise(h1, h2)
    );
    Ok(CaseStudyFixture {
        name: format!("CE(h={h1},{h2})"),
        mdp: b.finish()?,
        formula_text,
        target_states: 2 * hmax as usize + 5,
        target_transitions: 3 * hmax as usize + 6,
    })
}

/// Modular exponentiation timed by a counter thread: the worker needs k+1
/// loop iterations, each costing one step for a zero key bit and two for a
/// one bit; the counter increments until 2k or until the worker stops.
/// State (r, j) tracks remaining worker steps and the counter value; the
/// observable is the counter value when the worker finishes.
pub fn build_tl(k: u32, restrict_l0: bool) -> Result<CaseStudyFixture, CaseError> {
    if k < 1 {
        return Err(CaseError::BadParams(
            "key length must be at least 1".to_string(),
        ));
    }
    let slow = 2 * (k + 1); // all key bits set
    let fast = k + 1; // all key bits clear
    let bound = 2 * k;
    let name = |r: u32, j: u32| format!("r{r}_j{j}");
    let mut b = MdpBuilder::new();
    for r in (0..=slow).rev() {
        for j in 0..=bound {
            let mut labels: Vec<String> = Vec::new();
            if r == 0 {
                labels.push(format!("j{j}"));
            }
            if j == 0 && r == fast {
                labels.push("init".to_string());
                labels.push("h0".to_string());
            }
            if j == 0 && r == slow {
                labels.push("init".to_string());
                labels.push("h1".to_string());
            }
            let refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
            b.state(name(r, j), &refs);
        }
    }
    for r in 0..=slow {
        for j in 0..=bound {
            if r > 0 {
                b.action(name(r, j), "work", &[(&name(r - 1, j), int(1))]);
                if j < bound {
                    b.action(name(r, j), "tick", &[(&name(r, j + 1), int(1))]);
                }
            } else {
                b.action(name(r, j), "work", &[(&name(r, j), int(1))]);
            }
        }
    }
    let conjuncts: Vec<String> = (0..=if restrict_l0 { 0 } else { bound })
        .map(|l| format!("(P(F j{l}(t1)) = P(F j{l}(t2)))"))
        .collect();
    let formula_text = format!(
        "exists sched sg . forall state s1(sg) . forall state s2(sg) . \
         exists stutter t1(s1) . exists stutter t2(s2) . \
         {} -> ({})",
        secret_premise(0, 1),
        conjuncts.join(" & ")
    );
    let states = (slow as usize + 1) * (bound as usize + 1);
    let work = (slow as usize) * (bound as usize + 1);
    let tick = (slow as usize) * (bound as usize);
    let loops = bound as usize + 1;
    Ok(CaseStudyFixture {
        name: format!("TL(k={k})"),
        mdp: b.finish()?,
        formula_text,
        target_states: states,
        target_transitions: work + tick + loops,
    })
}

/// Two threads synchronizing on a semaphore, printing a, b (thread 1) and
/// c, d (thread 2); with the secret set, thread 2 takes an extra semaphore
/// step between c and d that blocks while thread 1 is inside its critical
/// section. Labels expose the set of letters printed so far.
pub fn build_acdb() -> Result<CaseStudyFixture, CaseError> {
    let mut b = MdpBuilder::new();
    // thread 1 pc: 0 before a, 1 printed a, 2 incremented, 3 printed b
    // (semaphore held at pc1 in {1, 2})
    let with_secret = |p1: u32, p2: u32| format!("p{p1}q{p2}");
    let without_secret = |p1: u32, p2: u32| format!("p{p1}c{p2}");
    let labels_of = |p1: u32, printed_c: bool, printed_d: bool| -> Vec<String> {
        let mut out = Vec::new();
        if p1 >= 1 {
            out.push("a".to_string());
        }
        if p1 == 3 {
            out.push("b".to_string());
        }
        if printed_c {
            out.push("c".to_string());
        }
        if printed_d {
            out.push("d".to_string());
        }
        out
    };
    for p1 in 0..=3u32 {
        for p2 in 0..=3u32 {
            let mut labels = labels_of(p1, p2 >= 1, p2 == 3);
            if p1 == 0 && p2 == 0 {
                labels.push("init".to_string());
                labels.push("h1".to_string());
            }
            let refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
            b.state(with_secret(p1, p2), &refs);
        }
    }
    // secret clear: thread 2 is just print c; print d, terminals shared
    for p1 in 0..=3u32 {
        for p2 in 0..=1u32 {
            let mut labels = labels_of(p1, p2 >= 1, false);
            if p1 == 0 && p2 == 0 {
                labels.push("init".to_string());
                labels.push("h0".to_string());
            }
            let refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
            b.state(without_secret(p1, p2), &refs);
        }
    }
    for p1 in 0..=3u32 {
        for p2 in 0..=3u32 {
            if p1 < 3 {
                b.action(
                    with_secret(p1, p2),
                    "t1",
                    &[(&with_secret(p1 + 1, p2), int(1))],
                );
            }
            let t2_enabled = p2 < 3 && (p2 != 1 || !(1..=2).contains(&p1));
            if t2_enabled {
                b.action(
                    with_secret(p1, p2),
                    "t2",
                    &[(&with_secret(p1, p2 + 1), int(1))],
                );
            }
            if p1 == 3 && p2 == 3 {
                b.action(with_secret(p1, p2), "t1", &[(&with_secret(p1, p2), int(1))]);
            }
        }
    }
    for p1 in 0..=3u32 {
        for p2 in 0..=1u32 {
            if p1 < 3 {
                b.action(
                    without_secret(p1, p2),
                    "t1",
                    &[(&without_secret(p1 + 1, p2), int(1))],
                );
            }
            let target = if p2 == 0 {
                without_secret(p1, 1)
            } else {
                with_secret(p1, 3)
            };
            b.action(without_secret(p1, p2), "t2", &[(target.as_str(), int(1))]);
        }
    }
    let pairs: Vec<String> = ["a", "b", "c", "d"]
        .iter()
        .map(|x| format!("(P(X {x}(t1)) = P(X {x}(t2)))"))
        .collect();
    let formula_text = format!(
        "exists sched sg . forall state s1(sg) . forall state s2(sg) . \
         exists stutter t1(s1) . exists stutter t2(s2) . \
         {} -> (P(G ({})) = 1)",
        secret_premise(0, 1),
        pairs.join(" & ")
    );
    Ok(CaseStudyFixture {
        name: "ACDB".to_string(),
        mdp: b.finish()?,
        formula_text,
        target_states: 24,
        target_transitions: 36,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{prefix_class, PrefixClass};
    use crate::model::{induce_dtmc, CountingStutterScheduler, MemorylessScheduler};
    use crate::oracle::until_probability;
    use crate::rational::ratio;
    use std::collections::BTreeSet;

    #[test]
    fn ce_small_hits_reported_counts() {
        let fix = build_ce(0, 1).unwrap();
        assert_eq!(fix.mdp.state_count(), 7);
        assert_eq!(fix.transition_count(), 9);
        assert!(fix.mdp.validate().is_empty());
        assert!(fix.count_warnings().is_empty());
        // existential scheduler/stutter quantification with universal state
        // quantifiers is inside the directly encodable fragment
        assert_eq!(prefix_class(&fix.formula()), PrefixClass::Existential);
    }

    #[test]
    fn ce_bigger_secret_hits_reported_counts() {
        let fix = build_ce(0, 2).unwrap();
        assert_eq!(fix.mdp.state_count(), 9);
        assert_eq!(fix.transition_count(), 12);
        assert!(fix.mdp.validate().is_empty());
    }

    #[test]
    fn ce_rejects_equal_secrets() {
        assert!(matches!(build_ce(1, 1), Err(CaseError::BadParams(_))));
    }

    #[test]
    fn tl_hits_reported_counts() {
        let fix = build_tl(1, false).unwrap();
        assert_eq!(fix.mdp.state_count(), 15);
        assert_eq!(fix.transition_count(), 23);
        assert!(fix.mdp.validate().is_empty());
        assert!(fix.count_warnings().is_empty());
        let f = fix.formula();
        assert_eq!(f.stutter_quants.len(), 2);
    }

    #[test]
    fn tl_restricted_formula_is_smaller() {
        let full = build_tl(1, false).unwrap();
        let restricted = build_tl(1, true).unwrap();
        assert!(restricted.formula_text.len() < full.formula_text.len());
        assert!(restricted.formula_text.contains("j0"));
        assert!(!restricted.formula_text.contains("j1(t1)"));
        let _ = restricted.formula();
    }

    #[test]
    fn acdb_close_to_reported_counts() {
        let fix = build_acdb().unwrap();
        assert_eq!(fix.mdp.state_count(), 24);
        assert!(fix.mdp.validate().is_empty());
        // the terminal self-loop pushes us one transition over the target;
        // the soft check reports it
        assert_eq!(fix.transition_count(), 37);
        assert_eq!(fix.count_warnings().len(), 1);
        let _ = fix.formula();
    }

    #[test]
    fn fixtures_are_deterministic() {
        let a = build_ce(0, 1).unwrap();
        let b = build_ce(0, 1).unwrap();
        assert_eq!(a.mdp.to_text(), b.mdp.to_text());
        assert_eq!(a.formula_text, b.formula_text);
        let a = build_acdb().unwrap();
        let b = build_acdb().unwrap();
        assert_eq!(a.mdp.to_text(), b.mdp.to_text());
    }

    #[test]
    fn ce_leaks_without_stuttering() {
        // under the uniform scheduler with no stuttering, the probability
        // of ending with output 1 differs between the two initial states
        let fix = build_ce(0, 1).unwrap();
        let mdp = &fix.mdp;
        let sched = MemorylessScheduler::uniform_for(mdp);
        let d = induce_dtmc(mdp, &sched, &CountingStutterScheduler::trivial(1)).unwrap();
        let l1: BTreeSet<usize> = (0..d.state_count())
            .filter(|&s| d.labels(s).contains("l1"))
            .collect();
        let all: BTreeSet<usize> = (0..d.state_count()).collect();
        let from0 = d.find_state("r1_w.0").unwrap();
        let from1 = d.find_state("r2_w.0").unwrap();
        let p0 = until_probability(&d, from0, &all, &l1).unwrap();
        let p1 = until_probability(&d, from1, &all, &l1).unwrap();
        assert_eq!(p0, ratio(1, 2));
        assert_eq!(p1, ratio(1, 4));
        assert_ne!(p0, p1);
    }
}
