//! End-to-end acceptance suite. Each test covers one criterion and prints
//! one PASS line (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! A1  classic-example reproduction: SAT verdict plus witness replay.
//! A2  induced-chain golden transitions over several scheduler weights.
//! A3  oracle/SMT verdict agreement on random single-action models.
//! A4  until-ranking soundness: the solver's until value is exactly 0 on
//!     a loop that never reaches its target.
//! A5  closed-form reachability through the exact oracle.
//! A6  invariant suite: stochasticity fuzz, desugar idempotence, printer
//!     round-trip, scope-rule rejection, successor over-approximation.
//! A7  holds-variable count is the full composed grid with the variable
//!     reduction disabled.
//! A8  the larger case studies encode to solver-accepted SMT-LIB within
//!     budget; solving may time out.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use ahmc::cases::{build_acdb, build_ce, build_tl};
use ahmc::encoder::{encode, EncodeOptions, SubKind, VarRole};
use ahmc::formula::{
    desugar, experiment_map, is_desugared, parse_formula, print_formula, FormulaError,
};
use ahmc::model::{
    compose, induce_dtmc, succ_plus, CountingStutterScheduler, Mdp, MdpBuilder, MemorylessScheduler,
};
use ahmc::oracle::{
    check_by_enumeration, until_probability, BodyEvaluator, SchedulerDomain,
    DEFAULT_ENUMERATION_CAP,
};
use ahmc::rational::{int, ratio, Rational};
use ahmc::solver::{run_solver, SolverConfig, Verdict};
use common::*;
use num_traits::{One, Zero};

/// The four-state branching example: s0 chooses between a coin-flip action
/// into s1/s2 and a direct action into the goal; the rest self-loop.
const EXAMPLE_MDP: &str = "\
mdp
state s0 init
state s1 a
state s2
state s3 goal
action s0 alpha : s1 1/2, s2 1/2
action s0 beta : s3 1
action s1 gamma : s1 1
action s2 gamma : s2 1
action s3 gamma : s3 1
";

fn example_mdp() -> Mdp {
    Mdp::parse(EXAMPLE_MDP).unwrap()
}

fn example_scheduler(p: Rational) -> MemorylessScheduler {
    MemorylessScheduler::new(vec![
        (
            vec!["alpha".into(), "beta".into()],
            vec![
                ("alpha".into(), p.clone()),
                ("beta".into(), Rational::one() - p),
            ],
        ),
        (
            vec!["gamma".into()],
            vec![("gamma".into(), Rational::one())],
        ),
    ])
    .unwrap()
}

fn example_stutter() -> CountingStutterScheduler {
    CountingStutterScheduler::new(
        3,
        vec![
            (("s0".into(), "alpha".into()), 2),
            (("s0".into(), "beta".into()), 0),
        ],
    )
    .unwrap()
}

fn solver_config() -> SolverConfig {
    SolverConfig::default()
}

#[test]
fn a1_classic_example_reproduction() {
    let total = Instant::now();
    let fix = build_ce(0, 1).unwrap();
    assert!(fix.mdp.validate().is_empty());
    let f = fix.formula();

    // end-to-end through the CLI, as a user would run it
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("model.mdp"), fix.mdp.to_text()).unwrap();
    std::fs::write(dir.path().join("formula.txt"), &fix.formula_text).unwrap();
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_ahmc"))
        .args([
            "check",
            "--model",
            dir.path().join("model.mdp").to_str().unwrap(),
            "--formula",
            dir.path().join("formula.txt").to_str().unwrap(),
            "--memory",
            "2",
            "--timeout",
            "1800",
        ])
        .stdout(std::process::Stdio::null())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0), "CLI check should report holds");

    // library run for the witness, then exact replay through the oracle
    let encode_started = Instant::now();
    let system = encode(&fix.mdp, &f, 2, EncodeOptions::default()).unwrap();
    let encode_time = encode_started.elapsed();
    assert!(
        encode_time < Duration::from_secs(10),
        "encoding took {encode_time:?}"
    );
    let result = run_solver(&system, &solver_config().with_timeout_secs(1800)).unwrap();
    assert_eq!(result.verdict, Verdict::Sat);
    let witness = result.witness.expect("witness on SAT");
    let scheduler = witness.to_scheduler().unwrap();
    let stutterers = witness.to_stutterers(2, 2).unwrap();

    let (map, indexed) = experiment_map(&f).unwrap();
    let body = desugar(&indexed);
    let tolerance = ratio(1, 1_000_000);
    let evaluator = BodyEvaluator::new(&fix.mdp, &scheduler, &stutterers, map.k.clone())
        .unwrap()
        .with_tolerance(tolerance);
    let sat = evaluator.sat_vector(&body).unwrap();
    for s1 in 0..fix.mdp.state_count() {
        for s2 in 0..fix.mdp.state_count() {
            let idx = evaluator.start_index(&[s1, s2]).unwrap();
            assert!(
                sat[idx],
                "witness fails replay at start pair ({}, {})",
                fix.mdp.state_name(s1),
                fix.mdp.state_name(s2)
            );
        }
    }
    println!(
        "A1 PASS: CE(0,1) m=2 sat; witness replays at all {} start pairs \
         (encode {:?}, solve {:?}, total {:?})",
        fix.mdp.state_count() * fix.mdp.state_count(),
        encode_time,
        result.stats.wall_time,
        total.elapsed()
    );
}

#[test]
fn a2_induced_chain_golden_transitions() {
    let started = Instant::now();
    let mdp = example_mdp();
    for p in [int(0), ratio(1, 4), ratio(1, 2), int(1)] {
        let d = induce_dtmc(&mdp, &example_scheduler(p.clone()), &example_stutter()).unwrap();
        let idx = |name: &str| d.find_state(name).unwrap();
        let one = Rational::one();
        let expected = [
            ("s0.0", "s0.1", p.clone()),
            ("s0.0", "s3.0", &one - &p),
            ("s0.1", "s0.2", p.clone()),
            ("s0.1", "s3.0", &one - &p),
            ("s0.2", "s1.0", &p / int(2)),
            ("s0.2", "s2.0", &p / int(2)),
            ("s0.2", "s3.0", &one - &p),
        ];
        for (from, to, want) in expected {
            assert_eq!(d.prob(idx(from), idx(to)), &want, "{from} -> {to} at p={p}");
        }
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed < Duration::from_secs(1),
        "golden check took {elapsed:?}"
    );
    println!(
        "A2 PASS: all seven induced transitions exact at p in {{0, 1/4, 1/2, 1}} ({elapsed:?})"
    );
}

const A3_TEMPLATES: &[&str] = &[
    "(P(F a(t1)) = P(F a(t2)))",
    "(P(X a(t1)) <= P(X b(t2)))",
    "(a(t1) & !b(t2)) -> (P(a(t1) U b(t1)) > 1/2)",
    "P(G a(t1)) >= 3/4",
    "(P(X (a(t1) | b(t1))) != P(X a(t2)))",
    "((P(F a(t1)) * P(F b(t2))) < 1/4)",
    "!(P(F a(t1)) < P(F a(t2))) & b(t2)",
    "P(F a(t1)) = 2",
    "((P(true U a(t1)) + P(X !a(t2))) >= 1)",
    "P((a(t1) | b(t1)) U (P(X a(t1)) >= 1/2)) > 1/4",
    // temporal operators spanning both experiments
    "P((a(t1) & a(t2)) U (b(t1) | b(t2))) >= 1/2",
    "(P(X (a(t1) & b(t2))) = (P(X a(t1)) * P(X b(t2))))",
];

const A3_PREFIXES: &[&str] = &[
    "exists sched sg . exists state s1(sg) . exists state s2(sg) . \
     exists stutter t1(s1) . exists stutter t2(s2) . ",
    "exists sched sg . forall state s1(sg) . forall state s2(sg) . \
     exists stutter t1(s1) . exists stutter t2(s2) . ",
    "exists sched sg . forall state s1(sg) . exists state s2(sg) . \
     exists stutter t1(s1) . exists stutter t2(s2) . ",
    "exists sched sg . exists state s1(sg) . forall state s2(sg) . \
     exists stutter t1(s1) . exists stutter t2(s2) . ",
];

#[test]
fn a3_oracle_smt_agreement() {
    let started = Instant::now();
    let mut rng = SplitMix64(0xA3);
    let config = solver_config().with_timeout_secs(120);
    let mut holds_count = 0;
    for i in 0..50 {
        let states = 2 + (i % 3);
        let mdp = random_single_action_mdp(&mut rng, states);
        let text = format!(
            "{}{}",
            A3_PREFIXES[i % A3_PREFIXES.len()],
            A3_TEMPLATES[i % A3_TEMPLATES.len()]
        );
        let f = parse_formula(&text).unwrap();
        let oracle = check_by_enumeration(
            &mdp,
            &f,
            2,
            SchedulerDomain::SingleAction,
            DEFAULT_ENUMERATION_CAP,
        )
        .unwrap();
        assert!(oracle.conclusive);
        let system = encode(&mdp, &f, 2, EncodeOptions::default()).unwrap();
        let result = run_solver(&system, &config).unwrap();
        let smt_holds = match result.verdict {
            Verdict::Sat => true,
            Verdict::Unsat => false,
            other => panic!("instance {i}: solver returned {other}"),
        };
        assert_eq!(
            oracle.holds,
            smt_holds,
            "instance {i} disagrees; model:\n{}\nformula: {text}",
            mdp.to_text()
        );
        holds_count += usize::from(smt_holds);
    }
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(600), "A3 took {elapsed:?}");
    println!(
        "A3 PASS: 50/50 verdicts agree ({holds_count} hold, {} fail) in {elapsed:?}",
        50 - holds_count
    );
}

#[test]
fn a4_until_ranking_forces_zero_on_loops() {
    let started = Instant::now();
    // two states looping through each other, all labeled p1; p2 never holds
    let mut b = MdpBuilder::new();
    b.ap("p2");
    b.state("u0", &["p1"]).state("u1", &["p1"]);
    b.action("u0", "step", &[("u1", int(1))]);
    b.action("u1", "step", &[("u0", int(1))]);
    let mdp = b.finish().unwrap();
    assert!(mdp.validate().is_empty());

    let f = parse_formula(
        "exists sched sg . exists state s(sg) . exists stutter t(s) . P(p1(t) U p2(t)) = 0",
    )
    .unwrap();
    let system = encode(&mdp, &f, 1, EncodeOptions::default()).unwrap();
    let until = *system.until_ids().first().expect("one until subformula");
    let prob_name = system
        .vars()
        .iter()
        .find(|v| {
            matches!(
                &v.role,
                VarRole::Prob { subformula, key } if *subformula == until && key.as_slice() == [(0, 0)]
            )
        })
        .map(|v| v.name.clone())
        .expect("until probability variable at (u0, 0)");
    let mut config = solver_config().with_timeout_secs(60);
    config.extra_queries.push(prob_name.clone());
    let result = run_solver(&system, &config).unwrap();
    assert_eq!(result.verdict, Verdict::Sat);
    let value = &result.values[&prob_name];
    assert!(!value.approximate);
    assert!(value.rational.is_zero(), "{prob_name} = {}", value.rational);

    // the oracle agrees exactly
    let sched = MemorylessScheduler::uniform_for(&mdp);
    let d = induce_dtmc(&mdp, &sched, &CountingStutterScheduler::trivial(1)).unwrap();
    let all: BTreeSet<usize> = (0..d.state_count()).collect();
    let p = until_probability(&d, 0, &all, &BTreeSet::new()).unwrap();
    assert!(p.is_zero());
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(10), "A4 took {elapsed:?}");
    println!(
        "A4 PASS: solver until value at the loop is exactly 0, matching the oracle ({elapsed:?})"
    );
}

#[test]
fn a5_closed_form_reachability() {
    let started = Instant::now();
    let mdp = example_mdp();
    for (p, expect) in [
        (int(0), int(1)),
        (ratio(1, 2), ratio(7, 8)),
        (int(1), int(0)),
    ] {
        let d = induce_dtmc(&mdp, &example_scheduler(p.clone()), &example_stutter()).unwrap();
        let from = d.find_state("s0.0").unwrap();
        let goal: BTreeSet<usize> = (0..d.state_count())
            .filter(|&s| d.labels(s).contains("goal"))
            .collect();
        let all: BTreeSet<usize> = (0..d.state_count()).collect();
        let got = until_probability(&d, from, &all, &goal).unwrap();
        assert_eq!(got, expect, "reachability at p={p}");
    }
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(1), "A5 took {elapsed:?}");
    println!("A5 PASS: reachability equals 1 - p^3 exactly at p in {{0, 1/2, 1}} ({elapsed:?})");
}

#[test]
fn a6_invariant_suite() {
    let started = Instant::now();
    let mut rng = SplitMix64(0xA6);

    // row-stochasticity of induced and composed chains, 200 random models
    for i in 0..200 {
        let states = 2 + (i % 4);
        let mdp = if i % 2 == 0 {
            random_single_action_mdp(&mut rng, states)
        } else {
            random_mdp(&mut rng, states)
        };
        let memory = 1 + (i % 3);
        let sched = random_scheduler(&mut rng, &mdp);
        let stut = random_stutterer(&mut rng, &mdp, memory);
        let d = induce_dtmc(&mdp, &sched, &stut).unwrap();
        for row in 0..d.state_count() {
            let sum = d.row(row).iter().fold(Rational::zero(), |acc, p| acc + p);
            assert!(sum.is_one(), "induced row {row} sums to {sum}");
        }
        if i % 10 == 0 {
            let stut2 = random_stutterer(&mut rng, &mdp, memory);
            let d2 = induce_dtmc(&mdp, &sched, &stut2).unwrap();
            let c = compose(&[d.clone(), d2]).unwrap();
            for row in 0..c.state_count() {
                let sum = c.row(row).iter().fold(Rational::zero(), |acc, p| acc + p);
                assert!(sum.is_one(), "composed row {row} sums to {sum}");
            }
        }
    }

    // desugar idempotence and printer round-trip over the template set and
    // the case-study formulas
    let mut formulas: Vec<String> = Vec::new();
    for (i, t) in A3_TEMPLATES.iter().enumerate() {
        formulas.push(format!("{}{}", A3_PREFIXES[i % A3_PREFIXES.len()], t));
    }
    formulas.push(build_ce(0, 1).unwrap().formula_text);
    formulas.push(build_tl(1, false).unwrap().formula_text);
    formulas.push(build_acdb().unwrap().formula_text);
    for text in &formulas {
        let f = parse_formula(text).unwrap();
        let printed = print_formula(&f);
        assert_eq!(parse_formula(&printed).unwrap(), f, "round trip of {text}");
        let once = desugar(&f.body);
        assert!(is_desugared(&once));
        assert_eq!(desugar(&once), once, "desugar not idempotent on {text}");
    }

    // the three scope rules each reject their violating fixture
    let unbound_atom = "exists sched sg . exists state s(sg) . exists stutter t(s) . a(nope)";
    let unbound_state = "exists sched sg . exists state s(sg) . exists stutter t(nope) . a(t)";
    let unbound_sched = "exists sched sg . exists state s(nope) . exists stutter t(s) . a(t)";
    for text in [unbound_atom, unbound_state, unbound_sched] {
        assert!(
            matches!(parse_formula(text), Err(FormulaError::Unbound(_))),
            "{text} should be rejected"
        );
    }

    // every positive induced transition projects into succ_plus
    for i in 0..50 {
        let mdp = random_mdp(&mut rng, 2 + (i % 3));
        let memory = 1 + (i % 3);
        let sched = random_scheduler(&mut rng, &mdp);
        let stut = random_stutterer(&mut rng, &mdp, memory);
        let d = induce_dtmc(&mdp, &sched, &stut).unwrap();
        for s in 0..mdp.state_count() {
            for j in 0..memory {
                let from = s * memory + j;
                for (to, _) in d.successors(from) {
                    let (t, tj) = (to / memory, to % memory);
                    let covered = mdp.enabled_actions(s).iter().any(|&a| {
                        succ_plus(&mdp, s, j, a, memory)
                            .map(|set| set.contains(&(t, tj)))
                            .unwrap_or(false)
                    });
                    assert!(covered, "transition ({s},{j}) -> ({t},{tj}) not covered");
                }
            }
        }
    }

    let elapsed = started.elapsed();
    println!(
        "A6 PASS: stochasticity (200 models), desugar idempotence, printer \
         round-trip, scope rejection, successor over-approximation ({elapsed:?})"
    );
}

#[test]
fn a7_full_grid_without_reduction() {
    // fixture 1: four states, m = 2, two experiments
    let mdp = example_mdp();
    let f = parse_formula(
        "exists sched sg . exists state s1(sg) . exists state s2(sg) . \
         exists stutter t1(s1) . exists stutter t2(s2) . \
         (a(t1) & goal(t2)) -> (P(F a(t1)) = P(F goal(t2)))",
    )
    .unwrap();
    let memory = 2;
    let system = encode(
        &mdp,
        &f,
        memory,
        EncodeOptions {
            relevant_quantifiers: false,
        },
    )
    .unwrap();
    let expected = (mdp.state_count() * memory).pow(2);
    let mut boolean_subformulas = 0;
    for (id, sub) in system.subformulas().iter().enumerate() {
        if sub.kind != SubKind::Boolean {
            continue;
        }
        boolean_subformulas += 1;
        let count = system
            .vars()
            .iter()
            .filter(|v| matches!(&v.role, VarRole::Holds { subformula, .. } if *subformula == id))
            .count();
        assert_eq!(
            count, expected,
            "subformula {id} has {count} holds variables"
        );
    }
    assert!(boolean_subformulas >= 5);

    // fixture 2: two states, m = 3, one experiment
    let mut b = MdpBuilder::new();
    b.state("u0", &["a"]).state("u1", &[]);
    b.action("u0", "step", &[("u1", int(1))]);
    b.action("u1", "step", &[("u0", int(1))]);
    let chain = b.finish().unwrap();
    let f1 = parse_formula(
        "exists sched sg . exists state s(sg) . exists stutter t(s) . P(X a(t)) >= 1/2",
    )
    .unwrap();
    let memory = 3;
    let system = encode(
        &chain,
        &f1,
        memory,
        EncodeOptions {
            relevant_quantifiers: false,
        },
    )
    .unwrap();
    let expected = chain.state_count() * memory;
    for (id, sub) in system.subformulas().iter().enumerate() {
        if sub.kind != SubKind::Boolean {
            continue;
        }
        let count = system
            .vars()
            .iter()
            .filter(|v| matches!(&v.role, VarRole::Holds { subformula, .. } if *subformula == id))
            .count();
        assert_eq!(
            count, expected,
            "subformula {id} has {count} holds variables"
        );
    }
    println!(
        "A7 PASS: holds variables per Boolean subformula equal (|S|*m)^n on \
         both fixtures with the reduction disabled"
    );
}

#[test]
fn a8_large_case_studies_encode_within_budget() {
    for fixture in [build_tl(1, false).unwrap(), build_acdb().unwrap()] {
        let f = fixture.formula();
        let encode_started = Instant::now();
        let system = encode(&fixture.mdp, &f, 2, EncodeOptions::default()).unwrap();
        let encode_time = encode_started.elapsed();
        assert!(
            encode_time < Duration::from_secs(120),
            "{} encoding took {encode_time:?}",
            fixture.name
        );
        let metrics = system.metrics();
        let result = run_solver(&system, &solver_config().with_timeout_secs(10)).unwrap();
        assert!(
            !result.raw_output.contains("(error"),
            "{}: solver rejected the emitted system: {}",
            fixture.name,
            result
                .raw_output
                .lines()
                .take(3)
                .collect::<Vec<_>>()
                .join(" | ")
        );
        assert!(
            matches!(
                result.verdict,
                Verdict::Sat | Verdict::Unsat | Verdict::Unknown | Verdict::Timeout
            ),
            "{}: unexpected outcome",
            fixture.name
        );
        println!(
            "A8 PASS: {} encoded in {encode_time:?} (variables={} assertions={} \
             subformulas={}), solver outcome after 10s budget: {}",
            fixture.name,
            metrics.variables,
            metrics.assertions,
            metrics.subformulas,
            result.verdict
        );
    }
}
