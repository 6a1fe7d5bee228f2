//! Shared fixtures for unit tests: the running four-state example (one
//! branching state feeding three self-loop states) and small deterministic
//! pseudo-random model generators.

use crate::model::{CountingStutterScheduler, Mdp, MdpBuilder, MemorylessScheduler};
use crate::rational::{int, ratio, Rational};
use num_traits::One;

/// The example MDP: s0 has `alpha` (to s1/s2, half each) and `beta` (to s3),
/// the other states self-loop on `gamma`.
pub fn example_mdp() -> Mdp {
    let mut b = MdpBuilder::new();
    b.state("s0", &["init"])
        .state("s1", &["a"])
        .state("s2", &[])
        .state("s3", &["goal"]);
    b.action("s0", "alpha", &[("s1", ratio(1, 2)), ("s2", ratio(1, 2))]);
    b.action("s0", "beta", &[("s3", int(1))]);
    for s in ["s1", "s2", "s3"] {
        b.action(s, "gamma", &[(s, int(1))]);
    }
    b.finish().unwrap()
}

/// Scheduler choosing `alpha` with probability `p` in s0.
pub fn example_scheduler(p: Rational) -> MemorylessScheduler {
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

/// The 3-bounded counting stutter-scheduler with durations 2 for (s0, alpha)
/// and 0 everywhere else.
pub fn example_stutter() -> CountingStutterScheduler {
    CountingStutterScheduler::new(
        3,
        vec![
            (("s0".into(), "alpha".into()), 2),
            (("s0".into(), "beta".into()), 0),
        ],
    )
    .unwrap()
}

/// SplitMix64; deterministic test randomness without extra dependencies.
pub struct SplitMix64(pub u64);

impl SplitMix64 {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n
    }
}

/// A random single-action MDP with `n` states: per state one action `act`
/// with a random distribution over small denominators, random labels over
/// {a, b}.
pub fn random_single_action_mdp(rng: &mut SplitMix64, n: usize) -> Mdp {
    let names: Vec<String> = (0..n).map(|i| format!("q{i}")).collect();
    let mut b = MdpBuilder::new();
    b.ap("a").ap("b");
    for name in &names {
        let mut labels = Vec::new();
        if rng.below(2) == 0 {
            labels.push("a");
        }
        if rng.below(2) == 0 {
            labels.push("b");
        }
        b.state(name.clone(), &labels);
    }
    for name in &names {
        let dist = random_distribution(rng, n);
        let entries: Vec<(&str, Rational)> = dist
            .into_iter()
            .enumerate()
            .filter(|(_, p)| !num_traits::Zero::is_zero(p))
            .map(|(t, p)| (names[t].as_str(), p))
            .collect();
        b.action(name.clone(), "act", &entries);
    }
    b.finish().unwrap()
}

/// A random exact distribution over `n` points with denominator up to 8.
pub fn random_distribution(rng: &mut SplitMix64, n: usize) -> Vec<Rational> {
    let denom = 1 + rng.below(8) as i64;
    let mut weights = vec![0i64; n];
    for _ in 0..denom {
        weights[rng.below(n as u64) as usize] += 1;
    }
    weights.into_iter().map(|w| ratio(w, denom)).collect()
}
