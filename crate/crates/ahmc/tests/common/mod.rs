#![allow(dead_code)] // not every test binary uses every helper

//! Shared helpers for the integration and acceptance suites: deterministic
//! pseudo-randomness and small random model generators built through the
//! public API.

use ahmc::model::{CountingStutterScheduler, Mdp, MdpBuilder, MemorylessScheduler};
use ahmc::rational::{ratio, Rational};

/// SplitMix64; keeps the suites deterministic without extra dependencies.
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

/// Exact random distribution over `n` points, denominator at most 8.
pub fn random_distribution(rng: &mut SplitMix64, n: usize) -> Vec<Rational> {
    let denom = 1 + rng.below(8) as i64;
    let mut weights = vec![0i64; n];
    for _ in 0..denom {
        weights[rng.below(n as u64) as usize] += 1;
    }
    weights.into_iter().map(|w| ratio(w, denom)).collect()
}

/// Random single-action MDP over labels {a, b}.
pub fn random_single_action_mdp(rng: &mut SplitMix64, states: usize) -> Mdp {
    let names: Vec<String> = (0..states).map(|i| format!("q{i}")).collect();
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
        let dist = random_distribution(rng, states);
        let entries: Vec<(&str, Rational)> = dist
            .iter()
            .enumerate()
            .filter(|(_, p)| !num_is_zero(p))
            .map(|(t, p)| (names[t].as_str(), p.clone()))
            .collect();
        b.action(name.clone(), "act", &entries);
    }
    b.finish().unwrap()
}

/// Random MDP where each state enables one or two actions.
pub fn random_mdp(rng: &mut SplitMix64, states: usize) -> Mdp {
    let names: Vec<String> = (0..states).map(|i| format!("q{i}")).collect();
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
        let action_count = 1 + rng.below(2);
        for act in ["alpha", "beta"].iter().take(action_count as usize) {
            let dist = random_distribution(rng, states);
            let entries: Vec<(&str, Rational)> = dist
                .iter()
                .enumerate()
                .filter(|(_, p)| !num_is_zero(p))
                .map(|(t, p)| (names[t].as_str(), p.clone()))
                .collect();
            b.action(name.clone(), *act, &entries);
        }
    }
    b.finish().unwrap()
}

/// Random action-set-uniform scheduler with denominator-4 probabilities.
pub fn random_scheduler(rng: &mut SplitMix64, mdp: &Mdp) -> MemorylessScheduler {
    let entries = mdp
        .occurring_action_sets()
        .into_iter()
        .map(|set| {
            let dist = random_distribution(rng, set.len());
            let d = set.iter().cloned().zip(dist).collect();
            (set, d)
        })
        .collect();
    MemorylessScheduler::new(entries).unwrap()
}

/// Random counting stutter-scheduler with the given memory bound.
pub fn random_stutterer(
    rng: &mut SplitMix64,
    mdp: &Mdp,
    memory: usize,
) -> CountingStutterScheduler {
    let mut durations = Vec::new();
    for s in 0..mdp.state_count() {
        for &a in mdp.enabled_actions(s) {
            durations.push((
                (
                    mdp.state_name(s).to_string(),
                    mdp.action_name(a).to_string(),
                ),
                rng.below(memory as u64) as usize,
            ));
        }
    }
    CountingStutterScheduler::new(memory, durations).unwrap()
}

fn num_is_zero(r: &Rational) -> bool {
    use num_traits::Zero;
    r.is_zero()
}
