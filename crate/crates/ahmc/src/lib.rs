//! Model checker for asynchronous probabilistic hyperproperties over MDPs.
//!
//! The pipeline compiles an MDP together with a quantified hyperproperty
//! (scheduler, state and stutter-scheduler quantifiers over a PCTL-like body)
//! into a quantifier-free nonlinear real-arithmetic constraint system, hands
//! that system to an external SMT solver, and can cross-validate verdicts
//! with an exact explicit-state oracle.
//!
//! Modules:
//! - [`model`]: MDPs, DTMCs, restricted schedulers, counting stutter-schedulers,
//!   induced and composed DTMCs, and the `.mdp` text format.
//! - [`formula`]: the hyperproperty AST, parser, printer, desugaring and
//!   prefix analysis.
//! - [`oracle`]: exact evaluation of concrete instantiations and brute-force
//!   quantifier enumeration on small instances.
//! - [`encoder`]: the SMT-LIB constraint generator.
//! - [`solver`]: the external solver driver and witness decoding.
//! - [`cases`]: the built-in case-study model generators.

pub mod cases;
pub mod encoder;
pub mod formula;
pub mod model;
pub mod oracle;
pub mod rational;
pub mod solver;

#[cfg(test)]
pub(crate) mod testfix;

pub use rational::Rational;
