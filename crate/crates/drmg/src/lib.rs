//! Distributionally robust Markov games: data model, robust duals,
//! equilibrium solvers, robust dynamic programming, and the RONAVI
//! online learner with a regret-scoring harness.

pub mod dual;
pub mod equilibria;
pub mod game;
pub mod harness;
pub mod lp;
pub mod par;
pub mod planning;
pub mod ronavi;
