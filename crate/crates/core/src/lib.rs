//! Cutting-plane selection laboratory: MILP model, simplex, Gomory separation,
//! cut scorers, instance generators, rollouts and evaluation metrics.

pub mod episode;
pub mod generators;
pub mod graph;
pub mod lp;
pub mod metrics;
pub mod milp;
pub mod scorers;
pub mod seed;
pub mod separators;
