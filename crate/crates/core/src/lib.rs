//! Simulation and statistical model checking of networks of stochastic hybrid
//! automata, with a built-in energy-aware robot cell case study.

pub mod casestudy;
pub mod expr;
pub mod interval;
pub mod model;
pub mod network;
pub mod predictor;
pub mod query;
pub mod sim;
pub mod stats;
