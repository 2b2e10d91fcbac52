pub mod error;
pub mod extensive;
pub mod hedging;
pub mod hydro;
pub mod iterate;
pub mod problem;
pub mod prox;
pub mod random;
pub mod rng;
pub mod runtime;
pub mod splitting;
pub mod tree;
