//! Symbolic execution of a higher-order language with contracts, and
//! verification of modules against their exported contracts.

pub mod approx;
pub mod cli;
pub mod concrete;
pub mod delta;
pub mod eval;
pub mod gen;
pub mod heap;
pub mod parse;
pub mod print;
pub mod proof;
pub mod report;
pub mod shape;
pub mod smt;
pub mod summarize;
pub mod syntax;
