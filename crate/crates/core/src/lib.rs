pub mod baselines;
pub mod canonical;
pub mod error;
pub mod eval;
pub mod matching;
pub mod milp;
pub mod partition;
pub mod probability;
pub mod relational;
pub mod solver;
pub mod summarize;
pub mod synthgen;

pub use error::{Error, Result};
