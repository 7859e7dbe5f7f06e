//! Incremental concept formation with category-utility style evaluation
//! functions, plus the numerical experiments that probe their pathologies.

pub mod canon;
pub mod data;
pub mod eval;
pub mod lab;
pub mod schema;
pub mod stats;
pub mod synth;
pub mod tree;
