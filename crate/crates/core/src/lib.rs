//! Table-agnostic question answering over single relational tables.

pub mod abstraction;
pub mod chart;
pub mod derivation;
pub mod error;
pub mod exec;
pub mod interpret;
pub mod optim;
pub mod pipeline;
pub mod rules;
pub mod scoring;
pub mod sql;
pub mod symbol;
pub mod table;
pub mod token;
pub mod training;
pub mod value;
pub mod vocab;

pub use error::{Error, Result};
