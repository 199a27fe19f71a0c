pub mod corpus;
pub mod eval;
pub mod synthetic;
pub mod wikisql;
pub mod service;
