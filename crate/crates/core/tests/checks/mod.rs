//! Checks shared between the test targets here and the acceptance run.
#![allow(dead_code)]

pub mod canonical;
pub mod gradients;
pub mod loss;
pub mod parser;
pub mod rules;
pub mod sqlite;
