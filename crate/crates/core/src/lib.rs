#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod counts;
pub mod divergence;
pub mod generation;
pub mod predictability;
pub mod report;
pub mod synthetic;
pub mod cli;
