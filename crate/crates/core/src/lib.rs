#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod grpo;
pub mod prompt;
pub mod rewards;
pub mod rng;
pub mod sampler;
pub mod synthetic;
pub mod tracker;
pub mod eval;
pub mod stub;
pub mod config;
pub mod cli;
