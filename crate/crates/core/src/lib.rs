#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acoustic;
pub mod cli;
pub mod ekf;
pub mod fusion;
pub mod geometry;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod segmentation;
pub mod simulator;
