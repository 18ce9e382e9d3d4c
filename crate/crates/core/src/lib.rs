#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

//! Differentially private synthesis of spatial point patterns on rectangles
//! and linear networks.

pub mod error;
pub mod eval;
pub mod experiment;
pub mod geometry;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod network_cov;

pub use error::{Error, Result};
pub mod pointprocess;
pub mod privacy;
pub mod rng;
pub mod synth;
