//! Finite-volume solver for drift-diffusion with volume exclusion and
//! Butler-Volmer boundary exchange.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod experiments;
pub mod linalg;
pub mod mesh;
pub mod physics;
pub mod presets;
pub mod scheme;
pub mod solver;
