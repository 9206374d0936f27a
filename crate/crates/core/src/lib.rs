//! Rank transformation for LoRA adapters.
//!
//! A trained adapter `ΔW ≈ A·B` of rank `r_src` is converted to any target
//! rank through a truncated SVD of the product, either exact, randomized, or
//! computed from a small core matrix without ever forming `ΔW`. Around that
//! sit rank-annealing schedule planning, variance-retention analysis, a
//! checkpoint container format and a small gradient-descent trainer used to
//! exercise the whole pipeline on synthetic tasks.

pub mod checkpoint;
pub mod error;
pub mod fnv;
pub mod linalg;
pub mod matrix;
pub mod par;
pub mod retention;
pub mod rng;
pub mod schedule;
pub mod squeeze;
pub mod trainer;

pub use error::{Error, Result};
pub use linalg::{qr_decompose, rsvd, svd_full, RsvdConfig, SvdResult};
pub use matrix::{gaussian_matrix, Matrix};
pub use retention::format_sig;
pub use squeeze::{
    estimate_flops, reconstruct_delta, split_factors, squeeze, squeeze_efficient, squeeze_expand,
    squeeze_standard, CoreSvd, FlopBackend, FlopEstimate, LoraFactorPair, SqueezeMethod,
    SqueezeReport,
};
