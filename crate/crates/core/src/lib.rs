//! Structural credit-risk filtering.
//!
//! A firm value `X` follows `dX = dW + a(X) dt` and defaults at the first
//! time `τ` it hits zero. Investors do not see `X`; they see
//! `dY = dB + b(t, X) dt`. This crate simulates the pair, runs a particle
//! filter for the conditional law of the stopped firm value, extracts the
//! conditional survival process `Z_t = P[τ > t | F^Y_t]` and the default
//! intensity, and prices defaultable zero-coupon bonds and rebates with
//! several equivalent formulas that cross-check each other.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coeffs;
pub mod error;
pub mod filter;
pub mod harness;
pub mod hitting;
pub mod par;
pub mod pricing;
pub mod quad;
pub mod rng;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
