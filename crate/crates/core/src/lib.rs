#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Finite volume solver for stochastic reaction-diffusion equations with
//! multiplicative noise,
//!
//! ```text
//! dv - Δv dt = S(v) dt + g(v) dB(t)   in D x (0, T),
//! ```
//!
//! discretised with the hybrid mimetic mixed (HMM) gradient scheme on
//! polygonal meshes: implicit diffusion, explicit reaction and noise. The
//! [`experiments`] module drives Monte Carlo convergence studies against a
//! travelling-wave reference solution and noise-induced wave dynamics runs.

pub mod error;
pub mod exact;
pub mod experiments;
pub mod gdisc;
pub mod mesh;
pub mod par;
pub mod solver;
pub mod sparse;
pub mod stochastic;

pub use error::{Error, Result};
