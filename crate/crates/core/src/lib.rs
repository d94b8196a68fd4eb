//! Multi-dimensional Mandelbrot cascades.
//!
//! A cascade model is the law of `(N, A_1, A_2, …)`: a random offspring count
//! and random nonnegative p×p weights. Attached to a Galton-Watson tree, the
//! path products `X_u = A_{u_1}⋯A_{u_1⋯u_n}` define the martingale
//! `Y_n = Σ_{u∈T_n} X_u V`, whose limit solves the smoothing-transform
//! fixed point `Z = Σ_{k≤N} A_k Z(k)` in distribution.
//!
//! The crate checks moment, harmonic-moment and Laplace-decay conditions
//! exactly for finite-atom laws ([`conditions`], built on [`spectral`]) and
//! confronts them with Monte Carlo draws of `Y_n` ([`engine`], [`estimate`]).

pub mod cli;
pub mod conditions;
pub mod engine;
pub mod error;
pub mod estimate;
pub mod fixtures;
pub mod matrix;
pub mod mbrw;
pub mod model;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
pub use matrix::{CMatrix, Matrix};
pub use model::{
    load_model, normalize_model, validate_model, Atom, CascadeModel, Field, ValidationReport,
};
pub use spectral::{
    intensity_measure, moment_matrix, n_step_moment_matrix, perron, IntensityMeasure, PerronTriple,
};
