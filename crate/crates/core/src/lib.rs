//! Balanced metrics for twisted Higgs bundles on the projective line.
//!
//! A twisted Higgs bundle is a pair `(E, phi)` with `E` a holomorphic vector
//! bundle and `phi: M ⊗ E → E` a holomorphic morphism for a fixed twisting
//! line bundle `M = O(m)`.  On `P^1` every bundle splits, so `E = ⊕ O(d_i)`
//! and everything is finite-dimensional and explicitly computable.
//!
//! The crate quantizes the pair at level `k`: sections `H^0(E(k))`, the
//! pushforward `φ_*: H^0(M) ⊗ H^0(E(k)) → H^0(E(k))`, the endomorphism
//! `P = χ^{-1}(Id + δ[φ_*, φ_*^*] / (1 + |||φ_*|||^2))`, and the balanced
//! fixed-point iteration on Gram matrices whose fixed points satisfy the
//! balanced condition `Q = P`.  Around that core it provides Hilbert-Mumford
//! weight computations for one-parameter subgroups, the Kempf-Ness
//! functional, Bergman functions, Hitchin-equation residuals, and the
//! `A_j`/`B_j` operator expansion diagnostics.
//!
//! Conventions fixed once and used everywhere:
//! * Volume normalization `Vol(P^1) = 1`, i.e. `ω = (i/2π) ∂∂̄ log(1+|z|^2)`.
//! * Gram convention `G_{jl} = (e_l, e_j)`, so inner products on coefficient
//!   columns are `(u, v) = v† G u` and matrices act on coefficient columns.
//! * Degree-normalized curvature contraction: `iΛF` of the Fubini-Study
//!   metric on `O(d)` is the constant `d`; the Hitchin constant is then
//!   `λ = deg E / rk E`.

pub mod balanced;
pub mod bergman;
pub mod geometry;
pub mod git;
pub mod hermitian;
pub mod model;
pub mod quantization;
pub mod report;

pub(crate) mod util;

use thiserror::Error;

pub use num_complex::Complex64 as C64;
pub type CMatrix = nalgebra::DMatrix<C64>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate hermitian form: {0}")]
    DegenerateForm(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("inadmissible level k={k}: {reason}")]
    InadmissibleLevel { k: i64, reason: String },
    #[error("quadrature error: {0}")]
    Quadrature(String),
    #[error("scheme/field mismatch: {0}")]
    SchemeMismatch(String),
    #[error("matrix is not induced by a bundle morphism: {0}")]
    NotBundleMorphism(String),
    #[error("invalid summand subset: {0}")]
    InvalidSubset(String),
    #[error("invalid one-parameter subgroup: {0}")]
    InvalidOneParam(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("finite-difference failure: {0}")]
    FiniteDifference(String),
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Initialize the global rayon pool from the `HB_THREADS` environment
/// variable.  No-op when the variable is unset or the pool already exists.
pub fn init_threads() {
    if let Ok(v) = std::env::var("HB_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}
