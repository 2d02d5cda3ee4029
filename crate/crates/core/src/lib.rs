//! Nonparametric drift estimation for SDEs driven by fractional Brownian motion.
//!
//! The model is `X(t) = x0 + ∫ b(X(s)) ds + σ B(t)` with `B` an fBm of Hurst
//! index `H ∈ (1/2, 1)`. The crate covers
//!
//! * exact-in-law fBm sampling ([`fbm`]),
//! * Euler solutions, coupled solutions from `x0` and `x0 + ε`, and the
//!   Ornstein–Uhlenbeck variance kernel ([`sde`]),
//! * trigonometric and Hermite bases ([`basis`]),
//! * Young sums and the computable Skorokhod surrogate ([`integrals`]),
//! * projection estimators of `b` and `b'` with the stability truncation
//!   ([`estimators`]),
//! * Monte Carlo risk evaluation and rate sweeps ([`experiments`]),
//! * the built-in oracle suite used by `fsde validate` ([`validate`]).
//!
//! Path-level work runs through [`Exec`], which maps over path indices either
//! sequentially or with rayon (feature `parallel`). Reductions always happen
//! in index order, so results do not depend on the thread count.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod error;
pub mod estimators;
pub mod exec;
pub mod experiments;
pub mod fbm;
pub mod integrals;
pub mod io;
pub mod quadrature;
pub mod sde;
pub mod validate;

pub use basis::{BasisKind, BasisSpec};
pub use error::{Error, Result};
pub use estimators::{AnchoredPrimitive, FitResult, GramMatrix};
pub use exec::Exec;
pub use experiments::{RiskReport, TrialConfig};
pub use fbm::{FbmPath, FbmSampler, TimeGrid};
pub use integrals::KernelCache;
pub use sde::{CoupledPaths, DriftModel, SdeConfig, SdePath};

/// `α_H = H(2H − 1)`, the constant in front of the fBm kernel `|t − s|^{2H−2}`.
pub fn alpha_h(hurst: f64) -> f64 {
    hurst * (2.0 * hurst - 1.0)
}

pub(crate) fn check_hurst(hurst: f64) -> Result<()> {
    if hurst.is_finite() && hurst > 0.5 && hurst < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("Hurst index must lie in (1/2, 1), got {hurst}")))
    }
}
