//! Fair linear regression with information-theoretic regularisers.
//!
//! The crate trains linear regressors whose scores are pushed towards one of
//! three fairness criteria — independence (`S ⊥ A`), separation (`S ⊥ A | Y`)
//! and sufficiency (`Y ⊥ A | S`) — by penalising how well a fast
//! least-squares probabilistic classifier can read the sensitive attribute
//! `A` off the score `S` (and, for the conditional criteria, the target
//! `Y`). The same classifier construction doubles as a normalised
//! mutual-information estimator, which can be validated against a
//! Monte-Carlo oracle on synthetic two-Gaussian scenarios.
//!
//! Module map:
//!
//! * [`data`] — datasets, CSV loading, cross-validation folds, synthetic
//!   scenarios.
//! * [`lspc`] — basis expansions, the closed-form least-squares classifier
//!   with softplus-normalised posteriors, and the nested logistic reference
//!   classifier.
//! * [`infometrics`] — entropy and (conditional) mutual-information
//!   estimates, a random-Fourier-feature backend, and the Monte-Carlo
//!   oracle.
//! * [`training`] — the penalised regression objective, its exact gradient,
//!   quasi-Newton training and cross-validated frontier evaluation.
//! * [`optim`] — the L-BFGS solver shared by training and the nested
//!   classifier fits.

pub mod data;
mod error;
pub mod infometrics;
pub mod lspc;
pub mod optim;
pub mod stats;
pub mod training;

pub use error::{Error, Result};
