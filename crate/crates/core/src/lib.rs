//! Preference-alignment mathematics at desk scale.
//!
//! The crate is organised bottom-up:
//!
//! - [`ranking`]: Bradley-Terry strengths from pairwise win counts, using the
//!   classic Zermelo fixed point or Newman's accelerated iteration.
//! - [`annotators`]: a synthetic population of annotators voting according
//!   to a ground-truth reward table.
//! - [`policy`]: a tabular softmax policy with the KL-regularised objective,
//!   partition function and implicit-reward algebra.
//! - [`losses`]: the regression loss on preference logits together with the
//!   DPO, SLiC, IPO and SPPO baselines, analytic gradients and a full-batch
//!   optimizer.
//! - [`alignment`]: the iterative self-generation loop and the instruments
//!   used to measure it (total-variation preference gap, concentrability,
//!   the `h`-rate sweep).
//! - [`io`]: CSV/JSON readers and writers used by the command-line front end.

pub mod alignment;
pub mod annotators;
mod error;
pub mod fmt;
pub mod io;
pub mod losses;
pub mod policy;
pub mod ranking;
pub mod rng;

pub use error::{Error, Result};

/// Logistic function, evaluated without overflow for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(p / (1 - p))`.
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
