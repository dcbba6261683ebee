//! The iterative self-generation loop and the instruments used to measure it.
//!
//! Each iteration of [`Simulator::run_iteration`] draws prompts, samples `d`
//! distinct responses from the current policy, has the annotator pool vote
//! on every pair, ranks the responses, and regresses the implicit reward
//! difference of the strongest and weakest response onto the logit of their
//! ranked preference.
//!
//! Progress is measured against the analytic optimum
//! `pi*(y | x) ~ pi_ref(y | x) exp(r*(x, y) / beta)`: see [`EvaluationSet`],
//! [`estimate_concentrability`], [`lemma1_check`] and [`theorem1_sweep`].

mod config;
mod evaluation;
mod metrics;
mod simulate;
mod sweep;

pub use config::{AlignmentRunConfig, ConcentrabilitySettings, NamedWeights, PromptWeights, RewardSource};
pub use evaluation::{
    estimate_concentrability, lemma1_check, tv_preference_gap, EvalDraw, EvaluationSet, Lemma1Report,
    Lemma1Status,
};
pub use metrics::{metrics_csv_header, parse_metrics_csv, write_metrics_csv, IterationMetrics, METRICS_COLUMNS};
pub use simulate::{run, run_with, IterationOutcome, RunOutcome, Simulator};
pub use sweep::{
    log_log_slope, parse_sweep_csv, theorem1_sweep, write_sweep_csv, SweepReport, SweepRow, SWEEP_COLUMNS,
};

use crate::{sigmoid, Error, Result};

/// Total variation between `Bernoulli(sigmoid(a))` and `Bernoulli(sigmoid(b))`
/// in the `2 |p - q|` convention, so values lie in `[0, 2]`.
pub fn tv_bernoulli(a: f64, b: f64) -> f64 {
    2.0 * (sigmoid(a) - sigmoid(b)).abs()
}

/// Two Bernoulli parameters in `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreferencePair {
    pub p1: f64,
    pub p2: f64,
}

impl PreferencePair {
    pub fn new(p1: f64, p2: f64) -> Result<Self> {
        for p in [p1, p2] {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::domain(format!("Bernoulli parameter {p} must lie in (0, 1)")));
            }
        }
        Ok(Self { p1, p2 })
    }

    /// From pre-sigmoid values.
    pub fn from_logits(a: f64, b: f64) -> Result<Self> {
        Self::new(sigmoid(a), sigmoid(b))
    }

    pub fn tv_distance(&self) -> f64 {
        2.0 * (self.p1 - self.p2).abs()
    }
}
