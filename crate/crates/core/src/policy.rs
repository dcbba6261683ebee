//! Tabular softmax policies.
//!
//! A [`TabularPolicy`] holds one logit per `(prompt, response)` cell and
//! defines `pi(y | x) = softmax(logits[x])[y]`. The same type serves as the
//! trainable policy and as the frozen reference.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::annotators::RewardTable;
use crate::rng::RngStream;
use crate::{io, Error, Result};

/// Draw budget for [`sample_responses`].
pub const MAX_RESPONSE_DRAWS: usize = 1000;

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "PolicyLogits", try_from = "PolicyLogits")]
pub struct TabularPolicy {
    prompts: usize,
    responses: usize,
    logits: Vec<f64>,
    log_probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PolicyLogits {
    logits: Vec<Vec<f64>>,
}

impl From<TabularPolicy> for PolicyLogits {
    fn from(p: TabularPolicy) -> Self {
        Self { logits: p.logit_rows() }
    }
}

impl TryFrom<PolicyLogits> for TabularPolicy {
    type Error = Error;

    fn try_from(v: PolicyLogits) -> Result<Self> {
        Self::from_rows(v.logits)
    }
}

impl TabularPolicy {
    /// Row-major logits for `prompts x responses` cells.
    pub fn from_logits(prompts: usize, responses: usize, logits: Vec<f64>) -> Result<Self> {
        if prompts == 0 || responses == 0 {
            return Err(Error::InvalidArgument("policy table must be nonempty".into()));
        }
        if logits.len() != prompts * responses {
            return Err(Error::DimensionMismatch {
                expected: prompts * responses,
                found: logits.len(),
            });
        }
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::domain("policy logits must be finite"));
        }
        let mut log_probs = Vec::with_capacity(logits.len());
        for row in logits.chunks(responses) {
            let lse = log_sum_exp(row);
            log_probs.extend(row.iter().map(|l| l - lse));
        }
        Ok(Self {
            prompts,
            responses,
            logits,
            log_probs,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let prompts = rows.len();
        let responses = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != responses) {
            return Err(Error::DimensionMismatch {
                expected: responses,
                found: bad.len(),
            });
        }
        Self::from_logits(prompts, responses, rows.into_iter().flatten().collect())
    }

    pub fn uniform(prompts: usize, responses: usize) -> Result<Self> {
        Self::from_logits(prompts, responses, vec![0.0; prompts * responses])
    }

    /// Reads a logits CSV (one row per prompt).
    pub fn from_csv_path(path: &Path) -> Result<Self> {
        Self::from_rows(io::read_real_matrix_csv_path(path)?)
    }

    pub fn to_csv(&self) -> String {
        io::format_real_matrix_csv(&self.logit_rows())
    }

    pub fn prompts(&self) -> usize {
        self.prompts
    }

    pub fn responses(&self) -> usize {
        self.responses
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn logit_rows(&self) -> Vec<Vec<f64>> {
        self.logits.chunks(self.responses).map(<[f64]>::to_vec).collect()
    }

    /// Same shape, new logits.
    pub fn with_logits(&self, logits: Vec<f64>) -> Result<Self> {
        Self::from_logits(self.prompts, self.responses, logits)
    }

    /// Adds independent `N(0, scale^2)` noise to every logit.
    pub fn perturbed(&self, scale: f64, rng: &mut RngStream) -> Result<Self> {
        let normal = Normal::new(0.0, scale)
            .map_err(|e| Error::InvalidArgument(format!("noise scale {scale}: {e}")))?;
        let logits = self.logits.iter().map(|l| l + normal.sample(rng)).collect();
        self.with_logits(logits)
    }

    fn check_prompt(&self, x: usize) -> Result<()> {
        if x >= self.prompts {
            return Err(Error::IndexOutOfRange {
                what: "prompt",
                index: x,
                len: self.prompts,
            });
        }
        Ok(())
    }

    fn check(&self, x: usize, y: usize) -> Result<()> {
        self.check_prompt(x)?;
        if y >= self.responses {
            return Err(Error::IndexOutOfRange {
                what: "response",
                index: y,
                len: self.responses,
            });
        }
        Ok(())
    }

    pub fn log_probs_row(&self, x: usize) -> Result<&[f64]> {
        self.check_prompt(x)?;
        Ok(&self.log_probs[x * self.responses..(x + 1) * self.responses])
    }

    pub fn probs_row(&self, x: usize) -> Result<Vec<f64>> {
        Ok(self.log_probs_row(x)?.iter().map(|l| l.exp()).collect())
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.prompts != other.prompts {
            return Err(Error::DimensionMismatch {
                expected: self.prompts,
                found: other.prompts,
            });
        }
        if self.responses != other.responses {
            return Err(Error::DimensionMismatch {
                expected: self.responses,
                found: other.responses,
            });
        }
        Ok(())
    }
}

/// `log pi(y | x)`.
pub fn log_prob(policy: &TabularPolicy, x: usize, y: usize) -> Result<f64> {
    policy.check(x, y)?;
    Ok(policy.log_probs[x * policy.responses + y])
}

/// Prompt distribution `rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptDistribution {
    weights: Vec<f64>,
}

impl PromptDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("prompt distribution is empty".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::domain("prompt weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("prompt weights sum to {total}, not 1")));
        }
        Ok(Self { weights })
    }

    pub fn uniform(prompts: usize) -> Result<Self> {
        Self::new(vec![1.0 / prompts as f64; prompts])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn sample(&self, rng: &mut RngStream) -> usize {
        categorical(&self.weights, rng)
    }
}

/// Inverse-CDF draw from unnormalized nonnegative `weights`.
fn categorical(weights: &[f64], rng: &mut RngStream) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // u landed on the rounding sliver at the top; take the last positive weight
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// `d` distinct responses for prompt `x`, in order of first appearance among
/// i.i.d. draws from `pi(. | x)`.
pub fn sample_responses(
    policy: &TabularPolicy,
    x: usize,
    d: usize,
    rng: &mut RngStream,
) -> Result<Vec<usize>> {
    if d < 2 || d > policy.responses {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {d} distinct responses from a vocabulary of {}",
            policy.responses
        )));
    }
    let probs = policy.probs_row(x)?;
    let mut picked = Vec::with_capacity(d);
    for _ in 0..MAX_RESPONSE_DRAWS {
        let y = categorical(&probs, rng);
        if !picked.contains(&y) {
            picked.push(y);
            if picked.len() == d {
                return Ok(picked);
            }
        }
    }
    Err(Error::SamplingExhausted {
        wanted: d,
        draws: MAX_RESPONSE_DRAWS,
    })
}

/// `R = z_s - z_l` with `z = beta * log(pi_theta(y | x) / pi_ref(y | x))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImplicitRewardDiff {
    pub value: f64,
    pub z_s: f64,
    pub z_l: f64,
    pub beta: f64,
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("beta {beta} must be positive")))
    }
}

pub fn implicit_reward_diff(
    theta: &TabularPolicy,
    reference: &TabularPolicy,
    x: usize,
    y_s: usize,
    y_l: usize,
    beta: f64,
) -> Result<ImplicitRewardDiff> {
    check_beta(beta)?;
    theta.same_shape(reference)?;
    let z_s = beta * (log_prob(theta, x, y_s)? - log_prob(reference, x, y_s)?);
    let z_l = beta * (log_prob(theta, x, y_l)? - log_prob(reference, x, y_l)?);
    Ok(ImplicitRewardDiff {
        value: z_s - z_l,
        z_s,
        z_l,
        beta,
    })
}

/// `KL(pi_theta(. | x) || pi_ref(. | x))`, clamped at zero against rounding.
pub fn kl_divergence(theta: &TabularPolicy, reference: &TabularPolicy, x: usize) -> Result<f64> {
    theta.same_shape(reference)?;
    let lt = theta.log_probs_row(x)?;
    let lr = reference.log_probs_row(x)?;
    let kl: f64 = lt.iter().zip(lr).map(|(a, b)| a.exp() * (a - b)).sum();
    Ok(kl.max(0.0))
}

/// `sum_x rho(x) KL(x)`.
pub fn mean_kl(theta: &TabularPolicy, reference: &TabularPolicy, rho: &PromptDistribution) -> Result<f64> {
    check_rho(theta, rho)?;
    let mut total = 0.0;
    for (x, w) in rho.weights().iter().enumerate() {
        total += w * kl_divergence(theta, reference, x)?;
    }
    Ok(total)
}

/// `sum_x rho(x) sum_y pi(y | x) r(x, y)`.
pub fn expected_reward(policy: &TabularPolicy, reward: &RewardTable, rho: &PromptDistribution) -> Result<f64> {
    check_rho(policy, rho)?;
    check_reward(policy, reward)?;
    let mut total = 0.0;
    for (x, w) in rho.weights().iter().enumerate() {
        let probs = policy.probs_row(x)?;
        total += w * probs.iter().zip(reward.row(x)?).map(|(p, r)| p * r).sum::<f64>();
    }
    Ok(total)
}

fn check_rho(policy: &TabularPolicy, rho: &PromptDistribution) -> Result<()> {
    if rho.len() != policy.prompts {
        return Err(Error::DimensionMismatch {
            expected: policy.prompts,
            found: rho.len(),
        });
    }
    Ok(())
}

fn check_reward(policy: &TabularPolicy, reward: &RewardTable) -> Result<()> {
    if reward.prompts() != policy.prompts || reward.responses() != policy.responses {
        return Err(Error::DimensionMismatch {
            expected: policy.prompts * policy.responses,
            found: reward.prompts() * reward.responses(),
        });
    }
    Ok(())
}

/// `log Z(x) = log sum_y pi_ref(y | x) exp(r(x, y) / beta)`, via log-sum-exp.
pub fn log_partition_function(
    reference: &TabularPolicy,
    reward: &RewardTable,
    beta: f64,
    x: usize,
) -> Result<f64> {
    check_beta(beta)?;
    check_reward(reference, reward)?;
    let terms: Vec<f64> = reference
        .log_probs_row(x)?
        .iter()
        .zip(reward.row(x)?)
        .map(|(lp, r)| lp + r / beta)
        .collect();
    Ok(log_sum_exp(&terms))
}

/// `Z(x)`; may overflow to infinity where [`log_partition_function`] does not.
pub fn partition_function(
    reference: &TabularPolicy,
    reward: &RewardTable,
    beta: f64,
    x: usize,
) -> Result<f64> {
    Ok(log_partition_function(reference, reward, beta, x)?.exp())
}

/// `beta * log(pi_theta(y | x) / pi_ref(y | x)) + beta * log Z(x)`.
pub fn reconstruct_reward(
    theta: &TabularPolicy,
    reference: &TabularPolicy,
    beta: f64,
    x: usize,
    y: usize,
    log_z: f64,
) -> Result<f64> {
    check_beta(beta)?;
    theta.same_shape(reference)?;
    Ok(beta * (log_prob(theta, x, y)? - log_prob(reference, x, y)?) + beta * log_z)
}

/// The maximiser of the KL-regularised objective:
/// `pi*(y | x) ∝ pi_ref(y | x) exp(r(x, y) / beta)`.
pub fn optimal_policy(reference: &TabularPolicy, reward: &RewardTable, beta: f64) -> Result<TabularPolicy> {
    check_beta(beta)?;
    check_reward(reference, reward)?;
    let logits = reference
        .log_probs
        .iter()
        .zip(&reward.rows().concat())
        .map(|(lp, r)| lp + r / beta)
        .collect();
    reference.with_logits(logits)
}

/// `sum_x rho(x) [ sum_y pi_theta(y | x) r(x, y) - beta KL(x) ]`, computed exactly.
pub fn kl_regularized_objective(
    theta: &TabularPolicy,
    reference: &TabularPolicy,
    reward: &RewardTable,
    beta: f64,
    rho: &PromptDistribution,
) -> Result<f64> {
    check_beta(beta)?;
    Ok(expected_reward(theta, reward, rho)? - beta * mean_kl(theta, reference, rho)?)
}
