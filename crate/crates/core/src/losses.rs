//! Pairwise preference losses over `(z_s, z_l)`.
//!
//! With `z = beta * log(pi_theta(y | x) / pi_ref(y | x))` for the chosen
//! response `y_s` and the rejected response `y_l`:
//!
//! | kind    | loss                                         |
//! |---------|----------------------------------------------|
//! | `irepo` | `((z_s - z_l) - target_logit)^2`             |
//! | `dpo`   | `-log sigmoid(z_s - z_l)`                    |
//! | `slic`  | `max(0, 1 - beta (log z_s - log z_l))`       |
//! | `ipo`   | `((z_s - z_l) - 1/2)^2`                      |
//! | `sppo`  | `(z_s - 1/2)^2 + (z_l - 1/2)^2`              |
//!
//! The SLiC row takes logarithms of `z` itself, so it is only defined for
//! `z_s, z_l > 0`; outside that region [`slic_loss`] returns a domain error.

use serde::{Deserialize, Serialize};

use crate::policy::{implicit_reward_diff, TabularPolicy};
use crate::{sigmoid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Irepo,
    Dpo,
    Slic,
    Ipo,
    Sppo,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [Self::Irepo, Self::Dpo, Self::Slic, Self::Ipo, Self::Sppo];

    pub fn name(self) -> &'static str {
        match self {
            Self::Irepo => "irepo",
            Self::Dpo => "dpo",
            Self::Slic => "slic",
            Self::Ipo => "ipo",
            Self::Sppo => "sppo",
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown loss kind `{s}` (expected irepo, dpo, ipo, slic or sppo)"
                ))
            })
    }
}

/// One training example: prompt, chosen and rejected response, regression target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSample {
    pub prompt: usize,
    pub chosen: usize,
    pub rejected: usize,
    /// Logit of the empirical preference of `chosen` over `rejected`.
    pub target_logit: f64,
}

impl LossSample {
    pub fn new(prompt: usize, chosen: usize, rejected: usize, target_logit: f64) -> Result<Self> {
        if chosen == rejected {
            return Err(Error::InvalidArgument(format!(
                "chosen and rejected responses are both {chosen}"
            )));
        }
        if !target_logit.is_finite() {
            return Err(Error::domain("target logit must be finite"));
        }
        Ok(Self {
            prompt,
            chosen,
            rejected,
            target_logit,
        })
    }
}

pub fn irepo_loss(implicit_diff: f64, target_logit: f64) -> f64 {
    let r = implicit_diff - target_logit;
    r * r
}

pub fn dpo_loss(z_s: f64, z_l: f64) -> f64 {
    // -log sigmoid(t) = log(1 + e^{-t}), split to avoid overflow
    let t = z_s - z_l;
    if t >= 0.0 {
        (-t).exp().ln_1p()
    } else {
        -t + t.exp().ln_1p()
    }
}

pub fn ipo_loss(z_s: f64, z_l: f64) -> f64 {
    let r = (z_s - z_l) - 0.5;
    r * r
}

pub fn sppo_loss(z_s: f64, z_l: f64) -> f64 {
    (z_s - 0.5).powi(2) + (z_l - 0.5).powi(2)
}

pub fn slic_loss(z_s: f64, z_l: f64, beta: f64) -> Result<f64> {
    check_slic_domain(z_s, z_l)?;
    Ok((1.0 - beta * (z_s.ln() - z_l.ln())).max(0.0))
}

fn check_slic_domain(z_s: f64, z_l: f64) -> Result<()> {
    if z_s > 0.0 && z_l > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "SLiC hinge takes log z_s and log z_l, undefined for z_s = {z_s}, z_l = {z_l}"
        )))
    }
}

/// Loss of `kind` at `(z_s, z_l)`. `target_logit` is read by `Irepo` only,
/// `beta` by `Slic` only.
pub fn sample_loss(kind: LossKind, z_s: f64, z_l: f64, target_logit: f64, beta: f64) -> Result<f64> {
    Ok(match kind {
        LossKind::Irepo => irepo_loss(z_s - z_l, target_logit),
        LossKind::Dpo => dpo_loss(z_s, z_l),
        LossKind::Slic => slic_loss(z_s, z_l, beta)?,
        LossKind::Ipo => ipo_loss(z_s, z_l),
        LossKind::Sppo => sppo_loss(z_s, z_l),
    })
}

/// `(d loss / d z_s, d loss / d z_l)`. The SLiC hinge uses subgradient 0 at its kink.
pub fn loss_partials(kind: LossKind, z_s: f64, z_l: f64, target_logit: f64, beta: f64) -> Result<(f64, f64)> {
    Ok(match kind {
        LossKind::Irepo => {
            let g = 2.0 * (z_s - z_l - target_logit);
            (g, -g)
        }
        LossKind::Dpo => {
            let g = -sigmoid(z_l - z_s);
            (g, -g)
        }
        LossKind::Slic => {
            check_slic_domain(z_s, z_l)?;
            if 1.0 - beta * (z_s.ln() - z_l.ln()) > 0.0 {
                (-beta / z_s, beta / z_l)
            } else {
                (0.0, 0.0)
            }
        }
        LossKind::Ipo => {
            let g = 2.0 * (z_s - z_l - 0.5);
            (g, -g)
        }
        LossKind::Sppo => (2.0 * (z_s - 0.5), 2.0 * (z_l - 0.5)),
    })
}

/// Sum over `samples` of the chosen loss.
pub fn empirical_risk(
    theta: &TabularPolicy,
    reference: &TabularPolicy,
    samples: &[LossSample],
    beta: f64,
    kind: LossKind,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut total = 0.0;
    for s in samples {
        let r = implicit_reward_diff(theta, reference, s.prompt, s.chosen, s.rejected, beta)?;
        total += sample_loss(kind, r.z_s, r.z_l, s.target_logit, beta)?;
    }
    Ok(total)
}

/// [`empirical_risk`] divided by the sample count.
pub fn mean_risk(
    theta: &TabularPolicy,
    reference: &TabularPolicy,
    samples: &[LossSample],
    beta: f64,
    kind: LossKind,
) -> Result<f64> {
    Ok(empirical_risk(theta, reference, samples, beta, kind)? / samples.len() as f64)
}

/// Gradient of [`empirical_risk`] with respect to every logit of `theta`,
/// row-major with the same layout as [`TabularPolicy::logits`].
///
/// Uses `d z / d logit[x][k] = beta * (1{k = y} - pi_theta(k | x))`: each
/// sample deposits its two partials on its responses, and each prompt row is
/// then centred by the policy probabilities.
pub fn risk_gradient(
    theta: &TabularPolicy,
    reference: &TabularPolicy,
    samples: &[LossSample],
    beta: f64,
    kind: LossKind,
) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let n_y = theta.responses();
    let mut grad = vec![0.0; theta.prompts() * n_y];
    let mut touched = vec![false; theta.prompts()];
    for s in samples {
        let r = implicit_reward_diff(theta, reference, s.prompt, s.chosen, s.rejected, beta)?;
        let (gs, gl) = loss_partials(kind, r.z_s, r.z_l, s.target_logit, beta)?;
        grad[s.prompt * n_y + s.chosen] += beta * gs;
        grad[s.prompt * n_y + s.rejected] += beta * gl;
        touched[s.prompt] = true;
    }
    for (x, _) in touched.iter().enumerate().filter(|(_, t)| **t) {
        let probs = theta.probs_row(x)?;
        let row = &mut grad[x * n_y..(x + 1) * n_y];
        let mass: f64 = row.iter().sum();
        for (g, p) in row.iter_mut().zip(&probs) {
            *g -= p * mass;
        }
    }
    Ok(grad)
}

/// Full-batch gradient descent settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSettings {
    /// iREPO descent on a single repeated pair diverges once this reaches `1 / (2 beta^2)`.
    pub learning_rate: f64,
    pub epochs_per_iter: usize,
    /// Stop once the max-norm of the mean-risk gradient drops below this.
    pub gradient_tol: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs_per_iter: 500,
            gradient_tol: 1e-9,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("optimizer.learning_rate", "must be positive"));
        }
        if self.epochs_per_iter == 0 {
            return Err(Error::config("optimizer.epochs_per_iter", "must be at least 1"));
        }
        if !(self.gradient_tol >= 0.0) {
            return Err(Error::config("optimizer.gradient_tol", "must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeReport {
    pub epochs: usize,
    /// Max-norm of the mean-risk gradient at the returned policy.
    pub gradient_norm: f64,
    pub mean_risk_before: f64,
    pub mean_risk_after: f64,
}

/// Minimises the risk over `samples` by gradient descent on the logits,
/// starting from `theta`.
///
/// Steps follow the gradient of the mean risk (the sum divided by the
/// sample count): the minimiser is the same, and the step size no longer
/// depends on how many samples there are.
pub fn minimize_risk(
    theta: &TabularPolicy,
    reference: &TabularPolicy,
    samples: &[LossSample],
    beta: f64,
    kind: LossKind,
    settings: &OptimizerSettings,
) -> Result<(TabularPolicy, OptimizeReport)> {
    settings.validate()?;
    let n = samples.len() as f64;
    let mean_risk_before = mean_risk(theta, reference, samples, beta, kind)?;
    let mut current = theta.clone();
    let mut epochs = 0;
    let mut gradient_norm;
    loop {
        let grad = risk_gradient(&current, reference, samples, beta, kind)?;
        gradient_norm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs())) / n;
        if gradient_norm < settings.gradient_tol || epochs == settings.epochs_per_iter {
            break;
        }
        let step = settings.learning_rate / n;
        let logits = current
            .logits()
            .iter()
            .zip(&grad)
            .map(|(l, g)| l - step * g)
            .collect();
        current = current.with_logits(logits)?;
        epochs += 1;
    }
    let mean_risk_after = mean_risk(&current, reference, samples, beta, kind)?;
    Ok((
        current,
        OptimizeReport {
            epochs,
            gradient_norm,
            mean_risk_before,
            mean_risk_after,
        },
    ))
}
