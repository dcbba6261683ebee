use serde::{Deserialize, Serialize};

use super::config::{AlignmentRunConfig, ConcentrabilitySettings};
use super::simulate::Simulator;
use super::tv_bernoulli;
use crate::annotators::{AnnotatorMode, RewardTable};
use crate::losses::{mean_risk, LossKind, LossSample};
use crate::policy::{implicit_reward_diff, optimal_policy, sample_responses, PromptDistribution, TabularPolicy};
use crate::rng::{stream, streams, RngStream};
use crate::{Error, Result};

/// One evaluation triple with the true reward gap of its responses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalDraw {
    pub prompt: usize,
    pub chosen: usize,
    pub rejected: usize,
    /// `r*(x, chosen) - r*(x, rejected)`, the logit of the population preference.
    pub true_logit: f64,
}

/// Triples `(x, y_s, y_l)` drawn from the optimal policy: `x ~ rho`, `d`
/// distinct responses from `pi*(. | x)`, and the responses with the highest
/// and lowest true reward among them.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationSet {
    draws: Vec<EvalDraw>,
}

impl EvaluationSet {
    pub fn draw(
        optimal: &TabularPolicy,
        rewards: &RewardTable,
        rho: &PromptDistribution,
        d: usize,
        n: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptySamples);
        }
        let mut draws = Vec::with_capacity(n);
        for _ in 0..n {
            let x = rho.sample(rng);
            let ys = sample_responses(optimal, x, d, rng)?;
            let r = rewards.row(x)?;
            let (s, l) = true_extremes(&ys, r);
            draws.push(EvalDraw {
                prompt: x,
                chosen: ys[s],
                rejected: ys[l],
                true_logit: r[ys[s]] - r[ys[l]],
            });
        }
        Ok(Self { draws })
    }

    pub fn from_draws(draws: Vec<EvalDraw>) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::EmptySamples);
        }
        Ok(Self { draws })
    }

    pub fn draws(&self) -> &[EvalDraw] {
        &self.draws
    }

    /// Mean of `tv_bernoulli(true_logit, R_theta(x, y_s, y_l))` over the set.
    pub fn tv_gap(&self, theta: &TabularPolicy, reference: &TabularPolicy, beta: f64) -> Result<f64> {
        let mut total = 0.0;
        for z in &self.draws {
            let r = implicit_reward_diff(theta, reference, z.prompt, z.chosen, z.rejected, beta)?;
            total += tv_bernoulli(z.true_logit, r.value);
        }
        Ok(total / self.draws.len() as f64)
    }

    /// The draws as regression samples labelled with their true logits.
    pub fn as_samples(&self) -> Vec<LossSample> {
        self.draws
            .iter()
            .map(|z| LossSample {
                prompt: z.prompt,
                chosen: z.chosen,
                rejected: z.rejected,
                target_logit: z.true_logit,
            })
            .collect()
    }
}

/// Positions of the highest and lowest reward among `ys`, first occurrence
/// winning ties; `(0, 1)` when all rewards are equal.
fn true_extremes(ys: &[usize], rewards: &[f64]) -> (usize, usize) {
    let mut s = 0;
    let mut l = 0;
    for (k, &y) in ys.iter().enumerate() {
        if rewards[y] > rewards[ys[s]] {
            s = k;
        }
        if rewards[y] < rewards[ys[l]] {
            l = k;
        }
    }
    if s == l {
        (0, 1)
    } else {
        (s, l)
    }
}

/// Mean TV preference gap of `theta` on a fresh evaluation set of
/// `config.n_eval` draws from the optimal policy for `rewards` and `beta`.
pub fn tv_preference_gap(
    theta: &TabularPolicy,
    reference: &TabularPolicy,
    rewards: &RewardTable,
    beta: f64,
    config: &AlignmentRunConfig,
    rng: &mut RngStream,
) -> Result<f64> {
    let optimal = optimal_policy(reference, rewards, beta)?;
    let rho = config.prompt_distribution()?;
    EvaluationSet::draw(&optimal, rewards, &rho, config.d, config.n_eval, rng)?.tv_gap(theta, reference, beta)
}

/// Lower estimate of the concentrability coefficient: the largest ratio
///
/// `mean_{target} (R_theta - t)^2 / mean_{train} (R_theta - t)^2`
///
/// over `center` and `settings.perturbations` Gaussian perturbations of it.
/// Policies with zero training residual are skipped.
pub fn estimate_concentrability(
    train: &[LossSample],
    target: &[LossSample],
    center: &TabularPolicy,
    reference: &TabularPolicy,
    beta: f64,
    settings: &ConcentrabilitySettings,
    rng: &mut RngStream,
) -> Result<f64> {
    if train.is_empty() || target.is_empty() {
        return Err(Error::EmptySamples);
    }
    let ratio = |theta: &TabularPolicy| -> Result<Option<f64>> {
        let den = mean_risk(theta, reference, train, beta, LossKind::Irepo)?;
        if !(den > 0.0 && den.is_finite()) {
            return Ok(None);
        }
        let num = mean_risk(theta, reference, target, beta, LossKind::Irepo)?;
        Ok(Some(num / den))
    };
    let mut best = ratio(center)?;
    for _ in 0..settings.perturbations {
        let theta = center.perturbed(settings.noise_scale, rng)?;
        if let Some(r) = ratio(&theta)? {
            best = Some(best.map_or(r, |b| b.max(r)));
        }
    }
    best.ok_or(Error::NoValidPerturbation)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lemma1Status {
    /// Risk reached the target and the gap respects the bound.
    Holds,
    /// Risk reached the target but the gap exceeds the bound.
    Violated,
    /// The optimizer stopped above the target risk.
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    /// Mean regression risk of the final policy on its last training set.
    pub mean_risk: f64,
    /// Mean TV gap to the population preference over that training set.
    pub tv_gap: f64,
    /// Half the mean distance between ranked targets and true logits.
    pub rounding_slack: f64,
    /// `sqrt(mean_risk) / 2 + rounding_slack`.
    pub bound: f64,
    /// Mean TV gap on the simulator's evaluation set.
    pub eval_tv_gap: f64,
    pub status: Lemma1Status,
}

/// Runs `config` and checks the final policy against the bound
/// `E[TV] <= sqrt(risk) / 2 + slack` on the last training set. Requires
/// exact annotators.
pub fn lemma1_check(config: &AlignmentRunConfig, risk_target: f64) -> Result<Lemma1Report> {
    if config.annotator_mode != AnnotatorMode::Exact {
        return Err(Error::config("annotator_mode", "the check needs exact annotators"));
    }
    let sim = Simulator::new(config)?;
    let mut rng = stream(config.seed, streams::TRAINING);
    let mut theta = sim.reference().clone();
    let mut last = None;
    for t in 1..=config.iterations {
        let outcome = sim.run_iteration(&theta, t, &mut rng)?;
        theta = outcome.policy.clone();
        last = Some(outcome);
    }
    let last = last.expect("at least one iteration");
    let rewards = sim.rewards();
    let n = last.samples.len() as f64;
    let mut tv = 0.0;
    let mut slack = 0.0;
    for s in &last.samples {
        let truth = rewards.get(s.prompt, s.chosen)? - rewards.get(s.prompt, s.rejected)?;
        let r = implicit_reward_diff(&theta, sim.reference(), s.prompt, s.chosen, s.rejected, config.beta)?;
        tv += tv_bernoulli(truth, r.value);
        slack += 0.5 * (s.target_logit - truth).abs();
    }
    let mean_risk = last.metrics.risk_post;
    let tv_gap = tv / n;
    let rounding_slack = slack / n;
    let bound = 0.5 * mean_risk.sqrt() + rounding_slack;
    let status = if mean_risk > risk_target {
        Lemma1Status::Inconclusive
    } else if tv_gap <= bound * (1.0 + 1e-9) + 1e-15 {
        Lemma1Status::Holds
    } else {
        Lemma1Status::Violated
    };
    Ok(Lemma1Report {
        mean_risk,
        tv_gap,
        rounding_slack,
        bound,
        eval_tv_gap: last.metrics.tv_gap,
        status,
    })
}
