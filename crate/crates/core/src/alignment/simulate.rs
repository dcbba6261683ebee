use super::config::AlignmentRunConfig;
use super::evaluation::{estimate_concentrability, EvaluationSet};
use super::metrics::IterationMetrics;
use crate::annotators::{build_preference_matrix, AnnotatorPool, RewardTable};
use crate::losses::{mean_risk, minimize_risk, LossKind, LossSample, OptimizeReport};
use crate::policy::{expected_reward, mean_kl, optimal_policy, sample_responses, PromptDistribution, TabularPolicy};
use crate::ranking::{preference_logit, rank};
use crate::rng::{stream, streams, RngStream};
use crate::{Error, Result};

/// Fixed ingredients of a run: reference policy, rewards, their optimal
/// policy and the evaluation set drawn from it.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: AlignmentRunConfig,
    rho: PromptDistribution,
    reference: TabularPolicy,
    rewards: RewardTable,
    optimal: TabularPolicy,
    pool: AnnotatorPool,
    evaluation: EvaluationSet,
    eval_samples: Vec<LossSample>,
}

#[derive(Debug, Clone)]
pub struct IterationOutcome {
    pub policy: TabularPolicy,
    pub metrics: IterationMetrics,
    /// The regression samples the iteration trained on.
    pub samples: Vec<LossSample>,
    /// `KL(pi_t || pi_{t-1})` averaged over `rho`.
    pub kl_to_previous: f64,
    pub optimizer: OptimizeReport,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub metrics: Vec<IterationMetrics>,
    /// Iteration with the smallest TV gap, first one on ties.
    pub best_iteration: usize,
    pub best_policy: TabularPolicy,
    pub final_policy: TabularPolicy,
    pub rewards: RewardTable,
}

impl Simulator {
    /// The reference policy is uniform; rewards come from `config.reward`.
    pub fn new(config: &AlignmentRunConfig) -> Result<Self> {
        config.validate()?;
        Self::with_rewards(config, config.build_rewards()?)
    }

    pub fn with_rewards(config: &AlignmentRunConfig, rewards: RewardTable) -> Result<Self> {
        config.validate()?;
        let rho = config.prompt_distribution()?;
        let reference = TabularPolicy::uniform(config.prompts, config.responses)?;
        let optimal = optimal_policy(&reference, &rewards, config.beta)?;
        let evaluation = EvaluationSet::draw(
            &optimal,
            &rewards,
            &rho,
            config.d,
            config.n_eval,
            &mut stream(config.seed, streams::EVALUATION),
        )?;
        let eval_samples = evaluation.as_samples();
        Ok(Self {
            config: config.clone(),
            rho,
            pool: config.annotator_pool()?,
            reference,
            rewards,
            optimal,
            evaluation,
            eval_samples,
        })
    }

    pub fn config(&self) -> &AlignmentRunConfig {
        &self.config
    }

    pub fn reference(&self) -> &TabularPolicy {
        &self.reference
    }

    pub fn rewards(&self) -> &RewardTable {
        &self.rewards
    }

    pub fn optimal(&self) -> &TabularPolicy {
        &self.optimal
    }

    pub fn evaluation(&self) -> &EvaluationSet {
        &self.evaluation
    }

    /// Collects `m` samples from `theta`, ranks each preference matrix and
    /// fits the next policy starting from `theta`.
    ///
    /// Samples whose matrix cannot be ranked, or whose responses cannot be
    /// drawn, are skipped; more than 20% skips aborts the iteration.
    pub fn run_iteration(&self, theta: &TabularPolicy, t: usize, rng: &mut RngStream) -> Result<IterationOutcome> {
        let c = &self.config;
        let mut samples = Vec::with_capacity(c.m);
        let mut skipped = 0;
        let mut rank_iters = 0usize;
        for _ in 0..c.m {
            let x = self.rho.sample(rng);
            let ys = match sample_responses(theta, x, c.d, rng) {
                Ok(ys) => ys,
                Err(Error::SamplingExhausted { .. }) => {
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let h = build_preference_matrix(&self.rewards, x, &ys, &self.pool, rng)?;
            let ranked = match rank(&h, &c.ranking) {
                Ok(r) => r,
                Err(Error::NotConnected { .. } | Error::DegenerateMatrix { .. }) => {
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            rank_iters += ranked.iterations;
            let w = ranked.strengths.as_slice();
            let (s, l) = (ranked.strongest_index, ranked.weakest_index);
            samples.push(LossSample::new(x, ys[s], ys[l], preference_logit(w[s], w[l])?)?);
        }
        if skipped * 5 > c.m {
            return Err(Error::IterationAborted {
                iteration: t,
                skipped,
                attempted: c.m,
            });
        }

        let risk_pre = mean_risk(theta, &self.reference, &samples, c.beta, LossKind::Irepo)?;
        let (policy, optimizer) =
            minimize_risk(theta, &self.reference, &samples, c.beta, LossKind::Irepo, &c.optimizer)?;
        let c_hat = match estimate_concentrability(
            &samples,
            &self.eval_samples,
            &policy,
            &self.reference,
            c.beta,
            &c.concentrability,
            &mut stream(c.seed, streams::CONCENTRABILITY + t as u64),
        ) {
            Ok(v) => Some(v),
            Err(Error::NoValidPerturbation) => None,
            Err(e) => return Err(e),
        };
        let metrics = IterationMetrics {
            t,
            risk_pre,
            risk_post: optimizer.mean_risk_after,
            tv_gap: self.evaluation.tv_gap(&policy, &self.reference, c.beta)?,
            kl_to_ref: mean_kl(&policy, &self.reference, &self.rho)?,
            mean_true_reward: expected_reward(&policy, &self.rewards, &self.rho)?,
            c_hat,
            skipped_samples: skipped,
            rank_iters_mean: rank_iters as f64 / samples.len() as f64,
        };
        Ok(IterationOutcome {
            kl_to_previous: mean_kl(&policy, theta, &self.rho)?,
            policy,
            metrics,
            samples,
            optimizer,
        })
    }
}

pub fn run(config: &AlignmentRunConfig) -> Result<RunOutcome> {
    run_with(config, |_| Ok(()))
}

/// [`run`], calling `on_iteration` after every completed iteration so that
/// callers can persist progress before a later iteration aborts.
pub fn run_with<F>(config: &AlignmentRunConfig, mut on_iteration: F) -> Result<RunOutcome>
where
    F: FnMut(&IterationOutcome) -> Result<()>,
{
    let sim = Simulator::new(config)?;
    let mut rng = stream(config.seed, streams::TRAINING);
    let mut theta = sim.reference().clone();
    let mut metrics = Vec::with_capacity(config.iterations);
    let mut best: Option<(usize, f64, TabularPolicy)> = None;
    for t in 1..=config.iterations {
        let outcome = sim.run_iteration(&theta, t, &mut rng)?;
        on_iteration(&outcome)?;
        let gap = outcome.metrics.tv_gap;
        if best.as_ref().is_none_or(|(_, g, _)| gap < *g) {
            best = Some((t, gap, outcome.policy.clone()));
        }
        metrics.push(outcome.metrics);
        theta = outcome.policy;
    }
    let (best_iteration, _, best_policy) = best.expect("at least one iteration");
    Ok(RunOutcome {
        metrics,
        best_iteration,
        best_policy,
        final_policy: theta,
        rewards: sim.rewards,
    })
}
