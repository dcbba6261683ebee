mod oracle;

use irepo::alignment::{
    estimate_concentrability, lemma1_check, run, tv_bernoulli, tv_preference_gap, AlignmentRunConfig,
    ConcentrabilitySettings, EvaluationSet, Lemma1Status, RewardSource,
};
use irepo::annotators::{AnnotatorMode, RewardTable};
use irepo::losses::{minimize_risk, LossKind, LossSample, OptimizerSettings};
use irepo::policy::{implicit_reward_diff, optimal_policy, PromptDistribution, TabularPolicy};
use irepo::rng::stream;
use irepo::sigmoid;
use proptest::prelude::*;

const CONFIG: &str = r#"{
    "seed": 3, "prompts": 3, "responses": 6, "rho": "uniform",
    "d": 3, "h": 256, "annotator_mode": "sampled", "m": 96, "iterations": 3,
    "beta": 1.0, "reward": {"kind": "uniform", "scale": 1.5},
    "ranking": {"method": "newman", "tol": 1e-8, "max_iter": 10000, "smoothing_alpha": 0.0},
    "optimizer": {"learning_rate": 0.2, "epochs_per_iter": 100, "gradient_tol": 1e-9},
    "n_eval": 512,
    "concentrability": {"perturbations": 16, "noise_scale": 0.5}
}"#;

fn config() -> AlignmentRunConfig {
    AlignmentRunConfig::from_json_str(CONFIG, None).unwrap()
}

proptest! {
    #[test]
    fn sigmoid_is_quarter_lipschitz(a in -40.0f64..40.0, b in -40.0f64..40.0) {
        prop_assert!((sigmoid(a) - sigmoid(b)).abs() <= (a - b).abs() / 4.0 + 1e-15);
        let tv = tv_bernoulli(a, b);
        prop_assert!(tv <= (a - b).abs() / 2.0 + 1e-15);
        prop_assert!((0.0..=2.0).contains(&tv));
        prop_assert_eq!(tv, tv_bernoulli(b, a));
    }
}

#[test]
fn optimal_policy_realizes_reward_gaps() {
    let reference = TabularPolicy::uniform(4, 8).unwrap();
    let rewards = RewardTable::uniform_random(4, 8, 2.0, &mut stream(17, 0)).unwrap();
    for beta in [0.25, 1.0, 4.0] {
        let optimal = optimal_policy(&reference, &rewards, beta).unwrap();
        for x in 0..4 {
            for i in 0..8 {
                for j in 0..8 {
                    let r = implicit_reward_diff(&optimal, &reference, x, i, j, beta).unwrap();
                    let truth = rewards.get(x, i).unwrap() - rewards.get(x, j).unwrap();
                    assert!((r.value - truth).abs() < 1e-10);
                }
            }
        }
    }
}

#[test]
fn gap_of_reference_matches_enumeration() {
    let rewards = RewardTable::new(1, 3, vec![0.9, -0.4, 0.2]).unwrap();
    let reference = TabularPolicy::uniform(1, 3).unwrap();
    let rho = PromptDistribution::uniform(1).unwrap();
    let beta = 0.8;
    let optimal = optimal_policy(&reference, &rewards, beta).unwrap();
    let probs = optimal.probs_row(0).unwrap();

    let n = 40_000;
    let set = EvaluationSet::draw(&optimal, &rewards, &rho, 2, n, &mut stream(5, 2)).unwrap();
    let values: Vec<f64> = set.draws().iter().map(|z| tv_bernoulli(z.true_logit, 0.0)).collect();
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
    let exact = oracle::zero_policy_gap_two_draws(&probs, &[0.9, -0.4, 0.2]);
    assert!((set.tv_gap(&reference, &reference, beta).unwrap() - mean).abs() < 1e-15);
    assert!((mean - exact).abs() < 4.0 * sd / (n as f64).sqrt(), "{mean} vs {exact}");

    // with d = |Y| every draw compares the best and the worst response
    let full = EvaluationSet::draw(&optimal, &rewards, &rho, 3, 100, &mut stream(5, 2)).unwrap();
    let expected = 2.0 * (sigmoid(1.3) - 0.5);
    assert!((full.tv_gap(&reference, &reference, beta).unwrap() - expected).abs() < 1e-15);
}

#[test]
fn gap_from_config_stream() {
    let c = config();
    let reference = TabularPolicy::uniform(3, 6).unwrap();
    let rewards = c.build_rewards().unwrap();
    let optimal = optimal_policy(&reference, &rewards, c.beta).unwrap();
    let gap = |theta: &TabularPolicy| tv_preference_gap(theta, &reference, &rewards, c.beta, &c, &mut stream(1, 2)).unwrap();
    assert!(gap(&optimal) < 1e-9);
    let g = gap(&reference);
    assert!(g > 0.0 && g <= 2.0);
}

#[test]
fn concentrability_near_one_on_matching_distributions() {
    let reference = TabularPolicy::uniform(4, 8).unwrap();
    let rewards = RewardTable::uniform_random(4, 8, 2.0, &mut stream(8, 0)).unwrap();
    let rho = PromptDistribution::uniform(4).unwrap();
    let optimal = optimal_policy(&reference, &rewards, 1.0).unwrap();
    let draw = |s| EvaluationSet::draw(&optimal, &rewards, &rho, 4, 4096, &mut stream(s, 2)).unwrap().as_samples();
    let (train, target) = (draw(1), draw(2));
    let c = estimate_concentrability(
        &train,
        &target,
        &reference,
        &reference,
        1.0,
        &ConcentrabilitySettings::default(),
        &mut stream(3, 1000),
    )
    .unwrap();
    assert!((c - 1.0).abs() < 0.2, "{c}");
}

#[test]
fn concentrability_large_on_disjoint_supports() {
    let reference = TabularPolicy::uniform(2, 4).unwrap();
    let train: Vec<_> = [(0, 1, 0.8), (2, 3, -0.3), (0, 3, 1.1)]
        .iter()
        .map(|&(s, l, t)| LossSample::new(0, s, l, t).unwrap())
        .collect();
    let target: Vec<_> = [(0, 1, 1.5), (1, 2, -1.0)]
        .iter()
        .map(|&(s, l, t)| LossSample::new(1, s, l, t).unwrap())
        .collect();
    let settings = OptimizerSettings {
        learning_rate: 0.2,
        epochs_per_iter: 2000,
        gradient_tol: 1e-9,
    };
    let (center, _) = minimize_risk(&reference, &reference, &train, 1.0, LossKind::Irepo, &settings).unwrap();
    let c = estimate_concentrability(
        &train,
        &target,
        &center,
        &reference,
        1.0,
        &ConcentrabilitySettings::default(),
        &mut stream(0, 1000),
    )
    .unwrap();
    assert!(c > 10.0, "{c}");
}

#[test]
fn runs_are_bit_identical() {
    let a = run(&config()).unwrap();
    let b = run(&config()).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.final_policy.logits(), b.final_policy.logits());
    assert_eq!(a.best_policy, b.best_policy);
}

#[test]
fn metrics_respect_invariants() {
    let out = run(&config()).unwrap();
    for m in &out.metrics {
        assert!(m.risk_post <= m.risk_pre);
        assert!((0.0..=2.0).contains(&m.tv_gap));
        assert!(m.kl_to_ref >= 0.0);
        assert!(m.c_hat.unwrap() > 0.0);
        assert!(m.rank_iters_mean >= 1.0);
    }
    let best = out.metrics.iter().map(|m| m.tv_gap).fold(f64::INFINITY, f64::min);
    assert_eq!(out.metrics[out.best_iteration - 1].tv_gap, best);
}

#[test]
fn zero_reward_keeps_reference() {
    let mut c = config();
    c.reward = RewardSource::Uniform { scale: 0.0 };
    c.annotator_mode = AnnotatorMode::Exact;
    c.h = 10;
    let out = run(&c).unwrap();
    for m in &out.metrics {
        assert_eq!(m.tv_gap, 0.0);
        assert_eq!(m.kl_to_ref, 0.0);
        assert_eq!(m.risk_pre, 0.0);
    }
    let report = lemma1_check(&c, 1e-8).unwrap();
    assert_eq!(report.mean_risk, 0.0);
    assert_eq!(report.tv_gap, 0.0);
    assert_eq!(report.status, Lemma1Status::Holds);
}

#[test]
fn risk_bound_on_exact_run() {
    let mut c = config();
    c.annotator_mode = AnnotatorMode::Exact;
    c.h = 1_000_000;
    c.iterations = 1;
    c.optimizer.epochs_per_iter = 20_000;
    c.optimizer.gradient_tol = 1e-12;
    let report = lemma1_check(&c, 1e-8).unwrap();
    assert_eq!(report.status, Lemma1Status::Holds, "{report:?}");
    assert!(report.tv_gap <= report.bound);
    assert!(report.tv_gap < 1e-3);

    c.optimizer.epochs_per_iter = 1;
    assert_eq!(lemma1_check(&c, 1e-8).unwrap().status, Lemma1Status::Inconclusive);
    c.annotator_mode = AnnotatorMode::Sampled;
    assert!(lemma1_check(&c, 1e-8).is_err());
}

#[test]
fn panel_runs_are_deterministic() {
    let mut c = config();
    c.annotator_mode = AnnotatorMode::Panel;
    let a = run(&c).unwrap();
    assert_eq!(a.metrics, run(&c).unwrap().metrics);
    assert!(a.metrics.iter().all(|m| m.skipped_samples == 0));
}
