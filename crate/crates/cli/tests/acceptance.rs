//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the report is always printed.

#[path = "../../core/tests/oracle/mod.rs"]
#[allow(dead_code)]
mod oracle;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use irepo::alignment::{lemma1_check, parse_metrics_csv, theorem1_sweep, AlignmentRunConfig};
use irepo::annotators::RewardTable;
use irepo::losses::{dpo_loss, ipo_loss, irepo_loss, risk_gradient, sppo_loss, LossKind, LossSample};
use irepo::policy::{
    implicit_reward_diff, kl_regularized_objective, optimal_policy, PromptDistribution, TabularPolicy,
};
use irepo::ranking::{
    log_likelihood_gain, rank, rank_update, PreferenceMatrix, RankMethod, RankingSettings, StrengthVector,
};
use irepo::rng::stream;
use rand::Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, format!("took {elapsed:?}, limit {limit:?}"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn config(name: &str) -> AlignmentRunConfig {
    AlignmentRunConfig::from_json_path(&configs().join(name)).expect("bundled config loads")
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

const TOY: [[u64; 3]; 3] = [[0, 6, 6], [3, 0, 5], [3, 4, 0]];

fn toy_ranking() -> Check {
    let toy = PreferenceMatrix::new(TOY.iter().map(|r| r.to_vec()).collect()).map_err(err)?;
    let start = Instant::now();
    let z = rank(&toy, &RankingSettings::with_method(RankMethod::Zermelo)).map_err(err)?;
    let n = rank(&toy, &RankingSettings::with_method(RankMethod::Newman)).map_err(err)?;
    let elapsed = start.elapsed();
    let rows: Vec<Vec<f64>> = TOY.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
    let expected = oracle::brute_force_mle(&rows);
    for r in [&z, &n] {
        ensure(r.converged && r.strongest_index == 0, "not converged or wrong strongest")?;
        for (got, want) in r.strengths.as_slice().iter().zip(&expected) {
            ensure(((got - want) / want).abs() < 1e-6, format!("strength {got} vs oracle {want}"))?;
        }
    }
    ensure(n.iterations < z.iterations, format!("newman {} vs zermelo {}", n.iterations, z.iterations))?;
    within(elapsed, Duration::from_millis(1))?;
    Ok(format!("newman {} vs zermelo {} iterations, {elapsed:?}", n.iterations, z.iterations))
}

fn two_item_closed_form() -> Check {
    let mut rng = stream(2, 0);
    let pairs: Vec<(u64, u64)> = (0..50).map(|_| (rng.random_range(1..500), rng.random_range(1..500))).collect();
    let start = Instant::now();
    let mut worst = 0.0f64;
    for &(a, b) in &pairs {
        let m = PreferenceMatrix::new(vec![vec![0, a], vec![b, 0]]).map_err(err)?;
        let w = rank(&m, &RankingSettings::default()).map_err(err)?.strengths;
        let want = a as f64 / b as f64;
        worst = worst.max(((w.as_slice()[0] / w.as_slice()[1] - want) / want).abs());
    }
    let elapsed = start.elapsed();
    ensure(worst < 1e-9, format!("relative error {worst:e}"))?;
    within(elapsed, Duration::from_millis(10))?;
    Ok(format!("max relative error {worst:.1e}, {elapsed:?}"))
}

/// Strongly connected through the ring `i <-> i+1`; other pairs are
/// sometimes absent.
fn random_connected(rng: &mut irepo::rng::RngStream) -> PreferenceMatrix {
    let d = rng.random_range(2..=8);
    let mut rows = vec![vec![0u64; d]; d];
    for i in 0..d {
        for j in i + 1..d {
            if j == i + 1 || rng.random_bool(0.7) {
                rows[i][j] = rng.random_range(1..20);
                rows[j][i] = rng.random_range(1..20);
            }
        }
    }
    PreferenceMatrix::new(rows).expect("valid counts")
}

fn likelihood_monotonicity() -> Check {
    let mut rng = stream(3, 0);
    let tol = RankingSettings::default().tol;
    let start = Instant::now();
    let mut steps = 0;
    for _ in 0..100 {
        let m = random_connected(&mut rng);
        for method in [RankMethod::Zermelo, RankMethod::Newman] {
            let mut cur = StrengthVector::uniform(m.rows().len());
            for _ in 0..10_000 {
                let next = rank_update(method, &m, &cur).map_err(err)?.normalized();
                let gain = log_likelihood_gain(&m, &cur, &next).map_err(err)?;
                let change = next.max_log_change(&cur);
                steps += 1;
                ensure(gain >= -1e-12, format!("{method}: likelihood fell by {gain:e}"))?;
                if change > tol {
                    ensure(gain > 0.0, format!("{method}: change {change:e} without gain"))?;
                } else {
                    break;
                }
                cur = next;
            }
        }
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!("{steps} steps, {elapsed:?}"))
}

fn gradient_fixture(seed: u64, kind: LossKind) -> (TabularPolicy, TabularPolicy, Vec<LossSample>, f64) {
    let (xs, ys) = (3, 5);
    let mut rng = stream(seed, 4);
    let beta = rng.random_range(0.3..2.0);
    let positive = kind == LossKind::Slic;
    let reference = if positive {
        TabularPolicy::uniform(xs, ys).unwrap()
    } else {
        TabularPolicy::from_logits(xs, ys, (0..xs * ys).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    };
    let logits = (0..xs * ys)
        .map(|k| match (positive, k % ys < 3) {
            (true, true) => 1.0 + rng.random_range(-0.3..0.3),
            (true, false) => -3.0,
            _ => rng.random_range(-1.5..1.5),
        })
        .collect();
    let theta = TabularPolicy::from_logits(xs, ys, logits).unwrap();
    let pool = if positive { 3 } else { ys };
    let samples = (0..20)
        .map(|_| {
            let s = rng.random_range(0..pool);
            let l = (s + rng.random_range(1..pool)) % pool;
            LossSample::new(rng.random_range(0..xs), s, l, rng.random_range(-2.0..2.0)).unwrap()
        })
        .collect();
    (theta, reference, samples, beta)
}

fn gradient_correctness() -> Check {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..5 {
        for kind in LossKind::ALL {
            let (theta, reference, samples, beta) = gradient_fixture(seed, kind);
            let analytic = risk_gradient(&theta, &reference, &samples, beta, kind).map_err(err)?;
            let tuples: Vec<_> = samples.iter().map(|s| (s.prompt, s.chosen, s.rejected, s.target_logit)).collect();
            let risk = |x: &[f64]| oracle::naive_risk(x, reference.logits(), 5, &tuples, beta, kind.name());
            let numeric = oracle::fd_gradient(&risk, theta.logits(), 1e-5);
            for (a, n) in analytic.iter().zip(&numeric) {
                let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-3);
                worst = worst.max(rel);
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(worst < 1e-5, format!("relative error {worst:e}"))?;
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!("max relative error {worst:.1e}, {elapsed:?}"))
}

fn realizability() -> Check {
    let start = Instant::now();
    let reference = TabularPolicy::uniform(4, 8).map_err(err)?;
    let rewards = RewardTable::uniform_random(4, 8, 2.0, &mut stream(5, 0)).map_err(err)?;
    let rho = PromptDistribution::uniform(4).map_err(err)?;
    let beta = 1.0;
    let optimal = optimal_policy(&reference, &rewards, beta).map_err(err)?;
    let mut worst = 0.0f64;
    for x in 0..4 {
        for i in 0..8 {
            for j in 0..8 {
                let r = implicit_reward_diff(&optimal, &reference, x, i, j, beta).map_err(err)?;
                let truth = rewards.get(x, i).map_err(err)? - rewards.get(x, j).map_err(err)?;
                worst = worst.max((r.value - truth).abs());
            }
        }
    }
    let best = kl_regularized_objective(&optimal, &reference, &rewards, beta, &rho).map_err(err)?;
    let mut rng = stream(5, 1);
    for _ in 0..100 {
        let other = optimal.perturbed(rng.random_range(0.01..1.0), &mut rng).map_err(err)?;
        let value = kl_regularized_objective(&other, &reference, &rewards, beta, &rho).map_err(err)?;
        ensure(value <= best, format!("perturbation reached {value} above {best}"))?;
    }
    let elapsed = start.elapsed();
    ensure(worst < 1e-10, format!("reward gap error {worst:e}"))?;
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!("max gap error {worst:.1e}, {elapsed:?}"))
}

fn risk_bound() -> Check {
    let start = Instant::now();
    let report = lemma1_check(&config("lemma.json"), 1e-10).map_err(err)?;
    let elapsed = start.elapsed();
    ensure(report.mean_risk < 1e-10, format!("risk {:e}", report.mean_risk))?;
    ensure(report.tv_gap < 1e-4, format!("tv gap {:e}", report.tv_gap))?;
    ensure(report.tv_gap <= report.bound, format!("tv gap {:e} above bound {:e}", report.tv_gap, report.bound))?;
    within(elapsed, Duration::from_secs(30))?;
    Ok(format!(
        "risk {:.1e}, tv gap {:.1e}, bound {:.1e}, {elapsed:?}",
        report.mean_risk, report.tv_gap, report.bound
    ))
}

fn h_rate() -> Check {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let start = Instant::now();
    let report = theorem1_sweep(&config("sweep.json"), &[16, 64, 256, 1024, 4096], 8, threads).map_err(err)?;
    let elapsed = start.elapsed();
    ensure(
        (-0.7..=-0.3).contains(&report.slope),
        format!("slope {:.3} outside [-0.7, -0.3]", report.slope),
    )?;
    within(elapsed, Duration::from_secs(600))?;
    Ok(format!("slope {:.3}, {elapsed:?}", report.slope))
}

fn loss_spot_values() -> Check {
    let mut rng = stream(8, 0);
    let inputs: Vec<(f64, f64)> = (0..1000).map(|_| (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0))).collect();
    let start = Instant::now();
    ensure((dpo_loss(0.0, 0.0) - std::f64::consts::LN_2).abs() < 1e-15, "dpo(0,0) != ln 2")?;
    ensure(ipo_loss(1.0, 0.5) == 0.0, "ipo with gap 1/2 != 0")?;
    ensure(sppo_loss(0.5, 0.5) == 0.0, "sppo(1/2,1/2) != 0")?;
    for &(zs, zl) in &inputs {
        ensure(irepo_loss(zs - zl, 0.5) == ipo_loss(zs, zl), format!("irepo != ipo at ({zs}, {zl})"))?;
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_millis(10))?;
    Ok(format!("1000 identities exact, {elapsed:?}"))
}

fn simulate(config: &Path, out: &Path) -> Result<String, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_irepo"))
        .arg("simulate")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(err)?;
    ensure(o.status.success(), format!("simulate failed: {}", String::from_utf8_lossy(&o.stderr)))?;
    std::fs::read_to_string(out.join("metrics.csv")).map_err(err)
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let start = Instant::now();
    let a = simulate(&configs().join("default.json"), &dir.path().join("a"))?;
    let b = simulate(&configs().join("default.json"), &dir.path().join("b"))?;
    ensure(a == b, "metrics differ between identical runs")?;
    let quiet = parse_metrics_csv(&simulate(&configs().join("no_signal.json"), &dir.path().join("c"))?).map_err(err)?;
    let elapsed = start.elapsed();
    let kl = quiet.iter().map(|m| m.kl_to_ref).fold(0.0, f64::max);
    let tv = quiet.iter().map(|m| m.tv_gap).fold(0.0, f64::max);
    ensure(kl < 0.01, format!("no-signal kl {kl}"))?;
    ensure(tv < 0.02, format!("no-signal tv gap {tv}"))?;
    within(elapsed, Duration::from_secs(60))?;
    Ok(format!("identical metrics; no-signal max kl {kl:.1e}, max tv gap {tv:.1e}, {elapsed:?}"))
}

fn alignment_trend() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let start = Instant::now();
    let rows = parse_metrics_csv(&simulate(&configs().join("default.json"), dir.path())?).map_err(err)?;
    let elapsed = start.elapsed();
    let frozen_text = include_str!("fixtures/default_metrics.csv");
    let frozen = parse_metrics_csv(frozen_text).map_err(err)?;
    ensure(rows.len() == 5 && frozen.len() == 5, "expected 5 iterations")?;
    for (got, want) in rows.iter().zip(&frozen) {
        ensure(
            (got.tv_gap - want.tv_gap).abs() <= 1e-6 * want.tv_gap,
            format!("iteration {}: tv gap {} vs frozen {}", got.t, got.tv_gap, want.tv_gap),
        )?;
    }
    let gaps: Vec<f64> = rows.iter().map(|m| m.tv_gap).collect();
    for w in gaps.windows(2) {
        ensure(w[1] <= w[0] + 0.01, format!("gap rose from {} to {}", w[0], w[1]))?;
    }
    let drop = 1.0 - gaps[4] / gaps[0];
    ensure(drop >= 0.25, format!("final gap only {:.0}% below iteration 1", 100.0 * drop))?;
    within(elapsed, Duration::from_secs(120))?;
    Ok(format!("gap {:.4} -> {:.4} ({:.0}% drop), {elapsed:?}", gaps[0], gaps[4], 100.0 * drop))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("toy-example ranking", toy_ranking),
        ("two-item closed form", two_item_closed_form),
        ("likelihood monotonicity", likelihood_monotonicity),
        ("gradient correctness", gradient_correctness),
        ("realizability witness", realizability),
        ("risk bound at desk scale", risk_bound),
        ("annotator-count rate", h_rate),
        ("loss spot values", loss_spot_values),
        ("end-to-end determinism", determinism),
        ("alignment trend regression", alignment_trend),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
