//! Test-only oracles that share no code path with the library.
#![allow(dead_code)]

/// Bradley-Terry log-likelihood written directly over log-strengths.
pub fn bt_log_likelihood(rows: &[Vec<f64>], theta: &[f64]) -> f64 {
    let d = rows.len();
    let mut ll = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j && rows[i][j] != 0.0 {
                let m = theta[i].max(theta[j]);
                let lse = m + ((theta[i] - m).exp() + (theta[j] - m).exp()).ln();
                ll += rows[i][j] * (theta[i] - lse);
            }
        }
    }
    ll
}

/// Central-difference gradient of `f` at `x`.
pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for k in 0..x.len() {
        probe[k] = x[k] + step;
        let up = f(&probe);
        probe[k] = x[k] - step;
        let down = f(&probe);
        probe[k] = x[k];
        g[k] = (up - down) / (2.0 * step);
    }
    g
}

fn fd_hessian(f: &dyn Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut h = vec![vec![0.0; n]; n];
    let mut p = x.to_vec();
    for a in 0..n {
        for b in a..n {
            let mut eval = |da: f64, db: f64| {
                p[a] += da;
                p[b] += db;
                let v = f(&p);
                p[a] -= da;
                p[b] -= db;
                v
            };
            let v = (eval(step, step) - eval(step, -step) - eval(-step, step) + eval(-step, -step))
                / (4.0 * step * step);
            h[a][b] = v;
            h[b][a] = v;
        }
    }
    h
}

fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Maximum-likelihood strengths by damped Newton ascent on finite-difference
/// derivatives, with the first log-strength pinned at zero. Returned
/// strengths are rescaled to geometric mean one.
pub fn brute_force_mle(rows: &[Vec<f64>]) -> Vec<f64> {
    let d = rows.len();
    let full = |free: &[f64]| {
        let mut t = vec![0.0];
        t.extend_from_slice(free);
        t
    };
    let f = |free: &[f64]| bt_log_likelihood(rows, &full(free));
    let mut x = vec![0.0; d - 1];
    for _ in 0..200 {
        let g = fd_gradient(&f, &x, 1e-5);
        if g.iter().all(|v| v.abs() < 1e-11) {
            break;
        }
        let h = fd_hessian(&f, &x, 1e-4);
        // ascent direction: solve (-H) p = g
        let neg: Vec<Vec<f64>> = h.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
        let mut p = solve(neg, g.clone());
        let gp: f64 = p.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(gp > 0.0) {
            p = g.clone();
        }
        let f0 = f(&x);
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + t * b).collect();
            if f(&cand) >= f0 || t < 1e-12 {
                x = cand;
                break;
            }
            t *= 0.5;
        }
    }
    let theta = full(&x);
    let mean = theta.iter().sum::<f64>() / d as f64;
    theta.iter().map(|t| (t - mean).exp()).collect()
}

/// Row-wise log-softmax of a flat `rows x cols` table.
pub fn log_softmax_rows(logits: &[f64], cols: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks(cols) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
        out.extend(row.iter().map(|v| v - m - z.ln()));
    }
    out
}

/// Sum of per-sample losses recomputed from scratch. `samples` holds
/// `(prompt, chosen, rejected, target_logit)`.
pub fn naive_risk(
    logits: &[f64],
    ref_logits: &[f64],
    cols: usize,
    samples: &[(usize, usize, usize, f64)],
    beta: f64,
    kind: &str,
) -> f64 {
    let lp = log_softmax_rows(logits, cols);
    let lr = log_softmax_rows(ref_logits, cols);
    let mut total = 0.0;
    for &(x, s, l, t) in samples {
        let zs = beta * (lp[x * cols + s] - lr[x * cols + s]);
        let zl = beta * (lp[x * cols + l] - lr[x * cols + l]);
        let sig = 1.0 / (1.0 + (-(zs - zl)).exp());
        total += match kind {
            "irepo" => (zs - zl - t).powi(2),
            "dpo" => -sig.ln(),
            "ipo" => (zs - zl - 0.5).powi(2),
            "sppo" => (zs - 0.5).powi(2) + (zl - 0.5).powi(2),
            "slic" => f64::max(0.0, 1.0 - beta * (zs.ln() - zl.ln())),
            other => panic!("unknown kind {other}"),
        };
    }
    total
}

/// Exact expected TV gap of a policy whose implicit reward differences are
/// all zero, for `d = 2` distinct draws from `probs` on one prompt. The
/// unordered pair `{a, b}` is selected with probability
/// `p_a p_b / (1 - p_a) + p_b p_a / (1 - p_b)`.
pub fn zero_policy_gap_two_draws(probs: &[f64], rewards: &[f64]) -> f64 {
    let mut total = 0.0;
    for a in 0..probs.len() {
        for b in a + 1..probs.len() {
            let pick = probs[a] * probs[b] / (1.0 - probs[a]) + probs[b] * probs[a] / (1.0 - probs[b]);
            let gap = (rewards[a] - rewards[b]).abs();
            total += pick * 2.0 * (1.0 / (1.0 + (-gap).exp()) - 0.5);
        }
    }
    total
}
