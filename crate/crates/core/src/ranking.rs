//! Bradley-Terry strength estimation from pairwise win counts.
//!
//! Given a `d x d` matrix `H` where `H[i][j]` counts how often item `i` was
//! preferred over item `j`, the maximum-likelihood strengths `w` maximise
//!
//! ```text
//! log P(H | w) = sum_{i != j} H[i][j] * log(w_i / (w_i + w_j))
//! ```
//!
//! Two fixed-point iterations are provided. [`zermelo_step`] is the classic
//! update
//!
//! ```text
//! w'_i = (sum_j H[i][j]) / (sum_j (H[i][j] + H[j][i]) / (w_i + w_j))
//! ```
//!
//! and [`newman_step`] is the accelerated variant
//!
//! ```text
//! w'_i = (sum_j H[i][j] * w_j / (w_i + w_j)) / (sum_j H[j][i] / (w_i + w_j))
//! ```
//!
//! Both step functions are parallel (Jacobi) updates: every right-hand side
//! term is evaluated at the input vector. The parallel form of Newman's
//! update is not a contraction in general; on two items it maps the strength
//! ratio `r` to `(h_12 / h_21)^2 / r` and oscillates forever. [`rank`]
//! therefore drives the Newman method with [`newman_sweep`], the asynchronous
//! form that updates items in place one at a time, and drives Zermelo with
//! the parallel [`zermelo_step`] (a minorize-maximize update, monotone as is).

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Anything that can be read as a square table of (possibly fractional) win counts.
pub trait PairCounts {
    fn dim(&self) -> usize;
    /// Number of times item `i` beat item `j`.
    fn wins(&self, i: usize, j: usize) -> f64;
}

/// Integer win counts `h_ij` between `d >= 2` items.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceMatrix {
    d: usize,
    counts: Vec<u64>,
}

impl PreferenceMatrix {
    /// Builds a matrix from rows. Rows must be square with a zero diagonal.
    pub fn new(rows: Vec<Vec<u64>>) -> Result<Self> {
        let d = rows.len();
        if d < 2 {
            return Err(Error::InvalidArgument(format!(
                "a preference matrix needs at least 2 items, got {d}"
            )));
        }
        let mut counts = Vec::with_capacity(d * d);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: row.len(),
                });
            }
            if row[i] != 0 {
                return Err(Error::InvalidArgument(format!(
                    "diagonal entry ({i}, {i}) is {} but must be 0",
                    row[i]
                )));
            }
            counts.extend(row);
        }
        Ok(Self { d, counts })
    }

    pub fn zeros(d: usize) -> Result<Self> {
        Self::new(vec![vec![0; d]; d])
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.d + j]
    }

    /// Sets `h_ij`; writes to the diagonal are rejected.
    pub fn set(&mut self, i: usize, j: usize, value: u64) -> Result<()> {
        if i >= self.d || j >= self.d {
            return Err(Error::IndexOutOfRange {
                what: "item",
                index: i.max(j),
                len: self.d,
            });
        }
        if i == j {
            return Err(Error::InvalidArgument("diagonal entries are fixed at 0".into()));
        }
        self.counts[i * self.d + j] = value;
        Ok(())
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.d).map(<[u64]>::to_vec).collect()
    }

    /// True when every unordered pair was judged by exactly `h` annotators.
    pub fn is_complementary(&self, h: u64) -> bool {
        (0..self.d).all(|i| (0..self.d).all(|j| i == j || self.get(i, j) + self.get(j, i) == h))
    }

    /// Adds `alpha` to every off-diagonal entry.
    pub fn smoothed(&self, alpha: f64) -> SmoothedCounts {
        let d = self.d;
        let counts = (0..d * d)
            .map(|k| {
                if k / d == k % d {
                    0.0
                } else {
                    self.counts[k] as f64 + alpha
                }
            })
            .collect();
        SmoothedCounts { d, counts }
    }
}

impl PairCounts for PreferenceMatrix {
    fn dim(&self) -> usize {
        self.d
    }

    fn wins(&self, i: usize, j: usize) -> f64 {
        self.get(i, j) as f64
    }
}

/// Real-valued win counts, produced by adding a pseudo-count to a [`PreferenceMatrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedCounts {
    d: usize,
    counts: Vec<f64>,
}

impl PairCounts for SmoothedCounts {
    fn dim(&self) -> usize {
        self.d
    }

    fn wins(&self, i: usize, j: usize) -> f64 {
        self.counts[i * self.d + j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    /// Scaled so that `sum_i log w_i = 0`.
    GeometricMeanOne,
    /// Whatever scale the producing computation left behind.
    Raw,
}

/// Strictly positive Bradley-Terry strengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrengthVector {
    strengths: Vec<f64>,
    normalization: Normalization,
}

impl StrengthVector {
    pub fn new(strengths: Vec<f64>) -> Result<Self> {
        if let Some(i) = strengths.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::domain(format!(
                "strength {i} is {} but must be finite and positive",
                strengths[i]
            )));
        }
        Ok(Self {
            strengths,
            normalization: Normalization::Raw,
        })
    }

    pub fn uniform(d: usize) -> Self {
        Self {
            strengths: vec![1.0; d],
            normalization: Normalization::GeometricMeanOne,
        }
    }

    pub fn len(&self) -> usize {
        self.strengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strengths.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.strengths
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn log_strengths(&self) -> Vec<f64> {
        self.strengths.iter().map(|w| w.ln()).collect()
    }

    /// Rescales to geometric mean one.
    pub fn normalized(&self) -> Self {
        let logs = self.log_strengths();
        let mean = logs.iter().sum::<f64>() / logs.len() as f64;
        Self {
            strengths: logs.iter().map(|l| (l - mean).exp()).collect(),
            normalization: Normalization::GeometricMeanOne,
        }
    }

    /// Multiplies every strength by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.strengths.iter().map(|w| w * c).collect())
    }

    /// Largest absolute difference in log-strength against `other`.
    pub fn max_log_change(&self, other: &Self) -> f64 {
        self.strengths
            .iter()
            .zip(&other.strengths)
            .map(|(a, b)| (a.ln() - b.ln()).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankMethod {
    Zermelo,
    Newman,
}

impl std::str::FromStr for RankMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zermelo" => Ok(Self::Zermelo),
            "newman" => Ok(Self::Newman),
            other => Err(Error::InvalidArgument(format!(
                "unknown ranking method `{other}` (expected zermelo or newman)"
            ))),
        }
    }
}

impl std::fmt::Display for RankMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Zermelo => "zermelo",
            Self::Newman => "newman",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankingSettings {
    pub method: RankMethod,
    /// Threshold on the largest absolute change of log-strengths between iterates.
    pub tol: f64,
    pub max_iter: usize,
    /// Pseudo-count added to every off-diagonal entry before iterating.
    pub smoothing_alpha: f64,
}

impl Default for RankingSettings {
    fn default() -> Self {
        Self {
            method: RankMethod::Newman,
            tol: 1e-8,
            max_iter: 10_000,
            smoothing_alpha: 0.0,
        }
    }
}

impl RankingSettings {
    pub fn with_method(method: RankMethod) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::config("ranking.tol", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::config("ranking.max_iter", "must be at least 1"));
        }
        if !(self.smoothing_alpha >= 0.0 && self.smoothing_alpha.is_finite()) {
            return Err(Error::config("ranking.smoothing_alpha", "must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankResult {
    /// Final strengths, normalized to geometric mean one.
    pub strengths: StrengthVector,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood of the smoothed counts at the final strengths.
    pub final_log_likelihood: f64,
    pub strongest_index: usize,
    pub weakest_index: usize,
}

impl RankResult {
    /// Item indices ordered from strongest to weakest, ties by lowest index.
    pub fn order(&self) -> Vec<usize> {
        let w = self.strengths.as_slice();
        let mut idx: Vec<usize> = (0..w.len()).collect();
        idx.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
        idx
    }

    /// Logit of the modelled preference of the strongest over the weakest item.
    pub fn extreme_logit(&self) -> f64 {
        let w = self.strengths.as_slice();
        w[self.strongest_index].ln() - w[self.weakest_index].ln()
    }
}

/// `w_i / (w_i + w_j)`.
pub fn bt_probability(w_i: f64, w_j: f64) -> Result<f64> {
    check_strength(w_i)?;
    check_strength(w_j)?;
    Ok(w_i / (w_i + w_j))
}

/// Logit of the Bradley-Terry probability that `w_s` beats `w_l`, i.e. `log(w_s / w_l)`.
pub fn preference_logit(w_s: f64, w_l: f64) -> Result<f64> {
    check_strength(w_s)?;
    check_strength(w_l)?;
    Ok(w_s.ln() - w_l.ln())
}

fn check_strength(w: f64) -> Result<()> {
    if w.is_finite() && w > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("strength {w} must be finite and positive")))
    }
}

fn check_dims<H: PairCounts + ?Sized>(h: &H, w: &StrengthVector) -> Result<()> {
    if h.dim() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            found: w.len(),
        });
    }
    Ok(())
}

/// `sum_{i != j} h_ij log(w_i / (w_i + w_j))`.
pub fn log_likelihood<H: PairCounts + ?Sized>(h: &H, w: &StrengthVector) -> Result<f64> {
    check_dims(h, w)?;
    let w = w.as_slice();
    let d = h.dim();
    let mut ll = 0.0;
    for i in 0..d {
        for j in 0..d {
            let c = h.wins(i, j);
            if i != j && c != 0.0 {
                ll += c * (w[i] / (w[i] + w[j])).ln();
            }
        }
    }
    Ok(ll)
}

/// `log_likelihood(h, to) - log_likelihood(h, from)`, accumulated term by term.
///
/// Each term is formed from `w' - w` differences through `ln_1p`, so the
/// result keeps its relative precision when the two vectors are close and a
/// plain difference of likelihoods would be pure rounding noise.
pub fn log_likelihood_gain<H: PairCounts + ?Sized>(
    h: &H,
    from: &StrengthVector,
    to: &StrengthVector,
) -> Result<f64> {
    check_dims(h, from)?;
    check_dims(h, to)?;
    let (a, b) = (from.as_slice(), to.as_slice());
    let d = h.dim();
    let log_ratio: Vec<f64> = (0..d).map(|i| ((b[i] - a[i]) / a[i]).ln_1p()).collect();
    let mut gain = 0.0;
    for i in 0..d {
        for j in 0..d {
            let c = h.wins(i, j);
            if i == j || c == 0.0 {
                continue;
            }
            let pair_ratio = (((b[i] - a[i]) + (b[j] - a[j])) / (a[i] + a[j])).ln_1p();
            gain += c * (log_ratio[i] - pair_ratio);
        }
    }
    Ok(gain)
}

/// One parallel Zermelo update. No normalization is applied.
pub fn zermelo_step<H: PairCounts + ?Sized>(h: &H, w: &StrengthVector) -> Result<StrengthVector> {
    check_dims(h, w)?;
    let w = w.as_slice();
    let d = h.dim();
    let mut next = Vec::with_capacity(d);
    for i in 0..d {
        let mut wins = 0.0;
        let mut denom = 0.0;
        for j in (0..d).filter(|&j| j != i) {
            let (hij, hji) = (h.wins(i, j), h.wins(j, i));
            wins += hij;
            denom += (hij + hji) / (w[i] + w[j]);
        }
        if denom <= 0.0 {
            return Err(Error::DegenerateMatrix {
                item: i,
                reason: "has no comparisons",
            });
        }
        if wins <= 0.0 {
            return Err(Error::DegenerateMatrix {
                item: i,
                reason: "has no wins",
            });
        }
        next.push(wins / denom);
    }
    StrengthVector::new(next)
}

/// One parallel step of Newman's accelerated iteration. No normalization is applied.
pub fn newman_step<H: PairCounts + ?Sized>(h: &H, w: &StrengthVector) -> Result<StrengthVector> {
    check_dims(h, w)?;
    let w = w.as_slice();
    let d = h.dim();
    let mut next = Vec::with_capacity(d);
    for i in 0..d {
        let mut num = 0.0;
        let mut denom = 0.0;
        for j in (0..d).filter(|&j| j != i) {
            let s = w[i] + w[j];
            num += h.wins(i, j) * w[j] / s;
            denom += h.wins(j, i) / s;
        }
        if denom <= 0.0 {
            return Err(Error::DegenerateMatrix {
                item: i,
                reason: "has no losses",
            });
        }
        if num <= 0.0 {
            return Err(Error::DegenerateMatrix {
                item: i,
                reason: "has no wins",
            });
        }
        next.push(num / denom);
    }
    StrengthVector::new(next)
}

/// One asynchronous sweep of Newman's update: items are visited in index
/// order and each new strength is used immediately by the items after it.
/// No normalization is applied.
pub fn newman_sweep<H: PairCounts + ?Sized>(h: &H, w: &StrengthVector) -> Result<StrengthVector> {
    check_dims(h, w)?;
    let mut w = w.as_slice().to_vec();
    let d = h.dim();
    for i in 0..d {
        let mut num = 0.0;
        let mut denom = 0.0;
        for j in (0..d).filter(|&j| j != i) {
            let s = w[i] + w[j];
            num += h.wins(i, j) * w[j] / s;
            denom += h.wins(j, i) / s;
        }
        if denom <= 0.0 {
            return Err(Error::DegenerateMatrix {
                item: i,
                reason: "has no losses",
            });
        }
        if num <= 0.0 {
            return Err(Error::DegenerateMatrix {
                item: i,
                reason: "has no wins",
            });
        }
        w[i] = num / denom;
    }
    StrengthVector::new(w)
}

/// The update [`rank`] iterates for `method`: [`zermelo_step`] or [`newman_sweep`].
pub fn rank_update<H: PairCounts + ?Sized>(
    method: RankMethod,
    h: &H,
    w: &StrengthVector,
) -> Result<StrengthVector> {
    match method {
        RankMethod::Zermelo => zermelo_step(h, w),
        RankMethod::Newman => newman_sweep(h, w),
    }
}

/// Fails with [`Error::NotConnected`] unless every item can reach, and be
/// reached from, every other along edges `i -> j` with `wins(i, j) > 0`.
pub fn check_strongly_connected<H: PairCounts + ?Sized>(h: &H) -> Result<()> {
    let d = h.dim();
    let reach = |forward: bool| {
        let mut seen = vec![false; d];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..d {
                let edge = if forward { h.wins(i, j) } else { h.wins(j, i) };
                if i != j && edge > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen
    };
    if let Some(item) = reach(true).iter().position(|s| !s) {
        return Err(Error::NotConnected {
            item,
            reason: "is not beaten by item 0, directly or transitively",
        });
    }
    if let Some(item) = reach(false).iter().position(|s| !s) {
        return Err(Error::NotConnected {
            item,
            reason: "does not beat item 0, directly or transitively",
        });
    }
    Ok(())
}

/// Argmax and argmin of `strengths`, ties broken by lowest index.
///
/// When every strength is equal the pair `(0, 1)` is returned so that the
/// two selected items are always distinct.
pub fn select_extremes(strengths: &StrengthVector) -> Result<(usize, usize)> {
    let w = strengths.as_slice();
    if w.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 strengths to select extremes, got {}",
            w.len()
        )));
    }
    let mut strongest = 0;
    let mut weakest = 0;
    for (i, &v) in w.iter().enumerate().skip(1) {
        if v > w[strongest] {
            strongest = i;
        }
        if v < w[weakest] {
            weakest = i;
        }
    }
    if strongest == weakest {
        return Ok((0, 1));
    }
    Ok((strongest, weakest))
}

/// Maximum-likelihood strengths of `h` under `settings`.
///
/// Iterates from the all-ones vector; each iterate is rescaled to geometric
/// mean one before the convergence test, so only changes in relative
/// strength count. Exhausting `max_iter` is not an error: the result is
/// returned with `converged = false`.
pub fn rank(h: &PreferenceMatrix, settings: &RankingSettings) -> Result<RankResult> {
    settings.validate()?;
    let counts = h.smoothed(settings.smoothing_alpha);
    check_strongly_connected(&counts)?;

    let mut w = StrengthVector::uniform(counts.dim());
    let mut iterations = 0;
    let mut converged = false;
    while iterations < settings.max_iter {
        iterations += 1;
        let next = rank_update(settings.method, &counts, &w)?.normalized();
        let change = next.max_log_change(&w);
        w = next;
        if change < settings.tol {
            converged = true;
            break;
        }
    }

    let final_log_likelihood = log_likelihood(&counts, &w)?;
    let (strongest_index, weakest_index) = select_extremes(&w)?;
    Ok(RankResult {
        strengths: w,
        iterations,
        converged,
        final_log_likelihood,
        strongest_index,
        weakest_index,
    })
}
