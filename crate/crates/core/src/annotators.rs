//! A synthetic annotator population.
//!
//! Every annotator votes independently on every pair, preferring `y_i` over
//! `y_j` with the Bradley-Terry probability `sigmoid(r*(x, y_i) - r*(x, y_j))`
//! of a ground-truth [`RewardTable`].
//!
//! [`AnnotatorMode::Sampled`] draws fresh votes every time a pair is judged,
//! as if a new group of `h` annotators were recruited for each question.
//! [`AnnotatorMode::Panel`] models one fixed group: the votes on a given
//! `(prompt, pair)` are drawn once from the pool seed and repeat whenever
//! the pair is judged again.

use std::path::Path;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::ranking::PreferenceMatrix;
use crate::rng::RngStream;
use crate::{io, sigmoid, Error, Result};

/// Ground-truth rewards `r*(x, y)` over a finite prompt x response table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardTable {
    prompts: usize,
    responses: usize,
    rewards: Vec<f64>,
}

impl RewardTable {
    /// Row-major `prompts x responses` values; all must be finite.
    pub fn new(prompts: usize, responses: usize, rewards: Vec<f64>) -> Result<Self> {
        if prompts == 0 || responses == 0 {
            return Err(Error::InvalidArgument("reward table must be nonempty".into()));
        }
        if rewards.len() != prompts * responses {
            return Err(Error::DimensionMismatch {
                expected: prompts * responses,
                found: rewards.len(),
            });
        }
        if let Some(k) = rewards.iter().position(|r| !r.is_finite()) {
            return Err(Error::domain(format!(
                "reward ({}, {}) is not finite",
                k / responses,
                k % responses
            )));
        }
        Ok(Self {
            prompts,
            responses,
            rewards,
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
        Self::new(prompts, responses, rows.into_iter().flatten().collect())
    }

    pub fn constant(prompts: usize, responses: usize, value: f64) -> Result<Self> {
        Self::new(prompts, responses, vec![value; prompts * responses])
    }

    /// Entries i.i.d. uniform on `[-scale, scale]`.
    pub fn uniform_random(
        prompts: usize,
        responses: usize,
        scale: f64,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("reward scale {scale} must be >= 0")));
        }
        let rewards = (0..prompts * responses)
            .map(|_| {
                if scale == 0.0 {
                    0.0
                } else {
                    rng.random_range(-scale..=scale)
                }
            })
            .collect();
        Self::new(prompts, responses, rewards)
    }

    /// Reads a CSV of `|X|` rows by `|Y|` columns of reals.
    pub fn from_csv_path(path: &Path) -> Result<Self> {
        Self::from_rows(io::read_real_matrix_csv_path(path)?)
    }

    pub fn prompts(&self) -> usize {
        self.prompts
    }

    pub fn responses(&self) -> usize {
        self.responses
    }

    pub fn get(&self, x: usize, y: usize) -> Result<f64> {
        self.check(x, y)?;
        Ok(self.rewards[x * self.responses + y])
    }

    pub fn row(&self, x: usize) -> Result<&[f64]> {
        self.check(x, 0)?;
        Ok(&self.rewards[x * self.responses..(x + 1) * self.responses])
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.rewards.chunks(self.responses).map(<[f64]>::to_vec).collect()
    }

    fn check(&self, x: usize, y: usize) -> Result<()> {
        if x >= self.prompts {
            return Err(Error::IndexOutOfRange {
                what: "prompt",
                index: x,
                len: self.prompts,
            });
        }
        if y >= self.responses {
            return Err(Error::IndexOutOfRange {
                what: "response",
                index: y,
                len: self.responses,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotatorMode {
    /// Each pair receives a Binomial(h, p) vote count.
    Sampled,
    /// Each pair receives `round(h p)` votes: a noiseless large-population surrogate.
    Exact,
    /// A fixed panel: Binomial(h, p) votes drawn from a stream keyed by the
    /// pool seed, the prompt and the unordered response pair.
    Panel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorPool {
    pub h: u64,
    pub mode: AnnotatorMode,
    pub seed: u64,
}

impl AnnotatorPool {
    pub fn new(h: u64, mode: AnnotatorMode, seed: u64) -> Result<Self> {
        if h == 0 {
            return Err(Error::InvalidArgument("annotator count h must be >= 1".into()));
        }
        Ok(Self { h, mode, seed })
    }

    /// A fresh stream seeded from the pool's seed.
    pub fn stream(&self) -> RngStream {
        crate::rng::stream(self.seed, 0)
    }

    /// The stream a panel uses for the unordered pair `{a, b}` on prompt `x`.
    pub fn pair_stream(&self, x: usize, a: usize, b: usize) -> RngStream {
        let (lo, hi) = (a.min(b) as u64, a.max(b) as u64);
        let key = ((x as u64) << 40) ^ (lo << 20) ^ hi;
        crate::rng::stream(self.seed, crate::rng::streams::PANEL | key)
    }
}

/// Votes for `i` over `j` on prompt `x`; the remaining `h - wins_i` went to `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub prompt: usize,
    pub i: usize,
    pub j: usize,
    pub wins_i: u64,
}

/// `sigmoid(r*(x, y_i) - r*(x, y_j))`.
pub fn true_preference(rewards: &RewardTable, x: usize, i: usize, j: usize) -> Result<f64> {
    Ok(sigmoid(rewards.get(x, i)? - rewards.get(x, j)?))
}

/// Number of the pool's `h` annotators who prefer the first response, given
/// that each does so with probability `p`.
///
/// In exact mode the count is `h p` rounded half to even, then clamped into
/// `[1, h - 1]` (when `h >= 2`) so that both responses keep at least one win.
pub fn sample_pair_votes(pool: &AnnotatorPool, p: f64, rng: &mut RngStream) -> Result<u64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("preference probability {p} must lie in (0, 1)")));
    }
    match pool.mode {
        AnnotatorMode::Sampled | AnnotatorMode::Panel => {
            let binomial = Binomial::new(pool.h, p)
                .map_err(|e| Error::domain(format!("binomial({}, {p}): {e}", pool.h)))?;
            Ok(binomial.sample(rng))
        }
        AnnotatorMode::Exact => {
            let wins = (pool.h as f64 * p).round_ties_even() as u64;
            if pool.h >= 2 {
                Ok(wins.clamp(1, pool.h - 1))
            } else {
                Ok(wins)
            }
        }
    }
}

/// One [`VoteRecord`] per unordered pair of `responses`, in `(0,1), (0,2), ...` order.
/// Record indices are positions within `responses`. Panel pools ignore `rng`.
pub fn collect_votes(
    rewards: &RewardTable,
    x: usize,
    responses: &[usize],
    pool: &AnnotatorPool,
    rng: &mut RngStream,
) -> Result<Vec<VoteRecord>> {
    if responses.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 responses, got {}",
            responses.len()
        )));
    }
    for (k, y) in responses.iter().enumerate() {
        if responses[..k].contains(y) {
            return Err(Error::DuplicateResponse(*y));
        }
    }
    let d = responses.len();
    let mut votes = Vec::with_capacity(d * (d - 1) / 2);
    for i in 0..d {
        for j in i + 1..d {
            let (a, b) = (responses[i], responses[j]);
            let wins_i = if pool.mode == AnnotatorMode::Panel {
                let (lo, hi) = (a.min(b), a.max(b));
                let p = true_preference(rewards, x, lo, hi)?;
                let wins_lo = sample_pair_votes(pool, p, &mut pool.pair_stream(x, lo, hi))?;
                if a == lo {
                    wins_lo
                } else {
                    pool.h - wins_lo
                }
            } else {
                sample_pair_votes(pool, true_preference(rewards, x, a, b)?, rng)?
            };
            votes.push(VoteRecord {
                prompt: x,
                i,
                j,
                wins_i,
            });
        }
    }
    Ok(votes)
}

impl PreferenceMatrix {
    /// Assembles `d x d` counts from complementary pair votes of `h` annotators.
    pub fn from_votes(d: usize, h: u64, votes: &[VoteRecord]) -> Result<Self> {
        let mut m = PreferenceMatrix::zeros(d)?;
        for v in votes {
            if v.wins_i > h {
                return Err(Error::InvalidArgument(format!(
                    "{} wins exceed the {h} annotators",
                    v.wins_i
                )));
            }
            m.set(v.i, v.j, v.wins_i)?;
            m.set(v.j, v.i, h - v.wins_i)?;
        }
        Ok(m)
    }
}

/// Pairwise win counts among `responses` for prompt `x`. Row and column `k`
/// of the result correspond to `responses[k]`.
pub fn build_preference_matrix(
    rewards: &RewardTable,
    x: usize,
    responses: &[usize],
    pool: &AnnotatorPool,
    rng: &mut RngStream,
) -> Result<PreferenceMatrix> {
    let votes = collect_votes(rewards, x, responses, pool, rng)?;
    PreferenceMatrix::from_votes(responses.len(), pool.h, &votes)
}
