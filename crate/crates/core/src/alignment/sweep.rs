use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::config::AlignmentRunConfig;
use super::metrics::csv_error;
use super::simulate::run;
use crate::fmt::num;
use crate::{Error, Result};

pub const SWEEP_COLUMNS: [&str; 4] = ["h", "repetitions", "tv_gap_mean", "tv_gap_stderr"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub h: u64,
    pub repetitions: usize,
    /// Mean over repetitions of the final-iteration TV gap.
    pub tv_gap_mean: f64,
    /// Standard error of the mean; absent with a single repetition.
    pub tv_gap_stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of `ln(tv_gap_mean)` against `ln(h)`.
    pub slope: f64,
}

/// Runs `template` once per `(h, repetition)` cell and summarises the final
/// TV gap per `h`.
///
/// Repetition `k` uses seed `template.seed + k` for every `h`, so the cells
/// of one repetition share rewards and evaluation draws. Cells run on up to
/// `threads` worker threads; results do not depend on the thread count.
pub fn theorem1_sweep(
    template: &AlignmentRunConfig,
    h_values: &[u64],
    repetitions: usize,
    threads: usize,
) -> Result<SweepReport> {
    let mut distinct = h_values.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::InvalidArgument("a slope needs at least two distinct h values".into()));
    }
    if repetitions == 0 {
        return Err(Error::InvalidArgument("repetitions must be at least 1".into()));
    }
    template.validate()?;

    let cells: Vec<(u64, usize)> = h_values
        .iter()
        .flat_map(|&h| (0..repetitions).map(move |k| (h, k)))
        .collect();
    let gaps = run_cells(&cells, threads.max(1), |&(h, k)| {
        let mut config = template.clone();
        config.h = h;
        config.seed = template.seed.wrapping_add(k as u64);
        let out = run(&config)?;
        Ok(out.metrics.last().expect("at least one iteration").tv_gap)
    })?;

    let rows: Vec<SweepRow> = h_values
        .iter()
        .zip(gaps.chunks(repetitions))
        .map(|(&h, g)| summarise(h, g))
        .collect();
    let xs: Vec<f64> = rows.iter().map(|r| (r.h as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.tv_gap_mean.ln()).collect();
    let slope = log_log_slope(&xs, &ys)?;
    Ok(SweepReport { rows, slope })
}

fn summarise(h: u64, gaps: &[f64]) -> SweepRow {
    let n = gaps.len() as f64;
    let mean = gaps.iter().sum::<f64>() / n;
    let stderr = (gaps.len() > 1).then(|| {
        let var = gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    });
    SweepRow {
        h,
        repetitions: gaps.len(),
        tv_gap_mean: mean,
        tv_gap_stderr: stderr,
    }
}

/// Evaluates `f` on every cell, in parallel, returning results in cell
/// order. The first failing cell in that order determines the error.
fn run_cells<C, F>(cells: &[C], threads: usize, f: F) -> Result<Vec<f64>>
where
    C: Sync,
    F: Fn(&C) -> Result<f64> + Sync,
{
    let next = AtomicUsize::new(0);
    let mut results: Vec<Option<Result<f64>>> = (0..cells.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let workers: Vec<_> = (0..threads.min(cells.len()))
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= cells.len() {
                            break done;
                        }
                        done.push((i, f(&cells[i])));
                    }
                })
            })
            .collect();
        for w in workers {
            for (i, r) in w.join().expect("sweep worker panicked") {
                results[i] = Some(r);
            }
        }
    });
    results.into_iter().map(|r| r.expect("every cell evaluated")).collect()
}

/// Ordinary least-squares slope of `ys` on `xs`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            found: ys.len(),
        });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::domain("slope inputs must be finite (gaps must be positive)"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidArgument("slope needs at least two distinct x values".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

pub fn write_sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = SWEEP_COLUMNS.join(",");
    out.push('\n');
    for r in rows {
        let stderr = r.tv_gap_stderr.map(num).unwrap_or_default();
        out.push_str(&format!("{},{},{},{}\n", r.h, r.repetitions, num(r.tv_gap_mean), stderr));
    }
    out
}

pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| csv_error(e, 1))?.clone();
    if header.iter().ne(SWEEP_COLUMNS) {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: format!("expected header `{}`", SWEEP_COLUMNS.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| csv_error(e, line))?;
        let bad = |c: usize| Error::Parse {
            line,
            column: c + 1,
            message: format!("bad value `{}`", &record[c]),
        };
        let stderr = record[3].trim();
        rows.push(SweepRow {
            h: record[0].trim().parse().map_err(|_| bad(0))?,
            repetitions: record[1].trim().parse().map_err(|_| bad(1))?,
            tv_gap_mean: record[2].trim().parse().map_err(|_| bad(2))?,
            tv_gap_stderr: if stderr.is_empty() {
                None
            } else {
                Some(stderr.parse().map_err(|_| bad(3))?)
            },
        });
    }
    Ok(rows)
}
