use serde::{Deserialize, Serialize};

use crate::fmt::num;
use crate::{Error, Result};

pub const METRICS_COLUMNS: [&str; 9] = [
    "t",
    "risk_pre",
    "risk_post",
    "tv_gap",
    "kl_to_ref",
    "mean_true_reward",
    "c_hat",
    "skipped_samples",
    "rank_iters_mean",
];

/// Results of one iteration. Risks are means over the iteration's samples;
/// `kl_to_ref` and `mean_true_reward` are exact expectations over `rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub t: usize,
    pub risk_pre: f64,
    pub risk_post: f64,
    pub tv_gap: f64,
    pub kl_to_ref: f64,
    pub mean_true_reward: f64,
    /// Absent when every candidate policy had zero training residual.
    pub c_hat: Option<f64>,
    pub skipped_samples: usize,
    pub rank_iters_mean: f64,
}

impl IterationMetrics {
    /// One CSV data line without the trailing newline.
    pub fn csv_row(&self) -> String {
        [
            self.t.to_string(),
            num(self.risk_pre),
            num(self.risk_post),
            num(self.tv_gap),
            num(self.kl_to_ref),
            num(self.mean_true_reward),
            self.c_hat.map(num).unwrap_or_default(),
            self.skipped_samples.to_string(),
            num(self.rank_iters_mean),
        ]
        .join(",")
    }
}

pub fn metrics_csv_header() -> String {
    METRICS_COLUMNS.join(",")
}

pub fn write_metrics_csv(rows: &[IterationMetrics]) -> String {
    let mut out = metrics_csv_header();
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<IterationMetrics>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| csv_error(e, 1))?.clone();
    if header.iter().ne(METRICS_COLUMNS) {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: format!("expected header `{}`", metrics_csv_header()),
        });
    }
    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| csv_error(e, line))?;
        let field = |c: usize| record.get(c).unwrap_or("").trim();
        let real = |c: usize| -> Result<f64> {
            field(c).parse().map_err(|_| Error::Parse {
                line,
                column: c + 1,
                message: format!("`{}` is not a number", field(c)),
            })
        };
        let count = |c: usize| -> Result<usize> {
            field(c).parse().map_err(|_| Error::Parse {
                line,
                column: c + 1,
                message: format!("`{}` is not a count", field(c)),
            })
        };
        rows.push(IterationMetrics {
            t: count(0)?,
            risk_pre: real(1)?,
            risk_post: real(2)?,
            tv_gap: real(3)?,
            kl_to_ref: real(4)?,
            mean_true_reward: real(5)?,
            c_hat: if field(6).is_empty() { None } else { Some(real(6)?) },
            skipped_samples: count(7)?,
            rank_iters_mean: real(8)?,
        });
    }
    Ok(rows)
}

pub(crate) fn csv_error(e: csv::Error, line: usize) -> Error {
    let line = e.position().map_or(line, |p| p.line() as usize);
    Error::Parse {
        line,
        column: 1,
        message: e.to_string(),
    }
}
