//! `irepo`: rank preference matrices, evaluate losses, run alignment
//! simulations and `h`-rate sweeps.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use irepo::alignment::{
    metrics_csv_header, run_with, theorem1_sweep, write_sweep_csv, AlignmentRunConfig, IterationMetrics,
};
use irepo::fmt::num;
use irepo::io::read_preference_matrix;
use irepo::losses::{sample_loss, LossKind};
use irepo::ranking::{rank, RankMethod, RankingSettings};
use irepo::Error;
use serde_json::json;

#[derive(Parser)]
#[command(name = "irepo", version, about = "Preference ranking and alignment simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bradley-Terry strengths of a pairwise win-count matrix (CSV or JSON).
    Rank {
        matrix: PathBuf,
        #[arg(long, default_value_t = RankMethod::Newman)]
        method: RankMethod,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long = "max-iter", default_value_t = 10_000)]
        max_iter: usize,
        /// Pseudo-count added to every off-diagonal entry.
        #[arg(long, default_value_t = 0.0)]
        smoothing: f64,
        /// Write the report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate one preference loss.
    Loss {
        /// irepo, dpo, ipo, slic or sppo.
        #[arg(long)]
        kind: LossKind,
        #[arg(long, allow_hyphen_values = true)]
        zs: f64,
        #[arg(long, allow_hyphen_values = true)]
        zl: f64,
        /// Target logit, used by irepo.
        #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
        target: f64,
        /// Used by slic.
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
    },
    /// Run the alignment loop described by a JSON config.
    Simulate {
        config: PathBuf,
        /// Directory for metrics.csv, policy.csv, best_policy.csv and summary.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Final TV gap as a function of the annotator count.
    Sweep {
        config: PathBuf,
        /// Comma-separated annotator counts.
        #[arg(long = "h", value_delimiter = ',', required = true)]
        h: Vec<u64>,
        #[arg(long, default_value_t = 8)]
        reps: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Exit status for a library error.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::NotConnected { .. } | Error::DegenerateMatrix { .. } => 3,
        Error::Domain(_) => 4,
        Error::IterationAborted { .. }
        | Error::SamplingExhausted { .. }
        | Error::NoValidPerturbation
        | Error::EmptySamples => 5,
        _ => 2,
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        Failure {
            code: exit_code(&err),
            message: err.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn io_failure(path: &Path, err: std::io::Error) -> Failure {
    Error::File {
        path: path.to_path_buf(),
        source: err,
    }
    .into()
}

fn write_file(path: &Path, contents: &str) -> CmdResult {
    fs::write(path, contents).map_err(|e| io_failure(path, e))
}

fn cmd_rank(
    matrix: &Path,
    settings: RankingSettings,
    out: Option<&Path>,
) -> CmdResult {
    let h = read_preference_matrix(matrix).map_err(|e| match e {
        Error::Parse { .. } => Failure {
            code: 2,
            message: format!("{}: {e}", matrix.display()),
        },
        other => other.into(),
    })?;
    let result = rank(&h, &settings)?;
    let mut report = String::from("field,value\n");
    let order: Vec<String> = result.order().iter().map(usize::to_string).collect();
    let mut line = |k: &str, v: String| report.push_str(&format!("{k},{v}\n"));
    line("method", settings.method.to_string());
    line("converged", result.converged.to_string());
    line("iterations", result.iterations.to_string());
    line("log_likelihood", num(result.final_log_likelihood));
    line("strongest_index", result.strongest_index.to_string());
    line("weakest_index", result.weakest_index.to_string());
    line("extreme_logit", num(result.extreme_logit()));
    line("order", order.join(";"));
    for (i, w) in result.strengths.as_slice().iter().enumerate() {
        line(&format!("strength_{i}"), num(*w));
    }
    match out {
        Some(path) => write_file(path, &report),
        None => {
            print!("{report}");
            Ok(())
        }
    }
}

fn cmd_loss(kind: LossKind, zs: f64, zl: f64, target: f64, beta: f64) -> CmdResult {
    let value = sample_loss(kind, zs, zl, target, beta)?;
    println!("{}", num(value));
    Ok(())
}

fn load_config(path: &Path) -> Result<AlignmentRunConfig, Failure> {
    AlignmentRunConfig::from_json_path(path).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    })
}

fn cmd_simulate(config_path: &Path, out: &Path) -> CmdResult {
    let config = load_config(config_path)?;
    fs::create_dir_all(out).map_err(|e| io_failure(out, e))?;
    let metrics_path = out.join("metrics.csv");
    let policy_path = out.join("policy.csv");
    let mut metrics_file = fs::File::create(&metrics_path).map_err(|e| io_failure(&metrics_path, e))?;
    writeln!(metrics_file, "{}", metrics_csv_header()).map_err(|e| io_failure(&metrics_path, e))?;

    let mut completed: Vec<IterationMetrics> = Vec::new();
    let result = run_with(&config, |outcome| {
        writeln!(metrics_file, "{}", outcome.metrics.csv_row())?;
        metrics_file.flush()?;
        fs::write(&policy_path, outcome.policy.to_csv())?;
        completed.push(outcome.metrics);
        Ok(())
    });

    let summary = match &result {
        Ok(run) => {
            write_file(&out.join("best_policy.csv"), &run.best_policy.to_csv())?;
            let last = run.metrics.last().expect("at least one iteration");
            json!({
                "status": "completed",
                "iterations": run.metrics.len(),
                "final_tv_gap": last.tv_gap,
                "best_iteration": run.best_iteration,
                "best_tv_gap": run.metrics[run.best_iteration - 1].tv_gap,
                "final_kl_to_ref": last.kl_to_ref,
                "final_mean_true_reward": last.mean_true_reward,
            })
        }
        Err(err) => json!({
            "status": "aborted",
            "iterations": completed.len(),
            "final_tv_gap": completed.last().map(|m| m.tv_gap),
            "error": err.to_string(),
        }),
    };
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    write_file(&out.join("summary.json"), &text)?;
    result.map(|_| ()).map_err(Failure::from)
}

fn sweep_threads() -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var("IREPO_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        Some(cap) if cap >= 1 => cap.min(available),
        _ => available,
    }
}

fn cmd_sweep(config_path: &Path, h: &[u64], reps: usize, out: &Path) -> CmdResult {
    let config = load_config(config_path)?;
    let report = theorem1_sweep(&config, h, reps, sweep_threads())?;
    write_file(out, &write_sweep_csv(&report.rows))?;
    if reps == 1 {
        eprintln!("irepo: warning: a single repetition has no standard error; tv_gap_stderr left empty");
    }
    println!("slope,{}", num(report.slope));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Rank {
            matrix,
            method,
            tol,
            max_iter,
            smoothing,
            out,
        } => {
            let settings = RankingSettings {
                method,
                tol,
                max_iter,
                smoothing_alpha: smoothing,
            };
            cmd_rank(&matrix, settings, out.as_deref())
        }
        Command::Loss {
            kind,
            zs,
            zl,
            target,
            beta,
        } => cmd_loss(kind, zs, zl, target, beta),
        Command::Simulate { config, out } => cmd_simulate(&config, &out),
        Command::Sweep { config, h, reps, out } => cmd_sweep(&config, &h, reps, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("irepo: error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
