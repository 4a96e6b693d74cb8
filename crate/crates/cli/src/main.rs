use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use slsrec::config::{RunConfig, SEED_ENV};
use slsrec::run::{
    cmd_ablate, cmd_eval, cmd_gradcheck, cmd_sweep, cmd_synth, cmd_train, GradcheckShape, Split, GRADCHECK_TOL,
};

/// Session-aware sequential recommender: training, evaluation and experiments.
///
/// Any config key can be overridden after the subcommand as `--key value` or
/// `--key=value`, for example `slsrec train --d 32 --no_cl true`. The seed can
/// also be set through SLSREC_SEED; a `--seed` override wins over it.
#[derive(Parser, Debug)]
#[command(name = "slsrec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// key=value config file; unset keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train with early stopping and write a run directory.
    Train {
        #[command(flatten)]
        common: Common,
        /// Defaults to runs/<run_id>.
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on one split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Defaults to eval_<split>.csv next to the checkpoint.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the full model and every ablation with one seed.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "runs/ablation")]
        out_dir: PathBuf,
    },
    /// Train once per value of one config key.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Config key to vary, typically omega or lambda.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long, default_value = "runs/sweep")]
        out_dir: PathBuf,
    },
    /// Compare analytic and finite-difference gradients of the full loss.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long, default_value_t = 3)]
        sessions: usize,
        #[arg(long, default_value_t = 4)]
        len: usize,
        #[arg(long, default_value_t = 2)]
        tasks: usize,
    },
    /// Write the synthetic interaction log.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "data/synthetic")]
        out_dir: PathBuf,
    },
}

/// Pulls `--key value` / `--key=value` pairs for config keys out of `args`.
fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>)> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter().peekable();
    while let Some(arg) = it.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (key, inline) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (flag.to_string(), None),
        };
        if !RunConfig::is_key(&key) {
            rest.push(arg);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => match it.peek() {
                Some(next) if !next.starts_with("--") => it.next().unwrap_or_default(),
                // a bare switch means true
                _ => "true".to_string(),
            },
        };
        overrides.push((key, value));
    }
    Ok((rest, overrides))
}

fn resolve(common: &Common, overrides: &[(String, String)]) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_seed_env(std::env::var(SEED_ENV).ok().as_deref())?;
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli, overrides: &[(String, String)]) -> Result<bool> {
    let no_overrides = |what: &str| -> Result<()> {
        if !overrides.is_empty() {
            bail!("{what} takes its configuration from the checkpoint; config overrides are not accepted");
        }
        Ok(())
    };
    match cli.command {
        Command::Train { common, run_dir } => {
            let cfg = resolve(&common, overrides)?;
            let dir = run_dir.unwrap_or_else(|| Path::new("runs").join(cfg.run_id()));
            let s = cmd_train(&cfg, &dir)?;
            println!(
                "run {} -> {}\nbest epoch {}: test auc {:.4} gauc {:.4} mrr {:.4}",
                s.run_id,
                dir.display(),
                s.outcome.best_epoch,
                s.test.auc,
                s.test.gauc,
                s.test.mrr
            );
        }
        Command::Eval { checkpoint, split, out } => {
            no_overrides("eval")?;
            let out = out.unwrap_or_else(|| {
                checkpoint.parent().unwrap_or(Path::new(".")).join(format!("eval_{split}.csv"))
            });
            let m = cmd_eval(&checkpoint, split, &out)
                .with_context(|| format!("evaluating {}", checkpoint.display()))?;
            println!("{split}: {} tasks, auc {:.4} gauc {:.4} mrr {:.4} -> {}", m.tasks, m.auc, m.gauc, m.mrr, out.display());
        }
        Command::Ablate { common, out_dir } => {
            let cfg = resolve(&common, overrides)?;
            for (v, s) in cmd_ablate(&cfg, &out_dir)? {
                println!("{v:<9} auc {:.4} gauc {:.4} mrr {:.4} calibration {:.4}", s.test.auc, s.test.gauc, s.test.mrr, s.calibration);
            }
        }
        Command::Sweep { common, param, values, out_dir } => {
            let cfg = resolve(&common, overrides)?;
            for (v, s) in values.iter().zip(cmd_sweep(&cfg, &param, &values, &out_dir)?) {
                println!("{param}={v:<10} auc {:.4} gauc {:.4} mrr {:.4}", s.test.auc, s.test.gauc, s.test.mrr);
            }
        }
        Command::Gradcheck { common, dim, sessions, len, tasks } => {
            let cfg = resolve(&common, overrides)?;
            let shape = GradcheckShape { d: dim, sessions, l: len, tasks, ..Default::default() };
            let report = cmd_gradcheck(&cfg, &shape)?;
            for p in &report.params {
                let verdict = if p.max_rel_error < GRADCHECK_TOL { "ok" } else { "FAIL" };
                println!("{:<22} {:>5} coords  max rel err {:.3e}  {verdict}", p.name, p.coordinates, p.max_rel_error);
            }
            println!("worst {:.3e} (tolerance {GRADCHECK_TOL:e})", report.worst());
            return Ok(report.passes(GRADCHECK_TOL));
        }
        Command::Synth { common, out_dir } => {
            let cfg = resolve(&common, overrides)?;
            let (log, truth) = cmd_synth(&cfg, &out_dir)?;
            println!("wrote {} and {}", log.display(), truth.display());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let result = split_overrides(std::env::args().collect())
        .and_then(|(args, overrides)| run(Cli::parse_from(args), &overrides));
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
