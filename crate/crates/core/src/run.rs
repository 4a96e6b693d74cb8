//! Subcommand implementations and run-directory artifacts.
//!
//! A training run directory holds:
//!
//! | file | contents |
//! |------|----------|
//! | `config.resolved` | every config key, one `key=value` per line |
//! | `train_log.csv` | one row per epoch: losses, validation metrics, counters |
//! | `metrics.csv` | one row per (run_id, split, epoch) |
//! | `best.ckpt` | parameters of the best validation epoch |
//! | `timing.csv` | wall-clock seconds per epoch |
//!
//! Every CSV starts with the resolved config as `# key=value` comment lines.
//! All files except `timing.csv` are reproducible byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::autodiff::{finite_diff_check, Checkpoint, CheckpointHeader, GradCheckError, GradCheckReport, Graph, Var};
use crate::config::RunConfig;
use crate::data::{generate_synthetic, write_interactions, RankingTask, SessionizedHistory, SplitTasks};
use crate::metrics::{fmt, MetricReport};
use crate::model::{ModelError, SlsRec};
use crate::objectives::task_loss;
use crate::train::{contrast_calibration, evaluate, train, PreparedData, TrainError, TrainOutcome};

/// Writes `rows` under a comment block holding `cfg`.
pub fn write_csv(path: &Path, cfg: &RunConfig, header: &[String], rows: &[Vec<String>]) -> Result<(), TrainError> {
    let mut out = Vec::new();
    for line in cfg.resolved().lines() {
        out.extend_from_slice(format!("# {line}\n").as_bytes());
    }
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a CSV written by [`write_csv`], skipping the comment block.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), TrainError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let header = r.headers()?.iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.map(|r| r.iter().map(String::from).collect())).collect::<Result<_, _>>()?;
    Ok((header, rows))
}

fn metric_columns(prefix: &str) -> Vec<String> {
    MetricReport::csv_header().into_iter().map(|h| format!("{prefix}{h}")).collect()
}

pub fn train_log_rows(out: &TrainOutcome) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header: Vec<String> = ["epoch", "l_main", "l_con", "l_total"].map(String::from).to_vec();
    header.extend(metric_columns("val_"));
    header.extend(["clamped", "contrast_skipped", "adam_skipped", "improved"].map(String::from));
    let rows = out
        .epochs
        .iter()
        .map(|e| {
            let mut r = vec![e.epoch.to_string(), fmt(e.l_main), fmt(e.l_con), fmt(e.l_total)];
            r.extend(e.val.csv_row());
            r.extend([e.clamped, e.contrast_skipped, e.adam_skipped].map(|c| c.to_string()));
            r.push(e.improved.to_string());
            r
        })
        .collect();
    (header, rows)
}

fn metrics_header() -> Vec<String> {
    let mut h: Vec<String> = ["run_id", "split", "epoch"].map(String::from).to_vec();
    h.extend(MetricReport::csv_header());
    h
}

fn metrics_row(run_id: &str, split: &str, epoch: usize, m: &MetricReport) -> Vec<String> {
    let mut r = vec![run_id.to_string(), split.to_string(), epoch.to_string()];
    r.extend(m.csv_row());
    r
}

pub fn checkpoint_for(cfg: &RunConfig, out: &TrainOutcome) -> Checkpoint {
    Checkpoint {
        header: CheckpointHeader {
            d: cfg.d as u64,
            vocab: out.num_items as u64,
            l: cfg.l as u64,
            k_max: cfg.k_max as u64,
            config: cfg.resolved(),
        },
        params: out.best.clone(),
    }
}

/// Result of one train-and-test run.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub run_id: String,
    pub dir: PathBuf,
    pub outcome: TrainOutcome,
    pub test: MetricReport,
    /// Share of test tasks meeting all four contrastive orderings.
    pub calibration: f64,
}

/// Trains, evaluates the best epoch on the test split, and fills `dir`.
pub fn run_training(cfg: &RunConfig, data: &PreparedData, tasks: &SplitTasks, dir: &Path) -> Result<RunSummary, TrainError> {
    cfg.validate()?;
    fs::create_dir_all(dir)?;
    let run_id = cfg.run_id();
    let outcome = train(cfg, data, tasks)?;
    let test = evaluate(&outcome.model, &outcome.best, &tasks.test)?;
    let calibration = contrast_calibration(&outcome.model, &outcome.best, &tasks.test)?;

    fs::write(dir.join("config.resolved"), cfg.resolved())?;
    let (header, rows) = train_log_rows(&outcome);
    write_csv(&dir.join("train_log.csv"), cfg, &header, &rows)?;

    let mut rows: Vec<Vec<String>> =
        outcome.epochs.iter().map(|e| metrics_row(&run_id, "val", e.epoch, &e.val)).collect();
    rows.push(metrics_row(&run_id, "test", outcome.best_epoch, &test));
    write_csv(&dir.join("metrics.csv"), cfg, &metrics_header(), &rows)?;

    checkpoint_for(cfg, &outcome).save(dir.join("best.ckpt"))?;
    let timing: Vec<Vec<String>> =
        outcome.epochs.iter().zip(&outcome.epoch_seconds).map(|(e, s)| vec![e.epoch.to_string(), format!("{s:.3}")]).collect();
    write_csv(&dir.join("timing.csv"), cfg, &["epoch".into(), "seconds".into()], &timing)?;
    log::info!("run {run_id}: best epoch {}, test auc {:.4}", outcome.best_epoch, test.auc);
    Ok(RunSummary { run_id, dir: dir.to_path_buf(), outcome, test, calibration })
}

pub fn cmd_train(cfg: &RunConfig, dir: &Path) -> Result<RunSummary, TrainError> {
    cfg.validate()?;
    let data = PreparedData::load(cfg)?;
    let tasks = data.tasks(cfg)?;
    run_training(cfg, &data, &tasks, dir)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}` (train, val or test)")),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// Evaluates a checkpoint on one split of the data it was trained on.
/// Nothing is written unless evaluation succeeds.
pub fn cmd_eval(checkpoint: &Path, split: Split, out: &Path) -> Result<MetricReport, TrainError> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let cfg = RunConfig::parse_str(&ckpt.header.config)?;
    let model = SlsRec::bind(cfg.model(), &ckpt.params)?;
    let data = PreparedData::load(&cfg)?;
    if data.vocab.num_items() as u64 != ckpt.header.vocab {
        return Err(TrainError::Other(format!(
            "checkpoint has {} item rows but the data yields {}",
            ckpt.header.vocab,
            data.vocab.num_items()
        )));
    }
    let tasks = data.tasks(&cfg)?;
    let chosen = match split {
        Split::Train => &tasks.train,
        Split::Val => &tasks.val,
        Split::Test => &tasks.test,
    };
    let report = evaluate(&model, &ckpt.params, chosen)?;
    let row = metrics_row(&cfg.run_id(), &split.to_string(), 0, &report);
    write_csv(out, &cfg, &metrics_header(), &[row])?;
    Ok(report)
}

pub const VARIANTS: [&str; 5] = ["full", "no_cl", "no_cate", "no_long", "no_short"];

/// `cfg` with the ablation switches set for `variant`.
pub fn variant_config(cfg: &RunConfig, variant: &str) -> Result<RunConfig, TrainError> {
    let mut c = cfg.clone();
    for flag in &VARIANTS[1..] {
        c.set(flag, "false")?;
    }
    if variant != "full" {
        c.set(variant, "true")?;
    }
    Ok(c)
}

fn summary_header(first: &str) -> Vec<String> {
    let mut h = vec![first.to_string(), "run_id".into(), "best_epoch".into()];
    h.extend(metric_columns("test_"));
    h.push("calibration".into());
    h
}

fn summary_row(first: String, s: &RunSummary) -> Vec<String> {
    let mut r = vec![first, s.run_id.clone(), s.outcome.best_epoch.to_string()];
    r.extend(s.test.csv_row());
    r.push(fmt(s.calibration));
    r
}

/// Trains the full model and each ablation with a shared seed; writes `ablation.csv`.
pub fn cmd_ablate(cfg: &RunConfig, dir: &Path) -> Result<Vec<(String, RunSummary)>, TrainError> {
    let data = PreparedData::load(cfg)?;
    let tasks = data.tasks(cfg)?;
    let mut out = Vec::new();
    for v in VARIANTS {
        let c = variant_config(cfg, v)?;
        out.push((v.to_string(), run_training(&c, &data, &tasks, &dir.join(v))?));
    }
    let rows: Vec<_> = out.iter().map(|(v, s)| summary_row(v.clone(), s)).collect();
    write_csv(&dir.join("ablation.csv"), cfg, &summary_header("variant"), &rows)?;
    Ok(out)
}

/// One train-and-test run per value of `param`; writes `sweep.csv`.
pub fn cmd_sweep(cfg: &RunConfig, param: &str, values: &[String], dir: &Path) -> Result<Vec<RunSummary>, TrainError> {
    if values.len() < 2 {
        return Err(TrainError::Other("a sweep needs at least two values".into()));
    }
    if !RunConfig::is_key(param) {
        return Err(crate::config::ConfigError::UnknownKey(param.into()).into());
    }
    let data = PreparedData::load(cfg)?;
    let mut out = Vec::new();
    let mut rows = Vec::new();
    for v in values {
        let mut c = cfg.clone();
        c.set(param, v)?;
        let tasks = data.tasks(&c)?;
        let s = run_training(&c, &data, &tasks, &dir.join(format!("{param}={v}")))?;
        rows.push(summary_row(v.clone(), &s));
        out.push(s);
    }
    let mut header = summary_header("value");
    header.insert(0, "param".into());
    let rows: Vec<_> = rows
        .into_iter()
        .map(|mut r| {
            r.insert(0, param.to_string());
            r
        })
        .collect();
    write_csv(&dir.join("sweep.csv"), cfg, &header, &rows)?;
    Ok(out)
}

/// Size of the gradient-check instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GradcheckShape {
    pub d: usize,
    pub sessions: usize,
    pub l: usize,
    pub tasks: usize,
    pub num_items: usize,
}

impl Default for GradcheckShape {
    fn default() -> Self {
        GradcheckShape { d: 8, sessions: 3, l: 4, tasks: 2, num_items: 12 }
    }
}

pub const GRADCHECK_EPS: f64 = 1e-5;
pub const GRADCHECK_TOL: f64 = 1e-4;

/// Random contexts of exactly `shape.sessions` sessions with 1 to `l` items each.
pub fn gradcheck_tasks<R: Rng>(shape: &GradcheckShape, n_candidates: usize, rng: &mut R) -> Vec<RankingTask> {
    let categories = 3;
    (0..shape.tasks)
        .map(|user| {
            let mut items = Vec::new();
            let mut cats = Vec::new();
            let mut mask = Vec::new();
            for _ in 0..shape.sessions {
                let len = rng.gen_range(1..=shape.l);
                for i in 0..shape.l {
                    let real = i >= shape.l - len;
                    let item = if real { rng.gen_range(1..shape.num_items as u32) } else { 0 };
                    items.push(item);
                    cats.push(if real { 1 + item % categories } else { 0 });
                    mask.push(real);
                }
            }
            let target = rng.gen_range(1..shape.num_items as u32);
            let history = SessionizedHistory {
                l: shape.l,
                items,
                categories: cats,
                mask,
                target_item: target,
                target_category: 1 + target % categories,
            };
            let negatives = crate::data::sample_negatives(target, n_candidates - 1, shape.num_items, rng)
                .expect("gradcheck vocabulary is large enough");
            RankingTask { user: user as u32, time: 0, history, negatives }
        })
        .collect()
}

/// Central-difference check of the summed training loss over every parameter.
pub fn cmd_gradcheck(cfg: &RunConfig, shape: &GradcheckShape) -> Result<GradCheckReport, TrainError> {
    if shape.d > 16 {
        return Err(TrainError::Other(format!("gradcheck wants a tiny model, d={} > 16", shape.d)));
    }
    let mut model_cfg = cfg.model();
    model_cfg.d = shape.d;
    model_cfg.ablation.validate()?;
    let mut rng = crate::train::rng_for(cfg.seed, crate::train::Stream::Init);
    let (model, mut store) = SlsRec::init(model_cfg, shape.num_items, &mut rng)?;
    let tasks = gradcheck_tasks(shape, cfg.n_candidates.min(shape.num_items - 2), &mut rng);
    let loss_cfg = cfg.loss();
    let build = |store: &crate::autodiff::ParamStore, g: &mut Graph| -> Result<Var, ModelError> {
        let mut totals = Vec::new();
        for t in &tasks {
            let candidates = t.candidates();
            let labels: Vec<f64> = (0..candidates.len()).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
            totals.push(task_loss(g, &model, store, &t.history, &candidates, &labels, &loss_cfg)?.total);
        }
        let stacked = g.concat_rows(&totals)?;
        Ok(g.sum(stacked))
    };
    finite_diff_check(&mut store, GRADCHECK_EPS, build).map_err(|e| match e {
        GradCheckError::Build(b) => TrainError::Other(b.to_string()),
        other => TrainError::Other(other.to_string()),
    })
}

/// Writes the synthetic interaction log and its planted interests.
pub fn cmd_synth(cfg: &RunConfig, dir: &Path) -> Result<(PathBuf, PathBuf), TrainError> {
    cfg.synth.validate()?;
    fs::create_dir_all(dir)?;
    let ds = generate_synthetic(&cfg.synth, cfg.seed)?;
    let log = dir.join("interactions.csv");
    let mut buf = Vec::new();
    write_interactions(&mut buf, &ds.records)?;
    fs::write(&log, buf)?;
    let truth = dir.join("truth.csv");
    let rows: Vec<Vec<String>> = ds
        .truth
        .iter()
        .enumerate()
        .map(|(u, t)| {
            let shorts: Vec<String> = t.short_term.iter().map(|c| crate::data::category_key(*c as usize)).collect();
            vec![format!("u{u}"), crate::data::category_key(t.long_term as usize), shorts.join(" ")]
        })
        .collect();
    write_csv(&truth, cfg, &["user_id".into(), "long_term".into(), "short_term".into()], &rows)?;
    fs::write(dir.join("config.resolved"), cfg.resolved())?;
    Ok((log, truth))
}
