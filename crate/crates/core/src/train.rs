//! Mini-batch training with early stopping, and model evaluation.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Adam, CheckpointError, Graph, Matrix, ParamStore, StepOutcome};
use crate::config::{Boundary, ConfigError, RunConfig};
use crate::data::{
    generate_synthetic, parse_interactions, sample_negatives, temporal_split, ColumnMap, DataError, Event,
    RankingTask, SplitConfig, SplitTasks, UserTruth, Vocab,
};
use crate::metrics::{MetricReport, ScoredTask};
use crate::model::{ModelError, SlsRec};
use crate::objectives::{contrast_inputs, contrast_orderings, task_loss};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error("{0}")]
    Other(String),
}

/// RNG streams derived from the run seed.
#[derive(Clone, Copy, Debug)]
pub enum Stream {
    Split,
    Init,
    Epoch(usize),
}

pub fn rng_for(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(match stream {
        Stream::Split => 1,
        Stream::Init => 2,
        Stream::Epoch(e) => 100 + e as u64,
    });
    rng
}

/// Indexed interaction sequences with their split boundaries.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub vocab: Vocab,
    pub sequences: Vec<Vec<Event>>,
    pub train_end: u64,
    pub val_end: u64,
    /// Planted interests, for synthetic data.
    pub truth: Option<Vec<UserTruth>>,
    pub rejected_rows: usize,
}

impl PreparedData {
    pub fn load(cfg: &RunConfig) -> Result<PreparedData, TrainError> {
        let (records, truth, bounds, rejected) = if cfg.data == "synthetic" {
            let ds = generate_synthetic(&cfg.synth, cfg.seed)?;
            (ds.records, Some(ds.truth), Some((ds.train_end, ds.val_end)), 0)
        } else {
            let log = parse_interactions(&cfg.data, &ColumnMap::default())?;
            for r in &log.rejected {
                log::warn!("{}: line {} rejected: {}", cfg.data, r.line, r.reason);
            }
            (log.records, None, None, log.rejected.len())
        };
        let (vocab, sequences) = Vocab::index_log(&records);
        let (auto_train, auto_val) = match bounds {
            Some(b) => b,
            None => quantile_bounds(&sequences)?,
        };
        let train_end = match cfg.train_end {
            Boundary::At(t) => t,
            Boundary::Auto => auto_train,
        };
        let val_end = match cfg.val_end {
            Boundary::At(t) => t,
            Boundary::Auto => auto_val,
        };
        Ok(PreparedData { vocab, sequences, train_end, val_end, truth, rejected_rows: rejected })
    }

    pub fn split_config(&self, cfg: &RunConfig) -> SplitConfig {
        SplitConfig {
            omega: cfg.omega,
            shape: cfg.shape(),
            train_end: self.train_end,
            val_end: self.val_end,
            train_candidates: cfg.n_candidates,
            eval_candidates: cfg.eval_candidates,
        }
    }

    pub fn tasks(&self, cfg: &RunConfig) -> Result<SplitTasks, TrainError> {
        let mut rng = rng_for(cfg.seed, Stream::Split);
        Ok(temporal_split(&self.sequences, &self.vocab, &self.split_config(cfg), &mut rng)?)
    }
}

/// Timestamps at the 80th and 90th percentile of all interactions.
fn quantile_bounds(sequences: &[Vec<Event>]) -> Result<(u64, u64), TrainError> {
    let mut ts: Vec<u64> = sequences.iter().flatten().map(|e| e.timestamp).collect();
    ts.sort_unstable();
    if ts.is_empty() {
        return Err(TrainError::Other("interaction log has no valid rows".into()));
    }
    let at = |q: f64| ts[((ts.len() - 1) as f64 * q) as usize];
    let (t, v) = (at(0.8), at(0.9));
    if t >= v {
        return Err(TrainError::Other(format!("cannot derive split boundaries: both quantiles fall at {t}")));
    }
    Ok((t, v))
}

/// Scores every candidate of every task; the positive stays first.
pub fn score_tasks(model: &SlsRec, store: &ParamStore, tasks: &[RankingTask]) -> Result<Vec<ScoredTask>, TrainError> {
    tasks
        .iter()
        .map(|t| Ok(ScoredTask { user: t.user, scores: model.score(store, &t.history, &t.candidates())? }))
        .collect()
}

pub fn evaluate(model: &SlsRec, store: &ParamStore, tasks: &[RankingTask]) -> Result<MetricReport, TrainError> {
    Ok(MetricReport::compute(&score_tasks(model, store, tasks)?))
}

/// Share of tasks with history whose interests satisfy all four contrastive orderings.
pub fn contrast_calibration(model: &SlsRec, store: &ParamStore, tasks: &[RankingTask]) -> Result<f64, TrainError> {
    let (mut hits, mut total) = (0usize, 0usize);
    for t in tasks {
        let mut g = Graph::new();
        let bundle = model.forward(&mut g, store, &t.history, &[t.positive()])?;
        let Some(x) = contrast_inputs(&mut g, model, store, &bundle, &t.history)? else {
            continue;
        };
        total += 1;
        let row = |v| g.value(v).data().to_vec();
        if contrast_orderings(&row(x.u_long), &row(x.u_short), &row(x.hat_long), &row(x.hat_short))
            .iter()
            .all(|&ok| ok)
        {
            hits += 1;
        }
    }
    Ok(if total == 0 { f64::NAN } else { hits as f64 / total as f64 })
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Means over training tasks.
    pub l_main: f64,
    /// Mean over tasks that had the contrastive term.
    pub l_con: f64,
    pub l_total: f64,
    pub val: MetricReport,
    pub clamped: usize,
    pub contrast_skipped: usize,
    pub adam_skipped: usize,
    pub improved: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: SlsRec,
    /// Parameters from the epoch with the best validation AUC.
    pub best: ParamStore,
    pub best_epoch: usize,
    pub epochs: Vec<EpochRecord>,
    pub epoch_seconds: Vec<f64>,
    pub num_items: usize,
}

impl TrainOutcome {
    pub fn best_record(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch - 1]
    }
}

/// Trains from scratch on `tasks.train`, validating on `tasks.val` after every epoch.
pub fn train(cfg: &RunConfig, data: &PreparedData, tasks: &SplitTasks) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if tasks.train.is_empty() || tasks.val.is_empty() {
        return Err(TrainError::Other(format!(
            "need training and validation tasks, found {} and {}",
            tasks.train.len(),
            tasks.val.len()
        )));
    }
    let num_items = data.vocab.num_items();
    let (model, mut store) = SlsRec::init(cfg.model(), num_items, &mut rng_for(cfg.seed, Stream::Init))?;
    // start the output at the share of positives among training candidates
    let prior = (1.0 / (cfg.n_candidates - 1) as f64).ln();
    store.assign("mlp.b2", Matrix::scalar(prior)).map_err(ModelError::from)?;
    let mut adam = Adam::new(cfg.adam(), &store);
    let loss_cfg = cfg.loss();

    let mut best = store.clone();
    let mut best_auc = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut epochs = Vec::new();
    let mut epoch_seconds = Vec::new();

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let mut rng = rng_for(cfg.seed, Stream::Epoch(epoch));
        let mut order: Vec<usize> = (0..tasks.train.len()).collect();
        order.shuffle(&mut rng);
        let (mut sum_main, mut sum_con, mut sum_total, mut con_count) = (0.0, 0.0, 0.0, 0usize);
        let (mut clamped, mut contrast_skipped, mut adam_skipped) = (0, 0, 0);

        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut g = Graph::new();
            let mut totals = Vec::with_capacity(batch.len());
            for &i in batch {
                let task = &tasks.train[i];
                let mut candidates = vec![task.positive()];
                candidates.extend(sample_negatives(task.positive(), cfg.n_candidates - 1, num_items, &mut rng)?);
                let mut labels = vec![0.0; candidates.len()];
                labels[0] = 1.0;
                let tl = task_loss(&mut g, &model, &store, &task.history, &candidates, &labels, &loss_cfg)?;
                sum_main += g.value(tl.main).item();
                if let Some(c) = tl.contrastive {
                    sum_con += g.value(c).item();
                    con_count += 1;
                }
                sum_total += g.value(tl.total).item();
                clamped += tl.clamped;
                contrast_skipped += tl.contrast_skipped as usize;
                totals.push(tl.total);
            }
            let stacked = g.concat_rows(&totals).map_err(ModelError::from)?;
            let root = g.sum(stacked);
            if !g.value(root).item().is_finite() {
                return Err(TrainError::NonFinite { epoch, batch: b + 1 });
            }
            let grads = g.backward(root).map_err(ModelError::from)?;
            store.zero_grads();
            store.accumulate(&g, &grads);
            if let StepOutcome::Skipped { .. } = adam.step(&mut store) {
                adam_skipped += 1;
            }
        }

        let val = evaluate(&model, &store, &tasks.val)?;
        let improved = val.auc > best_auc;
        if improved {
            best_auc = val.auc;
            best_epoch = epoch;
            best = store.clone();
            stale = 0;
        } else {
            stale += 1;
        }
        let n = tasks.train.len() as f64;
        let record = EpochRecord {
            epoch,
            l_main: sum_main / n,
            l_con: if con_count == 0 { 0.0 } else { sum_con / con_count as f64 },
            l_total: sum_total / n,
            val,
            clamped,
            contrast_skipped,
            adam_skipped,
            improved,
        };
        let secs = started.elapsed().as_secs_f64();
        log::info!(
            "epoch {epoch}: loss {:.5} (main {:.5}, con {:.5}), val auc {:.4}, {secs:.1}s",
            record.l_total,
            record.l_main,
            record.l_con,
            record.val.auc
        );
        epochs.push(record);
        epoch_seconds.push(secs);
        if stale >= cfg.patience.max(1) {
            log::info!("early stop after epoch {epoch}; best epoch {best_epoch}");
            break;
        }
    }

    Ok(TrainOutcome { model, best, best_epoch, epochs, epoch_seconds, num_items })
}
