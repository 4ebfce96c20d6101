//! Meta-training loop: sample tasks, adapt, accumulate query-loss gradients,
//! take an Adam step, and select the best checkpoint on dev MRR.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{meta_test, EvalReport};
use crate::graph::{sample_task, KnowledgeGraph, NeighborSampler, Partition, TaskSplit};
use crate::model::{Episode, EpisodeGrads, Eta, Model, ModelConfig};
use crate::numeric::{adam_step, rng, AdamState, Checkpoint};

/// Consecutive skipped tasks tolerated before training aborts.
pub const MAX_CONSECUTIVE_SKIPS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub meta_batch_tasks: usize,
    /// Query triplets per task.
    pub query_batch: usize,
    pub outer_lr: f64,
    pub max_steps: usize,
    pub eval_every: usize,
    /// Evaluations without dev improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Support shots.
    pub k: usize,
    /// Worker threads for task-level parallelism.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            meta_batch_tasks: 1,
            query_batch: 1024,
            outer_lr: 0.001,
            max_steps: 10_000,
            eval_every: 100,
            patience: 10,
            seed: 0,
            k: 5,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.meta_batch_tasks == 0 || self.query_batch == 0 {
            return fail("meta_batch_tasks and query_batch must be at least 1");
        }
        if self.k == 0 {
            return fail("k must be at least 1");
        }
        if self.eval_every == 0 || (self.max_steps > 0 && self.eval_every > self.max_steps) {
            return fail("eval_every must satisfy 1 <= eval_every <= max_steps");
        }
        if !(self.outer_lr > 0.0 && self.outer_lr.is_finite()) {
            return fail("outer_lr must be positive");
        }
        if self.workers == 0 {
            return fail("workers must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    /// Mean hinge per query example over the meta-batch.
    pub query_loss: f64,
    pub tasks: usize,
    pub skipped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DevPoint {
    pub step: usize,
    pub mrr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxSteps,
    EarlyStopped,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainReport {
    pub steps: Vec<StepLog>,
    pub dev_history: Vec<DevPoint>,
    pub best_step: usize,
    pub best_dev_mrr: Option<f64>,
    pub stop: StopReason,
    pub dev: Option<EvalReport>,
    pub test: Option<EvalReport>,
    /// Seconds per outer step, written to `timing.tsv` only.
    #[serde(skip)]
    pub step_seconds: Vec<f64>,
}

pub struct TrainOutcome {
    pub report: TrainReport,
    /// Parameters at the best dev evaluation.
    pub best: Model,
    pub best_checkpoint: Checkpoint,
    pub last_checkpoint: Checkpoint,
}

fn skippable(e: &Error) -> bool {
    matches!(
        e,
        Error::NonFinite(_) | Error::NonFiniteGradient { .. } | Error::DegenerateRelation { .. }
    )
}

fn run_task(
    model: &Model,
    sampler: &NeighborSampler,
    graph: &KnowledgeGraph,
    split: &TaskSplit,
    cfg: &TrainConfig,
    stream: u64,
) -> Result<std::result::Result<(f64, usize, EpisodeGrads), Error>> {
    let mut r = rng::derived(rng::sub_seed(cfg.seed, "tasks"), stream);
    let task = sample_task(
        graph,
        split,
        Partition::Train,
        cfg.k,
        cfg.query_batch,
        &mut r,
    )?;
    let mc = &model.config;
    let mut attempt = || -> Result<(f64, usize, EpisodeGrads)> {
        let ep = Episode::from_task(graph, &task, mc.negatives_per_positive, &mut r)?;
        let eta0 = Eta::init(mc.eta_init, mc.embed_dim, &mut r);
        let net = model.net(sampler);
        let fwd = net.forward(&ep, eta0, mc.inner_steps)?;
        let grads = net.backward(&fwd)?;
        Ok((fwd.query_loss, ep.query.len(), grads))
    };
    match attempt() {
        Ok(x) => Ok(Ok(x)),
        Err(e) if skippable(&e) => Ok(Err(e)),
        Err(e) => Err(e),
    }
}

fn evaluate(
    model: &Model,
    sampler: &NeighborSampler,
    graph: &KnowledgeGraph,
    split: &TaskSplit,
    partition: Partition,
    cfg: &TrainConfig,
) -> Result<Option<EvalReport>> {
    if split.pool(partition).is_empty() {
        return Ok(None);
    }
    meta_test(
        &model.net(sampler),
        graph,
        split,
        partition,
        cfg.k,
        cfg.seed,
    )
    .map(Some)
}

/// Runs meta-training. With `out`, writes `report.json`, `best.ckpt`,
/// `last.ckpt`, `log.tsv`, and `timing.tsv` into that directory.
pub fn meta_train(
    graph: &KnowledgeGraph,
    split: &TaskSplit,
    model_config: &ModelConfig,
    cfg: &TrainConfig,
    out: Option<&Path>,
) -> Result<TrainOutcome> {
    model_config.validate()?;
    cfg.validate()?;
    if split.train.is_empty() {
        return Err(Error::Config("dataset has no train tasks".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| train_loop(graph, split, model_config, cfg, out))
}

fn train_loop(
    graph: &KnowledgeGraph,
    split: &TaskSplit,
    model_config: &ModelConfig,
    cfg: &TrainConfig,
    out: Option<&Path>,
) -> Result<TrainOutcome> {
    let mut model = Model::new(
        model_config.clone(),
        graph,
        &mut rng::seeded(rng::sub_seed(cfg.seed, "init")),
    )?;
    let sampler = NeighborSampler::new(graph, model_config.neighbor_cap, cfg.seed);
    let mut adam = AdamState::new(cfg.outer_lr);
    let mut meta = serde_json::Map::new();
    meta.insert(
        "train".into(),
        serde_json::to_value(cfg).expect("config serializes"),
    );

    let mut steps = Vec::new();
    let mut step_seconds = Vec::new();
    let mut dev_history = Vec::new();

    let dev0 = evaluate(&model, &sampler, graph, split, Partition::Dev, cfg)?;
    let mut best_dev_mrr = dev0.as_ref().map(|r| r.metrics.overall.mrr);
    if let Some(m) = best_dev_mrr {
        dev_history.push(DevPoint { step: 0, mrr: m });
    }
    let mut best_step = 0;
    let mut best_ckpt = model.checkpoint(Some(&adam), cfg.seed, 0, meta.clone());
    let mut stale = 0;
    let mut consecutive_skips = 0;
    let mut stop = StopReason::MaxSteps;
    let mut dev_at_best = dev0;

    for step in 1..=cfg.max_steps {
        let started = Instant::now();
        let first = ((step - 1) * cfg.meta_batch_tasks) as u64;
        let results: Vec<_> = (0..cfg.meta_batch_tasks as u64)
            .into_par_iter()
            .map(|i| run_task(&model, &sampler, graph, split, cfg, first + i))
            .collect::<Result<_>>()?;

        model.store.zero_grads();
        let (mut loss, mut examples, mut skipped) = (0.0, 0usize, 0usize);
        for res in &results {
            match res {
                Ok((l, n, grads)) => {
                    consecutive_skips = 0;
                    loss += l;
                    examples += n;
                    model.store.accumulate(&grads.buf);
                }
                Err(e) => {
                    skipped += 1;
                    consecutive_skips += 1;
                    if consecutive_skips > MAX_CONSECUTIVE_SKIPS {
                        return Err(Error::NonFinite(format!(
                            "aborting at step {step}: more than {MAX_CONSECUTIVE_SKIPS} consecutive tasks skipped, last: {e}"
                        )));
                    }
                }
            }
        }
        if examples > 0 {
            adam_step(&mut model.store, &mut adam)?;
        }
        model.store.zero_grads();
        steps.push(StepLog {
            step,
            query_loss: if examples > 0 {
                loss / examples as f64
            } else {
                0.0
            },
            tasks: results.len() - skipped,
            skipped,
        });

        let mut halt = false;
        if step % cfg.eval_every == 0 || step == cfg.max_steps {
            if let Some(dev) = evaluate(&model, &sampler, graph, split, Partition::Dev, cfg)? {
                let mrr = dev.metrics.overall.mrr;
                dev_history.push(DevPoint { step, mrr });
                if best_dev_mrr.is_none_or(|b| mrr > b) {
                    best_dev_mrr = Some(mrr);
                    best_step = step;
                    best_ckpt = model.checkpoint(Some(&adam), cfg.seed, step as u64, meta.clone());
                    dev_at_best = Some(dev);
                    stale = 0;
                } else {
                    stale += 1;
                    halt = stale >= cfg.patience;
                }
            } else {
                best_step = step;
                best_ckpt = model.checkpoint(Some(&adam), cfg.seed, step as u64, meta.clone());
            }
        }
        step_seconds.push(started.elapsed().as_secs_f64());
        if halt {
            stop = StopReason::EarlyStopped;
            break;
        }
    }

    let last_step = steps.last().map_or(0, |s| s.step);
    let last_ckpt = model.checkpoint(Some(&adam), cfg.seed, last_step as u64, meta.clone());
    best_ckpt.restore_into(&mut model.store)?;
    let test = evaluate(&model, &sampler, graph, split, Partition::Test, cfg)?;

    let report = TrainReport {
        steps,
        dev_history,
        best_step,
        best_dev_mrr,
        stop,
        dev: dev_at_best,
        test,
        step_seconds,
    };
    if let Some(dir) = out {
        write_run_dir(dir, &report, &best_ckpt, &last_ckpt)?;
    }
    Ok(TrainOutcome {
        report,
        best: model,
        best_checkpoint: best_ckpt,
        last_checkpoint: last_ckpt,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_run_dir(
    dir: &Path,
    report: &TrainReport,
    best: &Checkpoint,
    last: &Checkpoint,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join("report.json"), report)?;
    best.save(&dir.join("best.ckpt"))?;
    last.save(&dir.join("last.ckpt"))?;

    let mut log = String::from("step\tquery_loss\tdev_mrr\n");
    let mut dev = report.dev_history.iter().peekable();
    while dev.peek().is_some_and(|d| d.step == 0) {
        let d = dev.next().unwrap();
        let _ = writeln!(log, "0\t\t{:?}", d.mrr);
    }
    for s in &report.steps {
        let _ = write!(log, "{}\t{:?}\t", s.step, s.query_loss);
        if dev.peek().is_some_and(|d| d.step == s.step) {
            let _ = write!(log, "{:?}", dev.next().unwrap().mrr);
        }
        log.push('\n');
    }
    let path = dir.join("log.tsv");
    fs::write(&path, log).map_err(|e| Error::io(&path, e))?;

    let mut timing = String::from("step\tseconds\n");
    for (s, t) in report.steps.iter().zip(&report.step_seconds) {
        let _ = writeln!(timing, "{}\t{t}", s.step);
    }
    let path = dir.join("timing.tsv");
    fs::write(&path, timing).map_err(|e| Error::io(&path, e))
}
