use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use moemeta::eval::{cluster_similarity, gate_profile, write_gates_csv, MetricsTable};
use moemeta::graph::synth::SynthMeta;
use moemeta::model::check::BilevelCheck;
use moemeta::numeric::GradCheckOptions;
use moemeta::{
    generate_synthetic, load_dataset, meta_test, meta_train, Checkpoint, MetaGradient, Model,
    NeighborSampler, Partition, SynthConfig, TrainConfig,
};

use crate::config::{read_json, write_json, RunConfigFile};
use crate::DataArg;

const DATA_ENV: &str = "MOEMETA_DATA";

pub fn validate(args: &DataArg) -> Result<ExitCode> {
    let (graph, split) = load_dataset(&args.data)?;
    println!(
        "entities={} triplets={} tasks={}",
        graph.num_entities(),
        graph.triplet_set.len(),
        split.num_tasks()
    );
    println!(
        "relations={} background={} train/dev/test={}/{}/{}",
        graph.relations.len() - graph.num_background_relations,
        graph.num_background_relations,
        split.train.len(),
        split.dev.len(),
        split.test.len()
    );
    Ok(ExitCode::SUCCESS)
}

pub fn synth(config: Option<&Path>, out: &Path, seed: u64) -> Result<ExitCode> {
    let cfg: SynthConfig = match config {
        Some(p) => read_json(p)?,
        None => SynthConfig::default(),
    };
    let data = generate_synthetic(&cfg, &mut moemeta::numeric::rng::seeded(seed))?;
    data.write(out)?;
    let (graph, split) = data.build()?;
    println!(
        "wrote {}: entities={} triplets={} tasks={}",
        out.display(),
        graph.num_entities(),
        graph.triplet_set.len(),
        split.num_tasks()
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset directory; falls back to the config file, then $MOEMETA_DATA.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Run config JSON (`data`, `model`, `train` sections).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Drop the neighbor aggregation term.
    #[arg(long)]
    no_neighbor_agg: bool,
    /// Replace the expert mixture with a single MLP relation learner.
    #[arg(long)]
    no_moe: bool,
    /// Skip task-local projections and inner-loop updates.
    #[arg(long)]
    no_local_adapt: bool,
}

fn resolve_data(flag: Option<&Path>, file: Option<&Path>) -> Result<PathBuf> {
    if let Some(p) = flag.or(file) {
        return Ok(p.to_path_buf());
    }
    match std::env::var_os(DATA_ENV) {
        Some(p) => Ok(PathBuf::from(p)),
        None => Err(moemeta::Error::Config(format!(
            "no dataset: pass --data, set `data` in the config, or set ${DATA_ENV}"
        )))?,
    }
}

fn print_table(label: &str, table: &MetricsTable, breakdown: bool) {
    let m = &table.overall;
    println!(
        "{label}: MRR={:.4} Hits@1={:.4} Hits@5={:.4} Hits@10={:.4} queries={}",
        m.mrr, m.hits1, m.hits5, m.hits10, m.count
    );
    if breakdown {
        println!("  category  MRR     Hits@1  Hits@5  Hits@10 queries");
        for (c, m) in &table.by_category {
            println!(
                "  {:<8}  {:.4}  {:.4}  {:.4}  {:.4}  {}",
                c.label(),
                m.mrr,
                m.hits1,
                m.hits5,
                m.hits10,
                m.count
            );
        }
    }
}

pub fn train(args: &TrainArgs) -> Result<ExitCode> {
    let mut run: RunConfigFile = match &args.config {
        Some(p) => read_json(p)?,
        None => RunConfigFile::default(),
    };
    let data = resolve_data(args.data.as_deref(), run.data.as_deref())?;
    run.data = Some(data.clone());
    if let Some(s) = args.seed {
        run.train.seed = s;
    }
    if let Some(w) = args.workers {
        run.train.workers = w;
    }
    if let Some(n) = args.max_steps {
        run.train.max_steps = n;
        run.train.eval_every = run.train.eval_every.min(n.max(1));
    }
    run.model.use_neighbor_agg &= !args.no_neighbor_agg;
    run.model.use_moe &= !args.no_moe;
    run.model.use_local_adapt &= !args.no_local_adapt;
    run.model.validate()?;
    run.train.validate()?;

    let (graph, split) = load_dataset(&data)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    write_json(&args.out.join("config.json"), &run)?;
    let outcome = meta_train(&graph, &split, &run.model, &run.train, Some(&args.out))?;
    let report = &outcome.report;
    println!(
        "steps={} best_step={} stop={:?}",
        report.steps.len(),
        report.best_step,
        report.stop
    );
    if let Some(dev) = &report.dev {
        print_table("dev", &dev.metrics, false);
    }
    if let Some(test) = &report.test {
        print_table("test", &test.metrics, false);
    }
    println!("run directory: {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Split {
    Dev,
    Test,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    data: DataArg,
    #[arg(long)]
    ckpt: PathBuf,
    /// Support shots; defaults to the value the checkpoint was trained with.
    #[arg(long)]
    k: Option<usize>,
    /// Add the per-category table.
    #[arg(long)]
    breakdown: bool,
    /// Output path; defaults to metrics.json beside the checkpoint.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    split: Split,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

/// The train config stored in a checkpoint, if any.
fn ckpt_train(ckpt: &Checkpoint) -> Option<TrainConfig> {
    serde_json::from_value(ckpt.meta.get("train")?.clone()).ok()
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    if workers == 0 {
        bail!(moemeta::Error::Config(
            "--workers must be at least 1".into()
        ));
    }
    Ok(rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()?)
}

pub fn eval(args: &EvalArgs) -> Result<ExitCode> {
    let (graph, split) = load_dataset(&args.data.data)?;
    let ckpt = Checkpoint::load(&args.ckpt)?;
    let model = Model::from_checkpoint(&ckpt, &graph)?;
    let k = args.k.or(ckpt_train(&ckpt).map(|t| t.k)).unwrap_or(5);
    let partition = match args.split {
        Split::Dev => Partition::Dev,
        Split::Test => Partition::Test,
    };
    if split.pool(partition).is_empty() {
        bail!(moemeta::Error::Config(format!(
            "dataset has no {partition:?} tasks"
        )));
    }
    let before = model.store.checksum();
    let sampler = NeighborSampler::new(&graph, model.config.neighbor_cap, ckpt.seed);
    let report = pool(args.workers)?.install(|| {
        meta_test(
            &model.net(&sampler),
            &graph,
            &split,
            partition,
            k,
            ckpt.seed,
        )
    })?;
    if model.store.checksum() != before {
        bail!("parameters changed during evaluation");
    }
    let mut table = report.metrics.clone();
    print_table(
        &format!("{partition:?}").to_lowercase(),
        &table,
        args.breakdown,
    );
    if !args.breakdown {
        table.by_category.clear();
    }
    let out = args.out.clone().unwrap_or_else(|| {
        args.ckpt
            .parent()
            .unwrap_or(Path::new("."))
            .join("metrics.json")
    });
    write_json(&out, &table)?;
    println!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Embedding width of the check problem (at most 8).
    #[arg(long, default_value_t = 4)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-5)]
    h: f64,
    /// Check the first-order meta-gradient instead of the exact one.
    #[arg(long)]
    first_order: bool,
}

pub fn gradcheck(args: &GradcheckArgs) -> Result<ExitCode> {
    if args.dim == 0 || args.dim > 8 {
        bail!(moemeta::Error::Config(
            "--dim must be between 1 and 8".into()
        ));
    }
    let check = BilevelCheck {
        dim: args.dim,
        seed: args.seed,
        meta_gradient: if args.first_order {
            MetaGradient::FirstOrder
        } else {
            MetaGradient::SecondOrder
        },
        ..BilevelCheck::default()
    };
    let opts = GradCheckOptions {
        h: args.h,
        tolerance: args.tol,
        seed: args.seed,
        ..GradCheckOptions::default()
    };
    let report = check.run(&opts)?;
    println!(
        "{:<22} {:>8} {:>8} {:>12}",
        "group", "checked", "kinks", "max_rel_err"
    );
    for g in &report.groups {
        println!(
            "{:<22} {:>8} {:>8} {:>12.3e}",
            g.name, g.checked, g.skipped_kinks, g.max_rel_error
        );
    }
    let verdict = if report.passed { "PASS" } else { "FAIL" };
    println!(
        "{verdict}: max relative error {:.3e} (tolerance {:.1e})",
        report.max_rel_error(),
        report.tolerance
    );
    Ok(if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

#[derive(Args, Debug)]
pub struct GatesArgs {
    #[command(flatten)]
    data: DataArg,
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, default_value = "gates.csv")]
    out: PathBuf,
    /// Support shots; defaults to the value the checkpoint was trained with.
    #[arg(long)]
    k: Option<usize>,
    /// Profile every task relation instead of only the test relations.
    #[arg(long)]
    all_relations: bool,
}

pub fn gates(args: &GatesArgs) -> Result<ExitCode> {
    let (graph, split) = load_dataset(&args.data.data)?;
    let ckpt = Checkpoint::load(&args.ckpt)?;
    let model = Model::from_checkpoint(&ckpt, &graph)?;
    let k = args.k.or(ckpt_train(&ckpt).map(|t| t.k)).unwrap_or(5);
    let sampler = NeighborSampler::new(&graph, model.config.neighbor_cap, ckpt.seed);
    let net = model.net(&sampler);
    let partitions: &[Partition] = if args.all_relations {
        &[Partition::Train, Partition::Dev, Partition::Test]
    } else {
        &[Partition::Test]
    };
    let mut profiles = Vec::new();
    for &p in partitions {
        for (&r, pairs) in split.pool(p) {
            let support = &pairs[..k.min(pairs.len())];
            profiles.push(gate_profile(&net, graph.relations.name(r), support)?);
        }
    }
    write_gates_csv(&args.out, &profiles)?;
    println!(
        "wrote {} profiles to {}",
        profiles.len(),
        args.out.display()
    );
    if let Some(meta) = SynthMeta::read(&args.data.data)? {
        let sim = cluster_similarity(&profiles, &meta.clusters);
        println!(
            "cluster similarity: intra={:.4} ({} pairs) inter={:.4} ({} pairs) separated={}",
            sim.intra,
            sim.intra_pairs,
            sim.inter,
            sim.inter_pairs,
            sim.separated()
        );
    }
    Ok(ExitCode::SUCCESS)
}
