//! Subcommands of the `mmrec` binary.
//!
//! Each command returns `Ok(Outcome)` when it ran to completion and `Err` on
//! any usage, validation or I/O problem. The binary maps `Err` to exit code 2
//! and [`Outcome::VerificationFailed`] to exit code 1.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mmrec_core::config::{RunConfig, DEFAULT_SEED};
use mmrec_core::corpus::{
    build_sequences, dataset_stats, generate_synthetic, kcore_filter, leave_one_out_split,
    Catalog, InteractionLog, SplitDataset, SynthSpec,
};
use mmrec_core::encoder::{prepare_catalog, ItemFeatures, Model};
use mmrec_core::eval::{evaluate_model, pop_baseline, EvalReport, Stage};
use mmrec_core::finetune::{finetune_run, format_finetune_log};
use mmrec_core::numerics::Checkpoint;
use mmrec_core::pretrain::{format_loss_log, pretrain_run};
use mmrec_core::verify::{check_composite, check_mip, grad_check_config, VerifyOptions};
use mmrec_core::Exec;

#[derive(Debug, Parser)]
#[command(name = "mmrec", version, about = "Multi-modal sequential recommendation")]
pub struct Cli {
    /// Seed for every random stream (default: config `seed`, else 42).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for the parallel phases.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Run every phase on the calling thread.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// k-core filter, leave-one-out split and dataset statistics.
    Preprocess(PreprocessArgs),
    /// Contrastive pretraining of the item encoder.
    Pretrain(PretrainArgs),
    /// Masked item prediction fine-tuning.
    Finetune(FinetuneArgs),
    /// Full-catalog ranking evaluation.
    Evaluate(EvaluateArgs),
    /// Finite-difference check of both training losses.
    Gradcheck(GradcheckArgs),
    /// Write a seeded synthetic catalog and interaction log.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub interactions: PathBuf,
    #[arg(long = "k-core")]
    pub k_core: usize,
    #[arg(long = "out-split")]
    pub out_split: PathBuf,
    #[arg(long)]
    pub stats: PathBuf,
    /// Also write the filtered interaction log.
    #[arg(long = "out-interactions")]
    pub out_interactions: Option<PathBuf>,
    /// Check that every interacted item exists in this catalog.
    #[arg(long)]
    pub features: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch `epoch<TAB>loss` lines.
    #[arg(long = "loss-log")]
    pub loss_log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    /// Start from a pretraining checkpoint.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch `epoch<TAB>train_loss<TAB>valid_recall@10` lines.
    #[arg(long = "train-log")]
    pub train_log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Model checkpoint; omit together with `--pop` to rank by popularity.
    #[arg(long, required_unless_present = "pop")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "10,50")]
    pub ks: Vec<usize>,
    /// Evaluate on the validation target instead of the test target.
    #[arg(long)]
    pub valid: bool,
    /// Evaluate the popularity baseline instead of a model.
    #[arg(long, conflicts_with = "checkpoint")]
    pub pop: bool,
    /// Write the text report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the report as JSON lines.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// `key = value` overrides of the synthetic corpus shape.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long = "out-features")]
    pub out_features: PathBuf,
    #[arg(long = "out-interactions")]
    pub out_interactions: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    VerificationFailed,
}

/// Largest model width `gradcheck` accepts.
pub const GRADCHECK_MAX_D: usize = 16;

pub fn run(cli: &Cli) -> Result<Outcome> {
    let exec = if cli.deterministic {
        Exec::Sequential
    } else {
        Exec::Parallel
    };
    #[cfg(feature = "parallel")]
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be positive");
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    if cli.threads.is_some_and(|n| n > 1) {
        log::warn!("built without the `parallel` feature; --threads is ignored");
    }
    match &cli.command {
        Command::Preprocess(a) => preprocess(a),
        Command::Pretrain(a) => pretrain(a, cli.seed, exec),
        Command::Finetune(a) => finetune(a, cli.seed, exec),
        Command::Evaluate(a) => evaluate(a, exec),
        Command::Gradcheck(a) => gradcheck(a, cli.seed),
        Command::Synth(a) => synth(a, cli.seed),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("config {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn load_features(path: &Path, cfg: &mut RunConfig) -> Result<(Catalog, Vec<ItemFeatures>)> {
    let catalog = Catalog::load(path).with_context(|| format!("features {}", path.display()))?;
    cfg.resolve_d_raw(catalog.d_raw())?;
    let features = prepare_catalog(&catalog, cfg.model.max_frames)?;
    Ok((catalog, features))
}

fn load_split(path: &Path, catalog: &Catalog) -> Result<SplitDataset<usize>> {
    let split = SplitDataset::load(path).with_context(|| format!("split {}", path.display()))?;
    if split.is_empty() {
        bail!("split {} has no users", path.display());
    }
    Ok(split.index(catalog)?)
}

fn echo_config(cfg: &RunConfig) {
    for line in cfg.to_text().lines() {
        log::info!("config {line}");
    }
}

pub fn preprocess(a: &PreprocessArgs) -> Result<Outcome> {
    let log = InteractionLog::load(&a.interactions)
        .with_context(|| format!("interactions {}", a.interactions.display()))?;
    if let Some(f) = &a.features {
        let catalog = Catalog::load(f).with_context(|| format!("features {}", f.display()))?;
        log.check_join(&catalog)?;
    }
    let filtered = kcore_filter(&log, a.k_core)?;
    log::info!(
        "{}-core filter kept {} of {} interactions",
        a.k_core,
        filtered.len(),
        log.len()
    );
    let split = leave_one_out_split(&build_sequences(&filtered));
    let stats = dataset_stats(&filtered)?;
    split.save(&a.out_split)?;
    write_file(&a.stats, stats.to_tsv())?;
    if let Some(p) = &a.out_interactions {
        filtered.save(p)?;
    }
    log::info!(
        "{} users split, {} excluded; sparsity {}%",
        split.len(),
        split.excluded,
        stats.sparsity_percent()
    );
    Ok(Outcome::Success)
}

pub fn pretrain(a: &PretrainArgs, seed: Option<u64>, exec: Exec) -> Result<Outcome> {
    let mut cfg = load_config(a.config.as_deref(), seed)?;
    let (_, features) = load_features(&a.features, &mut cfg)?;
    echo_config(&cfg);
    let mut pcfg = cfg.pretrain.clone();
    pcfg.exec = exec;
    let model = Model::new(cfg.model.clone(), cfg.seed)?;
    let out = pretrain_run(model, &features, &pcfg, cfg.seed)?;
    let loss_log = a.loss_log.clone().or(cfg.loss_log.clone().map(PathBuf::from));
    if let Some(p) = loss_log {
        write_file(&p, format_loss_log(&out.log))?;
    }
    Checkpoint::capture(cfg.to_text(), &out.model.params, Some(&out.optimizer), cfg.seed).save(&a.out)?;
    log::info!("pretraining finished after {} steps", out.steps);
    Ok(Outcome::Success)
}

pub fn finetune(a: &FinetuneArgs, seed: Option<u64>, exec: Exec) -> Result<Outcome> {
    let mut cfg = load_config(a.config.as_deref(), seed)?;
    let (catalog, features) = load_features(&a.features, &mut cfg)?;
    let split = load_split(&a.split, &catalog)?;
    echo_config(&cfg);
    let mut model = Model::new(cfg.model.clone(), cfg.seed)?;
    if let Some(init) = &a.init {
        let ckpt = Checkpoint::load(init).with_context(|| format!("checkpoint {}", init.display()))?;
        ckpt.restore_into(&mut model.params)
            .with_context(|| format!("initializing from {}", init.display()))?;
    }
    let mut fcfg = cfg.finetune.clone();
    fcfg.exec = exec;
    let out = finetune_run(model, &split, &features, &fcfg, cfg.seed)?;
    let train_log = a.train_log.clone().or(cfg.train_log.clone().map(PathBuf::from));
    if let Some(p) = train_log {
        write_file(&p, format_finetune_log(&out.log))?;
    }
    Checkpoint::capture(cfg.to_text(), &out.best.params, Some(&out.best_optimizer), cfg.seed).save(&a.out)?;
    log::info!("best validation epoch {}", out.best_epoch);
    Ok(Outcome::Success)
}

/// Rebuilds the model stored in a checkpoint.
pub fn load_model(path: &Path) -> Result<(RunConfig, Model)> {
    let ckpt = Checkpoint::load(path).with_context(|| format!("checkpoint {}", path.display()))?;
    let cfg = RunConfig::parse(&ckpt.config).context("configuration stored in checkpoint")?;
    if !cfg.d_raw_set {
        bail!("checkpoint {} does not record d_raw", path.display());
    }
    let mut model = Model::new(cfg.model.clone(), cfg.seed)?;
    ckpt.restore_into(&mut model.params)?;
    Ok((cfg, model))
}

pub fn evaluate(a: &EvaluateArgs, exec: Exec) -> Result<Outcome> {
    let stage = if a.valid { Stage::Valid } else { Stage::Test };
    let report: EvalReport = match &a.checkpoint {
        Some(ckpt) => {
            let (mut cfg, model) = load_model(ckpt)?;
            let (catalog, features) = load_features(&a.features, &mut cfg)?;
            let split = load_split(&a.split, &catalog)?;
            evaluate_model(&model, &split, &features, stage, &a.ks, exec)?
        }
        None => {
            let catalog = Catalog::load(&a.features).with_context(|| format!("features {}", a.features.display()))?;
            let split = load_split(&a.split, &catalog)?;
            pop_baseline(&split, catalog.len(), stage, &a.ks)?
        }
    };
    match &a.out {
        Some(p) => write_file(p, report.to_text())?,
        None => print!("{}", report.to_text()),
    }
    if let Some(p) = &a.json {
        write_file(p, report.to_jsonl())?;
    }
    Ok(Outcome::Success)
}

pub fn gradcheck(a: &GradcheckArgs, seed: Option<u64>) -> Result<Outcome> {
    let model = match &a.config {
        Some(p) => {
            let cfg = RunConfig::load(p).with_context(|| format!("config {}", p.display()))?;
            let mut m = cfg.model;
            if !cfg.d_raw_set {
                m.d_raw = grad_check_config().d_raw;
            }
            m
        }
        None => grad_check_config(),
    };
    if model.d > GRADCHECK_MAX_D {
        bail!("gradcheck runs on tiny models only: d = {} exceeds {GRADCHECK_MAX_D}", model.d);
    }
    let opts = VerifyOptions::default();
    let seed = seed.unwrap_or(DEFAULT_SEED);
    let composite = check_composite(&model, &opts, seed)?;
    let mip = check_mip(&model, &opts, seed)?;
    let mut ok = true;
    for (name, r) in [("composite_loss", &composite), ("mip_loss", &mip)] {
        let pass = r.max_rel_error < opts.tolerance;
        ok &= pass;
        println!(
            "{name}\tcoords={}\tmax_rel_error={:.3e}\t{}",
            r.checked,
            r.max_rel_error,
            if pass { "PASS" } else { "FAIL" }
        );
        if let Some(w) = r.worst.as_ref().filter(|_| !pass) {
            println!(
                "{name}\tworst\t{}[{}]\tanalytic={:e}\tnumeric={:e}",
                w.param, w.index, w.analytic, w.numeric
            );
        }
    }
    Ok(if ok {
        Outcome::Success
    } else {
        Outcome::VerificationFailed
    })
}

pub fn synth(a: &SynthArgs, seed: Option<u64>) -> Result<Outcome> {
    let mut spec = SynthSpec::default();
    if let Some(p) = &a.spec {
        let text = fs::read_to_string(p).with_context(|| format!("spec {}", p.display()))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .with_context(|| format!("{}:{}: expected `key = value`", p.display(), i + 1))?;
            spec.apply(k.trim(), v.trim())
                .with_context(|| format!("{}:{}", p.display(), i + 1))?;
        }
    }
    let (catalog, log) = generate_synthetic(&spec, seed.unwrap_or(DEFAULT_SEED))?;
    catalog.save(&a.out_features)?;
    log.save(&a.out_interactions)?;
    Ok(Outcome::Success)
}
