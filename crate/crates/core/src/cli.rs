//! The `weedpilot` command-line workflow.
//!
//! Every subcommand reads and writes a fixed set of files in `--out-dir`:
//! `manifest.jsonl`, `split.jsonl`, `train_log.csv`, `ckpt.wpck`,
//! `frozen.wpck`, `optimized.wpck`, `eval.json`, `bench.json` and
//! `sim_report.json`. The resolved settings of each invocation are echoed
//! to `<command>_config.json` next to them.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{
    build_manifest, generate_synthetic_corpus, stratified_split_fold, CorpusSpec, Manifest, Role, SplitAssignment,
    SplitRatios, TABLE1_COUNTS,
};
use crate::deploy::{Checkpoint, CheckpointMeta, Classifier, InferenceEngine, LatencyStats, ReferenceModel};
use crate::error::{Error, Result};
use crate::eval::{benchmark_classifier, BenchmarkReport, EvalReport};
use crate::fieldsim::{simulate_run_with, FieldMap, Perception, SimConfig, SprayPolicy};
use crate::imageops::{augment, AugmentationPolicy, ImageTensor, MODEL_INPUT_HEIGHT, MODEL_INPUT_WIDTH};
use crate::nn::{build_micro_mobilenet, InputSpec};
use crate::train::{evaluate_samples, load_test_set, train_with_observer, TrainConfig};
use crate::{deterministic_mode, seed};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const SPLIT_FILE: &str = "split.jsonl";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const CHECKPOINT_FILE: &str = "ckpt.wpck";
pub const FROZEN_FILE: &str = "frozen.wpck";
pub const OPTIMIZED_FILE: &str = "optimized.wpck";
pub const EVAL_FILE: &str = "eval.json";
pub const BENCH_FILE: &str = "bench.json";
pub const SIM_REPORT_FILE: &str = "sim_report.json";
pub const SIM_EVENTS_FILE: &str = "sim_events.csv";

#[derive(Debug, Parser)]
#[command(name = "weedpilot", version, about = "Weed classification, deployment and spray simulation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Image root: read by `ingest`, written by `gen-data --write-png`.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// TOML file with defaults for any flag, plus `[train]`, `[augment]`
    /// and `[sim]` tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a procedural 16-class corpus manifest.
    GenData {
        /// Samples per class; omitted means the full class table counts.
        #[arg(long)]
        per_class: Option<usize>,
        #[arg(long, default_value_t = MODEL_INPUT_WIDTH)]
        width: usize,
        #[arg(long, default_value_t = MODEL_INPUT_HEIGHT)]
        height: usize,
        /// Also render every sample as PNG under `--data-dir`.
        #[arg(long)]
        write_png: bool,
    },
    /// Build a manifest from `--data-dir/<class>/*.png`.
    Ingest,
    /// Stratified 60/20/20 split with k folds.
    Split {
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        fold: Option<usize>,
    },
    /// Write augmented variants of one sample as PNG.
    AugmentPreview {
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, default_value_t = 8)]
        count: usize,
    },
    Train {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        width_mult: Option<f64>,
    },
    /// Evaluate a checkpoint on the test role of the split.
    Eval {
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        batch: Option<usize>,
    },
    /// Freeze a checkpoint for deployment.
    Export { checkpoint: Option<PathBuf> },
    /// Fold batch norm into the preceding layers.
    Optimize { checkpoint: Option<PathBuf> },
    /// Time per-frame inference of one or more checkpoints.
    Bench {
        checkpoints: Vec<PathBuf>,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[arg(long, default_value_t = 5)]
        warmup: usize,
    },
    /// Drive the robot down a field and account for herbicide.
    Simulate {
        checkpoint: Option<PathBuf>,
        /// Ground-truth classifier instead of a checkpoint.
        #[arg(long)]
        oracle: bool,
        /// Field scenario JSON; a medium-density field otherwise.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 15.0)]
        length: f64,
        #[arg(long)]
        fps: Option<f64>,
        #[arg(long)]
        threshold: Option<f32>,
        #[arg(long)]
        speed: Option<f64>,
        /// Seconds; the run also ends at the end of the field.
        #[arg(long)]
        duration: Option<f64>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenData { .. } => "gen-data",
            Command::Ingest => "ingest",
            Command::Split { .. } => "split",
            Command::AugmentPreview { .. } => "augment-preview",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Export { .. } => "export",
            Command::Optimize { .. } => "optimize",
            Command::Bench { .. } => "bench",
            Command::Simulate { .. } => "simulate",
        }
    }
}

/// Contents of `--config`. Flags win over the file, the file over defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub width_mult: Option<f64>,
    pub lr: Option<f64>,
    pub batch: Option<usize>,
    pub epochs: Option<usize>,
    pub k: Option<usize>,
    pub fold: Option<usize>,
    pub fps: Option<f64>,
    pub threshold: Option<f32>,
    pub scenario: Option<PathBuf>,
    pub train: Option<TrainConfig>,
    pub augment: Option<AugmentationPolicy>,
    pub sim: Option<SimConfig>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::InvalidArgument(format!("config {}: {e}", path.display())))
    }
}

/// Every value a command ran with, echoed to `<command>_config.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data_dir: Option<PathBuf>,
    pub deterministic: bool,
    pub settings: serde_json::Value,
}

struct Ctx {
    seed: u64,
    out: PathBuf,
    data_dir: Option<PathBuf>,
    file: FileConfig,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn echo(&self, command: &str, settings: serde_json::Value) -> Result<()> {
        let rc = RunConfig {
            command: command.to_string(),
            seed: self.seed,
            out_dir: self.out.clone(),
            data_dir: self.data_dir.clone(),
            deterministic: deterministic_mode(),
            settings,
        };
        log::info!("{command}: {}", serde_json::to_string(&rc.settings)?);
        write(&self.path(&format!("{command}_config.json")), &serde_json::to_string_pretty(&rc)?)
    }

    fn data_dir(&self) -> Result<&Path> {
        self.data_dir
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("--data-dir is required".into()))
    }

    fn checkpoint_arg(&self, arg: &Option<PathBuf>, default: &str) -> PathBuf {
        arg.clone().unwrap_or_else(|| self.path(default))
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parses `argv` and runs the command. Returns the process exit code:
/// 0 on success, 2 on usage errors and 1 on operational failures, which
/// are also reported as one JSON object on stderr.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            let body = serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{body}");
            1
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let file = match &cli.global.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let ctx = Ctx {
        seed: cli.global.seed.or(file.seed).unwrap_or(0),
        out: cli.global.out_dir.clone().or(file.out_dir.clone()).unwrap_or_else(|| PathBuf::from("run")),
        data_dir: cli.global.data_dir.clone().or(file.data_dir.clone()),
        file,
    };
    fs::create_dir_all(&ctx.out).map_err(|e| Error::io(&ctx.out, e))?;
    let name = cli.command.name();
    match cli.command {
        Command::GenData {
            per_class,
            width,
            height,
            write_png,
        } => gen_data(&ctx, name, per_class, width, height, write_png),
        Command::Ingest => ingest(&ctx, name),
        Command::Split { k, fold } => split(&ctx, name, k, fold),
        Command::AugmentPreview { index, count } => augment_preview(&ctx, name, index, count),
        Command::Train {
            epochs,
            lr,
            batch,
            width_mult,
        } => train(&ctx, name, epochs, lr, batch, width_mult),
        Command::Eval { checkpoint, batch } => eval(&ctx, name, &checkpoint, batch),
        Command::Export { checkpoint } => export(&ctx, name, &checkpoint),
        Command::Optimize { checkpoint } => optimize(&ctx, name, &checkpoint),
        Command::Bench {
            checkpoints,
            frames,
            warmup,
        } => bench(&ctx, name, checkpoints, frames, warmup),
        Command::Simulate {
            checkpoint,
            oracle,
            scenario,
            length,
            fps,
            threshold,
            speed,
            duration,
        } => simulate(
            &ctx,
            name,
            SimArgs {
                checkpoint,
                oracle,
                scenario,
                length,
                fps,
                threshold,
                speed,
                duration,
            },
        ),
    }
}

fn gen_data(ctx: &Ctx, name: &str, per_class: Option<usize>, width: usize, height: usize, write_png: bool) -> Result<()> {
    let spec = match per_class {
        Some(n) => CorpusSpec::uniform(n, width, height),
        None => CorpusSpec {
            counts: TABLE1_COUNTS.to_vec(),
            ..CorpusSpec::uniform(1, width, height)
        },
    };
    if let Some(aug) = &ctx.file.augment {
        aug.validate()?;
    }
    spec.validate()?;
    ctx.echo(name, serde_json::json!({ "corpus": &spec, "write_png": write_png }))?;
    let manifest = generate_synthetic_corpus(&spec, ctx.seed)?;
    if write_png {
        let root = ctx.data_dir()?.to_path_buf();
        write_pngs(&manifest, &root)?;
    }
    manifest.write_jsonl(&ctx.path(MANIFEST_FILE), None)?;
    println!("{} samples -> {}", manifest.len(), ctx.path(MANIFEST_FILE).display());
    Ok(())
}

fn write_pngs(manifest: &Manifest, root: &Path) -> Result<()> {
    use rayon::prelude::*;
    let taxonomy = manifest.taxonomy();
    for c in taxonomy.classes() {
        let dir = root.join(c.dir_name());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let mut ordinal = vec![0usize; taxonomy.len()];
    let jobs: Vec<(usize, PathBuf)> = manifest
        .samples()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let n = ordinal[s.class_id];
            ordinal[s.class_id] += 1;
            let dir = root.join(taxonomy.classes()[s.class_id].dir_name());
            (i, dir.join(format!("{n:05}.png")))
        })
        .collect();
    jobs.par_iter()
        .map(|(i, path)| manifest.samples()[*i].load()?.save_png(path))
        .collect::<Result<Vec<()>>>()?;
    Ok(())
}

fn ingest(ctx: &Ctx, name: &str) -> Result<()> {
    let root = ctx.data_dir()?;
    ctx.echo(name, serde_json::json!({ "root": root }))?;
    let (manifest, skipped) = build_manifest(root)?;
    for s in &skipped.skipped {
        log::warn!("skipped {}: {}", s.path.display(), s.reason);
    }
    manifest.write_jsonl(&ctx.path(MANIFEST_FILE), None)?;
    write(&ctx.path("ingest_skipped.json"), &serde_json::to_string_pretty(&skipped)?)?;
    println!(
        "{} samples, {} skipped -> {}",
        manifest.len(),
        skipped.skipped.len(),
        ctx.path(MANIFEST_FILE).display()
    );
    Ok(())
}

fn read_manifest(ctx: &Ctx) -> Result<Manifest> {
    Ok(Manifest::read_jsonl(&ctx.path(MANIFEST_FILE))?.0)
}

fn read_split(ctx: &Ctx) -> Result<(Manifest, SplitAssignment)> {
    let path = ctx.path(SPLIT_FILE);
    let (m, s) = Manifest::read_jsonl(&path)?;
    let s = s.ok_or_else(|| Error::InvalidArgument(format!("{} has no role column; run split first", path.display())))?;
    Ok((m, s))
}

fn split(ctx: &Ctx, name: &str, k: Option<usize>, fold: Option<usize>) -> Result<()> {
    let k = k.or(ctx.file.k).unwrap_or(5);
    let fold = fold.or(ctx.file.fold).unwrap_or(0);
    let ratios = SplitRatios::default();
    ctx.echo(name, serde_json::json!({ "k": k, "fold": fold, "ratios": ratios }))?;
    let manifest = read_manifest(ctx)?;
    let assignment = stratified_split_fold(&manifest, ratios, k, fold, ctx.seed)?;
    manifest.write_jsonl(&ctx.path(SPLIT_FILE), Some(&assignment))?;
    let count = |r| assignment.indices(r).len();
    println!(
        "train {} val {} test {} -> {}",
        count(Role::Train),
        count(Role::Val),
        count(Role::Test),
        ctx.path(SPLIT_FILE).display()
    );
    Ok(())
}

fn augment_preview(ctx: &Ctx, name: &str, index: usize, count: usize) -> Result<()> {
    let policy = ctx.file.augment.unwrap_or_default();
    ctx.echo(name, serde_json::json!({ "index": index, "count": count, "policy": policy }))?;
    let manifest = read_manifest(ctx)?;
    let sample = manifest
        .samples()
        .get(index)
        .ok_or_else(|| Error::InvalidArgument(format!("sample {index} out of range ({} samples)", manifest.len())))?;
    let img = sample.load()?;
    let dir = ctx.path("augment_preview");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    img.save_png(&dir.join("original.png"))?;
    for i in 0..count {
        let out = augment(&img, &policy, seed::derive(ctx.seed, &[index as u64, i as u64]))?;
        out.save_png(&dir.join(format!("aug_{i:03}.png")))?;
    }
    println!("{} previews -> {}", count, dir.display());
    Ok(())
}

fn train(
    ctx: &Ctx,
    name: &str,
    epochs: Option<usize>,
    lr: Option<f64>,
    batch: Option<usize>,
    width_mult: Option<f64>,
) -> Result<()> {
    let mut cfg = ctx.file.train.clone().unwrap_or_default();
    cfg.seed = ctx.seed;
    if let Some(lr) = lr.or(ctx.file.lr) {
        // keep the restart at half the initial rate unless set explicitly
        if ctx.file.train.is_none() {
            cfg.restart_lr = lr / 2.0;
        }
        cfg.lr_init = lr;
    }
    if let Some(b) = batch.or(ctx.file.batch) {
        cfg.batch_size = b;
    }
    if let Some(e) = epochs.or(ctx.file.epochs) {
        cfg.max_epochs = e;
    }
    cfg.validate()?;
    let width_mult = width_mult.or(ctx.file.width_mult).unwrap_or(0.25);
    let policy = ctx.file.augment.unwrap_or_default();
    ctx.echo(
        name,
        serde_json::json!({ "train": &cfg, "width_mult": width_mult, "augment": policy }),
    )?;
    let (manifest, split) = read_split(ctx)?;
    let (graph, params) = build_micro_mobilenet(width_mult, manifest.taxonomy().len(), InputSpec::default(), ctx.seed)?;
    let outcome = train_with_observer(&manifest, &split, &graph, params, &cfg, &policy, &mut |r| {
        println!(
            "epoch {:>3} train {:.5} val {:.5} acc {:.4} lr {:e} {}",
            r.epoch, r.train_loss, r.val_loss, r.val_avg_class_acc, r.lr, r.action
        );
    })?;
    outcome.log.write_csv(&ctx.path(TRAIN_LOG_FILE))?;
    outcome.best.save(&ctx.path(CHECKPOINT_FILE))?;
    println!("best epoch {} -> {}", outcome.best.meta.epoch, ctx.path(CHECKPOINT_FILE).display());
    Ok(())
}

fn eval(ctx: &Ctx, name: &str, checkpoint: &Option<PathBuf>, batch: Option<usize>) -> Result<()> {
    let path = ctx.checkpoint_arg(checkpoint, CHECKPOINT_FILE);
    let batch = batch.or(ctx.file.batch).unwrap_or(32);
    ctx.echo(name, serde_json::json!({ "checkpoint": &path, "batch": batch, "role": Role::Test }))?;
    let ck = Checkpoint::load(&path)?;
    let (manifest, split) = read_split(ctx)?;
    let input = ck.graph.input;
    let samples = load_test_set(&manifest, &split, input.width, input.height)?;
    let (loss, cm) = evaluate_samples(&ck.graph, &ck.params, &samples, batch)?;
    let mut report = EvalReport::new(cm, &ck.taxonomy, &ck.graph)?;
    report.loss = Some(loss);
    if !deterministic_mode() && !samples.is_empty() {
        let engine = InferenceEngine::from_checkpoint(&ck)?;
        let mut ms = Vec::new();
        for s in samples.iter().take(20) {
            let t0 = std::time::Instant::now();
            engine.classify(&s.image)?;
            ms.push(t0.elapsed().as_secs_f64() * 1e3);
        }
        report.latency_ms = LatencyStats::from_samples(&ms);
    }
    write(&ctx.path(EVAL_FILE), &report.to_json()?)?;
    write(&ctx.path("f1.csv"), &report.f1_csv()?)?;
    let names: Vec<String> = ck.taxonomy.classes().iter().map(|c| c.short.clone()).collect();
    write(&ctx.path("confusion.csv"), &report.confusion.to_csv(&names)?)?;
    println!(
        "avg class accuracy {:.4}, overall {:.4} on {} test samples -> {}",
        report.avg_class_accuracy,
        report.overall_accuracy,
        report.samples,
        ctx.path(EVAL_FILE).display()
    );
    Ok(())
}

fn export(ctx: &Ctx, name: &str, checkpoint: &Option<PathBuf>) -> Result<()> {
    let path = ctx.checkpoint_arg(checkpoint, CHECKPOINT_FILE);
    ctx.echo(name, serde_json::json!({ "checkpoint": &path }))?;
    let ck = Checkpoint::load(&path)?;
    // training bookkeeping is not part of the deployed model
    let meta = CheckpointMeta {
        folded: ck.meta.folded,
        seed: ck.meta.seed,
        ..CheckpointMeta::default()
    };
    let frozen = Checkpoint::new(ck.graph, ck.params, ck.taxonomy, meta)?;
    frozen.save(&ctx.path(FROZEN_FILE))?;
    write(&ctx.path("graph.json"), &serde_json::to_string_pretty(&frozen.graph)?)?;
    println!("{} parameters -> {}", frozen.graph.parameter_count(), ctx.path(FROZEN_FILE).display());
    Ok(())
}

fn optimize(ctx: &Ctx, name: &str, checkpoint: &Option<PathBuf>) -> Result<()> {
    let path = match checkpoint {
        Some(p) => p.clone(),
        None if ctx.path(FROZEN_FILE).exists() => ctx.path(FROZEN_FILE),
        None => ctx.path(CHECKPOINT_FILE),
    };
    ctx.echo(name, serde_json::json!({ "checkpoint": &path }))?;
    let ck = Checkpoint::load(&path)?;
    let engine = InferenceEngine::from_checkpoint(&ck)?;
    let folded = engine.to_checkpoint(ck.meta.clone())?;
    folded.save(&ctx.path(OPTIMIZED_FILE))?;
    println!(
        "{} -> {} parameters -> {}",
        ck.graph.parameter_count(),
        engine.parameter_count(),
        ctx.path(OPTIMIZED_FILE).display()
    );
    Ok(())
}

#[derive(Serialize)]
struct BenchEntry {
    checkpoint: PathBuf,
    folded: bool,
    report: BenchmarkReport,
}

/// Deterministic 384x224 noise frames for timing.
fn bench_frames(n: usize, seed_value: u64) -> Vec<ImageTensor> {
    (0..n)
        .map(|i| {
            let mut rng = seed::derived_rng(seed_value, &[i as u64]);
            ImageTensor::from_fn(MODEL_INPUT_WIDTH, MODEL_INPUT_HEIGHT, |_, _| rng.gen())
        })
        .collect()
}

fn bench(ctx: &Ctx, name: &str, mut checkpoints: Vec<PathBuf>, frames: usize, warmup: usize) -> Result<()> {
    if checkpoints.is_empty() {
        checkpoints.push(ctx.path(CHECKPOINT_FILE));
    }
    ctx.echo(
        name,
        serde_json::json!({ "checkpoints": &checkpoints, "frames": frames, "warmup": warmup }),
    )?;
    let inputs = bench_frames(frames, ctx.seed);
    let mut entries = Vec::new();
    for path in checkpoints {
        let ck = Checkpoint::load(&path)?;
        let folded = !ck.graph.contains_batch_norm();
        let report = if folded {
            let engine = InferenceEngine::from_checkpoint(&ck)?;
            benchmark_classifier(&engine, engine.graph(), &inputs, warmup)?
        } else {
            let graph = ck.graph.clone();
            benchmark_classifier(&ReferenceModel { checkpoint: ck }, &graph, &inputs, warmup)?
        };
        println!(
            "{}: {} mean {:.2} ms p95 {:.2} ms ({} parameters)",
            path.display(),
            if folded { "folded" } else { "unfolded" },
            report.latency_ms.mean,
            report.latency_ms.p95,
            report.parameter_count
        );
        entries.push(BenchEntry {
            checkpoint: path,
            folded,
            report,
        });
    }
    write(&ctx.path(BENCH_FILE), &serde_json::to_string_pretty(&entries)?)
}

struct SimArgs {
    checkpoint: Option<PathBuf>,
    oracle: bool,
    scenario: Option<PathBuf>,
    length: f64,
    fps: Option<f64>,
    threshold: Option<f32>,
    speed: Option<f64>,
    duration: Option<f64>,
}

fn simulate(ctx: &Ctx, name: &str, a: SimArgs) -> Result<()> {
    let field = match a.scenario.as_ref().or(ctx.file.scenario.as_ref()) {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            FieldMap::from_json(&text, crate::data::ClassTaxonomy::aiweeds())?
        }
        None => FieldMap::medium_density(a.length, ctx.seed)?,
    };
    let mut sim = ctx.file.sim.unwrap_or_default();
    if let Some(f) = a.fps.or(ctx.file.fps) {
        sim.fps = f;
    }
    let policy = SprayPolicy::new(&field.taxonomy, a.threshold.or(ctx.file.threshold).unwrap_or(0.5))?;
    let speed = a.speed.unwrap_or(field.speed_mps);
    let duration = match a.duration {
        Some(d) => d,
        None if speed > 0.0 => field.length_m / speed,
        None => return Err(Error::InvalidArgument("--duration is required at zero speed".into())),
    };
    let ck_path = (!a.oracle).then(|| ctx.checkpoint_arg(&a.checkpoint, OPTIMIZED_FILE));
    ctx.echo(
        name,
        serde_json::json!({
            "checkpoint": &ck_path, "oracle": a.oracle, "field": serde_json::from_str::<serde_json::Value>(&field.to_json()?)?,
            "sim": sim, "policy": policy, "speed_mps": speed, "duration_s": duration,
        }),
    )?;
    let engine = match &ck_path {
        Some(p) => Some(InferenceEngine::from_checkpoint(&Checkpoint::load(p)?)?),
        None => None,
    };
    let perception = match &engine {
        Some(e) => Perception::Model(e),
        None => Perception::Oracle,
    };
    let report = simulate_run_with(&field, perception, &policy, speed, duration, ctx.seed, &sim)?;
    report.write(&ctx.path(SIM_REPORT_FILE), &ctx.path(SIM_EVENTS_FILE), &field.taxonomy)?;
    println!(
        "{} weeds seen, {} sprayed, {} missed, {} false sprays, {:.2} ml (baseline {:.2} ml), per-patch accuracy {}",
        report.weeds_seen,
        report.weeds_sprayed,
        report.weeds_missed,
        report.false_sprays,
        report.herbicide_ml,
        report.baseline_ml,
        report
            .per_patch_accuracy
            .map(|a| format!("{a:.3}"))
            .unwrap_or_else(|| "n/a".into())
    );
    Ok(())
}
