//! `rnn-iqa`: synthesize, extract, split, train, predict, evaluate and
//! ablate from the command line.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use rnn_iqa::features::FeatureBackend;
use rnn_iqa::manifest::{DatasetManifest, Split};
use rnn_iqa::metrics::{evaluate, write_report, ReportRow};
use rnn_iqa::nn::{read_checkpoint, write_checkpoint, HeadKind};
use rnn_iqa::par::Exec;
use rnn_iqa::pipeline::{
    ablate, extract, make_checkpoint, read_extract_config, synth_dataset, train_model, write_ablation,
    write_predictions, Dataset, SynthConfig, SynthVariant,
};
use serde_json::json;

use config::{echo, split_ratio, FileConfig, MultiresFlags, TrainFlags};

#[derive(Debug, Parser)]
#[command(name = "rnn-iqa", version, about = "Image quality prediction with recurrent pooling of patch features")]
struct Cli {
    /// Worker threads for data-parallel stages (default: all cores).
    #[arg(long, env = "RNN_IQA_THREADS", global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct DataArgs {
    /// Dataset manifest CSV (`image_id,path,mos,split`).
    #[arg(long)]
    manifest: PathBuf,
    /// Directory of `.fseq` feature files.
    #[arg(long)]
    features: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known scores.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 512)]
        width: usize,
        #[arg(long, default_value_t = 512)]
        height: usize,
        /// `global` or `worst-region`.
        #[arg(long, default_value = "global")]
        variant: SynthVariant,
    },
    /// Write one feature sequence file per manifest entry.
    Extract {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        multires: MultiresFlags,
        /// Seed for random patch ordering.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Assign a seeded train/test split to a manifest.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        /// Output manifest in the same directory (default: rewrite in place).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fraction of entries assigned to training.
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Replace an existing split.
        #[arg(long)]
        resplit: bool,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train a head on the training split.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Checkpoint index path; weights go next to it with a `.bin` extension.
        #[arg(long)]
        checkpoint: PathBuf,
        /// `rnn` or `avg`.
        #[arg(long)]
        head: Option<HeadKind>,
        /// Per-epoch history CSV.
        #[arg(long)]
        history: Option<PathBuf>,
        /// Also score the test split after every epoch.
        #[arg(long)]
        validate: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        train: TrainFlags,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Predict scores (0-100) for manifest entries.
    Predict {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output CSV `image_id,mos_hat_0_100`.
        #[arg(long)]
        out: PathBuf,
        /// `train`, `test` or `all`.
        #[arg(long, default_value = "all")]
        split: String,
    },
    /// Score a checkpoint on a split.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output CSV `model,split,seed,scc,pcc,rmse`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Train and score {avg, rnn} x {single, two scales} on one split.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        /// Output CSV `arm,head,multires,scc,pcc,rmse`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        train: TrainFlags,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        bail!("{what} {} does not exist", path.display());
    }
    Ok(())
}

fn require_dir(path: &Path, what: &str) -> Result<()> {
    if !path.is_dir() {
        bail!("{what} {} is not a directory", path.display());
    }
    Ok(())
}

fn require_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => bail!("output directory {} does not exist", p.display()),
        _ => Ok(()),
    }
}

fn load_data(data: &DataArgs) -> Result<DatasetManifest> {
    require_file(&data.manifest, "manifest")?;
    require_dir(&data.features, "feature directory")?;
    Ok(DatasetManifest::read(&data.manifest)?)
}

fn cmd_synth(out: &Path, cfg: SynthConfig) -> Result<ExitCode> {
    let manifest = synth_dataset(&cfg, out, Exec::default())?;
    echo(&out.join("manifest.csv"), &json!({ "command": "synth", "synth": cfg }))?;
    println!("wrote {} images and {}", manifest.entries.len(), out.join("manifest.csv").display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_extract(data: &DataArgs, flags: &MultiresFlags, seed: Option<u64>, file: &FileConfig) -> Result<ExitCode> {
    require_file(&data.manifest, "manifest")?;
    let cfg = flags.apply(file.multires.clone(), seed)?;
    let manifest = DatasetManifest::read(&data.manifest)?;
    let report = extract(&manifest, &data.features, &FeatureBackend::StatFeatures, &cfg, Exec::default())?;
    println!("wrote {} feature files to {}", report.written, data.features.display());
    if report.failures.is_empty() {
        return Ok(ExitCode::SUCCESS);
    }
    eprintln!("{} image(s) failed:", report.failures.len());
    for f in &report.failures {
        eprintln!("  {} ({}): {}", f.id, f.path.display(), f.reason);
    }
    Ok(ExitCode::FAILURE)
}

fn cmd_split(manifest_path: &Path, out: Option<&Path>, ratio: f64, seed: u64, resplit: bool) -> Result<ExitCode> {
    require_file(manifest_path, "manifest")?;
    let out = out.unwrap_or(manifest_path);
    let same_dir = |p: &Path| p.parent().map(Path::to_path_buf).unwrap_or_default();
    if std::fs::canonicalize(same_dir(out).join("."))? != std::fs::canonicalize(same_dir(manifest_path).join("."))? {
        bail!("image paths are relative to the manifest, so the split manifest must stay in its directory");
    }
    let mut manifest = DatasetManifest::read(manifest_path)?;
    if !resplit && manifest.entries.iter().any(|e| e.split.is_some()) {
        bail!("{} already has a split; pass --resplit to replace it", manifest_path.display());
    }
    manifest.assign_split(ratio, seed)?;
    manifest.write(out)?;
    echo(out, &json!({ "command": "split", "ratio": ratio, "seed": seed }))?;
    let n_train = manifest.split(Split::Train).count();
    println!("{n_train} train, {} test -> {}", manifest.entries.len() - n_train, out.display());
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    data: &DataArgs,
    checkpoint: &Path,
    head: HeadKind,
    history: Option<&Path>,
    validate: bool,
    cfg: &rnn_iqa::train::TrainConfig,
) -> Result<ExitCode> {
    let manifest = load_data(data)?;
    require_parent(checkpoint)?;
    if let Some(h) = history {
        require_parent(h)?;
    }
    let train_set = Dataset::load(&manifest, Split::Train, &data.features)?;
    let val_set = if validate {
        Some(Dataset::load(&manifest, Split::Test, &data.features)?)
    } else {
        None
    };
    let (model, hist) = train_model(head, &train_set, val_set.as_ref(), cfg, Exec::default())?;
    let extract_cfg = read_extract_config(&data.features)?;
    let ckpt = make_checkpoint(model, cfg, extract_cfg.as_ref())?;
    write_checkpoint(&ckpt, checkpoint)?;
    if let Some(h) = history {
        hist.write_csv(h)?;
        echo(h, &ckpt.meta.config)?;
    }
    let last = hist.epochs.last().map(|e| e.train_loss).unwrap_or(f64::NAN);
    println!("trained {} head on {} images, final loss {last:.6} -> {}", head.as_str(), train_set.seqs.len(), checkpoint.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_predict(data: &DataArgs, checkpoint: &Path, out: &Path, split: &str) -> Result<ExitCode> {
    let manifest = load_data(data)?;
    require_file(checkpoint, "checkpoint")?;
    require_parent(out)?;
    let ckpt = read_checkpoint(checkpoint)?;
    let entries: Vec<_> = match split {
        "all" => manifest.entries.iter().collect(),
        s => manifest.split(s.parse()?).collect(),
    };
    if entries.is_empty() {
        bail!("no manifest entries in split '{split}'");
    }
    let seqs = rnn_iqa::features::load_sequences(&data.features, entries.iter().copied())?;
    let pred = Exec::default()
        .map(&seqs, |_, s| ckpt.model.predict(s))
        .into_iter()
        .collect::<rnn_iqa::Result<Vec<_>>>()?;
    let ids: Vec<&str> = entries.iter().map(|e| e.image_id.as_str()).collect();
    write_predictions(out, &ids, &pred)?;
    echo(out, &json!({ "command": "predict", "split": split, "checkpoint": ckpt.meta.config }))?;
    println!("wrote {} predictions to {}", pred.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(data: &DataArgs, checkpoint: &Path, out: &Path, split: Split) -> Result<ExitCode> {
    let manifest = load_data(data)?;
    require_file(checkpoint, "checkpoint")?;
    require_parent(out)?;
    let ckpt = read_checkpoint(checkpoint)?;
    let set = Dataset::load(&manifest, split, &data.features)?;
    let (_, metrics) = evaluate(&ckpt.model, &set.seqs, &set.targets, Exec::default())?;
    let row = ReportRow {
        model: ckpt.model.kind().as_str().to_owned(),
        split: split.as_str().to_owned(),
        seed: ckpt.meta.seed,
        metrics,
    };
    write_report(out, &[row])?;
    echo(out, &json!({ "command": "eval", "split": split, "checkpoint": ckpt.meta.config }))?;
    let show = |v: &Result<f64, rnn_iqa::metrics::Degenerate>| match v {
        Ok(x) => format!("{x:.4}"),
        Err(e) => format!("undefined ({e})"),
    };
    println!("{} images: SCC {} PCC {} RMSE {:.3}", metrics.n, show(&metrics.scc), show(&metrics.pcc), metrics.rmse);
    Ok(ExitCode::SUCCESS)
}

fn cmd_ablate(data: &DataArgs, out: &Path, cfg: &rnn_iqa::train::TrainConfig) -> Result<ExitCode> {
    let manifest = load_data(data)?;
    require_parent(out)?;
    let train_set = Dataset::load(&manifest, Split::Train, &data.features)?;
    let test_set = Dataset::load(&manifest, Split::Test, &data.features)?;
    if !test_set.seqs.iter().any(|s| s.group_len(rnn_iqa::ScaleGroup::Low) > 0) {
        log::warn!("features have no half-resolution group; the two-scale arms repeat the single-scale ones");
    }
    let rows = ablate(&train_set, &test_set, cfg, Exec::default())?;
    write_ablation(out, &rows)?;
    let extract_cfg = read_extract_config(&data.features)?;
    echo(out, &json!({ "command": "ablate", "train": cfg, "extract": extract_cfg }))?;
    println!("{:<10} {:>8} {:>8} {:>8}", "arm", "SCC", "PCC", "RMSE");
    let cell = |v: &Result<f64, rnn_iqa::metrics::Degenerate>| v.as_ref().map(|x| format!("{x:.4}")).unwrap_or_else(|_| "-".into());
    for r in &rows {
        println!("{:<10} {:>8} {:>8} {:>8.3}", r.label(), cell(&r.metrics.scc), cell(&r.metrics.pcc), r.metrics.rmse);
    }
    Ok(ExitCode::SUCCESS)
}

fn init_threads(threads: Option<usize>) -> Result<()> {
    let Some(n) = threads else {
        return Ok(());
    };
    if n == 0 {
        bail!("thread count must be positive");
    }
    #[cfg(feature = "parallel")]
    {
        use anyhow::Context as _;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    init_threads(cli.threads)?;
    match cli.command {
        Command::Synth { out, count, seed, width, height, variant } => {
            cmd_synth(&out, SynthConfig { count, seed, width, height, variant })
        }
        Command::Extract { data, multires, seed, config } => {
            let file = FileConfig::load(config.as_deref())?;
            cmd_extract(&data, &multires, seed, &file)
        }
        Command::Split { manifest, out, ratio, seed, resplit, config } => {
            let file = FileConfig::load(config.as_deref())?;
            cmd_split(&manifest, out.as_deref(), split_ratio(ratio, &file)?, seed, resplit)
        }
        Command::Train { data, checkpoint, head, history, validate, seed, train, config } => {
            let file = FileConfig::load(config.as_deref())?;
            let cfg = train.apply(file.train.clone(), seed)?;
            let head = head.or(file.head).unwrap_or(HeadKind::Rnn);
            cmd_train(&data, &checkpoint, head, history.as_deref(), validate, &cfg)
        }
        Command::Predict { data, checkpoint, out, split } => cmd_predict(&data, &checkpoint, &out, &split),
        Command::Eval { data, checkpoint, out, split } => cmd_eval(&data, &checkpoint, &out, split),
        Command::Ablate { data, out, seed, train, config } => {
            let file = FileConfig::load(config.as_deref())?;
            let cfg = train.apply(file.train.clone(), seed)?;
            cmd_ablate(&data, &out, &cfg)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
