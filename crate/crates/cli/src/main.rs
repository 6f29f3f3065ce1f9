use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use fulltransnet::attention::PatternKind;
use fulltransnet::data_io::{import_archive, load_dataset, save_dataset, synth_dataset, Dataset};
use fulltransnet::evaluation::bench::{reports_to_csv, reports_to_table};
use fulltransnet::evaluation::{bench, UserAggregation};
use fulltransnet::model::{load_checkpoint, save_checkpoint, FullTransNet, ModelConfig};
use fulltransnet::numerics::ParameterStore;
use fulltransnet::selection::SummaryExport;
use fulltransnet::training::{evaluate_videos, loss_log_csv, prepare_dataset, train, video_shots};
use fulltransnet::Error;

mod config;

use config::{ConfigTree, RunConfig};

/// Bad invocation: missing inputs, malformed flags or configuration.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "fulltransnet", version, about = "Key-shot video summarization with a sparse-attention transformer")]
struct Cli {
    /// TOML file with [model], [train], [synth] and [bench] tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dotted override such as `train.epochs=10`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct DataArg {
    /// Dataset directory containing manifest.toml.
    #[arg(long, env = "FTN_DATA_DIR")]
    data: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset with planted summaries.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
        seed: Option<u64>,
    },
    /// Cross-validated training; writes one checkpoint per split.
    Train {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        splits: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Precision, recall and F-measure of a checkpoint on a dataset.
    Eval {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        ckpt: PathBuf,
        /// How per-user scores combine: max or mean.
        #[arg(long)]
        agg: Option<UserAggregation>,
        /// Only these video ids (comma separated).
        #[arg(long, value_delimiter = ',')]
        videos: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Key-shot summaries of every (or the listed) video.
    Summarize {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, value_delimiter = ',')]
        videos: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// FLOPs, runtime and attention memory per pattern and length.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "fa,la,ga,lga", value_parser = parse_pattern)]
        pattern: Vec<PatternKind>,
        #[arg(long, value_delimiter = ',', default_value = "192,384,768,1536")]
        lengths: Vec<usize>,
        /// CSV report path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Attention maps (CSV and PGM) of one layer and head for one video.
    ExportAttn {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        video: String,
        #[arg(long)]
        layer: usize,
        #[arg(long)]
        head: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert an archive JSON export into a dataset directory.
    Import {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "imported")]
        name: String,
        #[arg(long, default_value_t = 30.0)]
        fps_original: f64,
        #[arg(long, default_value_t = 2.0)]
        fps_sampled: f64,
    },
}

fn parse_pattern(s: &str) -> Result<PatternKind, String> {
    PatternKind::from_tag(s).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 usage, 3 data, 4 numeric failure.
fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::Precondition(_)) => 2,
        Some(Error::NonFinite(_) | Error::DegenerateRow { .. } | Error::MaskSentinel { .. }) => 4,
        _ => 3,
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut tree = ConfigTree::load(cli.config.as_deref())?;
    for o in &cli.overrides {
        tree.set(o)?;
    }
    match cli.command {
        Command::Synth { out, seed } => {
            if let Some(s) = seed {
                tree.set_value("synth.seed", int(s))?;
            }
            let cfg = tree.resolve()?;
            let synth = synth_dataset(&cfg.synth)?;
            let manifest = save_dataset(&out, &synth.dataset)?;
            cfg.write_effective(&out)?;
            println!("{}", manifest.display());
            Ok(())
        }
        Command::Train { data, splits, epochs, lr, seed, out } => {
            if let Some(v) = splits {
                tree.set_value("train.folds", int(v as u64))?;
            }
            if let Some(v) = epochs {
                tree.set_value("train.epochs", int(v as u64))?;
            }
            if let Some(v) = lr {
                tree.set_value("train.learning_rate", toml::Value::Float(v))?;
            }
            if let Some(v) = seed {
                tree.set_value("train.seed", int(v))?;
            }
            let cfg = tree.resolve()?;
            let dataset = open_dataset(&data.data)?;
            cfg.write_effective(&out)?;
            cmd_train(&cfg, &dataset, &out)
        }
        Command::Eval { data, ckpt, agg, videos, out } => {
            let mut cfg = tree.resolve()?;
            if agg.is_some() {
                cfg.train.aggregation = agg;
            }
            let dataset = subset(open_dataset(&data.data)?, &videos)?;
            let (model, store) = open_checkpoint(&ckpt, &cfg, &tree.model_keys)?;
            cfg.model = model;
            cfg.write_effective(&out)?;
            cmd_eval(&cfg, &dataset, &store, &out)
        }
        Command::Summarize { data, ckpt, videos, out } => {
            let mut cfg = tree.resolve()?;
            let dataset = subset(open_dataset(&data.data)?, &videos)?;
            let (model, store) = open_checkpoint(&ckpt, &cfg, &tree.model_keys)?;
            cfg.model = model;
            cfg.write_effective(&out)?;
            cmd_summarize(&cfg, &dataset, &store, &out)
        }
        Command::Bench { pattern, lengths, out } => {
            let cfg = tree.resolve()?;
            if lengths.iter().any(|&n| n == 0) {
                return Err(UsageError("lengths must be positive".into()).into());
            }
            let reports = bench(&cfg.model, &pattern, &lengths, &cfg.bench)?;
            let dir = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
            cfg.write_effective(dir)?;
            std::fs::write(&out, reports_to_csv(&reports))?;
            print!("{}", reports_to_table(&reports));
            Ok(())
        }
        Command::ExportAttn { data, ckpt, video, layer, head, out } => {
            let mut cfg = tree.resolve()?;
            let dataset = open_dataset(&data.data)?;
            let (model, store) = open_checkpoint(&ckpt, &cfg, &tree.model_keys)?;
            if layer >= model.layers || head >= model.heads {
                return Err(UsageError(format!(
                    "layer {layer} / head {head} out of range: valid layers 0..={}, heads 0..={}",
                    model.layers - 1,
                    model.heads - 1
                ))
                .into());
            }
            cfg.model = model;
            cfg.write_effective(&out)?;
            let v = dataset
                .find(&video)
                .ok_or_else(|| UsageError(format!("video `{video}` not in dataset")))?;
            let shots = video_shots(v, cfg.train.kts())?;
            let net = FullTransNet::new(cfg.model.clone())?;
            let maps = net.attention_maps(&store, &v.features, shots.shots(), None, layer, head)?;
            for p in maps.write(&out)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Import { archive, out, name, fps_original, fps_sampled } => {
            let cfg = tree.resolve()?;
            let ds = import_archive(&archive, &out, &name, fps_original, fps_sampled)?;
            cfg.write_effective(&out)?;
            println!("imported {} videos into {}", ds.videos.len(), out.display());
            Ok(())
        }
    }
}

fn int(v: u64) -> toml::Value {
    toml::Value::Integer(v as i64)
}

fn open_dataset(dir: &Path) -> Result<Dataset> {
    if !dir.is_dir() {
        return Err(UsageError(format!("data directory {} does not exist", dir.display())).into());
    }
    load_dataset(dir).with_context(|| format!("loading dataset {}", dir.display()))
}

fn subset(mut ds: Dataset, ids: &[String]) -> Result<Dataset> {
    if ids.is_empty() {
        return Ok(ds);
    }
    if let Some(missing) = ids.iter().find(|id| ds.find(id).is_none()) {
        return Err(UsageError(format!("video `{missing}` not in dataset")).into());
    }
    ds.videos.retain(|v| ids.contains(&v.id));
    ds.splits.clear();
    Ok(ds)
}

/// Loads a checkpoint; explicitly given model keys must agree with the
/// stored configuration.
fn open_checkpoint(path: &Path, cfg: &RunConfig, given: &[String]) -> Result<(ModelConfig, ParameterStore<f32>)> {
    if !path.is_file() {
        return Err(UsageError(format!("checkpoint {} does not exist", path.display())).into());
    }
    let (model, store) = load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    let diff: Vec<String> = cfg.model.diff(&model).into_iter().filter(|k| given.contains(k)).collect();
    if !diff.is_empty() {
        return Err(Error::Config(format!("model configuration differs from checkpoint in: {}", diff.join(", "))).into());
    }
    Ok((model, store))
}

fn cmd_train(cfg: &RunConfig, dataset: &Dataset, out: &Path) -> Result<()> {
    let outcome = train::<f32>(dataset, &cfg.model, &cfg.train)?;
    std::fs::write(out.join("losses.csv"), loss_log_csv(&outcome.log))?;
    let mut folds = String::from("split,test_videos,f_measure,baseline_f\n");
    println!("{:<6} {:>6} {:>10} {:>10}", "split", "test", "F (%)", "random (%)");
    for f in &outcome.folds {
        save_checkpoint(out.join(format!("split_{}.ckpt", f.split)), &cfg.model, &f.store)?;
        std::fs::write(out.join(format!("eval_split_{}.csv", f.split)), f.eval.to_csv())?;
        let ids: Vec<&str> = f.test.iter().map(|&i| dataset.videos[i].id.as_str()).collect();
        folds.push_str(&format!("{},{},{:.4},{:.4}\n", f.split, ids.join(" "), f.eval.mean_f(), f.baseline_f));
        println!("{:<6} {:>6} {:>10.2} {:>10.2}", f.split, f.test.len(), f.eval.mean_f(), f.baseline_f);
    }
    std::fs::write(out.join("folds.csv"), folds)?;
    println!("mean F across folds: {:.2}", outcome.mean_f());
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, dataset: &Dataset, store: &ParameterStore<f32>, out: &Path) -> Result<()> {
    let net = FullTransNet::new(cfg.model.clone())?;
    let videos = prepare_dataset::<f32>(dataset, &cfg.train)?;
    let refs: Vec<_> = videos.iter().collect();
    let (report, _) = evaluate_videos(&net, store, &refs, cfg.train.budget_ratio)?;
    std::fs::write(out.join("eval.csv"), report.to_csv())?;
    print!("{}", report.to_table());
    Ok(())
}

fn cmd_summarize(cfg: &RunConfig, dataset: &Dataset, store: &ParameterStore<f32>, out: &Path) -> Result<()> {
    let net = FullTransNet::new(cfg.model.clone())?;
    let videos = prepare_dataset::<f32>(dataset, &cfg.train)?;
    let refs: Vec<_> = videos.iter().collect();
    let (report, summaries) = evaluate_videos(&net, store, &refs, cfg.train.budget_ratio)?;
    for ((v, s), e) in videos.iter().zip(&summaries).zip(&report.videos) {
        let mut export = SummaryExport::new(&v.id, s, v.shots.shots());
        export.precision = Some(e.aggregate.precision);
        export.recall = Some(e.aggregate.recall);
        export.f_measure = Some(e.aggregate.f_measure);
        let path = out.join(format!("{}.summary.toml", v.id));
        std::fs::write(&path, export.to_toml())?;
        println!("{}\t{} shots\t{} frames\t{}", v.id, s.selected_shots.len(), s.selected_frames(), path.display());
    }
    Ok(())
}
