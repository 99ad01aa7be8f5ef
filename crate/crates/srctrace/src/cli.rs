//! `srctrace` subcommands.
//!
//! Each run prints one JSON document on stdout with the command name, the
//! effective configuration, the files written and a short summary. Exit codes
//! are 0 on success, 1 for usage or configuration errors, 2 for data errors
//! and 3 for numeric failures.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};
use srctrace_core::embedding::Split;
use srctrace_core::eval::{linear_probe, project_2d};
use srctrace_core::network::init_model;
use srctrace_core::synth::generate;
use srctrace_core::trainer::{embed_set, train};
use srctrace_core::Error as CoreError;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::StoreError;
use crate::parallel::{exact_eer_par, histogram_eer_par, with_threads};
use crate::report::{
    align_manifest, condition_subsets, write_confusion_csv, write_history, write_json, write_projection_csv,
    ConditionReport, EerMethod, EerReport,
};
use crate::store::{read_embeddings, read_manifest, write_embeddings, write_manifest};

#[derive(Debug, Parser)]
#[command(name = "srctrace", version, about = "Source-tracing embedding toolkit")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Caps the number of worker threads.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    GenData {
        /// Output directory.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Train an embedding network.
    Train(TrainArgs),
    /// Run a checkpoint over a feature file.
    Embed {
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        input: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// All-pairs equal error rate of an embedding file.
    EvalEer(EvalArgs),
    /// Linear probe with a confusion matrix.
    Probe {
        input: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Two-dimensional PCA projection.
    Project {
        input: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory from `gen-data`.
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub train: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub dev: Option<PathBuf>,
    /// Output directory for the checkpoint and history.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub input: Option<PathBuf>,
    /// Histogram EER with this many bins.
    #[arg(long, value_name = "N", conflicts_with = "exact")]
    pub bins: Option<usize>,
    /// Exact EER over the sorted score list.
    #[arg(long)]
    pub exact: bool,
    /// Adds seen/unseen breakdowns from the manifest.
    #[arg(long)]
    pub by_condition: bool,
    #[arg(long, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
    /// Rows per scoring block.
    #[arg(long, value_name = "N")]
    pub block_size: Option<usize>,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum SplitArg {
    Train,
    Dev,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Dev => Split::Dev,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::NonFiniteLoss { .. } | CoreError::NonFiniteGradient => CliError::Numeric(msg),
            CoreError::InvalidSpec(_)
            | CoreError::ConfigConflict(_)
            | CoreError::InvalidMargin(_)
            | CoreError::InvalidScale(_)
            | CoreError::OutOfRange { .. } => CliError::Usage(msg),
            _ => CliError::Data(msg),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Core(c) => c.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

fn required(p: Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    p.ok_or_else(|| CliError::Usage(format!("missing {what} path (flag or config `paths`)")))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
}

fn path_value(p: &Path) -> Value {
    Value::String(p.display().to_string())
}

/// Builds the effective configuration from the file, the global flags and
/// the subcommand's path flags.
pub fn effective_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(CliError::Usage)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    cfg.propagate_seed();
    let paths = &mut cfg.paths;
    let set = |slot: &mut Option<PathBuf>, v: &Option<PathBuf>| {
        if v.is_some() {
            slot.clone_from(v);
        }
    };
    match &cli.command {
        Command::GenData { out } => set(&mut paths.data_dir, out),
        Command::Train(a) => {
            set(&mut paths.data_dir, &a.data);
            set(&mut paths.train, &a.train);
            set(&mut paths.dev, &a.dev);
            set(&mut paths.out, &a.out);
        }
        Command::Embed { model, input, out } => {
            set(&mut paths.model, model);
            set(&mut paths.input, input);
            set(&mut paths.out, out);
        }
        Command::EvalEer(a) => {
            set(&mut paths.input, &a.input);
            set(&mut paths.manifest, &a.manifest);
            set(&mut paths.out, &a.out);
            if a.exact {
                cfg.eval.bins = None;
            }
            if a.bins.is_some() {
                cfg.eval.bins = a.bins;
            }
            if a.by_condition {
                cfg.eval.by_condition = true;
            }
            if let Some(b) = a.block_size {
                cfg.eval.block_size = b;
            }
            if let Some(s) = a.split {
                cfg.eval.split = s.into();
            }
        }
        Command::Probe { input, out } | Command::Project { input, out } => {
            set(&mut paths.input, input);
            set(&mut paths.out, out);
        }
    }
    if cfg.threads == Some(0) {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    Ok(cfg)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::GenData { .. } => "gen-data",
        Command::Train(_) => "train",
        Command::Embed { .. } => "embed",
        Command::EvalEer(_) => "eval-eer",
        Command::Probe { .. } => "probe",
        Command::Project { .. } => "project",
    }
}

/// Runs one parsed command and returns `(outputs, summary)`.
pub fn execute(command: &Command, cfg: &RunConfig) -> Result<(Map<String, Value>, Value), CliError> {
    let mut outputs = Map::new();
    let summary = match command {
        Command::GenData { .. } => {
            let dir = required(cfg.paths.data_dir.clone(), "output directory")?;
            let data = generate(&cfg.synth)?;
            create_dir(&dir)?;
            let (train_path, dev_path, man_path) =
                (dir.join("train.emb"), dir.join("dev.emb"), dir.join("manifest.jsonl"));
            write_embeddings(&data.train, &train_path)?;
            write_embeddings(&data.dev, &dev_path)?;
            write_manifest(&data.manifest, &man_path)?;
            outputs.insert("train".into(), path_value(&train_path));
            outputs.insert("dev".into(), path_value(&dev_path));
            outputs.insert("manifest".into(), path_value(&man_path));
            json!({
                "train_rows": data.train.count(),
                "dev_rows": data.dev.count(),
                "train_classes": data.train.num_classes(),
                "dev_classes": data.dev.num_classes(),
            })
        }
        Command::Train(_) => {
            let train_path = required(cfg.paths.train_file(), "training set")?;
            let out = required(cfg.paths.out.clone(), "output directory")?;
            cfg.train.validate()?;
            let train_set = read_embeddings(&train_path)?;
            let dev_set = cfg.paths.dev_file().map(|p| read_embeddings(&p)).transpose()?;
            let normalize = cfg.model.normalize_output.unwrap_or(cfg.train.loss.normalizes_output());
            let model = init_model(
                &cfg.model.widths(train_set.dim()),
                cfg.model.activation,
                normalize,
                cfg.model.seed,
            )?;
            let outcome = train(model, &train_set, dev_set.as_ref(), &cfg.train)?;
            create_dir(&out)?;
            let ckpt_path = out.join("model.ckpt");
            let hist_path = out.join("history.jsonl");
            Checkpoint::from_outcome(&outcome, cfg.train.loss, cfg.train.sampler.clone(), cfg.train.margin)
                .save(&ckpt_path)?;
            write_history(&outcome.history, &hist_path)?;
            outputs.insert("checkpoint".into(), path_value(&ckpt_path));
            outputs.insert("history".into(), path_value(&hist_path));
            json!({
                "epochs": outcome.history.len(),
                "final_loss": outcome.history.last().map(|r| r.mean_loss),
                "best_epoch": outcome.best_epoch,
                "best_dev_eer": outcome.best_dev_eer,
            })
        }
        Command::Embed { .. } => {
            let model_path = required(cfg.paths.model.clone(), "checkpoint")?;
            let input = required(cfg.paths.input.clone(), "input")?;
            let out = required(cfg.paths.out.clone(), "output")?;
            let ckpt = Checkpoint::load(&model_path)?;
            let set = read_embeddings(&input)?;
            let emb = embed_set(&ckpt.model, &set)?;
            let bytes = write_embeddings(&emb, &out)?;
            outputs.insert("embeddings".into(), path_value(&out));
            json!({ "rows": emb.count(), "dim": emb.dim(), "bytes": bytes })
        }
        Command::EvalEer(_) => {
            let input = required(cfg.paths.input.clone(), "input")?;
            let set = read_embeddings(&input)?;
            let eval = &cfg.eval;
            let score = |s: &srctrace_core::embedding::EmbeddingSet| -> Result<EerReport, CoreError> {
                Ok(match eval.bins {
                    Some(bins) => {
                        let (e, nt, nn) = histogram_eer_par(s, eval.block_size, bins)?;
                        EerReport::new(e, nt, nn, EerMethod::Histogram, Some(bins))
                    }
                    None => {
                        let (e, scores) = exact_eer_par(s, eval.block_size)?;
                        let (nt, nn) = (scores.target.len() as u64, scores.nontarget.len() as u64);
                        EerReport::new(e, nt, nn, EerMethod::Exact, None)
                    }
                })
            };
            let mut report = score(&set)?;
            if eval.by_condition {
                let man_path = required(cfg.paths.manifest_file(), "manifest")?;
                let manifest = read_manifest(&man_path)?;
                let rows = align_manifest(&set, &manifest, eval.split, &man_path)?;
                for (name, idx) in condition_subsets(&rows) {
                    let sub = set.subset(&idx);
                    let entry = match score(&sub) {
                        Ok(r) => ConditionReport {
                            rows: idx.len(),
                            eer: Some(r.eer),
                            threshold: Some(r.threshold),
                            n_target: r.n_target,
                            n_nontarget: r.n_nontarget,
                            error: None,
                        },
                        Err(e) => ConditionReport {
                            rows: idx.len(),
                            eer: None,
                            threshold: None,
                            n_target: 0,
                            n_nontarget: 0,
                            error: Some(e.to_string()),
                        },
                    };
                    report.conditions.insert(name, entry);
                }
            }
            if let Some(out) = &cfg.paths.out {
                write_json(&report, out)?;
                outputs.insert("report".into(), path_value(out));
            }
            serde_json::to_value(&report).expect("report serialises")
        }
        Command::Probe { .. } => {
            let input = required(cfg.paths.input.clone(), "input")?;
            let set = read_embeddings(&input)?;
            let probe = linear_probe(&set, &cfg.probe)?;
            if let Some(out) = &cfg.paths.out {
                write_confusion_csv(&probe.confusion, set.class_names(), out)?;
                outputs.insert("confusion".into(), path_value(out));
            }
            json!({
                "accuracy": probe.accuracy,
                "n_train": probe.n_train,
                "n_heldout": probe.n_heldout,
            })
        }
        Command::Project { .. } => {
            let input = required(cfg.paths.input.clone(), "input")?;
            let set = read_embeddings(&input)?;
            let proj = project_2d(&set)?;
            if let Some(out) = &cfg.paths.out {
                write_projection_csv(&proj, &set, out)?;
                outputs.insert("projection".into(), path_value(out));
            }
            json!({
                "explained_variance": proj.explained_variance,
                "total_variance": proj.total_variance,
            })
        }
    };
    Ok((outputs, summary))
}

/// Parses `args`, runs the command and writes the JSON echo to `stdout`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.render().to_string()))?;
    let cfg = effective_config(&cli)?;
    let (outputs, summary) = with_threads(cfg.threads, || execute(&cli.command, &cfg))?;
    let echo = json!({
        "command": command_name(&cli.command),
        "config": cfg,
        "outputs": outputs,
        "summary": summary,
    });
    let text = serde_json::to_string_pretty(&echo).expect("echo serialises");
    writeln!(stdout, "{text}").map_err(|e| CliError::Data(format!("stdout: {e}")))
}

/// Entry point for the binary; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    if let Err(e) = Cli::try_parse_from(&args) {
        use clap::error::ErrorKind;
        if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
            print!("{e}");
            return 0;
        }
        eprint!("{}", e.render());
        return 1;
    }
    let stdout = std::io::stdout();
    match run(args, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            let one_line = e.message().lines().next().unwrap_or("").to_owned();
            eprintln!("srctrace: {one_line}");
            e.exit_code()
        }
    }
}
