//! The `ikbqa` command line: dataset building, training, evaluation and reporting.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::evaluation::EvalReport;
use crate::exemplars::Strategy;
use crate::kbstream::{
    build_stream, generate_synthetic, ingest_corpus, load_stream, statistics_table, write_stream, CorpusFormat,
    SyntheticConfig,
};
use crate::pipeline::{compare_reports, evaluate_run, load_checkpoint, load_resources, plot_data, RunConfig, RunLock, Runner};
use crate::training::Mode;
use crate::{Error, Result};

pub const OUTPUT_ROOT_ENV: &str = "IKBQA_OUTPUT_ROOT";

#[derive(Debug, Parser)]
#[command(name = "ikbqa", version, about = "Incremental KBQA over an evolving knowledge base")]
pub struct Cli {
    /// Directory under which datasets and runs are written.
    #[arg(long, global = true, env = OUTPUT_ROOT_ENV, default_value = "runs")]
    pub output_root: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a corpus into phases and write the phase files and manifest.
    BuildDataset(BuildArgs),
    /// Train all phases of a stream, resuming if the run directory has progress.
    Train(TrainArgs),
    /// Evaluate the checkpoints of a run and write the report files.
    Eval(EvalArgs),
    /// Summarize, compare and export runs.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Flat TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set epochs=10`.
    #[arg(long = "set", value_parser = parse_key_value)]
    pub overrides: Vec<(String, String)>,
}

fn parse_key_value(s: &str) -> std::result::Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected key=value, got {s}"))
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Corpus file (.tsv or .jsonl).
    #[arg(long, conflicts_with = "synthetic")]
    pub input: Option<PathBuf>,
    /// `default` or a TOML file with synthetic generator settings.
    #[arg(long)]
    pub synthetic: Option<String>,
    #[arg(long)]
    pub phases: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, defaults to `<output root>/data`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub strategy: Option<Strategy>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory name under the output root, defaults to `<mode>[-<strategy>]-s<seed>`.
    #[arg(long)]
    pub name: Option<String>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    pub run: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directories to summarize or export.
    #[arg(long)]
    pub run: Vec<PathBuf>,
    /// Two comma-separated lists of run directories to compare pairwise.
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    pub compare: Option<Vec<String>>,
    /// Write per-phase series of every `--run` to this CSV file.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    pub permutations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidSplit(_) | Error::Empty(_) => 2,
        Error::Parse { .. }
        | Error::EmptyCorpus
        | Error::MissingAnnotation(_)
        | Error::Format(_)
        | Error::Json(_)
        | Error::NoGold(_)
        | Error::EmptyKb => 3,
        Error::NonFinite(_) => 4,
        Error::MissingCheckpoint(_) => 5,
        Error::LabelsFrozen(_) | Error::Io(_) => 1,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildDataset(a) => build_dataset(&cli.output_root, a),
        Command::Train(a) => train(&cli.output_root, a),
        Command::Eval(a) => eval(&a.run).map(|_| ()),
        Command::Report(a) => report(a),
    }
}

fn build_dataset(root: &Path, args: BuildArgs) -> Result<()> {
    let mut overrides = args.config.overrides.clone();
    if let Some(p) = args.phases {
        overrides.push(("phases".into(), p.to_string()));
    }
    if let Some(s) = args.seed {
        overrides.push(("seed".into(), s.to_string()));
    }
    let config = RunConfig::resolve(args.config.config.as_deref(), &overrides)?;
    let (triples, questions) = match (&args.input, &args.synthetic) {
        (Some(path), _) => ingest_corpus(path, CorpusFormat::from_path(path))?,
        (None, Some(source)) => {
            let syn = if source == "default" {
                config.synthetic_config()
            } else {
                let text = fs::read_to_string(source)?;
                let mut syn: SyntheticConfig = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
                syn.seed = config.seed;
                syn
            };
            generate_synthetic(&syn)?
        }
        (None, None) => return Err(Error::Config("one of --input or --synthetic is required".into())),
    };
    let (phases, manifest) = build_stream(&triples, &questions, config.phases, config.seed, config.ratios())?;
    let out = args.out.unwrap_or_else(|| root.join("data"));
    write_stream(&out, &phases, &manifest)?;
    fs::write(out.join("config.toml"), config.to_toml()?)?;
    print!("{}", statistics_table(&phases));
    println!("wrote {}", out.join("manifest.json").display());
    Ok(())
}

fn train(root: &Path, args: TrainArgs) -> Result<()> {
    let mut overrides = args.config.overrides.clone();
    if let Some(m) = &args.manifest {
        overrides.push(("manifest".into(), toml_string(&m.display().to_string())));
    }
    if let Some(m) = args.mode {
        overrides.push(("mode".into(), toml_string(&m.to_string())));
    }
    if let Some(s) = args.strategy {
        overrides.push(("strategy".into(), toml_string(&s.to_string())));
    }
    if let Some(s) = args.seed {
        overrides.push(("seed".into(), s.to_string()));
    }
    let mut config = RunConfig::resolve(args.config.config.as_deref(), &overrides)?;
    let manifest = config
        .manifest
        .clone()
        .ok_or_else(|| Error::Config("--manifest is required".into()))?;
    let (phases, _) = load_stream(&manifest)?;
    if phases.len() != config.phases {
        log::info!("stream has {} phases, overriding configured {}", phases.len(), config.phases);
        config.phases = phases.len();
    }
    let dir = match &config.output_dir {
        Some(d) => d.clone(),
        None => root.join(args.name.clone().unwrap_or_else(|| config.run_name())),
    };
    config.output_dir = Some(dir.clone());
    let _lock = RunLock::acquire(&dir)?;
    let mut runner = Runner::new(config, &phases, Some(dir.clone()))?;
    if runner.completed() > 0 {
        log::info!("resuming after phase {}", runner.completed() - 1);
    }
    while !runner.is_done() {
        let phase = runner.completed();
        runner.run_phase()?;
        let res = &runner.resources[phase];
        println!(
            "phase {phase}: samples {} exemplars {} time {:.1}s",
            res.samples_seen,
            runner.store.len(),
            res.wall_time_s
        );
    }
    println!("run directory {}", dir.display());
    Ok(())
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn read_run_config(dir: &Path) -> Result<RunConfig> {
    let path = dir.join("config.toml");
    if !path.exists() {
        return Err(Error::Config(format!("{} has no config.toml", dir.display())));
    }
    RunConfig::from_toml(&fs::read_to_string(path)?)
}

fn eval(dir: &Path) -> Result<EvalReport> {
    let config = read_run_config(dir)?;
    let manifest = config
        .manifest
        .clone()
        .ok_or_else(|| Error::Config("run config has no manifest".into()))?;
    let (phases, _) = load_stream(&manifest)?;
    let (report, predictions) = evaluate_run(&phases, &config, |i| load_checkpoint(dir, i), load_resources(dir)?)?;
    report.write(dir, &predictions)?;
    print!("{}", report.accuracy_csv());
    Ok(report)
}

fn load_report(dir: &Path) -> Result<EvalReport> {
    let path = dir.join("report.json");
    if !path.exists() {
        return Err(Error::Config(format!("{} has no report.json; run eval first", dir.display())));
    }
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn run_label(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

fn report(args: ReportArgs) -> Result<()> {
    for dir in &args.run {
        let r = load_report(dir)?;
        println!("{} accuracy_avg {:.4}", run_label(dir), r.accuracy_avg);
        print!("{}", r.forgetting_csv());
    }
    if let Some(sides) = &args.compare {
        let load_side = |s: &str| -> Result<Vec<EvalReport>> {
            s.split(',').filter(|p| !p.is_empty()).map(|p| load_report(Path::new(p))).collect()
        };
        let a = load_side(&sides[0])?;
        let b = load_side(&sides[1])?;
        let cmp = compare_reports(&a, &b, args.permutations, args.seed)?;
        println!("{}", serde_json::to_string_pretty(&cmp)?);
    }
    if let Some(path) = &args.plot_data {
        let reports = args
            .run
            .iter()
            .map(|d| Ok((run_label(d), load_report(d)?)))
            .collect::<Result<Vec<_>>>()?;
        fs::write(path, plot_data(&reports))?;
    }
    Ok(())
}
