use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use statebrief::config::{Config, ConfigError};
use statebrief::domain::{ExpertStep, FeatureSet, TaskSpec};
use statebrief::harness::{
    build_actor, evaluate, ingest_external_trajectories, read_json, read_jsonl, render_table, synthesize_demos, write_json,
    write_jsonl, HarnessError, Manifest,
};
use statebrief::learning::{collect_value_dataset, fit_value_model, Checkpoint, DatasetRecord, LearningError, ValueDataset};
use statebrief::selector::select;
use statebrief::ValueModel;

/// Learned selection of concise, task-conditioned state descriptions.
#[derive(Parser)]
#[command(name = "statebrief", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize expert demonstrations on training scenes.
    DemoGen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label random descriptions of each expert step with actor rewards.
    Collect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        demos: PathBuf,
        #[arg(long)]
        trajectories: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a value model to a collected dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select a description for one feature set and task.
    Select {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// JSON object with `feature_set` and `task`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        max_len: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the configured selector variants on held-out scenes.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Needed by the `learned` variant.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Validate externally produced expert steps.
    Ingest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SelectInput {
    feature_set: FeatureSet,
    task: TaskSpec,
}

fn load_config(common: &Common) -> Result<Config> {
    let mut config = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

/// One independent stream per command, so reruns of a single stage match.
fn stream(config: &Config, stage: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stage);
    rng
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn finish(mut manifest: Manifest, outputs: &[&Path], at: &Path) -> Result<()> {
    for o in outputs {
        manifest.output(o);
    }
    write_json(at, &manifest)?;
    Ok(())
}

fn load_model(path: &Path) -> Result<ValueModel> {
    let checkpoint: Checkpoint = read_json(path)?;
    Ok(ValueModel::from_checkpoint(checkpoint)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::DemoGen { common, episodes, out } => {
            let mut config = load_config(&common)?;
            if let Some(e) = episodes {
                config.demos.episodes = e;
            }
            config.validate()?;
            let steps = synthesize_demos(&config.env, config.demos.episodes, &mut stream(&config, 0))?;
            write_jsonl(&out, &steps)?;
            eprintln!("wrote {} expert steps to {}", steps.len(), out.display());
            finish(Manifest::new("demo-gen", config.hash(), config.seed), &[&out], &manifest_path(&out))
        }
        Command::Collect { common, demos, trajectories, out } => {
            let mut config = load_config(&common)?;
            if let Some(k) = trajectories {
                config.learning.trajectories_per_step = k;
            }
            config.validate()?;
            let steps: Vec<ExpertStep> = read_jsonl(&demos)?;
            let actor = build_actor(&config.actor)?;
            let dataset = collect_value_dataset(&steps, actor.as_ref(), &config.learning, &mut stream(&config, 1))?;
            write_jsonl(&out, dataset.to_records())?;
            eprintln!("wrote {} labeled prefixes to {}", dataset.len(), out.display());
            let mut manifest = Manifest::new("collect", config.hash(), config.seed);
            manifest.input(&demos)?;
            finish(manifest, &[&out], &manifest_path(&out))
        }
        Command::Train { common, dataset, epochs, out } => {
            let mut config = load_config(&common)?;
            if let Some(e) = epochs {
                config.learning.epochs = e;
            }
            config.validate()?;
            let records: Vec<DatasetRecord> = read_jsonl(&dataset)?;
            let data = ValueDataset::from_records(records)?;
            let (model, report) =
                fit_value_model::<f64, _>(&data, config.featurizer.clone(), &config.learning, &mut stream(&config, 2))?;
            write_json(&out, &model.to_checkpoint())?;
            let report_path = out.with_extension("report.json");
            write_json(&report_path, &report)?;
            eprintln!(
                "trained on {} examples ({} after upsampling), final loss {:.6}",
                report.examples_before_upsampling,
                report.examples_after_upsampling,
                report.final_loss().unwrap_or(f64::NAN)
            );
            let mut manifest = Manifest::new("train", config.hash(), config.seed);
            manifest.input(&dataset)?;
            finish(manifest, &[&out, &report_path], &manifest_path(&out))
        }
        Command::Select { common, model, input, max_len, out } => {
            let config = load_config(&common)?;
            let v = load_model(&model)?;
            let query: SelectInput = read_json(&input)?;
            let trace = select(&v, &query.task, &query.feature_set, max_len.unwrap_or(config.learning.max_len))?;
            write_json(&out, &trace)?;
            for text in trace.chosen.texts(&query.feature_set) {
                println!("{text}");
            }
            let mut manifest = Manifest::new("select", config.hash(), config.seed);
            manifest.input(&model)?;
            manifest.input(&input)?;
            finish(manifest, &[&out], &manifest_path(&out))
        }
        Command::Evaluate { common, model, episodes, workers, out_dir } => {
            let mut config = load_config(&common)?;
            if let Some(e) = episodes {
                config.evaluate.episodes = e;
            }
            if let Some(w) = workers {
                config.evaluate.workers = w;
            }
            let v = model.as_deref().map(load_model).transpose()?;
            let output = evaluate(&config, v.as_ref())?;
            std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
            let episodes_path = out_dir.join("episodes.jsonl");
            let report_path = out_dir.join("report.json");
            let table_path = out_dir.join("report.txt");
            write_jsonl(&episodes_path, &output.results)?;
            write_json(&report_path, &output.report)?;
            let table = render_table(&output.report);
            std::fs::write(&table_path, &table).with_context(|| format!("writing {}", table_path.display()))?;
            print!("{table}");
            let mut manifest = Manifest::new("evaluate", config.hash(), config.seed);
            if let Some(m) = &model {
                manifest.input(m)?;
            }
            finish(manifest, &[&episodes_path, &report_path, &table_path], &out_dir.join("manifest.json"))
        }
        Command::Ingest { common, input, out } => {
            let config = load_config(&common)?;
            let steps = ingest_external_trajectories(&input)?;
            write_jsonl(&out, &steps)?;
            eprintln!("validated {} expert steps", steps.len());
            let mut manifest = Manifest::new("ingest", config.hash(), config.seed);
            manifest.input(&input)?;
            finish(manifest, &[&out], &manifest_path(&out))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(h) = cause.downcast_ref::<HarnessError>() {
            return h.exit_code() as u8;
        }
        if cause.is::<ConfigError>() {
            return 2;
        }
        if let Some(LearningError::Config(_)) = cause.downcast_ref::<LearningError>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
