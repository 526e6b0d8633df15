use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use discalign_cli::{LoadedConfig, Pipeline, Stage, StageStatus};

/// Label-embedding training, evaluation and cross-framework relation mapping.
///
/// Pretrained encoder checkpoints are looked up in $DISCALIGN_CHECKPOINT_DIR.
/// Exit status: 0 on success, 1 for invalid input, 2 for runtime failures.
#[derive(Parser)]
#[command(name = "discalign", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Run directory; each stage writes into its own subdirectory.
    #[arg(long)]
    out: PathBuf,
    /// Override the configured seeds, e.g. `--seeds 1,2,3`.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Rerun stages even when their manifests are up to date.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build train/dev/test splits for every configured framework.
    Ingest(Common),
    /// Train the configured model, variants and baselines for every seed.
    Train(Common),
    /// Re-evaluate trained models and write correlation matrices.
    Evaluate(Common),
    /// Compare label embeddings across frameworks and derive a relabeling map.
    Map(Common),
    /// Relabel the source framework's data into the target taxonomy.
    Relabel(Common),
    /// Ensemble evaluation on the target framework with and without relabeled data.
    Extrinsic(Common),
    /// Render tables and figures from finished stages.
    Report(Common),
    /// Run several stages in dependency order (all configured stages by default).
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', value_enum)]
        stages: Option<Vec<Stage>>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (common, stages) = match cli.command {
        Command::Ingest(c) => (c, Some(vec![Stage::Ingest])),
        Command::Train(c) => (c, Some(vec![Stage::Train])),
        Command::Evaluate(c) => (c, Some(vec![Stage::Evaluate])),
        Command::Map(c) => (c, Some(vec![Stage::Map])),
        Command::Relabel(c) => (c, Some(vec![Stage::Relabel])),
        Command::Extrinsic(c) => (c, Some(vec![Stage::Extrinsic])),
        Command::Report(c) => (c, Some(vec![Stage::Report])),
        Command::Run { common, stages } => (common, stages),
    };
    let result = LoadedConfig::load(&common.config, common.seeds).and_then(|cfg| {
        let mut pipeline = Pipeline::new(cfg, &common.out);
        pipeline.force = common.force;
        pipeline.run(stages.as_deref())
    });
    match result {
        Ok(done) => {
            for (stage, status) in done {
                let what = match status {
                    StageStatus::Ran => "done",
                    StageStatus::Skipped => "up to date",
                };
                println!("{stage}: {what}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
