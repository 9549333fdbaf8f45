use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use selftrain::cli::{
    cmd_evaluate, cmd_expand, cmd_predict, cmd_preprocess, cmd_pseudo_label, cmd_train_ensemble,
    parse_system, run_all, CliError, CliResult, OutputOptions, PipelineConfig, TrainStage,
    EXIT_USAGE, WORKDIR_ENV,
};
use selftrain::corpus::{stats_table, write_dataset, Format};
use selftrain::metrics::GroupBy;
use selftrain::synth::{SyntheticConfig, SyntheticTask};

/// Ensemble pseudo-labeling for multilingual text regression.
#[derive(Debug, Parser)]
#[command(name = "selftrain", version)]
struct Cli {
    /// Worker threads (0 = one per core). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    /// Replace existing outputs instead of refusing.
    #[arg(long, global = true)]
    force: bool,

    /// Write a header row at the top of dataset and prediction TSVs.
    #[arg(long, global = true)]
    header: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Pipeline configuration (TOML).
    #[arg(long, short)]
    config: PathBuf,

    /// Override a config key, e.g. `--set k=3 --set train_config.peak_lr=0.05`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> CliResult<PipelineConfig> {
        Ok(PipelineConfig::load(&self.config, &self.overrides)?)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Normalize texts (handles, URLs) and optionally drop short or
    /// off-whitelist records; prints per-language counts.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Apply the length and language filters.
        #[arg(long)]
        filter: bool,
        /// Optional config supplying the normalization settings.
        #[arg(long, short)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Train a k x m ensemble and keep the best candidate per split.
    TrainEnsemble {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum)]
        stage: TrainStage,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Score an unlabeled pool, filter by ensemble std and cap each cell.
    PseudoLabel {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        ensemble: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Append kept pseudo-labeled examples to the training set.
    Expand {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        kept: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Write ensemble-mean predictions as `id<TAB>prediction`.
    Predict {
        #[arg(long)]
        ensemble: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Keep predictions outside the score range as they are.
        #[arg(long)]
        no_clamp: bool,
    },
    /// Pearson correlation overall and per group; with several systems, also
    /// the ranking by pooled vs. macro-averaged correlation.
    Evaluate {
        /// Gold dataset.
        #[arg(long)]
        gold: PathBuf,
        /// Prediction files, as `name=path` or a bare path.
        #[arg(long = "predictions", required = true)]
        systems: Vec<String>,
        #[arg(long, value_enum, default_value_t = GroupBy::Language)]
        group_by: GroupBy,
        /// Directory for report files; printed only when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Every stage, end to end, with a hashed run manifest.
    RunAll {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, env = WORKDIR_ENV)]
        workdir: Option<PathBuf>,
    },
    /// Generate a synthetic multilingual task and a config to run it.
    Synth {
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        train: usize,
        #[arg(long, default_value_t = 5000)]
        unlabeled: usize,
        #[arg(long, default_value_t = 1000)]
        test: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let out = OutputOptions {
        force: cli.force,
        header: cli.header,
    };
    match cli.command {
        Command::Preprocess {
            input,
            output,
            filter,
            config,
            overrides,
        } => {
            let norm = match config {
                Some(path) => PipelineConfig::load(&path, &overrides)?.normalization,
                None if overrides.is_empty() => Default::default(),
                None => return Err(CliError::Usage("--set needs --config".into())),
            };
            let s = cmd_preprocess(&input, &output, &norm, filter, out)?;
            eprintln!("read {}, kept {}", s.read, s.kept);
            for (reason, n) in &s.dropped {
                eprintln!("dropped ({reason}): {n}");
            }
            print!("{}", stats_table(&s.stats));
        }
        Command::TrainEnsemble {
            cfg,
            stage,
            input,
            output,
        } => {
            let ens = cmd_train_ensemble(&cfg.load()?, stage, &input, &output, out)?;
            for m in &ens.members {
                println!(
                    "split {}: seed {} (validation r = {:.4})",
                    m.split, m.seed, m.validation_r
                );
            }
        }
        Command::PseudoLabel {
            cfg,
            ensemble,
            input,
            output,
        } => {
            let s = cmd_pseudo_label(&cfg.load()?, &ensemble, &input, &output, out)?;
            println!(
                "scored {}, confident {}, kept {}",
                s.scored, s.confident, s.kept
            );
        }
        Command::Expand {
            train,
            kept,
            output,
        } => {
            let ds = cmd_expand(&train, &kept, &output, out)?;
            println!("expanded set: {} examples", ds.len());
        }
        Command::Predict {
            ensemble,
            input,
            output,
            no_clamp,
        } => {
            let preds = cmd_predict(&ensemble, &input, &output, !no_clamp, out)?;
            eprintln!("wrote {} predictions", preds.len());
        }
        Command::Evaluate {
            gold,
            systems,
            group_by,
            output,
        } => {
            let systems = systems
                .iter()
                .map(|s| parse_system(s))
                .collect::<CliResult<Vec<_>>>()?;
            let eval = cmd_evaluate(&systems, &gold, group_by, output.as_deref(), out)?;
            print!("{}", eval.to_table());
        }
        Command::RunAll { cfg, workdir } => {
            let config = cfg.load()?;
            let workdir = workdir.or_else(|| config.workdir.clone()).ok_or_else(|| {
                CliError::Usage(format!("no work directory: pass --workdir, set {WORKDIR_ENV} or `workdir` in the config"))
            })?;
            run_all(&config, &workdir, out, |stage| {
                eprintln!(
                    "[{}] {} ({} file(s))",
                    stage.status,
                    stage.name,
                    stage.outputs.len()
                );
            })?;
            let report = workdir.join("evaluate/report.txt");
            if let Ok(text) = std::fs::read_to_string(&report) {
                print!("{text}");
            }
        }
        Command::Synth {
            output,
            seed,
            train,
            unlabeled,
            test,
        } => write_synthetic(&output, seed, [train, unlabeled, test], out)?,
    }
    Ok(())
}

fn write_synthetic(dir: &Path, seed: u64, sizes: [usize; 3], out: OutputOptions) -> CliResult<()> {
    let config_path = dir.join("pipeline.toml");
    if config_path.exists() && !out.force {
        return Err(CliError::Usage(format!(
            "{} already exists; pass --force",
            config_path.display()
        )));
    }
    std::fs::create_dir_all(dir).map_err(|e| selftrain::Error::io(dir, e))?;
    let task = SyntheticTask::new(SyntheticConfig {
        seed,
        ..Default::default()
    });
    let [n_train, n_unlabeled, n_test] = sizes;
    let sets = [
        ("train.tsv", task.labeled(n_train, "train-", 1)),
        ("unlabeled.tsv", task.unlabeled(n_unlabeled, "pool-", 2)),
        ("test.tsv", task.labeled(n_test, "test-", 3)),
    ];
    for (name, ds) in &sets {
        write_dataset(ds, &dir.join(name), Format::Tsv, out.header)?;
    }
    let config = "train = \"train.tsv\"\nunlabeled = \"unlabeled.tsv\"\ntest = \"test.tsv\"\nworkdir = \"run\"\n";
    std::fs::write(&config_path, config).map_err(|e| selftrain::Error::io(&config_path, e))?;
    println!("wrote {}", config_path.display());
    Ok(())
}
