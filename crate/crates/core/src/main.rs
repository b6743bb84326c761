/*
Copyright 2026 The admm-prune Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use admm_prune::checkpoint::Checkpoint;
use admm_prune::config::RunConfig;
use admm_prune::data::{load_mnist, Split};
use admm_prune::pipeline::{self, load_data};
use admm_prune::report::{check_same_arch, Report};
use admm_prune::{Arch, Error, Result};

#[derive(Parser)]
#[command(name = "admm-prune", version, about = "ADMM weight pruning for LeNet on MNIST")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Use the reference preset for this architecture instead of a config file.
    #[arg(long, global = true)]
    arch: Option<Arch>,
    /// Overrides the configured run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Request reproducible execution.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Directory holding the MNIST IDX files.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Directory for checkpoints, logs and reports.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Train the dense baseline.
    Train {
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run ADMM from a baseline checkpoint, then hard-prune to the budgets.
    Prune {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Retrain a pruned checkpoint with its mask held fixed.
    Retrain {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the classification accuracy of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Print and save the per-layer compression table of a checkpoint.
    Report {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Baseline checkpoint; must have the same architecture.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Also evaluate test accuracy.
        #[arg(long)]
        accuracy: bool,
    },
    /// Train, prune and retrain in one go.
    Pipeline,
}

impl Cli {
    /// The run config from `--config` or `--arch`, with command-line overrides applied.
    fn run_config(&self, fallback_arch: Option<Arch>) -> Result<RunConfig> {
        let mut config = match (&self.config, self.arch.or(fallback_arch)) {
            (Some(path), _) => {
                let c = RunConfig::load(path)?;
                if let Some(a) = self.arch {
                    if a != c.arch {
                        return Err(Error::Config(format!("--arch {a} conflicts with config arch {}", c.arch)));
                    }
                }
                c
            }
            (None, Some(arch)) => RunConfig::reference(arch),
            (None, None) => return Err(Error::Config("pass --config <path> or --arch <arch>".into())),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if self.deterministic {
            config.deterministic = true;
        }
        if let Some(d) = &self.data_dir {
            config.data_dir = d.clone();
        }
        if let Some(d) = &self.output_dir {
            config.output_dir = d.clone();
        }
        config.validate()?;
        Ok(config)
    }
}

fn prepare_output(config: &RunConfig) -> Result<()> {
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    admm_prune::checkpoint::write_atomic(&dir.join(pipeline::CONFIG_FILE), config.effective()?.to_json().as_bytes())
}

fn load_for(config: &RunConfig, path: &Path) -> Result<Checkpoint> {
    let ck = Checkpoint::load(path)?;
    if ck.meta.arch != config.arch {
        return Err(Error::Input(format!(
            "{} holds a {} model but the config is for {}",
            path.display(),
            ck.meta.arch,
            config.arch
        )));
    }
    Ok(ck)
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Train { output } => {
            let config = cli.run_config(None)?;
            prepare_output(&config)?;
            let (train, test) = load_data(&config)?;
            let (model, ck) = pipeline::train_baseline(&config, &train)?;
            let out = output.clone().unwrap_or_else(|| config.output_dir.join(pipeline::BASELINE_CHECKPOINT));
            ck.save(&out)?;
            println!("baseline accuracy {:.4}, saved {}", model.evaluate(&test)?, out.display());
        }
        Command::Prune { checkpoint, output } => {
            let config = cli.run_config(None)?;
            prepare_output(&config)?;
            let input = checkpoint.clone().unwrap_or_else(|| config.output_dir.join(pipeline::BASELINE_CHECKPOINT));
            let model = load_for(&config, &input)?.model()?;
            let (train, _) = load_data(&config)?;
            let pruned = pipeline::prune(&config, model, &train, &config.output_dir.join(pipeline::ADMM_LOG))?;
            let out = output.clone().unwrap_or_else(|| config.output_dir.join(pipeline::PRUNED_CHECKPOINT));
            pruned.checkpoint.save(&out)?;
            println!(
                "ADMM {} after {} iterations, saved {}",
                if pruned.run.converged { "converged" } else { "stopped" },
                pruned.run.state.k(),
                out.display()
            );
        }
        Command::Retrain { checkpoint, output } => {
            let config = cli.run_config(None)?;
            prepare_output(&config)?;
            let input = checkpoint.clone().unwrap_or_else(|| config.output_dir.join(pipeline::PRUNED_CHECKPOINT));
            let ck = load_for(&config, &input)?;
            let mask = ck
                .mask()?
                .ok_or_else(|| Error::Input(format!("{} has no pruning mask; run prune first", input.display())))?;
            let (train, test) = load_data(&config)?;
            let (model, out_ck, _) =
                pipeline::retrain(&config, ck.model()?, &mask, &train, &config.output_dir.join(pipeline::RETRAIN_LOG))?;
            let out = output.clone().unwrap_or_else(|| config.output_dir.join(pipeline::RETRAINED_CHECKPOINT));
            out_ck.save(&out)?;
            println!("retrained accuracy {:.4}, saved {}", model.evaluate(&test)?, out.display());
        }
        Command::Eval { checkpoint, split } => {
            let ck = Checkpoint::load(checkpoint)?;
            let config = cli.run_config(Some(ck.meta.arch))?;
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            let data = load_mnist(&config.data_dir, split)?;
            println!("accuracy {:.4}", ck.model()?.evaluate(&data)?);
        }
        Command::Report {
            checkpoint,
            baseline,
            accuracy,
        } => {
            let ck = Checkpoint::load(checkpoint)?;
            let config = cli.run_config(Some(ck.meta.arch))?;
            let model = ck.model()?;
            let base = baseline
                .as_ref()
                .map(|p| Checkpoint::load(p).and_then(|c| c.model()))
                .transpose()?;
            if let Some(b) = &base {
                check_same_arch(b, &model)?;
            }
            let mut report = Report::from_model(&model)?;
            if *accuracy {
                let (_, test) = load_data(&config)?;
                let base_acc = base.as_ref().map(|b| b.evaluate(&test)).transpose()?;
                report = report.with_accuracy(base_acc, model.evaluate(&test)?);
            }
            let dir = &config.output_dir;
            fs::create_dir_all(dir).map_err(|e| Error::Io {
                path: dir.clone(),
                source: e,
            })?;
            admm_prune::checkpoint::write_atomic(&dir.join(pipeline::REPORT_TEXT), report.to_text().as_bytes())?;
            admm_prune::checkpoint::write_atomic(&dir.join(pipeline::REPORT_CSV), report.to_csv().as_bytes())?;
            print!("{}", report.to_text());
        }
        Command::Pipeline => {
            let config = cli.run_config(None)?;
            let (train, test) = load_data(&config)?;
            let run = pipeline::run_pipeline(&config, &train, &test)?;
            print!("{}", run.report.to_text());
            let s = &run.summary;
            println!(
                "ADMM iterations {} ({}), compute ratio {:.2}, outputs in {}",
                s.admm_iterations,
                if s.admm_converged { "converged" } else { "not converged" },
                s.compute_ratio,
                run.output_dir.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if !e.use_stderr() {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            eprintln!("{}", text.lines().next().unwrap_or("error: invalid arguments"));
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
