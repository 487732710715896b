use std::path::PathBuf;
use std::process::ExitCode;

use cfu_cli::{cmd_exp1, cmd_exp2, cmd_score, cmd_train, with_thread_cap, CliError, ExperimentConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cfu", version, about = "Counterfactual explanations with uncertainty and trust scores")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Top-level seed (overrides `seed` in the config).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the classifier and report accuracy.
    Train(Common),
    /// Score in-distribution and shifted test sets; rank tests on the scores.
    Exp1(Common),
    /// Explain misclassified test rows with each counterfactual method.
    Exp2(Common),
    /// Score the rows of a CSV file.
    Score {
        #[command(flatten)]
        common: Common,
        /// CSV of feature rows with a header; a `label` column is ignored.
        #[arg(long)]
        instances: PathBuf,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg.resolve())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(c) => {
            let cfg = load(&c)?;
            let m = with_thread_cap(|| cmd_train(&cfg))??;
            println!("train accuracy {:.4}, test accuracy {:.4}", m.train_accuracy, m.test_accuracy);
        }
        Command::Exp1(c) => {
            let cfg = load(&c)?;
            let s = with_thread_cap(|| cmd_exp1(&cfg))??;
            println!(
                "trust in {:.4} vs ood {:.4}, wilcoxon p {:.3e}; spearman(mc_mean, trust) {}",
                s.in_distribution.trust,
                s.ood.trust,
                s.wilcoxon_trust.p,
                s.spearman_mc_mean_trust.map_or("undefined".into(), |r| format!("{r:.4}"))
            );
        }
        Command::Exp2(c) => {
            let cfg = load(&c)?;
            let s = with_thread_cap(|| cmd_exp2(&cfg))??;
            if let Some(notice) = &s.notice {
                println!("{notice}");
            }
            for row in &s.table {
                println!(
                    "{:8} valid {:>3}/{:<3} mc_mean {:.3} mc_std {:.3} trust {:.3}",
                    row.method.name(),
                    row.valid,
                    row.queries,
                    row.mc_mean,
                    row.mc_std,
                    row.trust
                );
            }
        }
        Command::Score { common, instances } => {
            let cfg = load(&common)?;
            let rows = with_thread_cap(|| cmd_score(&cfg, &instances))??;
            println!("scored {} rows", rows.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
