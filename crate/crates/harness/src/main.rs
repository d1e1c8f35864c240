use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use unlearn_harness::ablate::cmd_ablate;
use unlearn_harness::commands::{
    cmd_analyze, cmd_eval, cmd_gen_data, cmd_report, cmd_train, cmd_unlearn,
};
use unlearn_harness::report::{table_text, TableRow};
use unlearn_harness::{ExperimentConfig, Result};

#[derive(Parser)]
#[command(
    name = "unlearn-lab",
    version,
    about = "Shortcut-aware class unlearning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file of `section.key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set unlearn.k=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the biased train split and the balanced test split.
    GenData(Common),
    /// Train the original model.
    Train(Common),
    /// Sharpness histogram, partition composition and gradient-ascent effects.
    Analyze(Common),
    /// Unlearn the forget class with the configured method.
    Unlearn(Common),
    /// Score an unlearned model and write its report.
    Eval(Common),
    /// Run an ablation grid over seeds.
    Ablate(Common),
    /// Compare evaluated runs in one table.
    Report {
        #[command(flatten)]
        common: Common,
        /// Run directories; defaults to every evaluated run under the output.
        runs: Vec<PathBuf>,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut overrides = common.overrides.clone();
    if let Some(out) = &common.out {
        overrides.push(format!("output.dir={}", out.display()));
    }
    ExperimentConfig::load(common.config.as_deref(), &overrides)
}

fn print_rows(rows: &[TableRow]) {
    print!("{}", table_text(rows));
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(c) => {
            let cfg = load(&c)?;
            cmd_gen_data(&cfg)?;
            println!("wrote {}", cfg.output_dir.join("data").display());
        }
        Command::Train(c) => {
            let cfg = load(&c)?;
            cmd_train(&cfg)?;
            println!("wrote {}", cfg.output_dir.join("model").display());
        }
        Command::Analyze(c) => {
            let cfg = load(&c)?;
            let a = cmd_analyze(&cfg)?;
            let h = &a.histogram;
            println!(
                "mean sharpness: aligned {:.3e}, conflicting {:.3e}",
                h.aligned_mean.unwrap_or(f64::NAN),
                h.conflicting_mean.unwrap_or(f64::NAN)
            );
            for r in &a.composition {
                println!(
                    "k = {:>5}: conflicting fraction {:.4}",
                    r.k, r.conflicting_fraction
                );
            }
        }
        Command::Unlearn(c) => {
            let cfg = load(&c)?;
            let dir = cmd_unlearn(&cfg)?;
            println!("wrote {}", dir.display());
        }
        Command::Eval(c) => {
            let cfg = load(&c)?;
            let report = cmd_eval(&cfg)?;
            print_rows(&[report.row()]);
        }
        Command::Ablate(c) => {
            let cfg = load(&c)?;
            let result = cmd_ablate(&cfg)?;
            print!("{}", result.to_csv());
        }
        Command::Report { common, runs } => {
            let cfg = load(&common)?;
            print_rows(&cmd_report(&cfg, &runs)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
