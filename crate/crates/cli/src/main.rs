use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cookielab::checks::SuiteSizes;
use cookielab::commands::{self, Overrides};
use cookielab::config::Format;
use cookielab::error::CliError;

#[derive(Parser)]
#[command(
    name = "cookielab",
    version,
    about = "Excited random walk simulator and theory checks"
)]
struct Cli {
    /// TOML run configuration (defaults when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0: all cores); overrides the config.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Single output format for stats files; overrides the config.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the model conditions and print the constants.
    Validate,
    /// Run the replica ensemble and write stats, blocks and a manifest.
    Simulate,
    /// Compute estimator reports and plot data from simulation outputs.
    Analyze,
    /// Run the theory-check suite.
    Checks {
        /// Small ensembles for a quick smoke run.
        #[arg(long)]
        quick: bool,
    },
    /// Print the default configuration.
    PrintDefaults,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let ov = Overrides {
        seed: cli.seed,
        threads: cli.threads,
        out: cli.out.clone(),
        format: cli.format,
    };
    match cli.command {
        Command::PrintDefaults => print!("{}", commands::cmd_print_defaults()),
        Command::Validate => {
            let cfg = commands::resolve_config(cli.config.as_deref(), &ov)?;
            print!("{}", commands::cmd_validate(&cfg)?);
        }
        Command::Simulate => {
            let cfg = commands::resolve_config(cli.config.as_deref(), &ov)?;
            let out = commands::cmd_simulate(&cfg)?;
            println!(
                "wrote {} files to {} in {:.2}s",
                out.written.len(),
                cfg.output.dir.display(),
                out.manifest.wall_clock_seconds
            );
        }
        Command::Analyze => {
            let cfg = commands::resolve_config(cli.config.as_deref(), &ov)?;
            let art = commands::cmd_analyze(&cfg, &cfg.output.dir)?;
            println!(
                "wrote {} reports to {}",
                art.hashes().len(),
                cfg.output.dir.display()
            );
        }
        Command::Checks { quick } => {
            let cfg = commands::resolve_config(cli.config.as_deref(), &ov)?;
            let sizes = if quick {
                SuiteSizes::quick()
            } else {
                SuiteSizes::full()
            };
            let outcome = commands::cmd_checks(
                cfg.run.master_seed,
                cfg.run.threads,
                &sizes,
                &cfg.output.dir,
            )?;
            print!("{}", commands::checks_summary(&outcome));
            if !outcome.all_passed() {
                return Err(CliError::Condition("some checks failed".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
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
