use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use relaxed_switch_cli::{parse_manifest, run, table1, write_table1, CliError};

#[derive(Parser)]
#[command(
    name = "relaxed-switch",
    version,
    about = "Optimal control of switched systems by relaxed-control descent"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the problem described by a manifest and write CSV outputs.
    Run {
        manifest: PathBuf,
        /// Output directory (overrides [output].dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the double-tank (dt, iterations) sweep.
    Table1 {
        /// Manifest supplying model overrides and Armijo constants.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Directory for table1.csv.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Solve the four rows concurrently (skews the timing column).
        #[arg(long)]
        parallel: bool,
    },
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Run { manifest, out } => {
            let m = parse_manifest(&manifest)?;
            let report = run(&m, out.as_deref())?;
            print!("{report}");
            Ok(match report.status {
                relaxed_switch::SolveStatus::StepFailure { .. } => 3,
                _ => 0,
            })
        }
        Command::Table1 {
            manifest,
            out,
            parallel,
        } => {
            let base = manifest.as_deref().map(parse_manifest).transpose()?;
            let rows = table1(base.as_ref(), parallel)?;
            println!(
                "{:>6} {:>5} {:>12} {:>12} {:>10}",
                "dt", "k", "J(v1)", "J(vk)", "wall ms"
            );
            for r in &rows {
                println!(
                    "{:>6} {:>5} {:>12.4} {:>12.4} {:>10.1}",
                    r.dt, r.iters, r.initial_cost, r.final_cost, r.wall_ms
                );
            }
            std::fs::create_dir_all(&out).map_err(|e| CliError::Io {
                path: out.clone(),
                source: e,
            })?;
            let path = out.join("table1.csv");
            let file = std::fs::File::create(&path)
                .and_then(|f| write_table1(&rows, std::io::BufWriter::new(f)))
                .map_err(|e| CliError::Io { path, source: e });
            file?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
