use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use contact_cli::batch::{batch_exit_code, load, run_files};
use contact_cli::{exit, parse_expression, run_scenario, RunOptions};

#[derive(Parser)]
#[command(name = "contact", version, about = "Run and verify contact Hamiltonian scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate scenarios and write trajectory, report and plots.
    Run {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Base output directory; each scenario writes to <DIR>/<name>/.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Seed for randomly sampled verification points.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the diagnostics of one scenario and print the report.
    Verify {
        file: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Parse an expression and print its value and derivative.
    Expr {
        text: String,
        #[arg(long, default_value = "q")]
        var: String,
        #[arg(long)]
        at: f64,
    },
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { files, out, seed } => {
            let results = run_files(&files, Some(&out), RunOptions { seed });
            for r in &results {
                match &r.outcome {
                    Ok((_, summary)) => print!("{summary}"),
                    Err(e) => eprintln!("{}: {e}", r.path.display()),
                }
            }
            code(batch_exit_code(&results))
        }
        Command::Verify { file, seed } => {
            let result = load(&file).and_then(|cfg| run_scenario(&cfg, RunOptions { seed }));
            match result {
                Ok(outcome) => {
                    print!("{}", outcome.report.to_toml());
                    eprint!("{}", outcome.report.summary());
                    code(if outcome.pass() { exit::SUCCESS } else { exit::VERIFICATION_FAILED })
                }
                Err(e) => {
                    eprintln!("{}: {e}", file.display());
                    code(e.exit_code())
                }
            }
        }
        Command::Expr { text, var, at } => match parse_expression(&text, &var) {
            Ok(expr) => {
                let derivative = expr.derivative();
                match (expr.eval(at), derivative.eval(at)) {
                    (Ok(v), Ok(d)) => {
                        println!("expression = {expr}");
                        println!("derivative = {derivative}");
                        println!("value({var} = {at}) = {v}");
                        println!("slope({var} = {at}) = {d}");
                        code(exit::SUCCESS)
                    }
                    (Err(e), _) | (_, Err(e)) => {
                        eprintln!("{e}");
                        code(exit::CONFIG)
                    }
                }
            }
            Err(e) => {
                eprintln!("{e}");
                code(exit::CONFIG)
            }
        },
    }
}
