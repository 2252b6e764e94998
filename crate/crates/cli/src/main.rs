use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fieldlab::{
    analyze, check_exterior, constraints, failure_report, integrate_cmd, is_input_error, load_theory_file,
    parse_initial_conditions, ConstraintArgs, FormalismChoice, Report,
};
use fieldlab_core::{Error, Result};
use serde_json::json;

#[derive(Parser)]
#[command(name = "fieldlab", version, about = "Constraint analysis for first-order field theories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Regularity, multisymplectic and pullback checks.
    Analyze {
        theory: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run the constraint algorithm.
    Constraints {
        theory: String,
        #[arg(long, default_value = "all")]
        formalism: FormalismChoice,
        #[arg(long, default_value_t = ConstraintArgs::default().max_steps)]
        max_steps: usize,
        #[arg(long, default_value_t = ConstraintArgs::default().samples)]
        samples: usize,
        #[arg(long, default_value_t = ConstraintArgs::default().tol)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Integrate the dynamics of a mechanical (n = 1) theory.
    Integrate {
        theory: String,
        #[arg(long)]
        ic: PathBuf,
        #[arg(long)]
        horizon: f64,
        #[arg(long, allow_negative_numbers = true)]
        step: f64,
    },
    /// Property suites of the exterior-calculus kernel.
    CheckExterior {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cmd: Command) -> (String, Result<Report>) {
    match cmd {
        Command::Analyze { theory, seed, report } => {
            let out = load_theory_file(&theory).and_then(|f| analyze(&f, seed));
            if let (Some(path), Ok(r)) = (report, &out) {
                if let Err(e) = std::fs::write(&path, r.to_json() + "\n") {
                    return ("analyze".into(), Err(Error::Io(e)));
                }
            }
            ("analyze".into(), out)
        }
        Command::Constraints { theory, formalism, max_steps, samples, tol, seed } => {
            let args = ConstraintArgs { formalism, max_steps, samples, tol, seed };
            ("constraints".into(), load_theory_file(&theory).and_then(|f| constraints(&f, &args)))
        }
        Command::Integrate { theory, ic, horizon, step } => {
            let out = load_theory_file(&theory).and_then(|f| {
                let text = std::fs::read_to_string(&ic)?;
                integrate_cmd(&f, &parse_initial_conditions(&text)?, horizon, step)
            });
            ("integrate".into(), out)
        }
        Command::CheckExterior { trials, seed } => ("check-exterior".into(), check_exterior(trials, seed)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, out) = run(cli.command);
    match out {
        Ok(report) => {
            println!("{}", report.to_json());
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) if is_input_error(&e) => {
            eprintln!("fieldlab {name}: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            println!("{}", failure_report(&name, json!({ "command": name }), &e).to_json());
            eprintln!("fieldlab {name}: {e}");
            ExitCode::from(1)
        }
    }
}
