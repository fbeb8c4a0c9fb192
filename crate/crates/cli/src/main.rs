use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = screwsim::Cli::parse();
    match screwsim::run(cli) {
        Ok(outcome) => {
            if let screwsim::Outcome::OutOfTolerance(why) = &outcome {
                eprintln!("out of tolerance: {why}");
            }
            ExitCode::from(outcome.exit_code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
