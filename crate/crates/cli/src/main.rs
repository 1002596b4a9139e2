mod config;
mod error;
mod run;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use config::{Cli, RunConfig};
use error::CliError;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if !e.use_stderr() {
                // --help and --version
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let err = CliError::usage(e.to_string().trim_end().to_string());
            return fail(&err, std::env::args().any(|a| a == "--json-errors"));
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e, cli.json_errors),
    }
}

fn fail(e: &CliError, json: bool) -> ExitCode {
    if json {
        eprintln!("{}", e.to_json());
    } else {
        eprintln!("shrinkage: {e}");
    }
    ExitCode::from(e.kind.exit_code() as u8)
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(cli)?;
    if cli.dump_config {
        let text = serde_json::to_string_pretty(&cfg).map_err(|e| CliError::io("serializing config", e))?;
        println!("{text}");
        return Ok(());
    }
    let output = match cli.threads {
        Some(0) => return Err(CliError::usage("--threads must be positive")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::io("starting worker threads", e))?
            .install(|| run::run(&cfg))?,
        None => run::run(&cfg)?,
    };
    match &cfg.out {
        Some(path) => {
            std::fs::write(path, &output.body).map_err(|e| CliError::io(&format!("writing {}", path.display()), e))?;
            if let Some(s) = &output.summary {
                print!("{s}");
            }
        }
        None => {
            std::io::stdout()
                .write_all(output.body.as_bytes())
                .map_err(|e| CliError::io("writing output", e))?;
            if let Some(s) = &output.summary {
                eprint!("{s}");
            }
        }
    }
    Ok(())
}
