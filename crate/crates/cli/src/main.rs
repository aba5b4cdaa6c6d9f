use std::process::ExitCode;

use wavestyle_cli::{parse_args, run, ArgsError};

fn main() -> ExitCode {
    let config = match parse_args(std::env::args_os()) {
        Ok(config) => config,
        Err(ArgsError::Usage(e)) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
        Err(e) => {
            eprintln!("error [config]: {e}");
            return ExitCode::from(1);
        }
    };
    match run(&config, &mut std::io::stderr()) {
        Ok(outcome) => {
            println!(
                "wrote {} files to {}",
                outcome.manifest.outputs.len(),
                outcome.output_dir.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error [{}]: {:#}", e.stage, e.source);
            ExitCode::from(1)
        }
    }
}
