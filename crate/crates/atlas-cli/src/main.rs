use clap::Parser;

use atlas_cli::{classify_error, resolve_config, run_command, Cli, ExitCode};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not usage errors.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::Ok,
                _ => ExitCode::Usage,
            };
            let _ = e.print();
            std::process::exit(code as i32);
        }
    };
    let config = match resolve_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(ExitCode::Usage as i32);
        }
    };
    if let Err(e) = run_command(cli.command, &config) {
        eprintln!("error: {e:#}");
        std::process::exit(classify_error(&e) as i32);
    }
}
