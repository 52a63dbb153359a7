use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    match triage_service::cli::run(std::env::args_os(), &|k| std::env::var(k).ok()) {
        Ok(out) => {
            if !out.stdout.is_empty() {
                let _ = writeln!(std::io::stdout().lock(), "{}", out.stdout);
            }
            ExitCode::from(out.code as u8)
        }
        Err(triage_service::cli::CliError::Usage(msg)) => {
            eprint!("{msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
