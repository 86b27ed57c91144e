use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let result = trrgen::cli::run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock());
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            let _ = writeln!(stderr.lock(), "error[{}]: {msg}", e.kind());
            ExitCode::from(if e.kind() == "usage" { 2 } else { 1 })
        }
    }
}
