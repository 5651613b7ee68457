use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    let result = clm_cli::run(std::env::args_os());
    if let Some(p) = &result.payload {
        let mut out = std::io::stdout().lock();
        if out.write_all(p.as_bytes()).and_then(|_| out.flush()).is_err() {
            return ExitCode::from(2);
        }
    }
    for d in &result.diagnostics {
        eprintln!("{d}");
    }
    ExitCode::from(result.exit_code as u8)
}
