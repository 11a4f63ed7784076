use std::io::{self, BufWriter, Write};
use std::process::ExitCode;

fn main() -> ExitCode {
    let mut out = BufWriter::new(io::stdout().lock());
    // Buffered so that `--trace` does not pay a syscall per step.
    let mut err = BufWriter::new(io::stderr().lock());
    let code = wasmlite::cli::main_with(std::env::args_os(), &mut out, &mut err);
    let _ = out.flush();
    let _ = err.flush();
    ExitCode::from(code.code())
}
