use std::process::ExitCode;

use tickhawkes::Error;

fn main() -> ExitCode {
    match tickhawkes::cli::main_with_args(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        // A reader such as `head` closed the pipe; nothing is left to report.
        Err(Error::Io { source, .. }) if source.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
