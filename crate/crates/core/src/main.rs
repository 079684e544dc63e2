use clap::Parser;

use weyl_tensor::cli::{exit_code, run, Cli, JobSpec, EXIT_USAGE};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            std::process::exit(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let status = JobSpec::from_cli(&cli).and_then(|job| run(&job)).unwrap_or_else(|e| {
        eprintln!("weyl-tensor: {e}");
        exit_code(&e)
    });
    std::process::exit(status);
}
