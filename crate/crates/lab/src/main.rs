use clap::Parser;
use storage_scaling_lab::cli::{run, Cli};
use storage_scaling_lab::LabError;

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        match &e {
            LabError::Core(inner) => eprintln!("error[{}]: {e}", inner.kind()),
            _ => eprintln!("error: {e}"),
        }
        std::process::exit(e.exit_code());
    }
}
