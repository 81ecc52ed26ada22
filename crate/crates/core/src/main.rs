use clap::Parser;

use blbf::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("blbf: {e}");
        std::process::exit(e.exit_code());
    }
}
