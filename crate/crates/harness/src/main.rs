use clap::Parser;

use aoi_harness::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("aoi: {e}");
        std::process::exit(e.exit_code());
    }
}
