use clap::Parser;

use l2m::harness::cli::{init_threads, run, Cli};

fn main() {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    if let Err(e) = init_threads().and_then(|_| run(cli, argv)) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
