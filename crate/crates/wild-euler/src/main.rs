use clap::Parser;

use wild_euler::cli::{execute, Cli};

fn main() {
    if let Some(k) = std::env::var("WILD_EULER_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|&k| k > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("warning: WILD_EULER_THREADS ignored: {e}");
        }
    }
    let cli = Cli::parse();
    if let Err(e) = execute(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
