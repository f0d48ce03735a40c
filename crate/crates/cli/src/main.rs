use clap::Parser;
use dimred_cli::args::Cli;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = dimred_cli::run(&cli) {
        eprintln!("dimred: {e:#}");
        std::process::exit(1);
    }
}
