//! Command-line front end: dataset ingestion, embedding, rendering,
//! animation and benchmarking.

pub mod args;
pub mod bench;
pub mod commands;
pub mod ingest;

use anyhow::Result;

use args::{Cli, Command};

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Embed(a) => commands::run_embed(a),
        Command::Render(a) => commands::run_render(a),
        Command::Animate(a) => commands::run_animate(a),
        Command::Morph(a) => commands::run_morph(a),
        Command::Knn(a) => commands::run_knn(a),
        Command::Bench(a) => bench::run_bench(a),
    }
}
