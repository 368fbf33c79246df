use chaoslab_cli::Cli;
use clap::Parser;

fn main() {
    let cli = Cli::parse();
    std::process::exit(chaoslab_cli::run(&cli));
}
