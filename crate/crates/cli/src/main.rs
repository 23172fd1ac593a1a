use clap::Parser;

fn main() {
    let cli = boundstate_cli::Cli::parse();
    std::process::exit(boundstate_cli::run(&cli));
}
