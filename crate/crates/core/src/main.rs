use clap::Parser;

fn main() {
    std::process::exit(hisd::cli::execute(hisd::cli::Cli::parse()));
}
