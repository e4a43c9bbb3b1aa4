use clap::Parser;

fn main() {
    let cli = polywave::cli::Cli::parse();
    std::process::exit(polywave::cli::run(cli));
}
