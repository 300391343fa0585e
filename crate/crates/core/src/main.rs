use clap::Parser;

fn main() {
    let cli = epiplan::cli::Cli::parse();
    std::process::exit(epiplan::cli::main_with(cli));
}
