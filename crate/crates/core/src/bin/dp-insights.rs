use clap::Parser;

fn main() {
    let cli = dp_insights::cli::Cli::parse();
    std::process::exit(dp_insights::cli::main_with(cli));
}
