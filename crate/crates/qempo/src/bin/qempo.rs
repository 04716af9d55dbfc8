use clap::Parser;

fn main() {
    let cli = qempo::cli::Cli::parse();
    std::process::exit(qempo::cli::run(cli));
}
