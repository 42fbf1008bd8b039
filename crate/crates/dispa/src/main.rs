use clap::Parser;

fn main() {
    let cli = dispa::cli::Cli::parse();
    if let Err(e) = dispa::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
