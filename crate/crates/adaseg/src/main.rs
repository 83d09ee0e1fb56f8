use clap::Parser;

fn main() {
    let cli = adaseg::cli::Cli::parse();
    if let Err(err) = adaseg::cli::run(cli) {
        eprintln!("error: {err}");
        std::process::exit(1);
    }
}
