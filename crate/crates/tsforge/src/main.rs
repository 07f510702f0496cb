use clap::Parser;

fn main() {
    let cli = tsforge::cli::Cli::parse();
    if let Err(e) = tsforge::cli::execute(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
