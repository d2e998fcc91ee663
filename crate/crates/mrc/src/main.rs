use clap::Parser;

fn main() {
    let cli = mrc::commands::Cli::parse();
    if let Err(e) = mrc::commands::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
