use clap::Parser;

use ellmix_cli::args::Cli;

fn main() {
    // clap exits with code 2 on usage errors by itself.
    let cli = Cli::parse();
    let command_line = std::env::args().collect::<Vec<_>>().join(" ");
    if let Err(e) = ellmix_cli::run(cli, command_line) {
        eprintln!("error: {}", e.message);
        std::process::exit(e.code);
    }
}
