use clap::Parser;

use planfab_cli::{dispatch, exit_code, Cli};

fn main() {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    if let Err(e) = dispatch(&cli, &mut out) {
        eprintln!("error: {e:#}");
        std::process::exit(exit_code(&e));
    }
}
