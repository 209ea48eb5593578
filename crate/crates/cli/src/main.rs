use clap::Parser;
use matern_cli::commands::{run, Cli};

fn main() {
    // clap exits with status 2 on flag errors
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    if let Err(e) = run(cli, &mut stdout.lock()) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
