use clap::Parser;
use tpivot_cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        log::debug!("{:?}", e.error);
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
