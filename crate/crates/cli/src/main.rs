//! `hscls`: exit status 0 on success, 2 on usage or configuration errors,
//! 1 on runtime failures.

mod archconfig;
mod args;
mod commands;
mod settings;

use clap::Parser;

fn main() {
    let cli = args::Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(err) = commands::run(&cli) {
        eprintln!("error: {err:#}");
        std::process::exit(settings::exit_code(&err));
    }
}
