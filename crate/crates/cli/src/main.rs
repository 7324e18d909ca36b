use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};

use ambc_cli::{config::keys_help, presets::PRESETS, run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = Cli::command().after_help(keys_help()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    if cli.list_presets {
        for p in PRESETS {
            println!("{:8} {}", p.name, p.summary);
        }
        return ExitCode::SUCCESS;
    }
    match run(&cli, std::env::vars()) {
        Ok(summary) => {
            for f in &summary.files {
                println!("{}", f.display());
            }
            if !summary.low_confidence.is_empty() {
                eprintln!(
                    "warning: {} points stopped at the trial cap before the error target (listed in the manifest)",
                    summary.low_confidence.len()
                );
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
