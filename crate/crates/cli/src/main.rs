mod args;
mod commands;
mod config;
mod errors;
mod export;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use errors::{classify, Kind};

fn run(cmd: Command) -> anyhow::Result<()> {
    config::threads()?;
    let name = cmd.name();
    match cmd {
        Command::GenCorpus(a) => commands::gen_corpus(&config::merge(&a, a.common.config.as_deref(), name)?),
        Command::Preprocess(a) => commands::preprocess(&config::merge(&a, a.common.config.as_deref(), name)?),
        Command::TrainAe(a) => commands::train_ae(&config::merge(&a, a.common.config.as_deref(), name)?),
        Command::TrainDiff(a) => commands::train_diff(&config::merge(&a, a.common.config.as_deref(), name)?),
        Command::Generate(a) => commands::generate(&config::merge(&a, a.common.config.as_deref(), name)?),
        Command::Extend(a) => commands::extend(&config::merge(&a, a.common.config.as_deref(), name)?),
        Command::Blend(a) => commands::blend_cmd(&config::merge(&a, a.common.config.as_deref(), name)?),
        Command::Interp(a) => commands::interp(&config::merge(&a, a.common.config.as_deref(), name)?),
        Command::Eval(a) => {
            let mut r = config::merge(&a, a.common.config.as_deref(), name)?;
            r.study = a.study;
            commands::eval_cmd(&r)
        }
        Command::ExportAnim(a) => commands::export_anim(&config::merge(&a, a.common.config.as_deref(), name)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { Kind::Usage.exit_code() } else { 0 };
            let _ = e.print();
            if code != 0 {
                let rendered = e.render().to_string();
                let first = rendered.lines().next().unwrap_or_default();
                let msg = json_error(Kind::Usage, first.trim_start_matches("error: "));
                eprintln!("{msg}");
            }
            return ExitCode::from(code as u8);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = classify(&e);
            let message = chain_message(&e);
            eprintln!("error[{}]: {message}", kind.name());
            if kind == Kind::Usage {
                eprintln!("\nFor more information, try '--help'.");
            }
            eprintln!("{}", json_error(kind, &message));
            ExitCode::from(kind.exit_code() as u8)
        }
    }
}

/// One machine-readable line for wrappers that scrape stderr.
fn json_error(kind: Kind, message: &str) -> String {
    serde_json::json!({ "error": { "category": kind.name(), "message": message } }).to_string()
}

/// The error chain joined with `: `, skipping causes whose text the
/// previous link already spelled out.
fn chain_message(e: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if parts.last().is_some_and(|p| p.contains(&text)) {
            continue;
        }
        parts.push(text);
    }
    parts.join(": ")
}
