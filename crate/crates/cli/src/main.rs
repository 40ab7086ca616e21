//! `muon` command-line front end.

mod cli;
mod commands;
mod config;
mod io;

use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};
use serde_json::json;

use cli::Cli;
use commands::{Context, Output};
use muon_core::NsConfig;

fn version() -> String {
    let ns = NsConfig::default();
    format!(
        "{} (newton-schulz a={} b={} c={} steps={})",
        env!("CARGO_PKG_VERSION"),
        ns.a,
        ns.b,
        ns.c,
        ns.steps
    )
}

fn fail(kind: &str, message: String) -> ExitCode {
    eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let matches = match Cli::command().version(version()).try_get_matches() {
        Ok(m) => m,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.render().to_string().trim_end().to_string()),
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => return fail("usage", e.to_string()),
    };
    let result = Context::new(&cli.global)
        .map_err(|e| ("config", e))
        .and_then(|ctx| commands::run(&ctx, &cli.command).map_err(|e| ("command", e)));
    match result {
        Ok(Output::Json(v)) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("json values serialize"));
            ExitCode::SUCCESS
        }
        Ok(Output::Scalar(x)) => {
            println!("{}", json!(x));
            ExitCode::SUCCESS
        }
        Err((kind, e)) => fail(kind, format!("{e:#}")),
    }
}
