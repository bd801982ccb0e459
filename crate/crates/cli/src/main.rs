//! `dwi-precision`: precision limits of diffusion-weighted measurements of
//! the restriction length.

use std::process::ExitCode;

use clap::Command;

mod commands;
mod config;

use commands::{bound, map, mc, optimize, signal};
use config::UsageError;

fn cli() -> Command {
    Command::new("dwi-precision")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Cramer-Rao precision limits for restricted-diffusion length measurements")
        .after_help(
            "Quantities need a unit suffix: lengths um|m, times ms|s, gradients mT/m|T/m|G/cm, \
             diffusivities cm2/s|m2/s. Every keyed subcommand also reads `--config FILE`.\n\
             Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.",
        )
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(bound::command())
        .subcommand(signal::command())
        .subcommand(optimize::command())
        .subcommand(map::command())
        .subcommand(mc::command())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<dwi_precision::Error>() {
            return if e.is_numerical() { 3 } else { 2 };
        }
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match matches.subcommand() {
        Some(("bound", m)) => bound::run(m),
        Some(("signal", m)) => signal::run(m),
        Some(("optimize", m)) => optimize::run(m),
        Some(("map", m)) => map::run(m),
        Some(("mc", m)) => mc::run(m),
        _ => unreachable!("subcommand_required"),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
