#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod run;

use std::process::ExitCode;

use clap::Parser;

use config::Settings;
use run::{Failure, Status};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Settings::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let settings = match Settings::load(cli) {
        Ok(s) => s,
        Err(e) => {
            log::error!("configuration error: {e}");
            return ExitCode::from(1);
        }
    };
    match run::run(&settings) {
        Ok(Status::Complete) => ExitCode::SUCCESS,
        Ok(Status::Partial) => {
            log::warn!("finished with infeasible or failed cells");
            ExitCode::from(2)
        }
        Err(e @ (Failure::Config(_) | Failure::Runtime(_))) => {
            log::error!("{e}");
            ExitCode::from(1)
        }
    }
}
