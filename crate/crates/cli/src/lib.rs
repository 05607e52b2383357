//! Command-line front end: argument parsing, dispatch and the JSON result document.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::time::Instant;

use clap::{CommandFactory, Parser};
use serde::{Deserialize, Serialize};
use serde_json::Value;

mod args;
mod commands;
mod table;

pub use args::{Cli, Command};

/// Schema tag carried in every result document.
pub const VERSION: &str = concat!("hardyline/", env!("CARGO_PKG_VERSION"), "; schema 1");

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// A negative verdict or a failed margin.
    Negative,
    InvalidInput,
    NotConverged,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Negative => 1,
            Status::InvalidInput => 2,
            Status::NotConverged => 3,
        }
    }

    fn of_error(e: &hardyline::Error) -> Self {
        use hardyline::Error::*;
        match e {
            NotConverged { .. } | Inconclusive { .. } | IllConditioned(_) => Status::NotConverged,
            NotFound(_) => Status::Negative,
            _ => Status::InvalidInput,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub runtime_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scanned_to: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
}

/// One invocation's output document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandResult {
    pub command: String,
    pub params: BTreeMap<String, Value>,
    pub result: Value,
    pub diagnostics: Diagnostics,
    pub version: String,
}

#[derive(Debug)]
pub struct Dispatch {
    /// Absent when the arguments did not name a command.
    pub result: Option<CommandResult>,
    pub status: Status,
    /// Help, version or usage text.
    pub message: Option<String>,
}

pub fn dispatch<I, T>(argv: I) -> Dispatch
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let status = if e.use_stderr() { Status::InvalidInput } else { Status::Ok };
            return Dispatch {
                result: None,
                status,
                message: Some(e.render().to_string()),
            };
        }
    };
    let name = commands::name(&cli.command);
    let start = Instant::now();
    let run = hardyline::verify::with_jobs(cli.jobs, || commands::run(&cli.command)).and_then(|r| r);
    let elapsed = start.elapsed().as_millis() as u64;
    match run {
        Ok(out) => Dispatch {
            result: Some(CommandResult {
                command: name.into(),
                params: commands::params(&cli.command),
                result: out.result,
                diagnostics: Diagnostics {
                    runtime_ms: elapsed,
                    scanned_to: out.scanned_to,
                    converged: out.converged,
                },
                version: VERSION.into(),
            }),
            status: out.status,
            message: None,
        },
        Err(e) => {
            let status = Status::of_error(&e);
            let mut message = format!("error: {e}");
            if status == Status::InvalidInput {
                let mut cmd = Cli::command();
                cmd.build();
                let usage = cmd
                    .find_subcommand_mut(name)
                    .map(|c| c.render_usage())
                    .unwrap_or_else(|| Cli::command().render_usage());
                message = format!("{message}\n\n{usage}");
            }
            Dispatch {
                result: Some(CommandResult {
                    command: name.into(),
                    params: commands::params(&cli.command),
                    result: serde_json::json!({ "error": e.to_string() }),
                    diagnostics: Diagnostics {
                        runtime_ms: elapsed,
                        ..Diagnostics::default()
                    },
                    version: VERSION.into(),
                }),
                status,
                message: Some(message),
            }
        }
    }
}
