use std::io::Write;
use std::process::ExitCode;

use hardyline_cli::{dispatch, Status};

fn main() -> ExitCode {
    let out = dispatch(std::env::args_os());
    // a closed pipe downstream is not an error of ours
    if let Some(doc) = &out.result {
        let text = serde_json::to_string_pretty(doc).expect("result document serializes");
        let _ = writeln!(std::io::stdout().lock(), "{text}");
    }
    if let Some(msg) = &out.message {
        if out.status == Status::Ok && out.result.is_none() {
            let _ = write!(std::io::stdout().lock(), "{msg}");
        } else {
            let _ = writeln!(std::io::stderr().lock(), "{msg}");
        }
    }
    ExitCode::from(out.status.code() as u8)
}
