//! Error classification, exit codes and the error JSON on stderr.

use std::path::PathBuf;
use std::process::ExitCode;

use serde_json::json;

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;

/// An input file that could not be opened.
#[derive(Debug, thiserror::Error)]
#[error("cannot open {}", path.display())]
pub struct InputFile {
    pub path: PathBuf,
    #[source]
    pub source: std::io::Error,
}

/// Invalid flag combination or value.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct Usage(pub String);

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// Error kind and exit code for `err`.
pub fn classify(err: &anyhow::Error) -> (&'static str, u8) {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<nbcl::Error>() {
            let code = match e {
                nbcl::Error::TooFewDraws { .. } => EXIT_USAGE,
                e if e.is_input_error() => EXIT_USAGE,
                _ => EXIT_FAILURE,
            };
            return (e.kind(), code);
        }
        if let Some(e) = cause.downcast_ref::<InputFile>() {
            let kind = match e.source.kind() {
                std::io::ErrorKind::NotFound => "FileNotFound",
                std::io::ErrorKind::PermissionDenied => "PermissionDenied",
                _ => "Io",
            };
            return (kind, EXIT_USAGE);
        }
        if cause.is::<Usage>() {
            return ("Usage", EXIT_USAGE);
        }
        if cause.is::<serde_json::Error>() {
            return ("InvalidConfig", EXIT_USAGE);
        }
    }
    ("Io", EXIT_FAILURE)
}

/// Writes `{"error": {"kind", "message"}}` to stderr and returns the exit code.
pub fn report(err: &anyhow::Error) -> ExitCode {
    let (kind, code) = classify(err);
    let mut message = format!("{err:#}");
    if kind == "TooFewDraws" {
        message.push_str("; raise -B/--bootstrap or request a lower --level");
    }
    let body = json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{body}");
    ExitCode::from(code)
}
