use std::process::ExitCode;

use serde::Serialize;

#[derive(Debug)]
pub enum CliError {
    /// Bad command line.
    Usage(String),
    /// Config failed schema or constraint checks; one entry per field.
    Config(Vec<String>),
    Core(hsq_core::Error),
    Io(String),
    /// Stdout closed early (e.g. piped into `head`); not an error for the user.
    ClosedPipe,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    violations: Vec<String>,
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Core(_) => "runtime",
            CliError::Io(_) | CliError::ClosedPipe => "io",
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Core(_) | CliError::Io(_) => 1,
            CliError::ClosedPipe => 0,
        }
    }

    /// Print a JSON error object on stderr and return the exit code.
    pub fn report(&self) -> ExitCode {
        if matches!(self, CliError::ClosedPipe) {
            return ExitCode::SUCCESS;
        }
        let (message, violations) = match self {
            CliError::Usage(m) | CliError::Io(m) => (m.clone(), Vec::new()),
            CliError::Config(v) => (format!("{} config violation(s)", v.len()), v.clone()),
            CliError::Core(e) => (e.to_string(), Vec::new()),
            CliError::ClosedPipe => (String::new(), Vec::new()),
        };
        let report = ErrorReport {
            error: self.kind(),
            message,
            violations,
        };
        eprintln!("{}", serde_json::to_string(&report).expect("error report serializes"));
        ExitCode::from(self.exit_code())
    }
}

impl From<hsq_core::Error> for CliError {
    fn from(e: hsq_core::Error) -> Self {
        match e {
            hsq_core::Error::InvalidConfig(m) => CliError::Config(m.split("; ").map(str::to_string).collect()),
            other => CliError::Core(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            return CliError::ClosedPipe;
        }
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            if let csv::ErrorKind::Io(io) = e.into_kind() {
                return io.into();
            }
            unreachable!("is_io_error implies ErrorKind::Io");
        }
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;
