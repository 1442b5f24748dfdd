//! CLI failure type mapping every error onto the two exit codes: bad input
//! (1) and failed computation (2).

/// A command failure with its exit code baked in.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration, flags, or input files — exit code 1.
    Config(String),
    /// A numerical method or artifact write failed — exit code 2.
    Solver(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn solver(msg: impl Into<String>) -> Self {
        CliError::Solver(msg.into())
    }

    #[must_use]
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Solver(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Solver(m) => write!(f, "solver error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<glpin_core::Error> for CliError {
    fn from(e: glpin_core::Error) -> Self {
        if e.is_validation() {
            CliError::Config(e.to_string())
        } else {
            CliError::Solver(e.to_string())
        }
    }
}
