use std::fmt;

/// A failed invocation and its exit status.
#[derive(Debug)]
pub enum Failure {
    /// Malformed input: exit status 2.
    Config { field: String, reason: String },
    /// Numerical-domain problem: exit status 1.
    Domain(String),
}

impl Failure {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Failure::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn code(&self) -> u8 {
        match self {
            Failure::Config { .. } => 2,
            Failure::Domain(_) => 1,
        }
    }

    /// Attributes a library error to the config field it came from.
    pub fn from_lib(field: &str, e: armcoag::Error) -> Self {
        match e {
            armcoag::Error::InvalidArgument { name, reason } => {
                let field = match name {
                    "spec" => "model",
                    "t_end" => "t",
                    other => other,
                };
                Failure::config(field, reason)
            }
            e if e.is_config() => Failure::config(field, e.to_string()),
            armcoag::Error::Io(e) => Failure::config("out", e.to_string()),
            e => Failure::Domain(e.to_string()),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config { field, reason } => write!(f, "config error in `{field}`: {reason}"),
            Failure::Domain(msg) => write!(f, "domain error: {msg}"),
        }
    }
}
