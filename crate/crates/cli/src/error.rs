use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{message}")]
    Invalid { key: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] sgrd_core::Error),
}

impl CliError {
    pub fn invalid(key: &str, message: impl Into<String>) -> Self {
        CliError::Invalid {
            key: key.to_string(),
            message: message.into(),
        }
    }

    pub fn io(path: impl std::fmt::Display, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_string(),
            source,
        }
    }

    pub fn key(&self) -> Option<&str> {
        match self {
            CliError::Invalid { key, .. } => Some(key),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Parse { .. } => "config_parse",
            CliError::Invalid { .. } => "config_invalid",
            CliError::Io { .. } => "io",
            CliError::Core(e) => match e {
                sgrd_core::Error::TooManyFailures { .. } => "realizations_failed",
                sgrd_core::Error::InvalidParameter { .. } => "invalid_parameter",
                _ => "solver",
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Invalid { .. } => 2,
            _ => 1,
        }
    }

    /// `error kind=<kind> [key=<key>] message="<text>"` on one line.
    pub fn machine_line(&self) -> String {
        let message = self
            .to_string()
            .replace('\\', "\\\\")
            .replace('"', "\\\"")
            .replace('\n', " ");
        match self.key() {
            Some(k) => format!("error kind={} key={k} message=\"{message}\"", self.kind()),
            None => format!("error kind={} message=\"{message}\"", self.kind()),
        }
    }
}
