use std::fmt;

use qep_core::QepError;

/// Process exit status for each error class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Io = 1,
    Config = 2,
    Numerical = 3,
    Structural = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Config,
            message: message.into(),
        }
    }

    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Self {
            kind: ExitKind::Io,
            message: format!("{}: {err}", path.display()),
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind as i32
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<QepError> for CliError {
    fn from(e: QepError) -> Self {
        let kind = match &e {
            QepError::Io { .. } => ExitKind::Io,
            QepError::Parse { .. } | QepError::InvalidConfig(_) | QepError::NonFinite { .. } => ExitKind::Config,
            QepError::SingularHessian { .. } | QepError::DegenerateLayer { .. } => ExitKind::Numerical,
            QepError::Dimension { .. } => ExitKind::Structural,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_class() {
        let code = |e: QepError| CliError::from(e).exit_code();
        assert_eq!(code(QepError::InvalidConfig("x".into())), 2);
        assert_eq!(code(QepError::Parse { line: 3, message: "x".into() }), 2);
        assert_eq!(code(QepError::DegenerateLayer { layer: 2 }), 3);
        assert_eq!(
            code(QepError::SingularHessian {
                layer: Some(1),
                reason: "x".into()
            }),
            3
        );
        let io = QepError::Io {
            path: "p".into(),
            source: std::io::Error::other("x"),
        };
        assert_eq!(code(io), 1);
    }

    #[test]
    fn message_keeps_layer_context() {
        let e = CliError::from(QepError::DegenerateLayer { layer: 4 });
        assert!(e.to_string().contains("layer 4"));
    }
}
