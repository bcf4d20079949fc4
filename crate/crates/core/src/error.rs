use thiserror::Error;

pub type Result<T> = std::result::Result<T, QepError>;

#[derive(Debug, Error)]
pub enum QepError {
    #[error("dimension mismatch in {op}: expected {expected}, found {found}")]
    Dimension {
        op: &'static str,
        expected: String,
        found: String,
    },

    #[error("singular Hessian{}: {reason}", layer_suffix(*.layer))]
    SingularHessian { layer: Option<usize>, reason: String },

    #[error("layer {layer} has zero spectral norm")]
    DegenerateLayer { layer: usize },

    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn layer_suffix(layer: Option<usize>) -> String {
    match layer {
        Some(l) => format!(" at layer {l}"),
        None => String::new(),
    }
}

impl QepError {
    pub(crate) fn dim(op: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        QepError::Dimension {
            op,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn singular(reason: impl Into<String>) -> Self {
        QepError::SingularHessian {
            layer: None,
            reason: reason.into(),
        }
    }

    /// Attaches a (1-based) layer index to a singular-Hessian error.
    pub fn at_layer(self, index: usize) -> Self {
        match self {
            QepError::SingularHessian { reason, .. } => QepError::SingularHessian {
                layer: Some(index),
                reason,
            },
            other => other,
        }
    }
}
