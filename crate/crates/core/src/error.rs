use thiserror::Error;

#[derive(Debug, Error)]
pub enum GmmError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("undefined SNR: signal strength in the direction of the covariance is zero")]
    UndefinedSnr,
    #[error("not interpolable: {0}")]
    NotInterpolable(String),
    #[error("singular Gram matrix: {0}")]
    SingularGram(String),
    #[error("SVM did not converge after {sweeps} sweeps (max KKT violation {violation:e})")]
    NonConvergence { sweeps: usize, violation: f64 },
    #[error("infeasible: data are not linearly separable (dual norm {dual_norm:e})")]
    Infeasible { dual_norm: f64 },
    #[error("degenerate classifier: w^T Sigma w = 0")]
    DegenerateClassifier,
    #[error("bound requires positive correlation, got w^T eta = {0:e}")]
    NonPositiveCorrelation(f64),
    #[error("structural assumption violated: {0}")]
    StructuralMismatch(String),
    #[error("unknown figure id '{0}'")]
    UnknownFigure(String),
    #[error("curves do not share an overlapping x-range: {0}")]
    NoOverlap(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl GmmError {
    /// Short machine-readable tag, used in structured CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            GmmError::InvalidModel(_) => "invalid_model",
            GmmError::InvalidInput(_) => "invalid_input",
            GmmError::UndefinedSnr => "undefined_snr",
            GmmError::NotInterpolable(_) => "not_interpolable",
            GmmError::SingularGram(_) => "singular_gram",
            GmmError::NonConvergence { .. } => "non_convergence",
            GmmError::Infeasible { .. } => "infeasible",
            GmmError::DegenerateClassifier => "degenerate_classifier",
            GmmError::NonPositiveCorrelation(_) => "non_positive_correlation",
            GmmError::StructuralMismatch(_) => "structural_mismatch",
            GmmError::UnknownFigure(_) => "unknown_figure",
            GmmError::NoOverlap(_) => "no_overlap",
            GmmError::Io(_) => "io",
            GmmError::Json(_) => "json",
            GmmError::Csv(_) => "csv",
        }
    }

    /// True for errors caused by malformed user input rather than by a computation.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            GmmError::InvalidModel(_)
                | GmmError::InvalidInput(_)
                | GmmError::UnknownFigure(_)
                | GmmError::Json(_)
                | GmmError::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, GmmError>;
