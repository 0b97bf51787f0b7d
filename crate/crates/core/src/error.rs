use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("newick syntax error at byte {position}: {message}")]
    Syntax { position: usize, message: String },

    #[error("duplicate tip label `{0}`")]
    DuplicateLabel(String),

    #[error("negative branch length {length} on edge above `{node}`")]
    NegativeBranchLength { node: String, length: f64 },

    #[error("missing branch length on edge above `{0}`")]
    MissingBranchLength(String),

    #[error("unknown tip label `{0}`")]
    UnknownLabel(String),

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("singular covariance: {0}")]
    SingularCovariance(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("design matrix is rank deficient (column {column})")]
    RankDeficient { column: usize },

    #[error("not enough observations: n = {n}, need more than {required}")]
    InsufficientData { n: usize, required: usize },

    #[error("degenerate likelihood: {0}")]
    DegenerateLikelihood(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("search budget exceeded: {required} subsets > budget {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("trait table: {0}")]
    TraitTable(String),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    /// Short machine-readable code for structured error reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Syntax { .. } => "newick_syntax",
            Error::DuplicateLabel(_) => "duplicate_label",
            Error::NegativeBranchLength { .. } => "negative_branch_length",
            Error::MissingBranchLength(_) => "missing_branch_length",
            Error::UnknownLabel(_) => "unknown_label",
            Error::UnknownNode(_) => "unknown_node",
            Error::InvalidTree(_) => "invalid_tree",
            Error::SingularCovariance(_) => "singular_covariance",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::InsufficientData { .. } => "insufficient_data",
            Error::DegenerateLikelihood(_) => "degenerate_likelihood",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::BudgetExceeded { .. } => "budget_exceeded",
            Error::TraitTable(_) => "trait_table",
            Error::Config(_) => "config",
        }
    }

    /// Byte offset into the input, when the error is tied to one.
    pub fn location(&self) -> Option<usize> {
        match self {
            Error::Syntax { position, .. } => Some(*position),
            _ => None,
        }
    }
}
