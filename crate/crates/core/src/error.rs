use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("row validation failed: {0}")]
    RowValidation(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("no events of cause {cause}")]
    NoEvents { cause: usize },

    #[error("singular information matrix; near-collinear columns: {columns:?}")]
    SingularInformation { columns: Vec<String> },

    #[error("did not converge after {iterations} iterations (last gradient norm {grad_norm:.3e})")]
    NonConvergence {
        iterations: usize,
        grad_norm: f64,
        trace: Vec<f64>,
    },

    #[error("posterior expansion needs {terms} terms, exceeding the bound {bound}; use the quadrature path")]
    ExpansionTooLarge { terms: usize, bound: usize },

    #[error("frailty variance unidentifiable: {0}")]
    Unidentifiable(String),

    #[error("no admissible cutoff: {0}")]
    NoAdmissibleCutoff(String),

    #[error("run budget of {budget} exceeded; {completed} cells finished")]
    BudgetExceeded { budget: usize, completed: usize },

    #[error("undefined result: {0}")]
    Undefined(String),
}
