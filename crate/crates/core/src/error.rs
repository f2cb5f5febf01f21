use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// A single violated model assumption, reported by [`crate::model::validate_model`].
///
/// Locus and allele indices are 1-based, matching model files.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("locus {locus} has {alleles} allele(s); at least 2 required")]
    TooFewAlleles { locus: usize, alleles: usize },
    #[error("mutation rate u[{allele}] at locus {locus} is {value}; strict positivity required")]
    NonPositiveMutation {
        locus: usize,
        allele: usize,
        value: f64,
    },
    #[error("coupling J[{i},{j}]({k},{m}) = {forward} but J[{j},{i}]({m},{k}) = {backward}; blocks must be mutual transposes")]
    AsymmetricCoupling {
        i: usize,
        j: usize,
        k: usize,
        m: usize,
        forward: f64,
        backward: f64,
    },
    #[error(
        "{what} for locus pair ({i},{j}) has shape {rows}x{cols}, expected {want_rows}x{want_cols}"
    )]
    DimensionMismatch {
        what: &'static str,
        i: usize,
        j: usize,
        rows: usize,
        cols: usize,
        want_rows: usize,
        want_cols: usize,
    },
    #[error("self-coupling block on locus {locus}; diagonal blocks must stay zero")]
    SelfCoupling { locus: usize },
    #[error("more than one coupling block given for locus pair ({i},{j})")]
    DuplicateCoupling { i: usize, j: usize },
    #[error(
        "parent-dependent mutation rate u[{from}->{to}] at locus {locus} is negative ({value})"
    )]
    NegativeParentDependentRate {
        locus: usize,
        from: usize,
        to: usize,
        value: f64,
    },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("model validation failed:{}", .0.iter().map(|v| format!("\n  - {v}")).collect::<String>())]
    Validation(Vec<Violation>),
    #[error("duplicate edge ({i},{j}) in coupling list")]
    DuplicateEdge { i: usize, j: usize },
    #[error("locus {locus} counts sum to {got}, expected population size {expected}")]
    CountSumMismatch {
        locus: usize,
        got: u64,
        expected: u64,
    },
    #[error("population size {n} too small: {reason}")]
    PopulationTooSmall { n: u64, reason: String },
    #[error("model has {haplotypes:e} haplotypes; enumeration capped at {limit:e}")]
    ModelTooLarge { haplotypes: f64, limit: f64 },
    #[error("diffusion matrix is singular at the simplex boundary (locus {locus}, coordinate {coordinate} = {value})")]
    SingularAtBoundary {
        locus: usize,
        coordinate: usize,
        value: f64,
    },
    #[error("integrator produced a non-finite state; reduce dt")]
    NonFiniteState,
    #[error("series did not converge within {max_terms} terms")]
    NoConvergence { max_terms: usize },
    #[error("unsupported model shape: {0}")]
    UnsupportedModelShape(String),
    #[error("non-integrable density evaluation: {0}")]
    NonIntegrableEvaluation(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("frequency state invalid: {0}")]
    InvalidState(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("model file parse error: {0}")]
    Json(#[from] serde_json::Error),
}
