use thiserror::Error;

/// Unified error type for the whole crate.
#[derive(Error, Debug)]
pub enum Error {
    /// The symbol-set iteration keeps producing new low-homogeneity symbols,
    /// which signals that the noise homogeneity is at or below the critical
    /// threshold for the chosen rule set.
    #[error("subcriticality violation: symbol generation still growing after depth {depth} ({new_symbols} new symbols in last generation)")]
    SubcriticalityViolation { depth: usize, new_symbols: usize },

    #[error("unknown symbol (outside the generated closure): {0}")]
    UnknownSymbol(String),

    #[error("character is missing a value for generator {0}")]
    MissingGenerator(String),

    #[error("fixed-point iteration did not stabilise within the depth limit")]
    NonStabilising,

    #[error("counterterm rewrite left unabsorbed terms: {0}")]
    TemplateMismatch(String),

    #[error("scale {scale} under-resolves the grid (needs at least {needed} in scaled units)")]
    ScaleTooFine { scale: f64, needed: f64 },

    #[error("fields live on incompatible grids: {0}")]
    GridMismatch(String),

    #[error("kernel moment correction failed to reach tolerance (residual {0:.3e})")]
    MomentKillFailure(f64),

    #[error("fewer than {needed} usable scales in the requested range (got {got})")]
    InsufficientRange { needed: usize, got: usize },

    #[error("mollification scale {eps} too coarse for the grid (needs >= {needed} spacings)")]
    ResolutionTooCoarse { eps: f64, needed: f64 },

    #[error("solution blew up at t = {t:.6} (sup norm {sup:.3e} exceeded cap {cap:.3e})")]
    BlowUp { t: f64, sup: f64, cap: f64 },

    #[error("heat-equation solution lost positivity at t = {t:.6}")]
    PositivityLoss { t: f64 },

    #[error("symbol table is not sorted by homogeneity; cannot build model recursively")]
    UnresolvedDependency,

    #[error("renormalised model failed admissibility re-check: {0}")]
    AdmissibilityFailure(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
