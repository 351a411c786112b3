use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors surfaced by every stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema violation at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("unresolvable binding target `{0}`")]
    UnresolvedTarget(String),

    #[error("parameter component {component} = {value} outside [{lower}, {upper}]")]
    OutOfBounds {
        component: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("non-finite radiance sample at pixel ({x}, {y})")]
    NonFiniteSample { x: usize, y: usize },

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize, usize),
        found: (usize, usize, usize),
    },

    #[error("chi-square divergence undefined at pixel ({x}, {y}) channel {channel}: zero rate with nonzero difference")]
    DivergenceUndefined { x: usize, y: usize, channel: usize },

    #[error("fisher information undefined at pixel ({x}, {y}) channel {channel}: zero rate with nonzero gradient")]
    ZeroRate { x: usize, y: usize, channel: usize },

    #[error("negative divergence exponent {0}")]
    NegativeLambda(f64),

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("pfm: {0}")]
    Pfm(String),

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("optimizer diverged at iteration {0}")]
    Diverged(usize),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("at θ={theta:?}, Δ={delta:?}, N={spp}: {source}")]
    At {
        theta: Vec<f64>,
        delta: Vec<f64>,
        spp: u32,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at(self, theta: &[f64], delta: &[f64], spp: u32) -> Self {
        // keep the innermost coordinates
        if matches!(self, Error::At { .. }) {
            return self;
        }
        Error::At {
            theta: theta.to_vec(),
            delta: delta.to_vec(),
            spp,
            source: Box::new(self),
        }
    }

    /// Strips coordinate context, returning the underlying cause.
    pub fn root(&self) -> &Error {
        match self {
            Error::At { source, .. } => source.root(),
            other => other,
        }
    }
}
