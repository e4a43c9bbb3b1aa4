use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("polygon parse error at line {line}: {detail}")]
    PolygonParse { line: usize, detail: String },

    #[error("invalid polygon `{name}`: {detail}")]
    InvalidPolygon { name: String, detail: String },

    #[error("invalid mesh parameters: {0}")]
    InvalidMeshParams(String),

    #[error("mesh quality target unreachable: worst triangle {triangle} has min angle {angle_deg:.3} deg (target {target_deg} deg)")]
    MeshQuality {
        triangle: usize,
        angle_deg: f64,
        target_deg: f64,
    },

    #[error("mesh exceeds vertex budget: {vertices} vertices > {budget}")]
    MeshBudget { vertices: usize, budget: usize },

    #[error("mesh has no involution metadata for the requested parity operation")]
    MissingInvolution,

    #[error("degenerate triangle {0} with nonpositive area")]
    DegenerateTriangle(usize),

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("requested {requested} modes but the operator dimension is {dim}")]
    TooManyModes { requested: usize, dim: usize },

    #[error("basis/state mismatch: state built for basis {state} applied to basis {basis}")]
    BasisMismatch { state: u64, basis: u64 },

    #[error("state has {got} coefficients, basis has {want} modes")]
    StateLength { got: usize, want: usize },

    #[error("zero state where a nonzero state is required")]
    ZeroState,

    #[error("non-admissible exponent pair (p={p}, q={q}): 2/p + 2/q = {sum} != 1")]
    NonAdmissiblePair { p: f64, q: f64, sum: f64 },

    #[error("invalid time grid: {0}")]
    InvalidTimeGrid(String),

    #[error("forcing sampled on {got} nodes but the grid has {want}")]
    GridMismatch { got: usize, want: usize },

    #[error("dyadic band {k} contains {found} trusted frequencies (need at least {need})")]
    EmptyBand { k: u32, found: usize, need: usize },

    #[error("multiplier profile text `{0}` not understood")]
    ProfileParse(String),

    #[error("invalid profile argument: {0}")]
    InvalidProfile(String),

    #[error("empty coefficient sequence")]
    EmptySequence,

    #[error("quadrature did not converge: achieved error {achieved:.3e} > target {target:.3e}")]
    QuadratureNonConvergent { achieved: f64, target: f64 },

    #[error("time {t} too small for the resolved spectrum; smallest admissible t is {t_min:.6}")]
    HeatTimeTooSmall { t: f64, t_min: f64 },

    #[error("invalid heat query: {0}")]
    InvalidHeatQuery(String),

    #[error("radius {r} outside the isometric cone neighborhood (limit {limit:.6})")]
    RadiusOutsideNeighborhood { r: f64, limit: f64 },

    #[error("cache format error in {path}: {detail}")]
    CacheFormat { path: String, detail: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the batch runner: 2 for configuration problems,
    /// 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::PolygonParse { .. }
            | Error::InvalidPolygon { .. }
            | Error::InvalidMeshParams(_)
            | Error::TooManyModes { .. }
            | Error::NonAdmissiblePair { .. }
            | Error::InvalidTimeGrid(_)
            | Error::ProfileParse(_)
            | Error::InvalidProfile(_)
            | Error::Config(_)
            | Error::Io(_) => 2,
            _ => 3,
        }
    }

    /// The module a numerical failure originated in, for diagnostics.
    pub fn module(&self) -> &'static str {
        match self {
            Error::PolygonParse { .. } | Error::InvalidPolygon { .. } => "geometry",
            Error::InvalidMeshParams(_)
            | Error::MeshQuality { .. }
            | Error::MeshBudget { .. }
            | Error::MissingInvolution
            | Error::DegenerateTriangle(_) => "mesh",
            Error::Eigensolver(_)
            | Error::TooManyModes { .. }
            | Error::BasisMismatch { .. }
            | Error::StateLength { .. }
            | Error::ZeroState => "spectral",
            Error::ProfileParse(_) | Error::InvalidProfile(_) | Error::EmptySequence => {
                "littlewood_paley"
            }
            Error::NonAdmissiblePair { .. }
            | Error::InvalidTimeGrid(_)
            | Error::GridMismatch { .. }
            | Error::EmptyBand { .. } => "evolution",
            Error::QuadratureNonConvergent { .. }
            | Error::HeatTimeTooSmall { .. }
            | Error::InvalidHeatQuery(_)
            | Error::RadiusOutsideNeighborhood { .. } => "cone_heat",
            Error::CacheFormat { .. } | Error::Config(_) | Error::Io(_) => "cli",
        }
    }
}
