use std::path::PathBuf;

/// Errors shared across the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tag and anchor are (numerically) coincident; the range Jacobian is
    /// undefined below [`crate::model::MIN_RANGE_DISTANCE`].
    #[error("degenerate geometry: tag-anchor distance {distance:.3e} m below {min:.1e} m")]
    DegenerateGeometry { distance: f64, min: f64 },

    #[error("measurements from different anchors: expected id {expected}, got {got}")]
    MismatchedAnchor { expected: u32, got: u32 },

    #[error("need at least {need} samples, got {got}")]
    InsufficientSamples { need: usize, got: usize },

    /// Normal matrix of the coarse linear system is too ill-conditioned to
    /// trust (coplanar or collinear tag trajectory).
    #[error("rank-deficient linear system (normal-matrix condition {condition:.3e})")]
    RankDeficient { condition: f64 },

    #[error("damped normal matrix singular even at lambda {lambda:.3e}")]
    SingularNormalMatrix { lambda: f64 },

    /// Waypoint set gives a singular direction-cosine geometry.
    #[error("singular waypoint geometry (condition {condition:.3e})")]
    SingularGeometry { condition: f64 },

    #[error("no feasible waypoint configuration inside the volume grid")]
    NoFeasibleSolution,

    #[error("spline segment times differ by more than {max_ratio:.1e}x")]
    IllConditionedSpline { max_ratio: f64 },

    #[error("unknown anchor id {0}")]
    UnknownAnchor(u32),

    #[error("measurement buffer not in time order at t = {t}")]
    OutOfOrderBuffer { t: f64 },

    #[error("rotation matrix invalid: {0}")]
    InvalidRotation(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("unsupported schema version {got}; this build reads up to {supported}")]
    UnsupportedSchema { got: u32, supported: u32 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
