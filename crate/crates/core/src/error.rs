use num_bigint::BigUint;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid primitive `{id}`: {reason}")]
    InvalidPrimitive { id: String, reason: String },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("invalid sample plan: {0}")]
    InvalidPlan(String),

    #[error("unknown primitive id `{0}`")]
    UnresolvedLeaf(String),

    #[error("parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("enumeration refused: {requested} trees requested, cap is {cap}")]
    EnumerationCap { requested: BigUint, cap: u64 },

    #[error("primitive `{0}` has no interior samples at this resolution")]
    NoInteriorSamples(String),

    #[error("{} product(s) are mixed with respect to the target: {}", .0.len(), format_mixed(.0))]
    MixedProducts(Vec<MixedProduct>),

    #[error("target is not representable by the primitives: {0}")]
    Unrepresentable(String),

    #[error("recursion depth {0} exceeded")]
    RecursionDepth(usize),

    #[error("target table does not match the sampling grid ({expected} points expected, {found} given)")]
    TableMismatch { expected: usize, found: usize },

    #[error("too many primitives for signature bitmasks: {0} (max 64)")]
    TooManyPrimitives(usize),

    #[error("point cloud: {0}")]
    PointCloud(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A fundamental product whose samples fall on both sides of the target.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct MixedProduct {
    pub signature: String,
    pub inside: usize,
    pub outside: usize,
}

fn format_mixed(products: &[MixedProduct]) -> String {
    products
        .iter()
        .map(|p| format!("{} (in {}, out {})", p.signature, p.inside, p.outside))
        .collect::<Vec<_>>()
        .join(", ")
}
