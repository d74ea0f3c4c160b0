use thiserror::Error;

/// Errors raised by tree, matrix and solver operations.
///
/// Node ids carried in variants are the public 1-based ids.
#[derive(Debug, Error)]
pub enum TssError {
    #[error("node id {id} is out of range 1..={count}")]
    BadNodeId { id: usize, count: usize },

    #[error("duplicate node id {0} in node set")]
    DuplicateNode(usize),

    #[error("graph is disconnected: {unreached} node(s) not reachable from the root")]
    DisconnectedGraph { unreached: usize },

    #[error("graph has {edges} edges but a tree on its nodes needs {expected}")]
    CycleDetected { edges: usize, expected: usize },

    #[error("a binary tree needs at least 2 leaves, got {0}")]
    BadLeafCount(usize),

    #[error("node subset must be nonempty and proper")]
    EmptyOrFullSubset,

    #[error("({from}, {to}) is not an edge of the tree")]
    NotATreeEdge { from: usize, to: usize },

    #[error("input contains NaN or infinite entries")]
    NonFiniteInput,

    #[error("generator {generator} at node {node}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        node: usize,
        generator: String,
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("generator {generator} at node {node} is missing")]
    MissingGenerator { node: usize, generator: String },

    #[error("vector length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("matrix is not square ({rows} x {cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("pivot block of node {node} is singular")]
    SingularPivotBlock { node: usize },

    #[error("pivot block of node {node} is not square ({rows} x {cols})")]
    NonSquarePivotBlock { node: usize, rows: usize, cols: usize },

    #[error("matrix is numerically singular")]
    SingularMatrix,

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl TssError {
    /// Short machine-readable tag, used by the CLI's JSON error output.
    pub fn kind(&self) -> &'static str {
        match self {
            TssError::BadNodeId { .. } => "BadNodeId",
            TssError::DuplicateNode(_) => "DuplicateNode",
            TssError::DisconnectedGraph { .. } => "DisconnectedGraph",
            TssError::CycleDetected { .. } => "CycleDetected",
            TssError::BadLeafCount(_) => "BadLeafCount",
            TssError::EmptyOrFullSubset => "EmptyOrFullSubset",
            TssError::NotATreeEdge { .. } => "NotATreeEdge",
            TssError::NonFiniteInput => "NonFiniteInput",
            TssError::ShapeMismatch { .. } => "ShapeMismatch",
            TssError::MissingGenerator { .. } => "MissingGenerator",
            TssError::LengthMismatch { .. } => "LengthMismatch",
            TssError::NotSquare { .. } => "NotSquare",
            TssError::SingularPivotBlock { .. } => "SingularPivotBlock",
            TssError::NonSquarePivotBlock { .. } => "NonSquarePivotBlock",
            TssError::SingularMatrix => "SingularMatrix",
            TssError::LayoutMismatch(_) => "LayoutMismatch",
            TssError::Parse(_) => "Parse",
            TssError::Io(_) => "Io",
            TssError::Json(_) => "Json",
        }
    }
}

pub type Result<T> = std::result::Result<T, TssError>;
