use thiserror::Error;

/// Errors produced by the planning library.
#[derive(Debug, Error)]
pub enum Error {
    /// A value violated a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A collection that must be non-empty was empty.
    #[error("empty input: {0}")]
    Empty(&'static str),
    /// Tensor or weight shapes disagree.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    /// Geometric degeneracy (collinear samples, ray parallel to a plane).
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    /// The camera sees no face of the scene.
    #[error("no visible face in the scene")]
    NoVisibleFace,
    /// The voxel grid would exceed the configured voxel cap.
    #[error("voxel grid of {voxels} voxels exceeds cap {cap}")]
    GridTooLarge { voxels: usize, cap: usize },
    /// The distance transform needs at least one occupied voxel.
    #[error("occupancy grid has no occupied voxel")]
    EmptyGrid,
    /// A quadratic subproblem had no feasible point.
    #[error("infeasible subproblem: {0}")]
    Infeasible(String),
    /// A planner returned a trajectory that fails its safety audit.
    #[error("planning failed: {0}")]
    PlanFailed(String),
    /// Scene generation could not place all buildings.
    #[error("placement failed: {0}")]
    Placement(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
