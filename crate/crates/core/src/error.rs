use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no obstacles in map")]
    NoObstacles,
    #[error("seed not occupied")]
    SeedNotOccupied,
    #[error("endpoint in collision")]
    EndpointInCollision,
    #[error("degenerate piece: duration {0} is not positive")]
    DegeneratePiece(f64),
    #[error("waypoint count {waypoints} does not match {pieces} pieces")]
    WaypointCount { waypoints: usize, pieces: usize },
    #[error("no reference paths")]
    NoReferencePaths,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("no pose for scan {0}")]
    MissingPose(String),
    #[error("scan sequence is empty")]
    EmptySequence,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
