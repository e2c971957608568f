pub mod error;
pub mod esdf;
pub mod geometry;
pub mod io;
pub mod map;
pub mod octree;
pub mod sim;
pub mod topo;
pub mod traj;

pub use error::{Error, Result};

/// Version stamped into every JSON document this crate writes.
pub const SCHEMA_VERSION: u32 = 1;
