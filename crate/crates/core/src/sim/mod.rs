//! Closed-loop simulation: procedural worlds, a lidar model and the
//! receding-horizon flight loop.

mod episode;
mod lidar;
mod world;

pub use episode::{run_episode, EpisodeConfig, EpisodeResult, ReplanOutcome, RunMetrics, TickRecord};
pub use lidar::{simulate_scan, LidarModel};
pub use world::{generate_world, Column, Mover, Ring, Shape, SimWorld, WorldSpec};
