mod demo;
mod forest;
mod map;
mod topo;

pub use demo::demo;
pub use forest::{ablate_time_alloc, bench_forest, run_group, GroupSummary, SeedRun};
pub use map::{bench_map, load_sequence, prepare as prepare_map, replay, synthetic_corridor, Frame, MapReport};
pub use topo::{bench_topo, prior_map, run_rows, world_start, TopoRow};

/// Result of a command that ran to completion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Outcome {
    /// Thresholds met; always true for commands without any.
    pub passed: bool,
}
