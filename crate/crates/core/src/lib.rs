//! Identification of switching systems from trajectory data and
//! combinatorial analysis (outer approximations, Morse graphs, regions of
//! attraction) of the resulting maps on cubical grids.

pub mod error;
pub mod grid;
pub mod dynamics;
pub mod convex;
pub mod sysid;
pub mod io;
pub mod outer;
pub mod morse;
pub mod eval;
pub mod benchmarks;

pub use error::{Error, Result};
pub use grid::{CellIndex, CellQuery, Cuboid, CubicalGrid};
pub use dynamics::{
    integrate, simulate_trajectories, PolyBasis, Sample, SimulationConfig, SwitchingClassifier,
    SwitchingModel, ToggleSwitch, TrajectoryDataset, VectorField,
};
pub use convex::{LinearProgram, SmallSdp, SolveReport, SolveStatus};
pub use sysid::{IdentConfig, IdentResult, ModeAssignment};
pub use outer::{BoxParams, CellMap, GpModel, LipschitzEstimate};
pub use morse::{DiGraph, MorseAnalysis, MorseGraph};
pub use eval::{AggregatedMorseGraph, Comparison, MethodRun, MetricsRow, TargetStructure};
pub use benchmarks::{Benchmark, Method, MethodParams};
