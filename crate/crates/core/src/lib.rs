//! Ulam approximations of Perron–Frobenius operators, set-to-set information
//! transfer, ergodicity and mixing diagnostics, and actuator/sensor placement.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common `f64` instantiation.

pub mod classify;
pub mod domain;
pub mod error;
pub mod partition;
pub mod pfop;
pub mod placement;
pub mod scalar;
pub mod systems;
pub mod transfer;

pub use classify::{classify, ergodicity_test, mixing_test, ClassificationReport, MixingOptions, PairPlan, Verdict};
pub use domain::{Domain, Point};
pub use error::{Error, Result};
pub use partition::{GridPartition, SamplingScheme};
pub use pfop::{build, OutsidePolicy, TransitionMatrix};
pub use placement::{
    controllability_vector, coverage, solve_exact, solve_greedy, solve_lp, Mode, PlacementProblem,
    PlacementSolution, Solver,
};
pub use scalar::Scalar;
pub use systems::{make_builtin, SystemSpec};
pub use transfer::{total_transfer, transfer_matrix, CellSet, LogBase, MeasureVector, TransferMatrix};

pub type System = SystemSpec<f64>;
pub type Grid = GridPartition<f64>;
pub type Matrix = TransitionMatrix<f64>;
pub type Transfer = TransferMatrix<f64>;
pub type Measure = MeasureVector<f64>;

pub type System32 = SystemSpec<f32>;
pub type Grid32 = GridPartition<f32>;
pub type Matrix32 = TransitionMatrix<f32>;
pub type Transfer32 = TransferMatrix<f32>;
pub type Measure32 = MeasureVector<f32>;
