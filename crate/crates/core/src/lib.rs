//! Robustness verification of ReLU networks through semidefinite relaxations,
//! with diagnostics for loss of strict feasibility and several reformulations
//! that restore it.
//!
//! The crate ships its own primal-dual interior-point SDP solver so that
//! every number it reports can be traced to one numerical core.

pub mod analysis;
pub mod bounds;
pub mod error;
pub mod network;
pub mod oracle;
pub mod pipeline;
pub mod sdpform;
pub mod solver;
pub mod sweep;

pub use analysis::{verdict, BoundReport, TargetReport, VerificationReport, Verdict};
pub use bounds::{bounds_for, input_box, propagate, Interval, LayerBounds};
pub use error::{Error, Result};
pub use network::{argmax, Layer, Network, PruneReport};
pub use oracle::{exact_gamma, exact_minimum, ActivationPattern};
pub use sdpform::{
    apply_dscale, build_relaxation, build_relaxation_with, build_strict_feasibility, to_standard_form, BlockKind,
    BlockSpec, Constraint, Family, InputScaling, Margin, SdpProblem, Sense, SparseBlockMatrix, Variant, VariableLayout,
};
pub use pipeline::{compare, diagnose, verify, Prepared, VerifyOptions};
pub use solver::{residuals, solve, BlockMat, Residuals, SdpSolution, SolverConfig, Status};
pub use sweep::{run_sweep, Method, SweepRecord, SweepSpec};
