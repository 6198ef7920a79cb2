//! Primal-dual interior-point method for block-structured standard-form SDPs.
//!
//! Solves `min <C, X> s.t. <A_j, X> = b_j, X >= 0` together with its dual
//! `max b^T y s.t. C - sum_j y_j A_j = S >= 0` using the HKM direction and a
//! Mehrotra predictor-corrector, starting from the infeasible point
//! `X = S = mu_0 I, y = 0`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sdpform::{BlockKind, SdpProblem};

mod blocks;
mod ipm;
mod planted;

pub use blocks::BlockMat;
pub use planted::{planted_instance, Planted};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Relative duality-gap tolerance.
    pub gap_tol: f64,
    /// Relative primal and dual residual tolerance.
    pub feas_tol: f64,
    pub max_iter: usize,
    /// Fraction-to-the-boundary factor.
    pub step_fraction: f64,
    /// Starting point scale; `None` uses `100 * max |coefficient|`.
    pub initial_scale: Option<f64>,
    pub corrector: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { gap_tol: 1e-6, feas_tol: 1e-7, max_iter: 200, step_fraction: 0.95, initial_scale: None, corrector: true }
    }
}

impl SolverConfig {
    /// Settings for strict-feasibility problems, whose optimum is compared
    /// against a `1e-7` threshold.
    pub fn diagnostic() -> Self {
        Self { gap_tol: 1e-8, feas_tol: 1e-8, ..Self::default() }
    }

    pub fn with_gap_tol(mut self, gap_tol: f64) -> Self {
        self.gap_tol = gap_tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.gap_tol) || !positive(self.feas_tol) {
            return Err(Error::Parameter("solver tolerances must be positive".into()));
        }
        if !(self.step_fraction > 0.0 && self.step_fraction < 1.0) {
            return Err(Error::Parameter(format!("step fraction must lie in (0, 1), got {}", self.step_fraction)));
        }
        if let Some(mu) = self.initial_scale {
            if !positive(mu) {
                return Err(Error::Parameter(format!("initial scale must be positive, got {mu}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    MaxIterations,
    NumericalFailure,
    Unbounded,
}

impl Status {
    pub fn name(&self) -> &'static str {
        match self {
            Status::Optimal => "Optimal",
            Status::MaxIterations => "MaxIterations",
            Status::NumericalFailure => "NumericalFailure",
            Status::Unbounded => "Unbounded",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Relative residuals of a primal-dual triple.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Residuals {
    /// `max_j |<A_j, X> - b_j| / (1 + |b_j|)`
    pub primal: f64,
    /// `||C - S - sum_j y_j A_j||_F / (1 + ||C||_F)`
    pub dual: f64,
    /// `|<C, X> - b^T y| / (1 + |<C, X>|)`
    pub gap: f64,
}

/// Solver output. When the status is not `Optimal`, the iterate is the one
/// with the smallest scaled residual seen during the run.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub status: Status,
    pub x: Vec<BlockMat>,
    pub y: Vec<f64>,
    pub s: Vec<BlockMat>,
    /// `<C, X>` plus the problem offset.
    pub primal_obj: f64,
    /// `b^T y` plus the problem offset.
    pub dual_obj: f64,
    pub residuals: Residuals,
    pub iterations: usize,
    /// Complementarity measure `<X, S> / n` at every iterate, the start included.
    pub mu_history: Vec<f64>,
    /// Set when the run ended early; describes why.
    pub message: Option<String>,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    pub fn gap(&self) -> f64 {
        self.residuals.gap
    }

    /// Smallest eigenvalue over the PSD blocks of `X`.
    pub fn min_eig_x(&self) -> f64 {
        min_psd_eig(&self.x)
    }

    pub fn min_eig_s(&self) -> f64 {
        min_psd_eig(&self.s)
    }
}

fn min_psd_eig(blocks: &[BlockMat]) -> f64 {
    blocks
        .iter()
        .filter(|b| matches!(b, BlockMat::Psd(_)))
        .map(BlockMat::min_eigenvalue)
        .fold(f64::INFINITY, f64::min)
}

/// Solves a standard-form problem.
pub fn solve(prob: &SdpProblem, cfg: &SolverConfig) -> Result<SdpSolution> {
    cfg.validate()?;
    if let Some(j) = prob.constraints.iter().position(|c| c.sense != crate::sdpform::Sense::Eq) {
        return Err(Error::NotStandardForm(j));
    }
    prob.validate()?;
    Ok(ipm::Ipm::new(prob, cfg).run())
}

/// Relative primal residual, dual residual and duality gap of `(X, y, S)`.
pub fn residuals(prob: &SdpProblem, x: &[BlockMat], y: &[f64], s: &[BlockMat]) -> Result<Residuals> {
    check_shapes(prob, x, "X")?;
    check_shapes(prob, s, "S")?;
    if y.len() != prob.constraints.len() {
        return Err(Error::Dimension { expected: prob.constraints.len(), got: y.len() });
    }
    let op = ipm::Operator::new(prob);
    Ok(op.residuals(x, y, s))
}

fn check_shapes(prob: &SdpProblem, v: &[BlockMat], what: &str) -> Result<()> {
    if v.len() != prob.blocks.len() {
        return Err(Error::Shape(format!("{what} has {} blocks, problem has {}", v.len(), prob.blocks.len())));
    }
    for (k, (b, spec)) in v.iter().zip(&prob.blocks).enumerate() {
        let kind_ok = matches!((b, spec.kind), (BlockMat::Psd(_), BlockKind::Psd) | (BlockMat::Diag(_), BlockKind::Diagonal));
        let square = b.as_psd().is_none_or(|m| m.is_square());
        if !kind_ok || !square || b.dim() != spec.dim {
            return Err(Error::Shape(format!("{what} block {k} does not match {:?}", spec)));
        }
    }
    Ok(())
}
