//! Analytic bounds on feasible moment matrices, post-hoc checks of solver
//! output against them, and verification verdicts.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bounds::LayerBounds;
use crate::error::{Error, Result};
use crate::network::{Network, PruneReport};
use crate::sdpform::{SdpProblem, VariableLayout};
use crate::solver::{BlockMat, Status};

/// Strict-feasibility radius at or below which the interior is considered empty.
pub const VANISHING_THRESHOLD: f64 = 1e-7;

const SYMMETRY_TOL: f64 = 1e-9;

/// Trace and diagonal bounds valid for every feasible point of a relaxation
/// that keeps the complementarity rows as equalities (or upper bounds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// `T_i` bounds `tr(P[x_i x_i^T])` for `i = 0..=L`.
    #[serde(rename = "T")]
    pub t: Vec<f64>,
    /// `elementwise[i][j] = (1 + T_i) ||W~_i(j,:)||^2` bounds `P[x_{i+1}]_{jj}`.
    pub elementwise: Vec<Vec<f64>>,
    pub min_eig_bound: f64,
    /// Row norms `||W~_i(j,:)||_2` for `i = 0..L-1`.
    pub w_norms: Vec<Vec<f64>>,
}

fn check_center(net: &Network, center: &[f64], radius: f64) -> Result<()> {
    if center.len() != net.input_dim() {
        return Err(Error::Dimension { expected: net.input_dim(), got: center.len() });
    }
    if !(radius >= 0.0) || !radius.is_finite() {
        return Err(Error::Radius(radius));
    }
    Ok(())
}

/// `T_0 = (||x̄|| + rho sqrt(n_0))^2`, `T_{i+1} = (1 + T_i) ||W~_i||_F^2`, for `i` up to `L`.
pub fn trace_bounds(net: &Network, center: &[f64], radius: f64) -> Result<Vec<f64>> {
    check_center(net, center, radius)?;
    let norm = center.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut t = vec![(norm + radius * (center.len() as f64).sqrt()).powi(2)];
    for i in 0..net.depth() {
        let frob2 = net.layer(i).extended().norm_squared();
        let last = t[i];
        t.push((1.0 + last) * frob2);
    }
    Ok(t)
}

pub fn bound_report(net: &Network, center: &[f64], radius: f64) -> Result<BoundReport> {
    let t = trace_bounds(net, center, radius)?;
    let w_norms: Vec<Vec<f64>> = (0..net.depth()).map(|i| net.layer(i).extended_row_norms()).collect();
    let elementwise: Vec<Vec<f64>> =
        w_norms.iter().enumerate().map(|(i, row)| row.iter().map(|w| (1.0 + t[i]) * w * w).collect()).collect();
    let min_eig_bound = elementwise.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    Ok(BoundReport { t, elementwise, min_eig_bound, w_norms })
}

/// Upper bound on the smallest eigenvalue of any feasible moment matrix.
pub fn min_eig_bound(net: &Network, center: &[f64], radius: f64) -> Result<f64> {
    Ok(bound_report(net, center, radius)?.min_eig_bound)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::Shape(format!("{}x{} matrix is not square", m.nrows(), m.ncols())));
    }
    if m.nrows() == 0 {
        return Ok(f64::INFINITY);
    }
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_TOL * m.amax().max(1.0) {
        return Err(Error::Asymmetric(asym));
    }
    let sym = (m + m.transpose()) * 0.5;
    Ok(sym.symmetric_eigenvalues().min())
}

/// The moment matrix `P` of a solved relaxation, undoing any diagonal scaling.
pub fn moment_matrix(prob: &SdpProblem, x: &[BlockMat]) -> Option<DMatrix<f64>> {
    prob.meta.layout.as_ref()?;
    let mut p = x.first()?.as_psd()?.clone();
    if let Some(d) = &prob.meta.scaling {
        for r in 0..p.nrows() {
            for c in 0..p.ncols() {
                p[(r, c)] *= d[r] * d[c];
            }
        }
    }
    Some(p)
}

/// Largest violations of the trace, diagonal and eigenvalue bounds by `P`.
/// Non-positive excesses mean the bound holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub trace_excess: f64,
    pub elementwise_excess: f64,
    pub eig_excess: f64,
    pub min_eig: f64,
}

impl BoundCheck {
    pub fn holds(&self, tol: f64) -> bool {
        self.trace_excess <= tol && self.elementwise_excess <= tol && self.eig_excess <= tol
    }
}

pub fn check_bounds(p: &DMatrix<f64>, layout: &VariableLayout, report: &BoundReport) -> Result<BoundCheck> {
    if p.nrows() != layout.dim() || report.t.len() != layout.layers() {
        return Err(Error::Shape("moment matrix does not match the bound report".into()));
    }
    let mut trace_excess = f64::NEG_INFINITY;
    for i in 0..layout.layers() {
        let tr: f64 = layout.range(i).map(|a| p[(a, a)]).sum();
        trace_excess = trace_excess.max(tr - report.t[i]);
    }
    let mut elementwise_excess = f64::NEG_INFINITY;
    for (i, row) in report.elementwise.iter().enumerate() {
        for (j, bound) in row.iter().enumerate() {
            let a = layout.index(i + 1, j);
            elementwise_excess = elementwise_excess.max(p[(a, a)] - bound);
        }
    }
    let min_eig = min_eigenvalue(p)?;
    Ok(BoundCheck { trace_excess, elementwise_excess, eig_excess: min_eig - report.min_eig_bound, min_eig })
}

/// `1/2 sum_i (||u_i||^2 + ||l_i||^2)` over all layers.
pub fn problem_a_trace_bound(bounds: &LayerBounds) -> f64 {
    0.5 * bounds
        .boxes
        .iter()
        .map(|b| b.upper.iter().chain(&b.lower).map(|v| v * v).sum::<f64>())
        .sum::<f64>()
}

/// `sum_i T_i`.
pub fn problem_b_trace_bound(report: &BoundReport) -> f64 {
    report.t.iter().sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Robust,
    Undetermined,
    SolverFailed,
}

impl Verdict {
    /// Process exit code of the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Verdict::Robust => 0,
            Verdict::Undetermined => 1,
            Verdict::SolverFailed => 2,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Robust => "Robust",
            Verdict::Undetermined => "Undetermined",
            Verdict::SolverFailed => "SolverFailed",
        })
    }
}

/// Outcome of one relaxation solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetReport {
    pub target: usize,
    pub variant: String,
    /// Relaxation optimum `gamma_D` (primal objective including the offset).
    pub gamma: f64,
    pub status: Status,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    /// Smallest eigenvalue of the returned moment matrix.
    pub lambda_min: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrictFeasibility {
    pub lambda_star: f64,
    pub status: Status,
    pub vanished: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub predicted: usize,
    pub variant: String,
    pub targets: Vec<TargetReport>,
    pub strict_feasibility: Option<StrictFeasibility>,
    pub verdict: Verdict,
    pub bound_method: String,
    pub prune: Option<PruneReport>,
    pub min_eig_bound: f64,
}

/// Robust iff every target is Optimal with positive margin; SolverFailed if
/// any solve stopped on a numerical failure or the iteration limit.
pub fn verdict(targets: &[TargetReport], required: &[usize]) -> Result<Verdict> {
    if let Some(&missing) = required.iter().find(|&&t| !targets.iter().any(|r| r.target == t)) {
        return Err(Error::MissingTarget(missing));
    }
    if targets.iter().all(|t| t.status == Status::Optimal && t.gamma > 0.0) {
        return Ok(Verdict::Robust);
    }
    if targets.iter().any(|t| matches!(t.status, Status::NumericalFailure | Status::MaxIterations)) {
        return Ok(Verdict::SolverFailed);
    }
    Ok(Verdict::Undetermined)
}
