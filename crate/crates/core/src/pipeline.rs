//! End-to-end verification: bounds, pruning, scaling, relaxation, solve, verdict.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    bound_report, moment_matrix, verdict, BoundReport, StrictFeasibility, TargetReport, VerificationReport,
    VANISHING_THRESHOLD,
};
use crate::bounds::{bounds_for, propagate, LayerBounds};
use crate::error::{Error, Result};
use crate::network::{Network, PruneReport};
use crate::oracle::exact_minimum;
use crate::sdpform::{
    apply_dscale, build_relaxation_with, build_strict_feasibility, to_standard_form, InputScaling, Margin, SdpProblem,
    Variant, LAMBDA_FLOOR,
};
use crate::solver::{solve, SdpSolution, SolverConfig, Status};

pub const BOUND_METHOD: &str = "interval";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub variant: Variant,
    pub dscale: bool,
    pub input_scaling: InputScaling,
    pub wscale: bool,
    pub prune: bool,
    /// `None` checks every label other than the prediction.
    pub target: Option<usize>,
    pub solver: SolverConfig,
    pub diagnose_solver: SolverConfig,
    /// Also solve the strict-feasibility problem.
    pub diagnose: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            variant: Variant::Base,
            dscale: false,
            input_scaling: InputScaling::default(),
            wscale: false,
            prune: true,
            target: None,
            solver: SolverConfig::default(),
            diagnose_solver: SolverConfig::diagnostic(),
            diagnose: false,
        }
    }
}

/// Network and bounds after pruning and optional weight scaling.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub net: Network,
    pub bounds: LayerBounds,
    pub center: Vec<f64>,
    pub radius: f64,
    pub predicted: usize,
    pub prune: Option<PruneReport>,
    pub weight_scales: Option<Vec<f64>>,
    pub analytic: BoundReport,
}

impl Prepared {
    pub fn new(net: &Network, center: &[f64], radius: f64, prune: bool, wscale: bool) -> Result<Self> {
        let bounds = bounds_for(net, center, radius)?;
        let predicted = net.predict(center)?;
        let (mut net, mut bounds, prune) = if prune {
            let (n, b, r) = net.prune_inactive(&bounds)?;
            (n, b, Some(r))
        } else {
            (net.clone(), bounds, None)
        };
        let mut weight_scales = None;
        if wscale {
            let (scaled, s) = net.w_scale()?;
            let input = bounds.input().clone();
            bounds = propagate(&scaled, &input.lower, &input.upper)?;
            net = scaled;
            weight_scales = Some(s);
        }
        let analytic = bound_report(&net, center, radius)?;
        Ok(Self { net, bounds, center: center.to_vec(), radius, predicted, prune, weight_scales, analytic })
    }

    pub fn targets(&self, target: Option<usize>) -> Result<Vec<usize>> {
        let m = self.net.output_dim();
        match target {
            Some(t) if t >= m => Err(Error::Parameter(format!("target {t} out of range for {m} outputs"))),
            Some(t) if t == self.predicted => Err(Error::TargetIsPrediction(t)),
            Some(t) => Ok(vec![t]),
            None => Ok((0..m).filter(|&t| t != self.predicted).collect()),
        }
    }

    /// Relaxation of the margin over `target`, scaled if requested.
    pub fn relaxation(&self, margin: &Margin, variant: Variant, dscale: Option<InputScaling>) -> Result<SdpProblem> {
        let prob = build_relaxation_with(&self.net, &self.bounds, margin, variant)?;
        match dscale {
            Some(input) => apply_dscale(&prob, &self.bounds, input),
            None => Ok(prob),
        }
    }

    pub fn margin(&self, target: usize) -> Result<Margin> {
        Margin::for_target(&self.net, self.predicted, target)
    }
}

/// A solved relaxation together with the problem it came from.
#[derive(Debug, Clone)]
pub struct Solved {
    pub problem: SdpProblem,
    pub solution: SdpSolution,
    pub report: TargetReport,
}

fn scaling(dscale: bool, input: InputScaling) -> Option<InputScaling> {
    dscale.then_some(input)
}

/// Solves the relaxation for one target.
pub fn solve_target(prep: &Prepared, target: usize, variant: Variant, dscale: Option<InputScaling>, cfg: &SolverConfig) -> Result<Solved> {
    let margin = prep.margin(target)?;
    let problem = to_standard_form(&prep.relaxation(&margin, variant, dscale)?);
    let start = Instant::now();
    let solution = solve(&problem, cfg)?;
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    let lambda_min = moment_matrix(&problem, &solution.x)
        .map(|p| p.symmetric_eigenvalues().min())
        .unwrap_or(f64::NAN);
    let mut label = variant.name().to_string();
    if dscale.is_some() {
        label.push_str("+dscale");
    }
    if prep.weight_scales.is_some() {
        label.push_str("+wscale");
    }
    let report = TargetReport {
        target,
        variant: label,
        gamma: solution.primal_obj,
        status: solution.status,
        gap: solution.residuals.gap,
        primal_residual: solution.residuals.primal,
        dual_residual: solution.residuals.dual,
        iterations: solution.iterations,
        lambda_min,
        runtime_ms: Some(runtime_ms),
    };
    Ok(Solved { problem, solution, report })
}

/// Outcome of the strict-feasibility problem of one relaxation.
#[derive(Debug, Clone)]
pub struct Diagnosis {
    pub strict: StrictFeasibility,
    pub problem: SdpProblem,
    pub solution: SdpSolution,
    pub min_eig_bound: f64,
    pub runtime_ms: f64,
}

/// Largest `lambda` such that the relaxation has a feasible point `P` with
/// `P - lambda I` still feasible for the cone (slacks excluded).
pub fn diagnose_prepared(prep: &Prepared, variant: Variant, dscale: Option<InputScaling>, cfg: &SolverConfig) -> Result<Diagnosis> {
    let n_last = prep.net.layer_sizes()[prep.net.depth()];
    let margin = Margin { c: vec![0.0; n_last], offset: 0.0 };
    let relaxed = to_standard_form(&prep.relaxation(&margin, variant, dscale)?);
    let problem = build_strict_feasibility(&relaxed)?;
    let start = Instant::now();
    let solution = solve(&problem, cfg)?;
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    let lambda_star = lambda_of(&problem, &solution);
    Ok(Diagnosis {
        strict: StrictFeasibility { lambda_star, status: solution.status, vanished: lambda_star <= VANISHING_THRESHOLD },
        problem,
        solution,
        min_eig_bound: prep.analytic.min_eig_bound,
        runtime_ms,
    })
}

/// `lambda` read from the solution of a strict-feasibility problem.
pub fn lambda_of(problem: &SdpProblem, solution: &SdpSolution) -> f64 {
    problem
        .meta
        .lambda_block
        .and_then(|b| solution.x.get(b))
        .and_then(|blk| blk.as_diag())
        .map_or(f64::NAN, |d| d[0] - LAMBDA_FLOOR)
}

pub fn diagnose(net: &Network, center: &[f64], radius: f64, opts: &VerifyOptions) -> Result<Diagnosis> {
    let prep = Prepared::new(net, center, radius, opts.prune, opts.wscale)?;
    diagnose_prepared(&prep, opts.variant, scaling(opts.dscale, opts.input_scaling), &opts.diagnose_solver)
}

/// Runs the full verification pipeline for one input.
pub fn verify(net: &Network, center: &[f64], radius: f64, opts: &VerifyOptions) -> Result<VerificationReport> {
    if !(radius > 0.0) {
        return Err(Error::Radius(radius));
    }
    let prep = Prepared::new(net, center, radius, opts.prune, opts.wscale)?;
    let targets = prep.targets(opts.target)?;
    let dscale = scaling(opts.dscale, opts.input_scaling);
    let reports = targets
        .iter()
        .map(|&t| solve_target(&prep, t, opts.variant, dscale, &opts.solver).map(|s| s.report))
        .collect::<Result<Vec<_>>>()?;
    let strict_feasibility = if opts.diagnose {
        Some(diagnose_prepared(&prep, opts.variant, dscale, &opts.diagnose_solver)?.strict)
    } else {
        None
    };
    let verdict = verdict(&reports, &targets)?;
    Ok(VerificationReport {
        predicted: prep.predicted,
        variant: reports.first().map_or_else(|| opts.variant.name().to_string(), |r| r.variant.clone()),
        targets: reports,
        strict_feasibility,
        verdict,
        bound_method: BOUND_METHOD.to_string(),
        prune: prep.prune.clone(),
        min_eig_bound: prep.analytic.min_eig_bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareEntry {
    pub variant: String,
    pub gamma: f64,
    pub status: Status,
    /// `gamma* - gamma_D`.
    pub gap_to_exact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub target: usize,
    pub gamma_star: f64,
    pub entries: Vec<CompareEntry>,
}

/// Exact margin next to every variant's relaxation optimum.
///
/// Fails if a converged relaxation exceeds the exact value by more than
/// `1e-6`, which would make the relaxation unsound.
pub fn compare(net: &Network, center: &[f64], radius: f64, target: Option<usize>, variants: &[Variant], cfg: &SolverConfig) -> Result<Vec<CompareRow>> {
    let prep = Prepared::new(net, center, radius, false, false)?;
    let mut rows = Vec::new();
    for t in prep.targets(target)? {
        let margin = prep.margin(t)?;
        let gamma_star = exact_minimum(&prep.net, &prep.bounds, &margin)?.gamma;
        let mut entries = Vec::new();
        for &v in variants {
            let solved = solve_target(&prep, t, v, None, cfg)?;
            let gamma = solved.report.gamma;
            if solved.report.status == Status::Optimal && gamma > gamma_star + 1e-6 {
                return Err(Error::Solver(format!(
                    "{v} relaxation value {gamma} exceeds the exact margin {gamma_star} for target {t}"
                )));
            }
            entries.push(CompareEntry { variant: v.name().to_string(), gamma, status: solved.report.status, gap_to_exact: gamma_star - gamma });
        }
        rows.push(CompareRow { target: t, gamma_star, entries });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::Verdict;

    fn single_pm() -> Network {
        Network::from_rows(&[(vec![vec![1.0]], vec![0.0]), (vec![vec![0.5], vec![-0.5]], vec![0.0, 0.0])]).unwrap()
    }

    #[test]
    fn single_neuron_is_robust_with_half_margin() {
        let report = verify(&single_pm(), &[1.0], 0.5, &VerifyOptions::default()).unwrap();
        assert_eq!(report.verdict, Verdict::Robust);
        assert_eq!(report.predicted, 0);
        assert_eq!(report.targets.len(), 1);
        assert!((report.targets[0].gamma - 0.5).abs() < 1e-5, "{}", report.targets[0].gamma);
    }

    #[test]
    fn zero_radius_is_rejected() {
        assert!(matches!(verify(&single_pm(), &[1.0], 0.0, &VerifyOptions::default()), Err(Error::Radius(_))));
    }

    #[test]
    fn reachable_label_is_undetermined() {
        // output 1 wins for x < 0.05, which lies inside the box
        let net = Network::from_rows(&[(vec![vec![1.0]], vec![0.0]), (vec![vec![1.0], vec![0.0]], vec![0.0, 0.05])]).unwrap();
        let report = verify(&net, &[0.3], 0.3, &VerifyOptions::default()).unwrap();
        assert_eq!(report.predicted, 0);
        assert_ne!(report.verdict, Verdict::Robust);
        assert!(report.targets[0].gamma <= 0.0);
    }

    #[test]
    fn compare_on_active_network_is_tight() {
        let rows = compare(&single_pm(), &[1.0], 0.5, None, &Variant::all(), &SolverConfig::default()).unwrap();
        assert_eq!(rows.len(), 1);
        assert!((rows[0].gamma_star - 0.5).abs() < 1e-8);
        for e in &rows[0].entries {
            assert!(e.gap_to_exact.abs() <= 1e-5, "{}: {}", e.variant, e.gap_to_exact);
        }
    }

    #[test]
    fn targets_are_checked() {
        let prep = Prepared::new(&single_pm(), &[1.0], 0.5, true, false).unwrap();
        assert_eq!(prep.targets(None).unwrap(), vec![1]);
        assert!(matches!(prep.targets(Some(0)), Err(Error::TargetIsPrediction(0))));
        assert!(prep.targets(Some(5)).is_err());
    }
}
