//! Exact minimum of a margin over the input box by enumerating ReLU
//! activation patterns. Each pattern makes the network affine, leaving a
//! linear program that is solved with the crate's own solver.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::LayerBounds;
use crate::error::{Error, Result};
use crate::network::Network;
use crate::sdpform::{to_standard_form, BlockSpec, Constraint, Margin, SdpProblem, Sense, SparseBlockMatrix};
use crate::solver::{solve, SolverConfig, Status};

/// Largest number of hidden neurons the enumeration accepts.
pub const MAX_HIDDEN_NEURONS: usize = 16;

/// Interior margin below which a pattern's region is treated as empty.
const INTERIOR_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivationPattern {
    /// `active[i][k]` for hidden layer `i + 1`, neuron `k`.
    pub active: Vec<Vec<bool>>,
}

impl ActivationPattern {
    pub fn matches(&self, net: &Network) -> bool {
        let sizes = net.layer_sizes();
        self.active.len() == net.depth() && self.active.iter().zip(&sizes[1..]).all(|(a, &n)| a.len() == n)
    }

    /// The pattern realized at input `x` (`pre-activation >= 0` counts as active).
    pub fn of_input(net: &Network, x: &[f64]) -> Result<Self> {
        let mut act = DVector::from_column_slice(x);
        if act.len() != net.input_dim() {
            return Err(Error::Dimension { expected: net.input_dim(), got: act.len() });
        }
        let mut active = Vec::new();
        for layer in &net.layers()[..net.depth()] {
            let pre = &layer.weight * &act + &layer.bias;
            active.push(pre.iter().map(|v| *v >= 0.0).collect());
            act = pre.map(|v| v.max(0.0));
        }
        Ok(Self { active })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// Exact minimum `gamma*` of the margin over the box.
    pub gamma: f64,
    /// Minimizing input.
    pub argmin: Vec<f64>,
    pub pattern: ActivationPattern,
    /// Patterns enumerated after fixing neurons whose sign is known from the bounds.
    pub patterns_total: usize,
    /// Patterns whose region has nonempty interior.
    pub patterns_feasible: usize,
}

/// `gamma*` for the margin of the label predicted at the box center over `target`.
pub fn exact_gamma(net: &Network, bounds: &LayerBounds, target: usize) -> Result<f64> {
    let input = bounds.input();
    let center: Vec<f64> = input.lower.iter().zip(&input.upper).map(|(l, u)| 0.5 * (l + u)).collect();
    let predicted = net.predict(&center)?;
    let margin = Margin::for_target(net, predicted, target)?;
    Ok(exact_minimum(net, bounds, &margin)?.gamma)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    Active,
    Inactive,
    Free,
}

/// Minimizes `margin(x_L)` over the input box of `bounds`.
pub fn exact_minimum(net: &Network, bounds: &LayerBounds, margin: &Margin) -> Result<OracleResult> {
    bounds.check_shapes(net)?;
    let hidden = net.hidden_neurons();
    if hidden > MAX_HIDDEN_NEURONS {
        return Err(Error::PatternCap { count: hidden, cap: MAX_HIDDEN_NEURONS });
    }
    let depth = net.depth();
    if margin.c.len() != net.layer_sizes()[depth] {
        return Err(Error::Dimension { expected: net.layer_sizes()[depth], got: margin.c.len() });
    }

    // neurons with a sign fixed by the bounds are not enumerated
    let phases: Vec<Vec<Phase>> = (0..depth)
        .map(|i| {
            let layer = net.layer(i);
            let b = bounds.layer(i);
            (0..layer.outputs())
                .map(|k| {
                    let (mut lo, mut hi) = (layer.bias[k], layer.bias[k]);
                    for l in 0..layer.inputs() {
                        let w = layer.weight[(k, l)];
                        let (a, c) = (w * b.lower[l], w * b.upper[l]);
                        lo += a.min(c);
                        hi += a.max(c);
                    }
                    if lo >= 0.0 {
                        Phase::Active
                    } else if hi <= 0.0 {
                        Phase::Inactive
                    } else {
                        Phase::Free
                    }
                })
                .collect()
        })
        .collect();
    let free: Vec<(usize, usize)> = phases
        .iter()
        .enumerate()
        .flat_map(|(i, p)| p.iter().enumerate().filter(|(_, ph)| **ph == Phase::Free).map(move |(k, _)| (i, k)))
        .collect();
    let total = 1usize << free.len();

    let results: Vec<Result<Option<(f64, Vec<f64>)>>> =
        (0..total).into_par_iter().map(|code| solve_pattern(net, bounds, margin, &phases, &free, code)).collect();

    let mut best: Option<(f64, Vec<f64>, usize)> = None;
    let mut feasible = 0;
    for (code, r) in results.into_iter().enumerate() {
        if let Some((v, z)) = r? {
            feasible += 1;
            if best.as_ref().is_none_or(|b| v < b.0) {
                best = Some((v, z, code));
            }
        }
    }
    let (gamma, argmin, code) = best.ok_or(Error::NoFeasiblePattern)?;
    let active = phases
        .iter()
        .enumerate()
        .map(|(i, p)| {
            p.iter()
                .enumerate()
                .map(|(k, ph)| match ph {
                    Phase::Active => true,
                    Phase::Inactive => false,
                    Phase::Free => code >> free.iter().position(|f| *f == (i, k)).unwrap_or(0) & 1 == 1,
                })
                .collect()
        })
        .collect();
    Ok(OracleResult {
        gamma,
        argmin,
        pattern: ActivationPattern { active },
        patterns_total: total,
        patterns_feasible: feasible,
    })
}

/// Returns the pattern's minimum and minimizer, or `None` if its region has empty interior.
fn solve_pattern(
    net: &Network,
    bounds: &LayerBounds,
    margin: &Margin,
    phases: &[Vec<Phase>],
    free: &[(usize, usize)],
    code: usize,
) -> Result<Option<(f64, Vec<f64>)>> {
    let input = bounds.input();
    let n0 = net.input_dim();
    let lower = DVector::from_column_slice(&input.lower);
    let width: Vec<f64> = input.upper.iter().zip(&input.lower).map(|(u, l)| u - l).collect();

    // x_i = a_mat z + a_vec with x_0 = lower + z
    let mut a_mat = DMatrix::<f64>::identity(n0, n0);
    let mut a_vec = lower.clone();
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut bit = 0;
    for (i, phase) in phases.iter().enumerate() {
        let layer = net.layer(i);
        let mut m = &layer.weight * &a_mat;
        let mut v = &layer.weight * &a_vec + &layer.bias;
        for (k, ph) in phase.iter().enumerate() {
            let on = match ph {
                Phase::Active => true,
                Phase::Inactive => false,
                Phase::Free => {
                    debug_assert_eq!(free[bit], (i, k));
                    let on = code >> bit & 1 == 1;
                    bit += 1;
                    let sign = if on { -1.0 } else { 1.0 };
                    rows.push((m.row(k).iter().map(|g| sign * g).collect(), -sign * v[k]));
                    on
                }
            };
            if !on {
                m.row_mut(k).fill(0.0);
                v[k] = 0.0;
            }
        }
        a_mat = m;
        a_vec = v;
    }
    let c = DVector::from_column_slice(&margin.c);
    let g: Vec<f64> = (a_mat.transpose() * &c).iter().copied().collect();
    let g0 = c.dot(&a_vec) + margin.offset;

    if !rows.is_empty() && interior_margin(n0, &width, &rows)? <= INTERIOR_TOL {
        return Ok(None);
    }
    let (value, z) = minimize(n0, &width, &rows, &g)?;
    let x: Vec<f64> = z.iter().zip(&input.lower).map(|(z, l)| l + z).collect();
    Ok(Some((value + g0, x)))
}

fn lp_config() -> SolverConfig {
    SolverConfig { gap_tol: 1e-10, feas_tol: 1e-10, ..SolverConfig::default() }
}

/// Largest `t <= 1` such that `G z + t <= h` for some `z` in `[0, width]`.
fn interior_margin(n0: usize, width: &[f64], rows: &[(Vec<f64>, f64)]) -> Result<f64> {
    // t = s - big with s in [0, big + 1]
    let big = 1.0
        + rows
            .iter()
            .map(|(g, h)| h.abs() + g.iter().zip(width).map(|(a, w)| a.abs() * w).sum::<f64>())
            .fold(0.0, f64::max);
    let mut prob = SdpProblem::new(vec![BlockSpec::diagonal(n0 + 1)]);
    prob.objective.add(0, n0, n0, -1.0);
    push_box(&mut prob, width);
    prob.push(row(&[(n0, 1.0)], big + 1.0));
    for (g, h) in rows {
        let mut entries: Vec<(usize, f64)> = g.iter().copied().enumerate().collect();
        entries.push((n0, 1.0));
        prob.push(row(&entries, h + big));
    }
    let sol = solve(&to_standard_form(&prob), &lp_config())?;
    if sol.status != Status::Optimal {
        return Err(Error::Solver(format!("pattern feasibility LP ended with {}", sol.status)));
    }
    Ok(-sol.primal_obj - big)
}

fn minimize(n0: usize, width: &[f64], rows: &[(Vec<f64>, f64)], g: &[f64]) -> Result<(f64, Vec<f64>)> {
    let mut prob = SdpProblem::new(vec![BlockSpec::diagonal(n0)]);
    for (k, gk) in g.iter().enumerate() {
        prob.objective.add(0, k, k, *gk);
    }
    push_box(&mut prob, width);
    for (gr, h) in rows {
        let entries: Vec<(usize, f64)> = gr.iter().copied().enumerate().collect();
        prob.push(row(&entries, *h));
    }
    let sol = solve(&to_standard_form(&prob), &lp_config())?;
    if sol.status != Status::Optimal {
        return Err(Error::Solver(format!("pattern LP ended with {}", sol.status)));
    }
    let z = sol.x[0].as_diag().map(|d| d.rows(0, n0).iter().copied().collect()).unwrap_or_default();
    Ok((sol.primal_obj, z))
}

fn push_box(prob: &mut SdpProblem, width: &[f64]) {
    for (k, w) in width.iter().enumerate() {
        prob.push(row(&[(k, 1.0)], *w));
    }
}

fn row(entries: &[(usize, f64)], rhs: f64) -> Constraint {
    let mut m = SparseBlockMatrix::new();
    for &(k, v) in entries {
        m.add(0, k, k, v);
    }
    Constraint::new(m, Sense::Le, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::bounds_for;
    use crate::sdpform::{build_relaxation, to_standard_form, Variant};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single() -> Network {
        Network::from_rows(&[(vec![vec![1.0]], vec![0.0]), (vec![vec![1.0]], vec![0.0])]).unwrap()
    }

    #[test]
    fn single_neuron_active_box() {
        let net = single();
        let bounds = bounds_for(&net, &[1.0], 0.5).unwrap();
        let r = exact_minimum(&net, &bounds, &Margin::output(&net, 0).unwrap()).unwrap();
        assert!((r.gamma - 0.5).abs() < 1e-8, "{}", r.gamma);
        assert_eq!(r.pattern.active, vec![vec![true]]);
    }

    #[test]
    fn single_neuron_dead_box() {
        let net = single();
        let bounds = bounds_for(&net, &[-1.0], 0.5).unwrap();
        let r = exact_minimum(&net, &bounds, &Margin::output(&net, 0).unwrap()).unwrap();
        assert!(r.gamma.abs() < 1e-8);
    }

    #[test]
    fn straddling_neuron_enumerates_both_patterns() {
        // x in [-1, 1], relu(x) - 0.5 x has minimum 0 at x = 0 ... and -0.5 * -1 = 0.5 at x=-1
        let net = Network::from_rows(&[
            (vec![vec![1.0], vec![1.0]], vec![0.0, 0.0]),
            (vec![vec![1.0, 0.0]], vec![0.0]),
        ])
        .unwrap();
        let bounds = bounds_for(&net, &[0.0], 1.0).unwrap();
        let margin = Margin { c: vec![1.0, -1.5], offset: 0.0 };
        let r = exact_minimum(&net, &bounds, &margin).unwrap();
        assert_eq!(r.patterns_total, 4);
        // both neurons share the pre-activation, so mixed patterns are empty
        assert_eq!(r.patterns_feasible, 2);
        assert!((r.gamma + 0.5).abs() < 1e-8, "{}", r.gamma);
    }

    #[test]
    fn pattern_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Network::random(2, &[9, 9], 2, &mut rng).unwrap();
        let bounds = bounds_for(&net, &[0.0, 0.0], 0.1).unwrap();
        assert!(matches!(exact_gamma(&net, &bounds, 1), Err(Error::PatternCap { count: 18, cap: 16 }) | Err(Error::TargetIsPrediction(1))));
    }

    #[test]
    fn sampling_never_beats_the_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let net = Network::random(2, &[3, 3], 3, &mut rng).unwrap();
            let center = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let radius = 0.4;
            let bounds = bounds_for(&net, &center, radius).unwrap();
            let predicted = net.predict(&center).unwrap();
            let target = (predicted + 1) % 3;
            let margin = Margin::for_target(&net, predicted, target).unwrap();
            let r = exact_minimum(&net, &bounds, &margin).unwrap();
            let at_argmin = margin.evaluate(net.trace(&r.argmin).unwrap()[net.depth()].as_slice());
            assert!((at_argmin - r.gamma).abs() < 1e-6, "{at_argmin} vs {}", r.gamma);
            let mut best = f64::INFINITY;
            for _ in 0..1000 {
                let x: Vec<f64> = center.iter().map(|c| c + rng.random_range(-radius..=radius)).collect();
                best = best.min(margin.evaluate(net.trace(&x).unwrap()[net.depth()].as_slice()));
            }
            assert!(r.gamma <= best + 1e-9, "{} > {best}", r.gamma);
        }
    }

    #[test]
    fn oracle_bounds_the_base_relaxation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        for _ in 0..20 {
            let net = Network::random(2, &[2], 2, &mut rng).unwrap();
            let center = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let bounds = bounds_for(&net, &center, 0.3).unwrap();
            let target = 1 - net.predict(&center).unwrap();
            let star = exact_gamma(&net, &bounds, target).unwrap();
            let prob = to_standard_form(&build_relaxation(&net, &bounds, target, Variant::Base).unwrap());
            let sol = solve(&prob, &SolverConfig::default()).unwrap();
            if sol.is_optimal() {
                assert!(star >= sol.primal_obj - 1e-6, "{star} < {}", sol.primal_obj);
                checked += 1;
            }
        }
        assert!(checked >= 10);
    }

    #[test]
    fn pattern_of_input() {
        let net = single();
        assert_eq!(ActivationPattern::of_input(&net, &[2.0]).unwrap().active, vec![vec![true]]);
        assert_eq!(ActivationPattern::of_input(&net, &[-2.0]).unwrap().active, vec![vec![false]]);
        assert!(ActivationPattern::of_input(&net, &[-2.0]).unwrap().matches(&net));
    }
}
