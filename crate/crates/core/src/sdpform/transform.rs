//! Problem-to-problem transforms: diagonal scaling, slack conversion and the
//! strict-feasibility (inscribed radius) problem.

use serde::{Deserialize, Serialize};

use super::{BlockKind, BlockSpec, Constraint, SdpProblem, Sense, SparseBlockMatrix};
use crate::bounds::LayerBounds;
use crate::error::{Error, Result};

/// Scaling used for the input-layer entries of the D-Scale diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputScaling {
    /// `|u_0|`, floored at `1e-6`.
    #[default]
    UpperMagnitude,
    Ones,
}

const INPUT_SCALE_FLOOR: f64 = 1e-6;

/// Replaces every matrix `M` on the moment block by `D M D` with
/// `D = diag(1, s_0, u_1, ..., u_L)`.
///
/// The stored variable becomes `D^{-1} P D^{-1}`; the optimal value is unchanged.
pub fn apply_dscale(prob: &SdpProblem, bounds: &LayerBounds, input: InputScaling) -> Result<SdpProblem> {
    let layout = prob
        .meta
        .layout
        .as_ref()
        .ok_or_else(|| Error::Parameter("D-Scale needs a relaxation with a variable layout".into()))?;
    if prob.meta.scaling.is_some() {
        return Err(Error::Parameter("problem is already scaled".into()));
    }
    if bounds.boxes.len() != layout.layers() {
        return Err(Error::Shape("bounds do not match the problem layout".into()));
    }
    let mut d = vec![1.0; layout.dim()];
    for (i, range) in (0..layout.layers()).map(|i| (i, layout.range(i))) {
        let upper = &bounds.layer(i).upper;
        if upper.len() != range.len() {
            return Err(Error::Shape(format!("bounds for layer {i} do not match the layout")));
        }
        for (k, idx) in range.enumerate() {
            d[idx] = if i == 0 {
                match input {
                    InputScaling::UpperMagnitude => upper[k].abs().max(INPUT_SCALE_FLOOR),
                    InputScaling::Ones => 1.0,
                }
            } else {
                upper[k]
            };
            if !(d[idx] > 0.0) || !d[idx].is_finite() {
                return Err(Error::Scale { index: idx, value: d[idx] });
            }
        }
    }
    let mut out = prob.clone();
    out.objective = prob.objective.scale_block(0, &d);
    for (dst, src) in out.constraints.iter_mut().zip(&prob.constraints) {
        dst.coeffs = src.coeffs.scale_block(0, &d);
    }
    out.meta.notes.push("dscale".into());
    out.meta.scaling = Some(d);
    Ok(out)
}

/// Converts every inequality into an equality with one nonnegative slack
/// hosted in a diagonal block appended after the existing blocks.
pub fn to_standard_form(prob: &SdpProblem) -> SdpProblem {
    let mut out = prob.clone();
    out.meta.standard_form = true;
    if out.meta.slack_of.len() != out.constraints.len() {
        out.meta.slack_of = vec![None; out.constraints.len()];
    }
    let inequalities = prob.constraints.iter().filter(|c| c.sense != Sense::Eq).count();
    if inequalities == 0 {
        return out;
    }
    let block = out.blocks.len();
    out.blocks.push(BlockSpec::diagonal(inequalities));
    let mut next = 0;
    for (j, c) in out.constraints.iter_mut().enumerate() {
        let sign = match c.sense {
            Sense::Eq => continue,
            Sense::Le => 1.0,
            Sense::Ge => -1.0,
        };
        c.coeffs.add(block, next, next, sign);
        c.sense = Sense::Eq;
        out.meta.slack_of[j] = Some(next);
        next += 1;
    }
    out.meta.slack_block = Some(block);
    out
}

/// Lower end of the admissible range of `lambda` in the strict-feasibility
/// problem. Any `lambda <= 0` is feasible whenever the relaxation is.
pub const LAMBDA_FLOOR: f64 = 1.0;

/// Builds `max lambda s.t. <A_j, X + lambda I> = b_j, X >= 0` in standard form.
///
/// `lambda = mu - LAMBDA_FLOOR` with `mu >= 0` held in a one-entry diagonal
/// block; the objective is `min -mu + LAMBDA_FLOOR`, so the optimal value is
/// `-lambda*`. The identity shift covers the PSD blocks only; diagonal blocks
/// (slacks) are not shifted.
pub fn build_strict_feasibility(prob: &SdpProblem) -> Result<SdpProblem> {
    if let Some(j) = prob.constraints.iter().position(|c| c.sense != Sense::Eq) {
        return Err(Error::NotStandardForm(j));
    }
    let lambda = prob.blocks.len();
    let mut blocks = prob.blocks.clone();
    blocks.push(BlockSpec::diagonal(1));
    let psd = |b: usize| prob.blocks[b].kind == BlockKind::Psd;

    let mut objective = SparseBlockMatrix::new();
    objective.add(lambda, 0, 0, -1.0);

    let constraints = prob
        .constraints
        .iter()
        .map(|c| {
            let t = c.coeffs.trace_where(psd);
            let mut coeffs = c.coeffs.clone();
            coeffs.add(lambda, 0, 0, t);
            Constraint { coeffs, rhs: c.rhs + LAMBDA_FLOOR * t, ..c.clone() }
        })
        .collect();

    let mut meta = prob.meta.clone();
    meta.lambda_block = Some(lambda);
    meta.standard_form = true;
    meta.notes.push("strict-feasibility".into());
    Ok(SdpProblem { blocks, objective, offset: LAMBDA_FLOOR, constraints, meta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdpform::Family;

    fn lp_row(entries: &[(usize, usize, f64)], sense: Sense, rhs: f64) -> Constraint {
        let mut m = SparseBlockMatrix::new();
        for &(b, i, v) in entries {
            m.add(b, i, i, v);
        }
        Constraint::new(m, sense, rhs)
    }

    #[test]
    fn slack_per_inequality() {
        let mut p = SdpProblem::new(vec![BlockSpec::psd(2)]);
        p.push(lp_row(&[(0, 0, 1.0)], Sense::Le, 1.0));
        p.push(lp_row(&[(0, 1, 1.0)], Sense::Eq, 1.0));
        p.push(lp_row(&[(0, 0, 2.0)], Sense::Ge, 0.5));
        p.push(lp_row(&[(0, 1, 1.0)], Sense::Le, 3.0));
        p.push(lp_row(&[(0, 0, 1.0), (0, 1, 1.0)], Sense::Eq, 2.0));
        let s = to_standard_form(&p);
        assert_eq!(s.blocks, vec![BlockSpec::psd(2), BlockSpec::diagonal(3)]);
        assert_eq!(s.num_constraints(), 5);
        assert!(s.is_standard_form());
        assert_eq!(s.constraints[0].coeffs.get(1, 0, 0), 1.0);
        assert_eq!(s.constraints[2].coeffs.get(1, 1, 1), -1.0);
        assert_eq!(s.meta.slack_of, vec![Some(0), None, Some(1), Some(2), None]);
    }

    #[test]
    fn equality_problem_is_untouched() {
        let mut p = SdpProblem::new(vec![BlockSpec::psd(2)]);
        p.push(lp_row(&[(0, 0, 1.0), (0, 1, 1.0)], Sense::Eq, 1.0));
        let s = to_standard_form(&p);
        assert_eq!(s.blocks, p.blocks);
        assert_eq!(s.constraints, p.constraints);
        assert!(s.meta.standard_form);
    }

    #[test]
    fn feasible_points_extend_with_slacks() {
        // X = diag(0.5, 2) satisfies all rows; slacks are the row residuals
        let mut p = SdpProblem::new(vec![BlockSpec::psd(2)]);
        p.objective.add(0, 0, 0, 3.0);
        p.objective.add(0, 0, 1, 1.0);
        p.push(lp_row(&[(0, 0, 1.0)], Sense::Le, 1.0));
        p.push(lp_row(&[(0, 1, 1.0)], Sense::Ge, 1.5));
        p.push(lp_row(&[(0, 0, 1.0), (0, 1, 1.0)], Sense::Eq, 2.5));
        let x = [[0.5, 0.0], [0.0, 2.0]];
        let s = to_standard_form(&p);
        let mut slacks = vec![0.0; 2];
        for (c, slot) in p.constraints.iter().zip(&s.meta.slack_of) {
            if let Some(k) = slot {
                slacks[*k] = (c.rhs - c.coeffs.inner_with(|_, r, q| x[r][q])).abs();
            }
        }
        let value = |b: usize, r: usize, k: usize| if b == 0 { x[r][k] } else { slacks[r] };
        for c in &s.constraints {
            assert!((c.coeffs.inner_with(value) - c.rhs).abs() < 1e-14);
        }
        assert_eq!(s.objective.inner_with(value), p.objective.inner_with(|_, r, k| x[r][k]));
    }

    #[test]
    fn strict_feasibility_structure() {
        let mut p = SdpProblem::new(vec![BlockSpec::psd(2)]);
        p.push(lp_row(&[(0, 0, 1.0), (0, 1, 1.0)], Sense::Le, 1.0).tagged(Family::Linear, 0, 0));
        assert!(matches!(build_strict_feasibility(&p), Err(Error::NotStandardForm(0))));
        let s = to_standard_form(&p);
        let f = build_strict_feasibility(&s).unwrap();
        assert_eq!(f.blocks.len(), 3);
        assert_eq!(f.meta.lambda_block, Some(2));
        // trace of the PSD part only; the slack is not shifted
        assert_eq!(f.blocks[2], BlockSpec::diagonal(1));
        assert_eq!(f.constraints[0].coeffs.get(2, 0, 0), 2.0);
        assert_eq!(f.constraints[0].rhs, 1.0 + 2.0 * LAMBDA_FLOOR);
        assert_eq!(f.objective.get(2, 0, 0), -1.0);
        assert_eq!(f.offset, LAMBDA_FLOOR);
    }
}
