//! Block-structured semidefinite programs and the builders that produce them.
//!
//! An [`SdpProblem`] is a minimization of `<C, X> + c0` over a block-diagonal
//! variable `X` whose blocks are either PSD matrices or nonnegative diagonals.
//! Constraints are `<A_j, X> (=|<=|>=) b_j`. All coefficient matrices are
//! symmetric and stored sparsely as upper-triangle entries.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

mod layout;
mod relaxation;
pub mod sdpa;
mod transform;

pub use layout::VariableLayout;
pub use relaxation::{build_relaxation, build_relaxation_with, Margin, Variant};
pub use transform::{apply_dscale, build_strict_feasibility, to_standard_form, InputScaling, LAMBDA_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    Psd,
    /// Nonnegative diagonal (LP-type) block.
    Diagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub kind: BlockKind,
    pub dim: usize,
}

impl BlockSpec {
    pub fn psd(dim: usize) -> Self {
        Self { kind: BlockKind::Psd, dim }
    }

    pub fn diagonal(dim: usize) -> Self {
        Self { kind: BlockKind::Diagonal, dim }
    }
}

/// Sparse symmetric block-diagonal matrix. Keys are `(block, row, col)` with
/// `row <= col`; an off-diagonal key stands for both mirrored positions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseBlockMatrix {
    entries: BTreeMap<(usize, usize, usize), f64>,
}

impl SparseBlockMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Accumulates `value` into the symmetric entry `(row, col)`.
    pub fn add(&mut self, block: usize, row: usize, col: usize, value: f64) {
        if value == 0.0 {
            return;
        }
        let key = (block, row.min(col), row.max(col));
        let slot = self.entries.entry(key).or_insert(0.0);
        *slot += value;
        if *slot == 0.0 {
            self.entries.remove(&key);
        }
    }

    /// Overwrites the symmetric entry `(row, col)`.
    pub fn set(&mut self, block: usize, row: usize, col: usize, value: f64) {
        let key = (block, row.min(col), row.max(col));
        if value == 0.0 {
            self.entries.remove(&key);
        } else {
            self.entries.insert(key, value);
        }
    }

    pub fn get(&self, block: usize, row: usize, col: usize) -> f64 {
        self.entries.get(&(block, row.min(col), row.max(col))).copied().unwrap_or(0.0)
    }

    /// Upper-triangle entries `(block, row, col, value)` in sorted order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        self.entries.iter().map(|(&(b, r, c), &v)| (b, r, c, v))
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.values().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Sum of diagonal entries inside the selected blocks.
    pub fn trace_where(&self, mut keep: impl FnMut(usize) -> bool) -> f64 {
        self.iter().filter(|&(b, r, c, _)| r == c && keep(b)).map(|(_, _, _, v)| v).sum()
    }

    /// `<self, X>` where `X` is given entry-wise by `value(block, row, col)`.
    pub fn inner_with(&self, mut value: impl FnMut(usize, usize, usize) -> f64) -> f64 {
        self.iter()
            .map(|(b, r, c, v)| {
                let w = if r == c { v } else { 2.0 * v };
                w * value(b, r, c)
            })
            .sum()
    }

    /// Congruence `D M D` on one block with diagonal `D = diag(scale)`.
    pub fn scale_block(&self, block: usize, scale: &[f64]) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|(&(b, r, c), &v)| {
                let v = if b == block { v * scale[r] * scale[c] } else { v };
                ((b, r, c), v)
            })
            .collect();
        Self { entries }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Eq,
    Le,
    Ge,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Eq => "=",
            Sense::Le => "<=",
            Sense::Ge => ">=",
        })
    }
}

/// Which constraint family a row belongs to. `layer` is the index of the
/// activation vector the row is about, `neuron` its coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    /// `P[1] = 1`.
    Normalization,
    /// `P[x_{i+1}] >= 0`.
    Nonnegative,
    /// `P[x_{i+1}] >= W_i P[x_i] + b_i`.
    ReluLower,
    /// `P[x_{i+1}] >= alpha (W_i P[x_i] + b_i)`.
    LeakyLower,
    /// Diagonal complementarity row, as equality, one side of the tolerance
    /// band, or the one-sided leaky version.
    Complementarity,
    /// `diag(P[x_i x_i^T]) - (l_i + u_i) P[x_i] + l_i u_i <= 0`.
    Bound,
    /// Rows of a plain linear program (oracle subproblems, hand-built tests).
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: SparseBlockMatrix,
    pub sense: Sense,
    pub rhs: f64,
    pub family: Family,
    pub layer: usize,
    pub neuron: usize,
}

impl Constraint {
    pub fn new(coeffs: SparseBlockMatrix, sense: Sense, rhs: f64) -> Self {
        Self { coeffs, sense, rhs, family: Family::Linear, layer: 0, neuron: 0 }
    }

    pub fn tagged(mut self, family: Family, layer: usize, neuron: usize) -> Self {
        self.family = family;
        self.layer = layer;
        self.neuron = neuron;
        self
    }
}

/// Descriptive data that travels with a problem through its transforms.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProblemMeta {
    pub variant: String,
    pub layout: Option<VariableLayout>,
    pub notes: Vec<String>,
    /// Diagonal scaling applied to block 0: the stored variable is
    /// `D^{-1} P D^{-1}` for `D = diag(scaling)`.
    pub scaling: Option<Vec<f64>>,
    /// Block that hosts inequality slacks, if any.
    pub slack_block: Option<usize>,
    /// For each constraint, its slack index within the slack block.
    pub slack_of: Vec<Option<usize>>,
    /// Block holding the shifted `lambda` of a strict-feasibility problem.
    pub lambda_block: Option<usize>,
    pub standard_form: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub blocks: Vec<BlockSpec>,
    pub objective: SparseBlockMatrix,
    pub offset: f64,
    pub constraints: Vec<Constraint>,
    pub meta: ProblemMeta,
}

impl SdpProblem {
    pub fn new(blocks: Vec<BlockSpec>) -> Self {
        Self {
            blocks,
            objective: SparseBlockMatrix::new(),
            offset: 0.0,
            constraints: Vec::new(),
            meta: ProblemMeta::default(),
        }
    }

    pub fn push(&mut self, constraint: Constraint) {
        self.constraints.push(constraint);
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn count(&self, family: Family) -> usize {
        self.constraints.iter().filter(|c| c.family == family).count()
    }

    pub fn count_sense(&self, sense: Sense) -> usize {
        self.constraints.iter().filter(|c| c.sense == sense).count()
    }

    pub fn is_standard_form(&self) -> bool {
        self.constraints.iter().all(|c| c.sense == Sense::Eq)
    }

    /// Total order of the variable, counting diagonal blocks by their length.
    pub fn total_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.dim).sum()
    }

    /// Largest absolute coefficient over `C`, every `A_j` and `b`.
    pub fn max_abs_coefficient(&self) -> f64 {
        let mut m = self.objective.max_abs();
        for c in &self.constraints {
            m = m.max(c.coeffs.max_abs()).max(c.rhs.abs());
        }
        m
    }

    /// Checks block indices, bounds and diagonal-block structure.
    pub fn validate(&self) -> crate::Result<()> {
        let check = |m: &SparseBlockMatrix, what: &str| -> crate::Result<()> {
            for (b, r, c, v) in m.iter() {
                let spec = self
                    .blocks
                    .get(b)
                    .ok_or_else(|| crate::Error::Shape(format!("{what}: block {b} does not exist")))?;
                if c >= spec.dim {
                    return Err(crate::Error::Shape(format!("{what}: entry ({r},{c}) outside block {b}")));
                }
                if spec.kind == BlockKind::Diagonal && r != c {
                    return Err(crate::Error::Shape(format!("{what}: off-diagonal entry in diagonal block {b}")));
                }
                if !v.is_finite() {
                    return Err(crate::Error::Value(format!("{what}: non-finite coefficient")));
                }
            }
            Ok(())
        };
        check(&self.objective, "objective")?;
        for (j, c) in self.constraints.iter().enumerate() {
            check(&c.coeffs, &format!("constraint {j}"))?;
            if !c.rhs.is_finite() {
                return Err(crate::Error::Value(format!("constraint {j}: non-finite right-hand side")));
            }
        }
        Ok(())
    }
}
