use nalgebra::{DMatrix, DVector};

use crate::sdpform::{BlockKind, BlockSpec};

/// Dense value of one block of a block-diagonal variable.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockMat {
    Psd(DMatrix<f64>),
    Diag(DVector<f64>),
}

impl BlockMat {
    pub fn zeros(spec: &BlockSpec) -> Self {
        match spec.kind {
            BlockKind::Psd => BlockMat::Psd(DMatrix::zeros(spec.dim, spec.dim)),
            BlockKind::Diagonal => BlockMat::Diag(DVector::zeros(spec.dim)),
        }
    }

    pub fn scaled_identity(spec: &BlockSpec, scale: f64) -> Self {
        match spec.kind {
            BlockKind::Psd => BlockMat::Psd(DMatrix::identity(spec.dim, spec.dim) * scale),
            BlockKind::Diagonal => BlockMat::Diag(DVector::from_element(spec.dim, scale)),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            BlockMat::Psd(m) => m.nrows(),
            BlockMat::Diag(d) => d.len(),
        }
    }

    /// Entry `(r, c)`; off-diagonal entries of diagonal blocks are zero.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        match self {
            BlockMat::Psd(m) => m[(r, c)],
            BlockMat::Diag(d) if r == c => d[r],
            BlockMat::Diag(_) => 0.0,
        }
    }

    pub fn dot(&self, other: &BlockMat) -> f64 {
        match (self, other) {
            (BlockMat::Psd(a), BlockMat::Psd(b)) => a.dot(b),
            (BlockMat::Diag(a), BlockMat::Diag(b)) => a.dot(b),
            _ => panic!("block kinds differ"),
        }
    }

    pub fn norm_squared(&self) -> f64 {
        match self {
            BlockMat::Psd(m) => m.norm_squared(),
            BlockMat::Diag(d) => d.norm_squared(),
        }
    }

    pub fn axpy(&mut self, a: f64, other: &BlockMat) {
        match (self, other) {
            (BlockMat::Psd(x), BlockMat::Psd(y)) => x.zip_apply(y, |xi, yi| *xi += a * yi),
            (BlockMat::Diag(x), BlockMat::Diag(y)) => x.axpy(a, y, 1.0),
            _ => panic!("block kinds differ"),
        }
    }

    /// Smallest eigenvalue (smallest entry for diagonal blocks).
    pub fn min_eigenvalue(&self) -> f64 {
        match self {
            BlockMat::Psd(m) if m.nrows() == 0 => f64::INFINITY,
            BlockMat::Psd(m) => m.symmetric_eigenvalues().min(),
            BlockMat::Diag(d) => d.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    pub fn trace(&self) -> f64 {
        match self {
            BlockMat::Psd(m) => m.trace(),
            BlockMat::Diag(d) => d.sum(),
        }
    }

    pub fn as_psd(&self) -> Option<&DMatrix<f64>> {
        match self {
            BlockMat::Psd(m) => Some(m),
            BlockMat::Diag(_) => None,
        }
    }

    pub fn as_diag(&self) -> Option<&DVector<f64>> {
        match self {
            BlockMat::Diag(d) => Some(d),
            BlockMat::Psd(_) => None,
        }
    }

    pub fn has_non_finite(&self) -> bool {
        match self {
            BlockMat::Psd(m) => m.iter().any(|v| !v.is_finite()),
            BlockMat::Diag(d) => d.iter().any(|v| !v.is_finite()),
        }
    }
}

pub(crate) fn dot_all(a: &[BlockMat], b: &[BlockMat]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

pub(crate) fn norm_all(a: &[BlockMat]) -> f64 {
    a.iter().map(BlockMat::norm_squared).sum::<f64>().sqrt()
}
