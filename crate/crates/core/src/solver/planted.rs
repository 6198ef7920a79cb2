//! Random standard-form instances with a known optimal primal-dual pair.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::BlockMat;
use crate::sdpform::{BlockKind, BlockSpec, Constraint, SdpProblem, Sense, SparseBlockMatrix};

/// A generated problem together with the strictly complementary solution it
/// was built around.
#[derive(Debug, Clone)]
pub struct Planted {
    pub problem: SdpProblem,
    pub x: Vec<BlockMat>,
    pub y: Vec<f64>,
    pub s: Vec<BlockMat>,
    /// `<C, X> = b^T y` at the planted pair.
    pub optimum: f64,
}

/// Builds `m` random constraints over `blocks`, each coefficient present with
/// probability `density`, around `X`, `S` that share an eigenbasis with
/// complementary supports.
pub fn planted_instance<R: Rng + ?Sized>(blocks: &[BlockSpec], m: usize, density: f64, rng: &mut R) -> Planted {
    let mut normal = || -> f64 { StandardNormal.sample(rng) };
    let mut x = Vec::new();
    let mut s = Vec::new();
    for spec in blocks {
        let n = spec.dim;
        let split = n.div_ceil(2);
        match spec.kind {
            BlockKind::Psd => {
                let g = DMatrix::from_fn(n, n, |_, _| normal());
                let q = g.qr().q();
                let ex = DVector::from_fn(n, |k, _| if k < split { 0.5 + (k as f64 + 1.0) / n as f64 } else { 0.0 });
                let es = DVector::from_fn(n, |k, _| if k < split { 0.0 } else { 0.5 + (k as f64 + 1.0) / n as f64 });
                x.push(BlockMat::Psd(&q * DMatrix::from_diagonal(&ex) * q.transpose()));
                s.push(BlockMat::Psd(&q * DMatrix::from_diagonal(&es) * q.transpose()));
            }
            BlockKind::Diagonal => {
                x.push(BlockMat::Diag(DVector::from_fn(n, |k, _| if k % 2 == 0 { 1.0 + k as f64 / n as f64 } else { 0.0 })));
                s.push(BlockMat::Diag(DVector::from_fn(n, |k, _| if k % 2 == 0 { 0.0 } else { 1.0 + k as f64 / n as f64 })));
            }
        }
    }
    for b in x.iter_mut().chain(s.iter_mut()) {
        if let BlockMat::Psd(m) = b {
            let t = m.transpose();
            *m = (&*m + t) * 0.5;
        }
    }

    let y: Vec<f64> = (0..m).map(|_| StandardNormal.sample(rng)).collect();
    let mut prob = SdpProblem::new(blocks.to_vec());
    for _ in 0..m {
        let mut a = SparseBlockMatrix::new();
        for (k, spec) in blocks.iter().enumerate() {
            for r in 0..spec.dim {
                let cols = if spec.kind == BlockKind::Psd { r..spec.dim } else { r..r + 1 };
                for c in cols {
                    if rng.random::<f64>() < density {
                        a.add(k, r, c, StandardNormal.sample(rng));
                    }
                }
            }
        }
        let rhs = a.inner_with(|k, r, c| x[k].get(r, c));
        prob.push(Constraint::new(a, Sense::Eq, rhs));
    }
    // C = S + sum_j y_j A_j
    let mut cmat = SparseBlockMatrix::new();
    for (k, b) in s.iter().enumerate() {
        for r in 0..b.dim() {
            for c in r..b.dim() {
                cmat.add(k, r, c, b.get(r, c));
            }
        }
    }
    for (con, &yj) in prob.constraints.iter().zip(&y) {
        for (k, r, c, v) in con.coeffs.iter() {
            cmat.add(k, r, c, yj * v);
        }
    }
    prob.objective = cmat;
    prob.meta.standard_form = true;
    prob.meta.slack_of = vec![None; m];
    prob.meta.variant = "planted".into();
    let optimum = prob.constraints.iter().zip(&y).map(|(c, y)| c.rhs * y).sum();
    Planted { problem: prob, x, y, s, optimum }
}
