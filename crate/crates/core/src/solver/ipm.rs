use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::blocks::{dot_all, norm_all, BlockMat};
use super::{Residuals, SdpSolution, SolverConfig, Status};
use crate::sdpform::{BlockKind, BlockSpec, SdpProblem};

const UNBOUNDED_OBJECTIVE: f64 = 1e12;
const MIN_STEP: f64 = 1e-8;
const STALL_WINDOW: usize = 20;
const NO_CORRECTOR_SIGMA: f64 = 0.3;
const BACKTRACK_TRIES: usize = 30;
const BACKTRACK_FACTOR: f64 = 0.7;

/// Constraints touching one PSD block, with their coefficient matrices
/// expanded to full symmetric entry lists.
struct PsdTerms {
    block: usize,
    cons: Vec<usize>,
    expanded: Vec<Vec<(usize, usize, f64)>>,
    dense: Vec<bool>,
}

/// Constraint data compiled for repeated operator applications.
pub(crate) struct Operator {
    specs: Vec<BlockSpec>,
    /// Per constraint `(block, row, col, value)` with `row <= col`.
    rows: Vec<Vec<(usize, usize, usize, f64)>>,
    b: Vec<f64>,
    c: Vec<BlockMat>,
    c_norm: f64,
    psd: Vec<PsdTerms>,
    /// Per diagonal block, per element: `(constraint, coefficient)`.
    diag: Vec<(usize, Vec<Vec<(usize, f64)>>)>,
}

impl Operator {
    pub(crate) fn new(prob: &SdpProblem) -> Self {
        let specs = prob.blocks.clone();
        let rows: Vec<Vec<_>> = prob.constraints.iter().map(|c| c.coeffs.iter().collect()).collect();
        let b = prob.constraints.iter().map(|c| c.rhs).collect();

        let mut c: Vec<BlockMat> = specs.iter().map(BlockMat::zeros).collect();
        for (blk, r, col, v) in prob.objective.iter() {
            add_sym(&mut c[blk], r, col, v);
        }
        let c_norm = norm_all(&c);

        let mut psd = Vec::new();
        let mut diag = Vec::new();
        for (k, spec) in specs.iter().enumerate() {
            match spec.kind {
                BlockKind::Psd => {
                    let mut terms = PsdTerms { block: k, cons: Vec::new(), expanded: Vec::new(), dense: Vec::new() };
                    for (j, row) in rows.iter().enumerate() {
                        let mut e = Vec::new();
                        for &(blk, r, col, v) in row.iter().filter(|t| t.0 == k) {
                            let _ = blk;
                            e.push((r, col, v));
                            if r != col {
                                e.push((col, r, v));
                            }
                        }
                        if !e.is_empty() {
                            terms.cons.push(j);
                            terms.expanded.push(e);
                        }
                    }
                    let total: usize = terms.expanded.iter().map(Vec::len).sum();
                    let cube = (spec.dim as f64).powi(3);
                    terms.dense = terms.expanded.iter().map(|e| (e.len() as f64) * (total as f64) > 2.0 * cube).collect();
                    psd.push(terms);
                }
                BlockKind::Diagonal => {
                    let mut elems = vec![Vec::new(); spec.dim];
                    for (j, row) in rows.iter().enumerate() {
                        for &(_, r, _, v) in row.iter().filter(|t| t.0 == k) {
                            elems[r].push((j, v));
                        }
                    }
                    diag.push((k, elems));
                }
            }
        }
        Self { specs, rows, b, c, c_norm, psd, diag }
    }

    fn m(&self) -> usize {
        self.b.len()
    }

    /// `(<A_j, X>)_j` for symmetric `X`.
    fn apply(&self, x: &[BlockMat]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&(blk, r, c, v)| {
                        let w = if r == c { v } else { 2.0 * v };
                        w * x[blk].get(r, c)
                    })
                    .sum()
            })
            .collect()
    }

    /// `sum_j y_j A_j`.
    fn adjoint(&self, y: &[f64]) -> Vec<BlockMat> {
        let mut out: Vec<BlockMat> = self.specs.iter().map(BlockMat::zeros).collect();
        for (row, &yj) in self.rows.iter().zip(y) {
            if yj == 0.0 {
                continue;
            }
            for &(blk, r, c, v) in row {
                add_sym(&mut out[blk], r, c, yj * v);
            }
        }
        out
    }

    fn dual_residual(&self, y: &[f64], s: &[BlockMat]) -> Vec<BlockMat> {
        let mut rd = self.c.clone();
        let ay = self.adjoint(y);
        for ((r, a), sk) in rd.iter_mut().zip(&ay).zip(s) {
            r.axpy(-1.0, a);
            r.axpy(-1.0, sk);
        }
        rd
    }

    pub(crate) fn residuals(&self, x: &[BlockMat], y: &[f64], s: &[BlockMat]) -> Residuals {
        let ax = self.apply(x);
        let primal = ax
            .iter()
            .zip(&self.b)
            .map(|(a, b)| (a - b).abs() / (1.0 + b.abs()))
            .fold(0.0, f64::max);
        let dual = norm_all(&self.dual_residual(y, s)) / (1.0 + self.c_norm);
        let pobj = dot_all(&self.c, x);
        let dobj: f64 = self.b.iter().zip(y).map(|(b, y)| b * y).sum();
        Residuals { primal, dual, gap: (pobj - dobj).abs() / (1.0 + pobj.abs()) }
    }

    /// Schur complement `M_ij = <A_i, X A_j S^{-1}>` summed over blocks.
    fn schur(&self, x: &[BlockMat], sinv: &[BlockMat]) -> DMatrix<f64> {
        let m = self.m();
        let mut mat = DMatrix::<f64>::zeros(m, m);
        for t in &self.psd {
            let (Some(xb), Some(sb)) = (x[t.block].as_psd(), sinv[t.block].as_psd()) else { continue };
            let n = xb.nrows();
            let xs = xb.as_slice();
            let ss = sb.as_slice();
            for a in 0..t.cons.len() {
                let i = t.cons[a];
                if t.dense[a] {
                    // G = X A_i S^{-1}; M_ij = <A_j, G>
                    let mut xa = DMatrix::<f64>::zeros(n, n);
                    for &(r, s, v) in &t.expanded[a] {
                        let mut col = xa.column_mut(s);
                        col.axpy(v, &xb.column(r), 1.0);
                    }
                    let g = xa * sb;
                    for bidx in 0..t.cons.len() {
                        if t.dense[bidx] && bidx > a {
                            continue;
                        }
                        let j = t.cons[bidx];
                        let val: f64 = t.expanded[bidx].iter().map(|&(r, s, w)| w * g[(s, r)]).sum();
                        mat[(i.max(j), i.min(j))] += val;
                    }
                } else {
                    let ea = &t.expanded[a];
                    for bidx in 0..=a {
                        if t.dense[bidx] {
                            continue;
                        }
                        let j = t.cons[bidx];
                        let mut val = 0.0;
                        for &(p, q, v) in ea {
                            let mut inner = 0.0;
                            for &(r, s, w) in &t.expanded[bidx] {
                                inner += w * xs[q + r * n] * ss[s + p * n];
                            }
                            val += v * inner;
                        }
                        mat[(i, j)] += val;
                    }
                }
            }
        }
        for (blk, elems) in &self.diag {
            let (Some(xd), Some(sd)) = (x[*blk].as_diag(), sinv[*blk].as_diag()) else { continue };
            for (k, list) in elems.iter().enumerate() {
                let ratio = xd[k] * sd[k];
                for (a, &(i, vi)) in list.iter().enumerate() {
                    for &(j, vj) in &list[..=a] {
                        mat[(i, j)] += vi * vj * ratio;
                    }
                }
            }
        }
        for i in 0..m {
            for j in 0..i {
                mat[(j, i)] = mat[(i, j)];
            }
        }
        mat
    }
}

fn add_sym(m: &mut BlockMat, r: usize, c: usize, v: f64) {
    match m {
        BlockMat::Psd(a) => {
            a[(r, c)] += v;
            if r != c {
                a[(c, r)] += v;
            }
        }
        BlockMat::Diag(d) => d[r] += v,
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Cholesky of the Schur complement with a diagonal regularization ladder.
fn factor_schur(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c);
    }
    let scale = m.diagonal().iter().fold(1.0f64, |a, &v| a.max(v.abs()));
    let mut delta = 1e-12;
    while delta <= 1e-6 * (1.0 + 1e-9) {
        let mut reg = m.clone();
        for i in 0..reg.nrows() {
            reg[(i, i)] += delta * scale;
        }
        if let Some(c) = Cholesky::new(reg) {
            return Some(c);
        }
        delta *= 10.0;
    }
    None
}

/// Per-block factorization data of the current iterate.
struct Factors {
    lx: Vec<Option<DMatrix<f64>>>,
    ls: Vec<Option<DMatrix<f64>>>,
    sinv: Vec<BlockMat>,
}

fn factor_iterate(x: &[BlockMat], s: &[BlockMat]) -> Option<Factors> {
    let mut f = Factors { lx: Vec::new(), ls: Vec::new(), sinv: Vec::new() };
    for (xb, sb) in x.iter().zip(s) {
        match (xb, sb) {
            (BlockMat::Psd(xm), BlockMat::Psd(sm)) => {
                let cx = Cholesky::new(xm.clone())?;
                let cs = Cholesky::new(sm.clone())?;
                f.lx.push(Some(cx.l()));
                f.ls.push(Some(cs.l()));
                let mut inv = cs.inverse();
                symmetrize(&mut inv);
                f.sinv.push(BlockMat::Psd(inv));
            }
            (BlockMat::Diag(xd), BlockMat::Diag(sd)) => {
                if xd.iter().chain(sd.iter()).any(|v| !(*v > 0.0)) {
                    return None;
                }
                f.lx.push(None);
                f.ls.push(None);
                f.sinv.push(BlockMat::Diag(sd.map(|v| 1.0 / v)));
            }
            _ => return None,
        }
    }
    Some(f)
}

/// Largest `alpha` with `V + alpha dV` positive semidefinite (may be infinite).
fn max_step(v: &BlockMat, l: Option<&DMatrix<f64>>, dv: &BlockMat) -> f64 {
    match (v, dv) {
        (BlockMat::Psd(_), BlockMat::Psd(d)) => {
            let Some(l) = l else { return 0.0 };
            let Some(t) = l.solve_lower_triangular(d) else { return 0.0 };
            let Some(mut w) = l.solve_lower_triangular(&t.transpose()) else { return 0.0 };
            symmetrize(&mut w);
            let lmin = w.symmetric_eigenvalues().min();
            if lmin < 0.0 {
                -1.0 / lmin
            } else {
                f64::INFINITY
            }
        }
        (BlockMat::Diag(x), BlockMat::Diag(d)) => x
            .iter()
            .zip(d.iter())
            .filter(|(_, dv)| **dv < 0.0)
            .map(|(xv, dv)| -xv / dv)
            .fold(f64::INFINITY, f64::min),
        _ => 0.0,
    }
}

/// `V + alpha dV`, shrinking `alpha` until every block stays positive definite.
fn advance(v: &[BlockMat], dv: &[BlockMat], mut alpha: f64) -> Option<(Vec<BlockMat>, f64)> {
    for _ in 0..BACKTRACK_TRIES {
        let mut next = v.to_vec();
        for (b, d) in next.iter_mut().zip(dv) {
            b.axpy(alpha, d);
        }
        let ok = next.iter().all(|b| match b {
            BlockMat::Psd(m) => Cholesky::new(m.clone()).is_some(),
            BlockMat::Diag(d) => d.iter().all(|x| *x > 0.0),
        });
        if ok {
            return Some((next, alpha));
        }
        alpha *= BACKTRACK_FACTOR;
    }
    None
}

struct Direction {
    dx: Vec<BlockMat>,
    dy: DVector<f64>,
    ds: Vec<BlockMat>,
}

pub(crate) struct Ipm<'a> {
    op: Operator,
    cfg: &'a SolverConfig,
    offset: f64,
    n: f64,
    mu0: f64,
}

impl<'a> Ipm<'a> {
    pub(crate) fn new(prob: &SdpProblem, cfg: &'a SolverConfig) -> Self {
        let scale = prob.max_abs_coefficient();
        let mu0 = cfg.initial_scale.unwrap_or(100.0 * if scale > 0.0 { scale } else { 1.0 });
        let n = prob.total_dim().max(1) as f64;
        Self { op: Operator::new(prob), cfg, offset: prob.offset, n, mu0 }
    }

    pub(crate) fn run(&self) -> SdpSolution {
        let op = &self.op;
        let cfg = self.cfg;
        let mut x: Vec<BlockMat> = op.specs.iter().map(|s| BlockMat::scaled_identity(s, self.mu0)).collect();
        let mut s = x.clone();
        let mut y = vec![0.0; op.m()];
        let mut mu_history = Vec::new();
        let mut best_merit = f64::INFINITY;
        let mut last_progress = 0;
        // iterate with the smallest merit so far, returned on failure
        let mut best: Option<(f64, Vec<BlockMat>, Vec<f64>, Vec<BlockMat>)> = None;

        let finish = |status: Status, x: Vec<BlockMat>, y: Vec<f64>, s: Vec<BlockMat>, it: usize, mu_history: Vec<f64>, msg: Option<&str>| {
            let residuals = op.residuals(&x, &y, &s);
            let primal_obj = dot_all(&op.c, &x) + self.offset;
            let dual_obj = op.b.iter().zip(&y).map(|(b, y)| b * y).sum::<f64>() + self.offset;
            SdpSolution {
                status,
                x,
                y,
                s,
                primal_obj,
                dual_obj,
                residuals,
                iterations: it,
                mu_history,
                message: msg.map(str::to_string),
            }
        };

        macro_rules! fail {
            ($status:expr, $iter:expr, $msg:expr) => {{
                let (x, y, s) = match best.take() {
                    Some((_, bx, by, bs)) => (bx, by, bs),
                    None => (x, y, s),
                };
                return finish($status, x, y, s, $iter, mu_history, Some($msg));
            }};
        }

        for iter in 0..=cfg.max_iter {
            let res = op.residuals(&x, &y, &s);
            let mu = dot_all(&x, &s) / self.n;
            mu_history.push(mu);
            let pobj = dot_all(&op.c, &x);

            if res.primal <= cfg.feas_tol && res.dual <= cfg.feas_tol && res.gap <= cfg.gap_tol {
                return finish(Status::Optimal, x, y, s, iter, mu_history, None);
            }
            if pobj < -UNBOUNDED_OBJECTIVE {
                return finish(Status::Unbounded, x, y, s, iter, mu_history, Some("primal objective diverged"));
            }
            if !mu.is_finite() || x.iter().chain(&s).any(BlockMat::has_non_finite) {
                fail!(Status::NumericalFailure, iter, "non-finite iterate");
            }
            let merit = (res.primal / cfg.feas_tol).max(res.dual / cfg.feas_tol).max(res.gap / cfg.gap_tol);
            if best.as_ref().is_none_or(|b| merit <= b.0) {
                best = Some((merit, x.clone(), y.clone(), s.clone()));
            }
            if merit < 0.5 * best_merit {
                best_merit = merit;
                last_progress = iter;
            } else if iter - last_progress > STALL_WINDOW {
                fail!(Status::NumericalFailure, iter, "no progress");
            }
            if iter == cfg.max_iter {
                fail!(Status::MaxIterations, iter, "iteration limit reached");
            }

            let Some(f) = factor_iterate(&x, &s) else {
                fail!(Status::NumericalFailure, iter, "iterate lost definiteness");
            };
            let mmat = op.schur(&x, &f.sinv);
            let Some(chol) = factor_schur(&mmat) else {
                fail!(Status::NumericalFailure, iter, "Schur complement factorization failed");
            };
            let rd = op.dual_residual(&y, &s);
            // X R_d S^{-1}, shared by predictor and corrector
            let xrds: Vec<BlockMat> = x
                .iter()
                .zip(&rd)
                .zip(&f.sinv)
                .map(|((xb, r), si)| match (xb, r, si) {
                    (BlockMat::Psd(xm), BlockMat::Psd(rm), BlockMat::Psd(sm)) => BlockMat::Psd(xm * rm * sm),
                    (BlockMat::Diag(xd), BlockMat::Diag(rv), BlockMat::Diag(sv)) => {
                        BlockMat::Diag(xd.component_mul(rv).component_mul(sv))
                    }
                    _ => unreachable!(),
                })
                .collect();

            let solve_dir = |sigma_mu: f64, corr: Option<&Vec<BlockMat>>| -> Direction {
                let mut z = Vec::with_capacity(x.len());
                for (k, si) in f.sinv.iter().enumerate() {
                    let mut zk = si.clone();
                    match &mut zk {
                        BlockMat::Psd(m) => {
                            *m *= sigma_mu;
                        }
                        BlockMat::Diag(d) => *d *= sigma_mu,
                    }
                    zk.axpy(-1.0, &xrds[k]);
                    if let Some(c) = corr {
                        zk.axpy(-1.0, &c[k]);
                    }
                    if let BlockMat::Psd(m) = &mut zk {
                        symmetrize(m);
                    }
                    z.push(zk);
                }
                let az = op.apply(&z);
                let rhs = DVector::from_iterator(op.m(), op.b.iter().zip(&az).map(|(b, a)| b - a));
                let mut dy = chol.solve(&rhs);
                let r = &rhs - &mmat * &dy;
                dy += chol.solve(&r);

                let aty = op.adjoint(dy.as_slice());
                let mut ds = rd.clone();
                for (d, a) in ds.iter_mut().zip(&aty) {
                    d.axpy(-1.0, a);
                }
                let dx = x
                    .iter()
                    .zip(&ds)
                    .zip(&f.sinv)
                    .enumerate()
                    .map(|(k, ((xb, d), si))| {
                        let mut out = match (xb, d, si) {
                            (BlockMat::Psd(xm), BlockMat::Psd(dm), BlockMat::Psd(sm)) => {
                                let mut t = sm * sigma_mu - xm;
                                t -= xm * dm * sm;
                                BlockMat::Psd(t)
                            }
                            (BlockMat::Diag(xd), BlockMat::Diag(dv), BlockMat::Diag(sv)) => {
                                let t = sv * sigma_mu - xd - xd.component_mul(dv).component_mul(sv);
                                BlockMat::Diag(t)
                            }
                            _ => unreachable!(),
                        };
                        if let Some(c) = corr {
                            out.axpy(-1.0, &c[k]);
                        }
                        if let BlockMat::Psd(m) = &mut out {
                            symmetrize(m);
                        }
                        out
                    })
                    .collect();
                Direction { dx, dy, ds }
            };
            let steps = |d: &Direction| -> (f64, f64) {
                let ap = x.iter().zip(&d.dx).zip(&f.lx).map(|((v, dv), l)| max_step(v, l.as_ref(), dv)).fold(f64::INFINITY, f64::min);
                let ad = s.iter().zip(&d.ds).zip(&f.ls).map(|((v, dv), l)| max_step(v, l.as_ref(), dv)).fold(f64::INFINITY, f64::min);
                (ap, ad)
            };

            let dir = if cfg.corrector {
                let pred = solve_dir(0.0, None);
                let (ap, ad) = steps(&pred);
                let (ap, ad) = (ap.min(1.0), ad.min(1.0));
                let mut xa = x.clone();
                let mut sa = s.clone();
                for (v, d) in xa.iter_mut().zip(&pred.dx) {
                    v.axpy(ap, d);
                }
                for (v, d) in sa.iter_mut().zip(&pred.ds) {
                    v.axpy(ad, d);
                }
                let mu_aff = dot_all(&xa, &sa) / self.n;
                let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
                let corr: Vec<BlockMat> = pred
                    .dx
                    .iter()
                    .zip(&pred.ds)
                    .zip(&f.sinv)
                    .map(|((dx, ds), si)| match (dx, ds, si) {
                        (BlockMat::Psd(a), BlockMat::Psd(b), BlockMat::Psd(c)) => BlockMat::Psd(a * b * c),
                        (BlockMat::Diag(a), BlockMat::Diag(b), BlockMat::Diag(c)) => {
                            BlockMat::Diag(a.component_mul(b).component_mul(c))
                        }
                        _ => unreachable!(),
                    })
                    .collect();
                solve_dir(sigma * mu, Some(&corr))
            } else {
                solve_dir(NO_CORRECTOR_SIGMA * mu, None)
            };

            let (ap, ad) = steps(&dir);
            let ap = (cfg.step_fraction * ap).min(1.0);
            let ad = (cfg.step_fraction * ad).min(1.0);
            log::trace!(
                "iter={iter} mu={mu:.6e} pres={:.3e} dres={:.3e} gap={:.3e} ap={ap:.3e} ad={ad:.3e}",
                res.primal,
                res.dual,
                res.gap
            );
            if ap.max(ad) < MIN_STEP || !ap.is_finite() || !ad.is_finite() {
                fail!(Status::NumericalFailure, iter, "step length collapsed");
            }
            let (Some((xn, _)), Some((sn, ad))) = (advance(&x, &dir.dx, ap), advance(&s, &dir.ds, ad)) else {
                fail!(Status::NumericalFailure, iter, "iterate lost definiteness");
            };
            x = xn;
            s = sn;
            for (v, d) in y.iter_mut().zip(dir.dy.iter()) {
                *v += ad * d;
            }
        }
        unreachable!("the loop returns at the iteration limit")
    }
}
