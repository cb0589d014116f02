//! Preconditioned conjugate gradients, incomplete Cholesky, interpolated
//! preconditioners and the Picard/Newton solver for the 1D nonlinear problems.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::fem::{dot, AssembledSystem, Discretization, SparseMatrix};
use crate::interpolant::SparseGridBasis;

/// Where a solve's initial vector came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuessSource {
    Zero,
    Interpolant,
    NearestNeighbor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// CG iterations, or outer iterations for nonlinear solves.
    pub iterations: usize,
    /// Stopping norm at exit.
    pub final_residual: f64,
    /// `‖b − A x‖₂` at exit.
    pub true_residual: f64,
    pub converged: bool,
    pub guess: GuessSource,
    pub flops: u64,
    /// An interpolated preconditioner lost definiteness and the solve restarted with a diagonal one.
    pub pc_fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "tol", rename_all = "snake_case")]
pub enum Stopping {
    /// `sqrt(rᵀ P⁻¹ r) ≤ τ`.
    AbsResidual(f64),
    /// `sqrt(rᵀ P⁻¹ r) ≤ τ · sqrt(bᵀ P⁻¹ b)`.
    RelResidual(f64),
}

impl Stopping {
    pub fn tol(&self) -> f64 {
        match *self {
            Stopping::AbsResidual(t) | Stopping::RelResidual(t) => t,
        }
    }
}

/// Zero-fill incomplete Cholesky factor `L` (lower triangle, row storage).
#[derive(Debug, Clone, PartialEq)]
pub struct Ic0Factor {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    /// Relative diagonal shift that made the factorization succeed (0 if none was needed).
    pub shift: f64,
}

impl Ic0Factor {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Solves `L y = r` in place.
    fn forward(&self, y: &mut [f64]) {
        for i in 0..self.n {
            let end = self.row_ptr[i + 1] - 1;
            let mut s = y[i];
            for k in self.row_ptr[i]..end {
                s -= self.values[k] * y[self.col_idx[k]];
            }
            y[i] = s / self.values[end];
        }
    }

    /// Solves `Lᵀ z = y` in place.
    fn backward(&self, z: &mut [f64]) {
        for i in (0..self.n).rev() {
            let end = self.row_ptr[i + 1] - 1;
            z[i] /= self.values[end];
            let zi = z[i];
            for k in self.row_ptr[i]..end {
                z[self.col_idx[k]] -= self.values[k] * zi;
            }
        }
    }

    /// `L v`.
    fn mul_lower(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (self.row_ptr[i]..self.row_ptr[i + 1]).map(|k| self.values[k] * v[self.col_idx[k]]).sum())
            .collect()
    }

    /// `Lᵀ v`.
    fn mul_upper(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[self.col_idx[k]] += self.values[k] * v[i];
            }
        }
        out
    }
}

/// Per-sample preconditioner built from base preconditioners at lower-level grid points.
#[derive(Debug, Clone)]
pub struct InterpolatedPc {
    terms: Vec<(f64, usize)>,
    bases: Arc<Vec<Preconditioner>>,
}

impl InterpolatedPc {
    pub fn terms(&self) -> &[(f64, usize)] {
        &self.terms
    }
}

#[derive(Debug, Clone)]
pub enum Preconditioner {
    Identity,
    /// Stores the reciprocal diagonal.
    Diagonal(Arc<Vec<f64>>),
    Ic0(Arc<Ic0Factor>),
    Interpolated(Arc<InterpolatedPc>),
}

/// Reporting tag for a preconditioner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcKind {
    Identity,
    Diagonal,
    Ic0,
    Interpolated,
}

impl Preconditioner {
    /// Jacobi preconditioner; requires a positive diagonal.
    pub fn diagonal(a: &SparseMatrix) -> Result<Self> {
        let d = a.diagonal();
        if let Some(i) = d.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::Solver(format!("nonpositive diagonal entry at row {i}")));
        }
        Ok(Preconditioner::Diagonal(Arc::new(d.iter().map(|v| 1.0 / v).collect())))
    }

    pub fn kind(&self) -> PcKind {
        match self {
            Preconditioner::Identity => PcKind::Identity,
            Preconditioner::Diagonal(_) => PcKind::Diagonal,
            Preconditioner::Ic0(_) => PcKind::Ic0,
            Preconditioner::Interpolated(_) => PcKind::Interpolated,
        }
    }

    /// `z = P⁻¹ r`.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Preconditioner::Identity => z.copy_from_slice(r),
            Preconditioner::Diagonal(inv) => {
                for ((zi, ri), di) in z.iter_mut().zip(r).zip(inv.iter()) {
                    *zi = ri * di;
                }
            }
            Preconditioner::Ic0(f) => {
                z.copy_from_slice(r);
                f.forward(z);
                f.backward(z);
            }
            Preconditioner::Interpolated(ip) => {
                z.iter_mut().for_each(|v| *v = 0.0);
                let mut tmp = vec![0.0; r.len()];
                for &(w, j) in &ip.terms {
                    ip.bases[j].apply(r, &mut tmp);
                    z.iter_mut().zip(&tmp).for_each(|(zi, t)| *zi += w * t);
                }
            }
        }
    }

    /// Floating-point operations of one application on a length-`n` vector.
    pub fn apply_flops(&self, n: usize) -> u64 {
        match self {
            Preconditioner::Identity => 0,
            Preconditioner::Diagonal(_) => n as u64,
            Preconditioner::Ic0(f) => 4 * f.nnz() as u64,
            Preconditioner::Interpolated(ip) => {
                ip.terms.iter().map(|&(_, j)| ip.bases[j].apply_flops(n) + 2 * n as u64).sum()
            }
        }
    }
}

/// Zero-fill incomplete Cholesky on the lower-triangular pattern of `a`.
///
/// A nonpositive pivot triggers a retry on `A + δ·diag(A)` with `δ` doubling from `1e-12`.
pub fn ic0_factor(a: &SparseMatrix) -> Result<Preconditioner> {
    const MAX_SHIFTS: usize = 30;
    let n = a.dim();
    let mut row_ptr = vec![0];
    let mut col_idx = Vec::new();
    let mut base = Vec::new();
    for i in 0..n {
        let (cols, vals) = a.row(i);
        let mut has_diag = false;
        for (&j, &v) in cols.iter().zip(vals) {
            if j <= i {
                col_idx.push(j);
                base.push(v);
                has_diag |= j == i;
            }
        }
        if !has_diag {
            return Err(Error::Solver(format!("row {i} has no diagonal entry")));
        }
        row_ptr.push(col_idx.len());
    }
    let mut delta = 0.0;
    for attempt in 0..=MAX_SHIFTS {
        if let Some(values) = try_ic0(n, &row_ptr, &col_idx, &base, delta) {
            let f = Ic0Factor { n, row_ptr, col_idx, values, shift: delta };
            return Ok(Preconditioner::Ic0(Arc::new(f)));
        }
        delta = if attempt == 0 { 1e-12 } else { 2.0 * delta };
    }
    Err(Error::Solver(format!("incomplete Cholesky failed after {MAX_SHIFTS} shifts")))
}

fn try_ic0(n: usize, row_ptr: &[usize], col_idx: &[usize], base: &[f64], delta: f64) -> Option<Vec<f64>> {
    let mut l = base.to_vec();
    for i in 0..n {
        let (start, end) = (row_ptr[i], row_ptr[i + 1]);
        l[end - 1] *= 1.0 + delta;
        for p in start..end {
            let j = col_idx[p];
            // subtract Σ_{k<j} L_ik L_jk over the shared pattern
            let (mut a, mut b) = (start, row_ptr[j]);
            let b_end = row_ptr[j + 1] - 1;
            let mut s = l[p];
            while a < p && b < b_end {
                match col_idx[a].cmp(&col_idx[b]) {
                    std::cmp::Ordering::Less => a += 1,
                    std::cmp::Ordering::Greater => b += 1,
                    std::cmp::Ordering::Equal => {
                        s -= l[a] * l[b];
                        a += 1;
                        b += 1;
                    }
                }
            }
            if j == i {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[p] = s.sqrt();
            } else {
                l[p] = s / l[row_ptr[j + 1] - 1];
            }
        }
    }
    Some(l)
}

/// Lagrange-weighted combination `r ↦ Σ_j Ψ_j(y) P_j⁻¹ r` of base preconditioners on `H_{L_PC}`.
///
/// `y_ref` is in reference coordinates `[-1,1]^N`.
pub fn interpolate_preconditioner(
    bases: Arc<Vec<Preconditioner>>,
    basis: &SparseGridBasis,
    y_ref: &[f64],
) -> Result<Preconditioner> {
    check_dim(basis.len(), bases.len())?;
    let weights = basis.weights_at(y_ref)?;
    let terms: Vec<(f64, usize)> =
        weights.into_iter().enumerate().filter(|(_, w)| *w != 0.0).map(|(j, w)| (w, j)).collect();
    Ok(Preconditioner::Interpolated(Arc::new(InterpolatedPc { terms, bases })))
}

fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Preconditioned CG from `x0`.
///
/// An interpolated preconditioner that turns out indefinite is replaced by the
/// diagonal one and the solve restarts from `x0`; the wasted iterations stay counted.
pub fn cg_solve(
    a: &SparseMatrix,
    b: &[f64],
    x0: &[f64],
    pc: &Preconditioner,
    stop: Stopping,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveReport)> {
    check_dim(a.dim(), b.len())?;
    check_dim(a.dim(), x0.len())?;
    match cg_core(a, b, x0, pc, stop, max_iter)? {
        CgOutcome::Done(x, report) => Ok((x, report)),
        CgOutcome::Indefinite { iterations, flops } => {
            let diag = Preconditioner::diagonal(a)?;
            match cg_core(a, b, x0, &diag, stop, max_iter)? {
                CgOutcome::Done(x, mut report) => {
                    report.iterations += iterations;
                    report.flops += flops;
                    report.pc_fallback = true;
                    Ok((x, report))
                }
                CgOutcome::Indefinite { .. } => Err(Error::Solver("matrix is not positive definite".into())),
            }
        }
    }
}

/// [`cg_solve`] on an assembled system.
pub fn cg_solve_system(
    sys: &AssembledSystem,
    x0: &[f64],
    pc: &Preconditioner,
    stop: Stopping,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveReport)> {
    cg_solve(&sys.matrix, &sys.rhs, x0, pc, stop, max_iter)
}

enum CgOutcome {
    Done(Vec<f64>, SolveReport),
    Indefinite { iterations: usize, flops: u64 },
}

fn cg_core(
    a: &SparseMatrix,
    b: &[f64],
    x0: &[f64],
    pc: &Preconditioner,
    stop: Stopping,
    max_iter: usize,
) -> Result<CgOutcome> {
    let n = a.dim();
    let interpolated = matches!(pc, Preconditioner::Interpolated(_));
    let indefinite = |what: &str, iterations: usize, flops: u64| {
        if interpolated {
            Ok(CgOutcome::Indefinite { iterations, flops })
        } else {
            Err(Error::Solver(format!("{what} in conjugate gradients")))
        }
    };
    let iter_flops = 2 * a.nnz() as u64 + 10 * n as u64 + pc.apply_flops(n);
    let mut flops = 2 * a.nnz() as u64 + 2 * n as u64 + pc.apply_flops(n);

    let mut x = x0.to_vec();
    let mut r = vec![0.0; n];
    a.matvec_into(&x, &mut r);
    r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    let mut z = vec![0.0; n];
    pc.apply(&r, &mut z);
    let mut rz = dot(&r, &z);
    if !rz.is_finite() {
        return Err(Error::Solver("non-finite initial residual".into()));
    }
    if rz < 0.0 {
        return indefinite("negative preconditioned inner product", 0, flops);
    }
    let threshold = match stop {
        Stopping::AbsResidual(t) => t,
        Stopping::RelResidual(t) => {
            let mut zb = vec![0.0; n];
            pc.apply(b, &mut zb);
            flops += pc.apply_flops(n) + 2 * n as u64;
            t * dot(b, &zb).max(0.0).sqrt()
        }
    };
    let mut residual = rz.sqrt();
    let mut iterations = 0;
    let mut converged = residual <= threshold;
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    while !converged && iterations < max_iter {
        a.matvec_into(&p, &mut q);
        let pq = dot(&p, &q);
        iterations += 1;
        flops += iter_flops;
        if !(pq > 0.0) {
            if pq.is_nan() {
                return Err(Error::Solver("non-finite search direction".into()));
            }
            return indefinite("nonpositive curvature", iterations, flops);
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        pc.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        if !rz_new.is_finite() {
            return Err(Error::Solver("non-finite residual".into()));
        }
        if rz_new < 0.0 {
            return indefinite("negative preconditioned inner product", iterations, flops);
        }
        residual = rz_new.sqrt();
        if residual <= threshold {
            converged = true;
            break;
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    a.matvec_into(&x, &mut q);
    let true_residual = norm2(&b.iter().zip(&q).map(|(bi, qi)| bi - qi).collect::<Vec<_>>());
    Ok(CgOutcome::Done(
        x,
        SolveReport {
            iterations,
            final_residual: residual,
            true_residual,
            converged,
            guess: GuessSource::Zero,
            flops,
            pc_fallback: false,
        },
    ))
}

/// General tridiagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    /// `lower[i] = T[i][i-1]`; entry 0 unused.
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    /// `upper[i] = T[i][i+1]`; last entry unused.
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self { lower: vec![0.0; n], diag: vec![0.0; n], upper: vec![0.0; n] }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) -> Result<()> {
        match j as isize - i as isize {
            -1 => self.lower[i] += v,
            0 => self.diag[i] += v,
            1 => self.upper[i] += v,
            _ => return Err(Error::Domain(format!("entry ({i}, {j}) outside the tridiagonal band"))),
        }
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match j as isize - i as isize {
            -1 => self.lower[i],
            0 => self.diag[i],
            1 => self.upper[i],
            _ => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        check_dim(n, x.len())?;
        Ok((0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                if i > 0 {
                    s += self.lower[i] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.upper[i] * x[i + 1];
                }
                s
            })
            .collect())
    }

    /// Thomas algorithm (no pivoting).
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        check_dim(n, rhs.len())?;
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        for i in 0..n {
            let denom = self.diag[i] - if i > 0 { self.lower[i] * c[i - 1] } else { 0.0 };
            if denom == 0.0 || !denom.is_finite() {
                return Err(Error::Solver(format!("zero pivot at row {i} of tridiagonal solve")));
            }
            c[i] = if i + 1 < n { self.upper[i] / denom } else { 0.0 };
            d[i] = (rhs[i] - if i > 0 { self.lower[i] * d[i - 1] } else { 0.0 }) / denom;
        }
        for i in (0..n.saturating_sub(1)).rev() {
            d[i] -= c[i] * d[i + 1];
        }
        Ok(d)
    }
}

/// Relative step below which Picard hands over to Newton.
pub const PICARD_SWITCH: f64 = 1e-2;
/// Consecutive step increases that count as divergence.
const DIVERGENCE_RUN: usize = 5;
/// Smallest damping factor tried before a step is accepted regardless.
const MIN_DAMPING: f64 = 1.0 / 64.0;

/// Flop-equivalents charged for one coefficient evaluation (transcendentals count 20).
pub const COEFFICIENT_FLOPS: u64 = 140;

/// Estimated cost of one outer nonlinear step: element quadrature of the
/// residual and both linearizations, plus one banded solve and the update.
pub fn outer_step_flops(disc: &Discretization) -> u64 {
    let qp = 3 * disc.mesh().element_count() as u64;
    qp * (COEFFICIENT_FLOPS + 60) + 10 * disc.n_dofs() as u64
}

/// Cost of one residual evaluation during backtracking.
pub fn residual_flops(disc: &Discretization) -> u64 {
    3 * disc.mesh().element_count() as u64 * (COEFFICIENT_FLOPS + 20) + 2 * disc.n_dofs() as u64
}

/// Picard iterations with the nonlinear coefficient lagged, then Newton,
/// until the relative `l²` step drops below `rel_tol`. Both phases backtrack on the residual norm.
///
/// `y` is the physical parameter point. If the Newton step from `x0` is
/// already below tolerance the solve reports zero iterations.
pub fn nonlinear_solve(
    disc: &Discretization,
    y: &[f64],
    x0: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveReport)> {
    check_dim(disc.n_dofs(), x0.len())?;
    let step_flops = outer_step_flops(disc);
    let residual_flops = residual_flops(disc);
    let mut x = x0.to_vec();
    let mut flops = 0u64;
    let lin = disc.linearize(y, &x)?;
    let first = lin.jacobian.solve(&lin.residual)?;
    flops += step_flops;
    let rel = |step: &[f64], x: &[f64]| {
        let s = norm2(step);
        if s == 0.0 {
            0.0
        } else {
            s / norm2(x).max(f64::MIN_POSITIVE)
        }
    };
    let finish = |x: Vec<f64>, iterations: usize, converged: bool, flops: u64| -> Result<(Vec<f64>, SolveReport)> {
        let r = norm2(&disc.nonlinear_residual(y, &x)?);
        Ok((
            x,
            SolveReport {
                iterations,
                final_residual: r,
                true_residual: r,
                converged,
                guess: GuessSource::Zero,
                flops,
                pc_fallback: false,
            },
        ))
    };
    if rel(&first, &x) < rel_tol {
        return finish(x, 0, true, flops);
    }

    let mut newton = false;
    let mut prev = f64::INFINITY;
    let mut growth = 0;
    for k in 1..=max_iter {
        let lin = disc.linearize(y, &x)?;
        flops += step_flops;
        let step = if newton {
            lin.jacobian.solve(&lin.residual)?
        } else {
            let next = lin.picard.solve(&lin.picard_rhs)?;
            next.iter().zip(&x).map(|(a, b)| a - b).collect()
        };
        if step.iter().any(|v| !v.is_finite()) {
            return finish(x, k, false, flops);
        }
        let full: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
        let r = rel(&step, &full);
        if r < rel_tol {
            return finish(full, k, true, flops);
        }
        // Backtrack until the residual norm drops; plain lagged Picard can cycle.
        let r_now = norm2(&lin.residual);
        let mut omega = 1.0;
        x = loop {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + omega * b).collect();
            flops += residual_flops;
            if norm2(&disc.nonlinear_residual(y, &trial)?) < r_now || omega <= MIN_DAMPING {
                break trial;
            }
            omega *= 0.5;
        };
        if !newton && r < PICARD_SWITCH {
            newton = true;
        }
        let size = norm2(&step);
        growth = if size > prev { growth + 1 } else { 0 };
        prev = size;
        if growth >= DIVERGENCE_RUN {
            return finish(x, k, false, flops);
        }
    }
    finish(x, max_iter, false, flops)
}

/// Split factor `S` with `P = S Sᵀ`, used to symmetrize `P⁻¹A`.
enum Split<'a> {
    Identity,
    Diagonal(Vec<f64>),
    Lower(&'a Ic0Factor),
}

impl Split<'_> {
    fn new(pc: &Preconditioner) -> Result<Split<'_>> {
        Ok(match pc {
            Preconditioner::Identity => Split::Identity,
            Preconditioner::Diagonal(inv) => Split::Diagonal(inv.iter().map(|v| (1.0 / v).sqrt()).collect()),
            Preconditioner::Ic0(f) => Split::Lower(f),
            Preconditioner::Interpolated(_) => {
                return Err(Error::Domain("interpolated preconditioners have no split form".into()))
            }
        })
    }

    /// `S v`.
    fn mul(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Split::Identity => v.to_vec(),
            Split::Diagonal(s) => v.iter().zip(s).map(|(a, b)| a * b).collect(),
            Split::Lower(f) => f.mul_lower(v),
        }
    }

    /// `Sᵀ v`.
    fn mul_t(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Split::Lower(f) => f.mul_upper(v),
            _ => self.mul(v),
        }
    }

    /// `S⁻¹ A S⁻ᵀ v`.
    fn operator(&self, a: &SparseMatrix, v: &[f64]) -> Vec<f64> {
        let mut t = v.to_vec();
        match self {
            Split::Identity => {}
            Split::Diagonal(s) => t.iter_mut().zip(s).for_each(|(a, b)| *a /= b),
            Split::Lower(f) => f.backward(&mut t),
        }
        let mut out = vec![0.0; t.len()];
        a.matvec_into(&t, &mut out);
        match self {
            Split::Identity => {}
            Split::Diagonal(s) => out.iter_mut().zip(s).for_each(|(a, b)| *a /= b),
            Split::Lower(f) => f.forward(&mut out),
        }
        out
    }
}

const EIG_MAX_ITER: usize = 20_000;

/// Deterministic start vector with components along every eigenvector in practice.
fn start_vector(n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.618_033_988_749_895).fract()).collect();
    let s = norm2(&v);
    v.into_iter().map(|x| x / s).collect()
}

fn power_iteration(mut apply: impl FnMut(&[f64]) -> Result<Vec<f64>>, n: usize, tol: f64) -> Result<f64> {
    let mut v = start_vector(n);
    let mut lambda = 0.0;
    for k in 0..EIG_MAX_ITER {
        let w = apply(&v)?;
        let next = dot(&v, &w);
        let size = norm2(&w);
        if !(size > 0.0) || !size.is_finite() {
            return Err(Error::Solver("power iteration broke down".into()));
        }
        v = w.into_iter().map(|x| x / size).collect();
        if k > 0 && (next - lambda).abs() <= tol * next.abs() {
            return Ok(next);
        }
        lambda = next;
    }
    Ok(lambda)
}

/// `κ(P⁻¹A) = λ_max / λ_min`, from power iteration on `S⁻¹AS⁻ᵀ` and inverse
/// power iteration with inner CG solves.
pub fn estimate_condition_preconditioned(a: &SparseMatrix, pc: &Preconditioner, tol: f64) -> Result<f64> {
    let (lmax, lmin) = extreme_eigenvalues(a, pc, tol)?;
    Ok(lmax / lmin)
}

pub fn extreme_eigenvalues(a: &SparseMatrix, pc: &Preconditioner, tol: f64) -> Result<(f64, f64)> {
    if !(tol > 0.0) {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    let split = Split::new(pc)?;
    let n = a.dim();
    let lmax = power_iteration(|v| Ok(split.operator(a, v)), n, tol)?;
    let inner = (tol * 1e-3).max(1e-13);
    let mu = power_iteration(
        |v| {
            let rhs = split.mul(v);
            let (z, rep) = cg_solve(a, &rhs, &vec![0.0; n], pc, Stopping::RelResidual(inner), 50 * n + 100)?;
            if !rep.converged {
                return Err(Error::Solver("inner solve of inverse iteration did not converge".into()));
            }
            Ok(split.mul_t(&z))
        },
        n,
        tol,
    )?;
    if !(lmax > 0.0 && mu > 0.0) {
        return Err(Error::Solver("matrix is not positive definite".into()));
    }
    Ok((lmax, 1.0 / mu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{Discretization, Mesh};
    use crate::model_problems::{Forcing, Nonlinearity, ProblemSpec};
    use crate::sparse_grid::{build_grid, AnisotropyWeights};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense(rows: &[&[f64]]) -> SparseMatrix {
        SparseMatrix::from_dense(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn laplace_2d(k: usize) -> SparseMatrix {
        let p = ProblemSpec::constant(2, 1, 1.0, Forcing::Constant(1.0)).unwrap();
        Discretization::new(p, Mesh::unit_square(k).unwrap()).unwrap().assemble(&[0.0]).unwrap().matrix
    }

    #[test]
    fn identity_converges_in_one_step() {
        let a = SparseMatrix::identity(4);
        let (x, rep) =
            cg_solve(&a, &[1.0, 2.0, 3.0, 4.0], &[0.0; 4], &Preconditioner::Identity, Stopping::AbsResidual(1e-12), 10)
                .unwrap();
        assert_eq!(rep.iterations, 1);
        assert_eq!(x, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn exact_guess_takes_no_iterations() {
        let a = dense(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let (_, rep) =
            cg_solve(&a, &[3.0, 3.0], &[1.0, 1.0], &Preconditioner::Identity, Stopping::AbsResidual(1e-12), 10).unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(rep.converged);
    }

    #[test]
    fn two_by_two_in_two_steps() {
        let a = dense(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let (x, rep) =
            cg_solve(&a, &[3.0, 3.0], &[0.0, 0.0], &Preconditioner::Identity, Stopping::AbsResidual(1e-12), 10).unwrap();
        assert!(rep.iterations <= 2);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nonconvergence_is_reported() {
        let a = laplace_2d(8);
        let b = vec![1.0; a.dim()];
        let (_, rep) = cg_solve(&a, &b, &vec![0.0; a.dim()], &Preconditioner::Identity, Stopping::AbsResidual(1e-14), 2)
            .unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 2);
    }

    #[test]
    fn rejects_non_finite_data() {
        let a = SparseMatrix::identity(2);
        assert!(matches!(
            cg_solve(&a, &[f64::NAN, 0.0], &[0.0; 2], &Preconditioner::Identity, Stopping::AbsResidual(1e-8), 5),
            Err(Error::Solver(_))
        ));
        assert!(cg_solve(&a, &[1.0], &[0.0; 2], &Preconditioner::Identity, Stopping::AbsResidual(1e-8), 5).is_err());
    }

    fn dense_solve(a: &SparseMatrix, b: &[f64]) -> Vec<f64> {
        let n = a.dim();
        let mut m: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a.get(i, j)).collect()).collect();
        let mut x = b.to_vec();
        for k in 0..n {
            for i in k + 1..n {
                let f = m[i][k] / m[k][k];
                for j in k..n {
                    m[i][j] -= f * m[k][j];
                }
                x[i] -= f * x[k];
            }
        }
        for k in (0..n).rev() {
            for j in k + 1..n {
                x[k] -= m[k][j] * x[j];
            }
            x[k] /= m[k][k];
        }
        x
    }

    #[test]
    fn energy_error_is_monotone() {
        let a = laplace_2d(6);
        let n = a.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let exact = dense_solve(&a, &b);
        let mut last = f64::INFINITY;
        for k in 0..=n {
            let (x, _) = cg_solve(&a, &b, &vec![0.0; n], &Preconditioner::Identity, Stopping::AbsResidual(0.0), k).unwrap();
            let e: Vec<f64> = x.iter().zip(&exact).map(|(u, v)| u - v).collect();
            let err = a.energy_norm(&e).unwrap();
            assert!(err <= last * (1.0 + 1e-12) + 1e-14, "step {k}: {err} > {last}");
            last = err;
        }
        assert!(last < 1e-10);
    }

    #[test]
    fn ic0_on_diagonal_and_tridiagonal() {
        let d = dense(&[&[4.0, 0.0], &[0.0, 9.0]]);
        let Preconditioner::Ic0(f) = ic0_factor(&d).unwrap() else { panic!() };
        assert_eq!(f.values, vec![2.0, 3.0]);
        let t = dense(&[&[2.0, -1.0, 0.0], &[-1.0, 2.0, -1.0], &[0.0, -1.0, 2.0]]);
        let pc = ic0_factor(&t).unwrap();
        let (x, rep) = cg_solve(&t, &[1.0, 0.0, 1.0], &[0.0; 3], &pc, Stopping::AbsResidual(1e-12), 10).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn ic0_shifts_when_pivots_fail() {
        // symmetric but indefinite; the shift sequence cannot rescue it
        let a = dense(&[&[1.0, 2.0], &[2.0, 1.0]]);
        assert!(matches!(ic0_factor(&a), Err(Error::Solver(_))));
        // diagonally weak but SPD matrices factor without a shift
        let Preconditioner::Ic0(f) = ic0_factor(&laplace_2d(5)).unwrap() else { panic!() };
        assert_eq!(f.shift, 0.0);
    }

    #[test]
    fn ic0_beats_diagonal_on_square_mesh() {
        let a = laplace_2d(16);
        let b = vec![1.0; a.dim()];
        let x0 = vec![0.0; a.dim()];
        let run = |pc: &Preconditioner| cg_solve(&a, &b, &x0, pc, Stopping::AbsResidual(1e-10), 1000).unwrap().1;
        let ic = run(&ic0_factor(&a).unwrap());
        let jac = run(&Preconditioner::diagonal(&a).unwrap());
        assert!(ic.converged && jac.converged);
        assert!(ic.iterations < jac.iterations, "{} vs {}", ic.iterations, jac.iterations);
    }

    #[test]
    fn preconditioners_are_symmetric() {
        let a = laplace_2d(6);
        let n = a.dim();
        let g = build_grid(2, &AnisotropyWeights::isotropic(2)).unwrap();
        let basis = SparseGridBasis::new(&g, 1).unwrap();
        let bases = Arc::new(
            (0..basis.len())
                .map(|j| {
                    let p = ProblemSpec::ex52(2, 0.25).unwrap();
                    let disc = Discretization::new(p, Mesh::unit_square(6).unwrap()).unwrap();
                    let y = disc.problem().domain.to_physical(&g.point(j).coords);
                    ic0_factor(&disc.assemble(&y).unwrap().matrix).unwrap()
                })
                .collect::<Vec<_>>(),
        );
        let pcs = vec![
            Preconditioner::Identity,
            Preconditioner::diagonal(&a).unwrap(),
            ic0_factor(&a).unwrap(),
            interpolate_preconditioner(bases, &basis, &[0.3, -0.6]).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for pc in &pcs {
            for _ in 0..20 {
                let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let s: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let (mut pr, mut ps) = (vec![0.0; n], vec![0.0; n]);
                pc.apply(&r, &mut pr);
                pc.apply(&s, &mut ps);
                let gap = (dot(&pr, &s) - dot(&r, &ps)).abs();
                assert!(gap <= 1e-12 * norm2(&r) * norm2(&s), "{:?}: {gap}", pc.kind());
            }
        }
    }

    #[test]
    fn interpolated_preconditioner_examples() {
        let a = laplace_2d(5);
        let n = a.dim();
        let g = build_grid(2, &AnisotropyWeights::isotropic(2)).unwrap();
        let basis = SparseGridBasis::new(&g, 2).unwrap();
        let same = Arc::new(vec![ic0_factor(&a).unwrap(); basis.len()]);
        let direct = ic0_factor(&a).unwrap();
        let r: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let (mut z1, mut z2) = (vec![0.0; n], vec![0.0; n]);
        direct.apply(&r, &mut z1);
        interpolate_preconditioner(same, &basis, &[0.17, -0.41]).unwrap().apply(&r, &mut z2);
        assert!(z1.iter().zip(&z2).all(|(a, b)| (a - b).abs() < 1e-12 * (1.0 + a.abs())));

        // at a grid point only that point's preconditioner acts
        let bases: Vec<Preconditioner> = (0..basis.len())
            .map(|j| Preconditioner::Diagonal(Arc::new(vec![1.0 + j as f64; n])))
            .collect();
        let ip = interpolate_preconditioner(Arc::new(bases), &basis, &g.point(7).coords).unwrap();
        let Preconditioner::Interpolated(inner) = &ip else { panic!() };
        assert_eq!(inner.terms(), &[(1.0, 7)]);
    }

    #[test]
    fn indefinite_interpolated_pc_falls_back() {
        let a = laplace_2d(6);
        let n = a.dim();
        let g = build_grid(1, &AnisotropyWeights::isotropic(1)).unwrap();
        let basis = SparseGridBasis::new(&g, 1).unwrap();
        let weights = basis.weights_at(&[0.9]).unwrap();
        let neg = weights.iter().position(|w| *w < 0.0).unwrap();
        let mut diag = vec![Preconditioner::Diagonal(Arc::new(vec![1.0; n])); 3];
        diag[neg] = Preconditioner::Diagonal(Arc::new(vec![1e4; n]));
        let pc = interpolate_preconditioner(Arc::new(diag), &basis, &[0.9]).unwrap();
        let b = vec![1.0; n];
        let (x, rep) = cg_solve(&a, &b, &vec![0.0; n], &pc, Stopping::AbsResidual(1e-10), 1000).unwrap();
        assert!(rep.pc_fallback && rep.converged);
        let r = a.matvec(&x).unwrap();
        assert!(r.iter().zip(&b).all(|(u, v)| (u - v).abs() < 1e-8));
    }

    #[test]
    fn thomas_solves_general_tridiagonal() {
        let mut t = Tridiagonal::zeros(4);
        for i in 0..4 {
            t.add(i, i, 4.0).unwrap();
            if i > 0 {
                t.add(i, i - 1, -1.0).unwrap();
            }
            if i < 3 {
                t.add(i, i + 1, -2.0).unwrap();
            }
        }
        assert!(t.add(0, 2, 1.0).is_err());
        let x = [1.0, -2.0, 0.5, 3.0];
        let b = t.matvec(&x).unwrap();
        let got = t.solve(&b).unwrap();
        assert!(got.iter().zip(x).all(|(a, b)| (a - b).abs() < 1e-14));
    }

    #[test]
    fn nonlinear_zero_solution() {
        let mut p = ProblemSpec::ex53(Nonlinearity::PowerFive);
        p.forcing = Forcing::Constant(0.0);
        p.boundary = vec![crate::model_problems::BoundaryCondition::Dirichlet(0.0); 2];
        let disc = Discretization::new(p, Mesh::interval(20).unwrap()).unwrap();
        let (x, rep) = nonlinear_solve(&disc, &[0.0; 4], &vec![0.0; disc.n_dofs()], 1e-8, 50).unwrap();
        assert!(rep.converged && rep.iterations <= 1);
        assert!(x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn nonlinear_solves_and_warm_start_is_free() {
        for nl in [Nonlinearity::PowerFive, Nonlinearity::UTimesUPrime] {
            let disc = Discretization::new(ProblemSpec::ex53(nl), Mesh::interval(100).unwrap()).unwrap();
            let y = [0.5, -0.3, 0.8, -0.9];
            let (x, rep) = nonlinear_solve(&disc, &y, &vec![0.0; disc.n_dofs()], 1e-8, 100).unwrap();
            assert!(rep.converged && rep.iterations > 1, "{nl:?}: {rep:?}");
            assert!(rep.final_residual < 1e-8);
            let (_, again) = nonlinear_solve(&disc, &y, &x, 1e-8, 100).unwrap();
            assert_eq!(again.iterations, 0);
        }
    }

    #[test]
    fn preconditioned_condition_numbers() {
        let a = laplace_2d(8);
        let plain = estimate_condition_preconditioned(&a, &Preconditioner::Identity, 1e-9).unwrap();
        let ic = estimate_condition_preconditioned(&a, &ic0_factor(&a).unwrap(), 1e-9).unwrap();
        assert!(ic < plain && ic >= 1.0);
        let d = dense(&[&[2.0, 0.0], &[0.0, 50.0]]);
        let jac = estimate_condition_preconditioned(&d, &Preconditioner::diagonal(&d).unwrap(), 1e-10).unwrap();
        assert!((jac - 1.0).abs() < 1e-9);
    }
}
