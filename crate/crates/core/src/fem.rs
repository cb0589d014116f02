//! Linear finite elements on uniform interval and right-triangle meshes.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{check_dim, Error, Result};
use crate::model_problems::{BoundaryCondition, Nonlinearity, ProblemSpec};
use crate::solvers::{self, Preconditioner, Tridiagonal};

const GAUSS3_POINTS: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GAUSS3_WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
const GAUSS2_POINTS: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];
/// Interior three-point triangle rule in barycentric coordinates (exact for quadratics).
const TRI3_BARY: [[f64; 3]; 3] = [
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
];

#[derive(Debug, Clone, Copy, PartialEq)]
struct BoundaryEdge {
    a: usize,
    b: usize,
    side: usize,
}

/// Uniform mesh of `[0,1]` or `[0,1]^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    spatial_dim: usize,
    cells: usize,
    h: f64,
    nodes: Vec<[f64; 2]>,
    elements: Vec<[usize; 3]>,
    /// Bitmask of boundary sides each node lies on.
    node_sides: Vec<u8>,
    edges: Vec<BoundaryEdge>,
}

impl Mesh {
    /// `n` equal cells on `[0,1]`; sides are `0` (left) and `1` (right).
    pub fn interval(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("interval mesh needs at least one cell".into()));
        }
        let h = 1.0 / n as f64;
        let nodes = (0..=n).map(|i| [i as f64 * h, 0.0]).collect();
        let elements = (0..n).map(|i| [i, i + 1, usize::MAX]).collect();
        let mut node_sides = vec![0u8; n + 1];
        node_sides[0] |= 1;
        node_sides[n] |= 2;
        Ok(Self { spatial_dim: 1, cells: n, h, nodes, elements, node_sides, edges: Vec::new() })
    }

    /// `k × k` squares on `[0,1]^2`, each split along its rising diagonal.
    /// Sides are `0` bottom, `1` right, `2` top, `3` left.
    pub fn unit_square(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Domain("square mesh needs at least one cell".into()));
        }
        let h = 1.0 / k as f64;
        let id = |i: usize, j: usize| j * (k + 1) + i;
        let mut nodes = Vec::with_capacity((k + 1) * (k + 1));
        let mut node_sides = Vec::with_capacity((k + 1) * (k + 1));
        for j in 0..=k {
            for i in 0..=k {
                nodes.push([i as f64 * h, j as f64 * h]);
                let mut s = 0u8;
                if j == 0 {
                    s |= 1;
                }
                if i == k {
                    s |= 2;
                }
                if j == k {
                    s |= 4;
                }
                if i == 0 {
                    s |= 8;
                }
                node_sides.push(s);
            }
        }
        let mut elements = Vec::with_capacity(2 * k * k);
        for j in 0..k {
            for i in 0..k {
                let (n00, n10, n01, n11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
                elements.push([n00, n10, n11]);
                elements.push([n00, n11, n01]);
            }
        }
        let mut edges = Vec::with_capacity(4 * k);
        for t in 0..k {
            edges.push(BoundaryEdge { a: id(t, 0), b: id(t + 1, 0), side: 0 });
            edges.push(BoundaryEdge { a: id(k, t), b: id(k, t + 1), side: 1 });
            edges.push(BoundaryEdge { a: id(t, k), b: id(t + 1, k), side: 2 });
            edges.push(BoundaryEdge { a: id(0, t), b: id(0, t + 1), side: 3 });
        }
        Ok(Self { spatial_dim: 2, cells: k, h, nodes, elements, node_sides, edges })
    }

    pub fn spatial_dim(&self) -> usize {
        self.spatial_dim
    }

    /// Cells per side.
    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i][..self.spatial_dim]
    }

    pub fn element(&self, e: usize) -> &[usize] {
        &self.elements[e][..self.spatial_dim + 1]
    }

    pub fn on_boundary(&self, i: usize) -> bool {
        self.node_sides[i] != 0
    }
}

/// Compressed-row sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from raw CSR arrays; columns within a row must be strictly increasing.
    pub fn from_csr(n: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        check_dim(n + 1, row_ptr.len())?;
        check_dim(col_idx.len(), values.len())?;
        if row_ptr[0] != 0 || row_ptr[n] != col_idx.len() {
            return Err(Error::Domain("row offsets do not span the column array".into()));
        }
        for i in 0..n {
            if row_ptr[i] > row_ptr[i + 1] {
                return Err(Error::Domain("row offsets must be nondecreasing".into()));
            }
            let cols = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.iter().any(|&c| c >= n) {
                return Err(Error::Domain(format!("row {i} has unsorted or out-of-range columns")));
            }
        }
        Ok(Self { n, row_ptr, col_idx, values })
    }

    /// Keeps the nonzero entries of a dense square matrix.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for r in rows {
            check_dim(n, r.len())?;
            for (j, &v) in r.iter().enumerate() {
                if v != 0.0 {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self::from_csr(n, row_ptr, col_idx, values)
    }

    pub fn identity(n: usize) -> Self {
        Self { n, row_ptr: (0..=n).collect(), col_idx: (0..n).collect(), values: vec![1.0; n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    #[inline]
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n, x.len())?;
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        Ok(y)
    }

    /// `xᵀ A x`.
    pub fn energy(&self, x: &[f64]) -> Result<f64> {
        Ok(dot(x, &self.matvec(x)?))
    }

    /// `sqrt(xᵀ A x)`, clamped at zero.
    pub fn energy_norm(&self, x: &[f64]) -> Result<f64> {
        Ok(self.energy(x)?.max(0.0).sqrt())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A_ij - A_ji|`.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// One `i j value` line per stored entry, 1-based indices.
    pub fn to_coordinate_text(&self) -> String {
        let mut s = format!("{} {} {}\n", self.n, self.n, self.nnz());
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let _ = writeln!(s, "{} {} {:e}", i + 1, j + 1, v);
            }
        }
        s
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Stiffness matrix and load vector for one parameter sample.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    /// Physical parameter point.
    pub y: Vec<f64>,
    /// Quadrature points per element.
    pub quadrature_points: usize,
}

/// Jacobian, Picard operator and residual of a 1D nonlinear problem at one iterate.
#[derive(Debug, Clone)]
pub struct Linearization {
    /// `b - A(u)` on the free dofs.
    pub residual: Vec<f64>,
    pub jacobian: Tridiagonal,
    /// Operator with the nonlinear term's coefficient frozen at the current iterate.
    pub picard: Tridiagonal,
    pub picard_rhs: Vec<f64>,
}

/// A problem bound to a mesh: free-dof numbering, Dirichlet lifting and matrix pattern.
#[derive(Debug, Clone)]
pub struct Discretization {
    problem: ProblemSpec,
    mesh: Mesh,
    dof_of_node: Vec<Option<usize>>,
    node_of_dof: Vec<usize>,
    lifting: Vec<f64>,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    /// CSR slot for each local (i, j) pair of each element, `usize::MAX` if either is fixed.
    slots: Vec<usize>,
}

impl Discretization {
    pub fn new(problem: ProblemSpec, mesh: Mesh) -> Result<Self> {
        problem.validate()?;
        if problem.spatial_dim != mesh.spatial_dim {
            return Err(Error::DimensionMismatch { expected: problem.spatial_dim, found: mesh.spatial_dim });
        }
        let mut dof_of_node = vec![None; mesh.node_count()];
        let mut node_of_dof = Vec::new();
        let mut lifting = vec![0.0; mesh.node_count()];
        for (node, &sides) in mesh.node_sides.iter().enumerate() {
            let fixed = problem.boundary.iter().enumerate().find_map(|(s, bc)| match bc {
                BoundaryCondition::Dirichlet(g) if sides & (1 << s) != 0 => Some(*g),
                _ => None,
            });
            match fixed {
                Some(g) => lifting[node] = g,
                None => {
                    dof_of_node[node] = Some(node_of_dof.len());
                    node_of_dof.push(node);
                }
            }
        }
        let n = node_of_dof.len();
        if n == 0 {
            return Err(Error::Assembly("mesh has no free degrees of freedom".into()));
        }
        let mut rows: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for e in 0..mesh.element_count() {
            for &a in mesh.element(e) {
                for &b in mesh.element(e) {
                    if let (Some(i), Some(j)) = (dof_of_node[a], dof_of_node[b]) {
                        rows[i].insert(j);
                    }
                }
            }
        }
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        for r in &rows {
            col_idx.extend(r.iter().copied());
            row_ptr.push(col_idx.len());
        }
        let k = mesh.spatial_dim + 1;
        let mut slots = Vec::with_capacity(mesh.element_count() * k * k);
        for e in 0..mesh.element_count() {
            for &a in mesh.element(e) {
                for &b in mesh.element(e) {
                    let slot = match (dof_of_node[a], dof_of_node[b]) {
                        (Some(i), Some(j)) => {
                            let cols = &col_idx[row_ptr[i]..row_ptr[i + 1]];
                            row_ptr[i] + cols.binary_search(&j).expect("pattern contains element pairs")
                        }
                        _ => usize::MAX,
                    };
                    slots.push(slot);
                }
            }
        }
        Ok(Self { problem, mesh, dof_of_node, node_of_dof, lifting, row_ptr, col_idx, slots })
    }

    pub fn problem(&self) -> &ProblemSpec {
        &self.problem
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    /// Number of free degrees of freedom `M_h`.
    pub fn n_dofs(&self) -> usize {
        self.node_of_dof.len()
    }

    pub fn node_of_dof(&self, dof: usize) -> usize {
        self.node_of_dof[dof]
    }

    pub fn dof_of_node(&self, node: usize) -> Option<usize> {
        self.dof_of_node[node]
    }

    /// Nodal values of the FE function with free coefficients `c`.
    pub fn full_nodal(&self, c: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n_dofs(), c.len())?;
        let mut u = self.lifting.clone();
        for (d, &node) in self.node_of_dof.iter().enumerate() {
            u[node] = c[d];
        }
        Ok(u)
    }

    fn check_parameter(&self, y: &[f64]) -> Result<()> {
        check_dim(self.problem.param_dim(), y.len())?;
        if !self.problem.domain.contains_physical(y) {
            return Err(Error::Domain("parameter point outside the parameter domain".into()));
        }
        Ok(())
    }

    fn coefficient(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let a = self.problem.coefficient_at(x, y);
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::Assembly(format!("coefficient {a} is not positive at x = {x:?}")));
        }
        Ok(a)
    }

    /// `∫ a ∇φ_j·∇φ_i` (`k×k`, row-major) and `∫ f φ_i` on element `e`.
    fn element_terms(&self, e: usize, y: &[f64], stiff: &mut [f64], load: &mut [f64]) -> Result<()> {
        let nodes = self.mesh.element(e);
        let forcing = self.problem.forcing;
        if self.mesh.spatial_dim == 1 {
            let (xa, xb) = (self.mesh.nodes[nodes[0]][0], self.mesh.nodes[nodes[1]][0]);
            let (mid, half, h) = (0.5 * (xa + xb), 0.5 * (xb - xa), xb - xa);
            let mut int_a = 0.0;
            load[..2].iter_mut().for_each(|v| *v = 0.0);
            for (xi, w) in GAUSS3_POINTS.iter().zip(GAUSS3_WEIGHTS) {
                let x = [mid + half * xi];
                int_a += w * half * self.coefficient(&x, y)?;
                let f = w * half * forcing.value(&x);
                load[0] += f * 0.5 * (1.0 - xi);
                load[1] += f * 0.5 * (1.0 + xi);
            }
            let k = int_a / (h * h);
            stiff[..4].copy_from_slice(&[k, -k, -k, k]);
        } else {
            let p: Vec<[f64; 2]> = nodes.iter().map(|&n| self.mesh.nodes[n]).collect();
            let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
            let area = 0.5 * det.abs();
            let b = [p[1][1] - p[2][1], p[2][1] - p[0][1], p[0][1] - p[1][1]];
            let c = [p[2][0] - p[1][0], p[0][0] - p[2][0], p[1][0] - p[0][0]];
            let mut int_a = 0.0;
            load[..3].iter_mut().for_each(|v| *v = 0.0);
            for lam in TRI3_BARY {
                let x = [
                    lam[0] * p[0][0] + lam[1] * p[1][0] + lam[2] * p[2][0],
                    lam[0] * p[0][1] + lam[1] * p[1][1] + lam[2] * p[2][1],
                ];
                let w = area / 3.0;
                int_a += w * self.coefficient(&x, y)?;
                let f = w * forcing.value(&x);
                for i in 0..3 {
                    load[i] += f * lam[i];
                }
            }
            let scale = int_a / (det * det);
            for i in 0..3 {
                for j in 0..3 {
                    stiff[3 * i + j] = scale * (b[i] * b[j] + c[i] * c[j]);
                }
            }
        }
        Ok(())
    }

    /// Natural boundary contributions `∫_{Γ_N} a g φ_i ds` added into `rhs` (free dofs).
    fn add_neumann(&self, y: &[f64], rhs: &mut [f64]) -> Result<()> {
        for (side, bc) in self.problem.boundary.iter().enumerate() {
            let BoundaryCondition::Neumann(g) = *bc else { continue };
            if self.mesh.spatial_dim == 1 {
                let node = if side == 0 { 0 } else { self.mesh.cells };
                if let Some(d) = self.dof_of_node[node] {
                    rhs[d] += self.coefficient(self.mesh.node(node), y)? * g;
                }
                continue;
            }
            for edge in self.mesh.edges.iter().filter(|e| e.side == side) {
                let (pa, pb) = (self.mesh.nodes[edge.a], self.mesh.nodes[edge.b]);
                let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
                for xi in GAUSS2_POINTS {
                    let t = 0.5 * (1.0 + xi);
                    let x = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
                    let flux = 0.5 * len * g * self.coefficient(&x, y)?;
                    if let Some(d) = self.dof_of_node[edge.a] {
                        rhs[d] += flux * (1.0 - t);
                    }
                    if let Some(d) = self.dof_of_node[edge.b] {
                        rhs[d] += flux * t;
                    }
                }
            }
        }
        Ok(())
    }

    /// Stiffness system at physical parameter `y` with Dirichlet dofs eliminated.
    pub fn assemble(&self, y: &[f64]) -> Result<AssembledSystem> {
        self.check_parameter(y)?;
        let k = self.mesh.spatial_dim + 1;
        let mut values = vec![0.0; self.col_idx.len()];
        let mut rhs = vec![0.0; self.n_dofs()];
        let mut stiff = [0.0; 9];
        let mut load = [0.0; 3];
        for e in 0..self.mesh.element_count() {
            self.element_terms(e, y, &mut stiff, &mut load)?;
            let nodes = self.mesh.element(e);
            let slots = &self.slots[e * k * k..(e + 1) * k * k];
            for (i, &a) in nodes.iter().enumerate() {
                let Some(di) = self.dof_of_node[a] else { continue };
                rhs[di] += load[i];
                for (j, &b) in nodes.iter().enumerate() {
                    let slot = slots[i * k + j];
                    if slot != usize::MAX {
                        values[slot] += stiff[i * k + j];
                    } else {
                        rhs[di] -= stiff[i * k + j] * self.lifting[b];
                    }
                }
            }
        }
        self.add_neumann(y, &mut rhs)?;
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Assembly("non-finite load vector".into()));
        }
        let matrix = SparseMatrix {
            n: self.n_dofs(),
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values,
        };
        Ok(AssembledSystem { matrix, rhs, y: y.to_vec(), quadrature_points: 3 })
    }

    /// Consistent mass matrix on the free dofs.
    pub fn mass_matrix(&self) -> SparseMatrix {
        let k = self.mesh.spatial_dim + 1;
        let mut values = vec![0.0; self.col_idx.len()];
        for e in 0..self.mesh.element_count() {
            let nodes = self.mesh.element(e);
            let measure = if k == 2 {
                self.mesh.h
            } else {
                let p: Vec<[f64; 2]> = nodes.iter().map(|&n| self.mesh.nodes[n]).collect();
                0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1])).abs()
            };
            let (diag, off) = if k == 2 { (measure / 3.0, measure / 6.0) } else { (measure / 6.0, measure / 12.0) };
            let slots = &self.slots[e * k * k..(e + 1) * k * k];
            for i in 0..k {
                for j in 0..k {
                    let slot = slots[i * k + j];
                    if slot != usize::MAX {
                        values[slot] += if i == j { diag } else { off };
                    }
                }
            }
        }
        SparseMatrix { n: self.n_dofs(), row_ptr: self.row_ptr.clone(), col_idx: self.col_idx.clone(), values }
    }

    /// Residual `r_i = ∫ f φ_i − a u'φ_i' − F[u] φ_i` plus natural boundary terms.
    pub fn nonlinear_residual(&self, y: &[f64], c: &[f64]) -> Result<Vec<f64>> {
        Ok(self.linearize(y, c)?.residual)
    }

    /// Residual, Newton Jacobian and lagged-coefficient Picard system at iterate `c`.
    pub fn linearize(&self, y: &[f64], c: &[f64]) -> Result<Linearization> {
        let nl = self.problem.nonlinearity;
        if nl == Nonlinearity::None {
            return Err(Error::Domain("problem has no nonlinear term".into()));
        }
        self.check_parameter(y)?;
        let u = self.full_nodal(c)?;
        let n = self.n_dofs();
        let mut residual = vec![0.0; n];
        let mut picard_rhs = vec![0.0; n];
        let mut jac = Tridiagonal::zeros(n);
        let mut pic = Tridiagonal::zeros(n);
        for e in 0..self.mesh.element_count() {
            let nodes = self.mesh.element(e);
            let (xa, xb) = (self.mesh.nodes[nodes[0]][0], self.mesh.nodes[nodes[1]][0]);
            let (mid, half, h) = (0.5 * (xa + xb), 0.5 * (xb - xa), xb - xa);
            let (ua, ub) = (u[nodes[0]], u[nodes[1]]);
            let du = (ub - ua) / h;
            let dphi = [-1.0 / h, 1.0 / h];
            let mut r_loc = [0.0; 2];
            let mut b_loc = [0.0; 2];
            let mut j_loc = [[0.0; 2]; 2];
            let mut p_loc = [[0.0; 2]; 2];
            for (xi, wq) in GAUSS3_POINTS.iter().zip(GAUSS3_WEIGHTS) {
                let x = [mid + half * xi];
                let w = wq * half;
                let phi = [0.5 * (1.0 - xi), 0.5 * (1.0 + xi)];
                let uq = ua * phi[0] + ub * phi[1];
                let a = self.coefficient(&x, y)?;
                let f = self.problem.forcing.value(&x);
                let fu = match nl {
                    Nonlinearity::PowerFive => uq.powi(5),
                    _ => uq * du,
                };
                for i in 0..2 {
                    r_loc[i] += w * (f * phi[i] - a * du * dphi[i] - fu * phi[i]);
                    b_loc[i] += w * f * phi[i];
                    for j in 0..2 {
                        let diffusion = a * dphi[j] * dphi[i];
                        let (newton, lagged) = match nl {
                            Nonlinearity::PowerFive => (5.0 * uq.powi(4) * phi[j], uq.powi(4) * phi[j]),
                            _ => (phi[j] * du + uq * dphi[j], uq * dphi[j]),
                        };
                        j_loc[i][j] += w * (diffusion + newton * phi[i]);
                        p_loc[i][j] += w * (diffusion + lagged * phi[i]);
                    }
                }
            }
            for i in 0..2 {
                let Some(di) = self.dof_of_node[nodes[i]] else { continue };
                residual[di] += r_loc[i];
                picard_rhs[di] += b_loc[i];
                for j in 0..2 {
                    match self.dof_of_node[nodes[j]] {
                        Some(dj) => {
                            jac.add(di, dj, j_loc[i][j])?;
                            pic.add(di, dj, p_loc[i][j])?;
                        }
                        None => picard_rhs[di] -= p_loc[i][j] * self.lifting[nodes[j]],
                    }
                }
            }
        }
        self.add_neumann(y, &mut residual)?;
        self.add_neumann(y, &mut picard_rhs)?;
        Ok(Linearization { residual, jacobian: jac, picard: pic, picard_rhs })
    }

    /// `L²(D)` norm of the FE function with free coefficients `v` and zero boundary data.
    pub fn l2_norm(&self, mass: &SparseMatrix, v: &[f64]) -> Result<f64> {
        mass.energy_norm(v)
    }
}

/// Convenience wrapper: bind `problem` to `mesh` and assemble at physical `y`.
pub fn assemble(problem: &ProblemSpec, mesh: &Mesh, y: &[f64]) -> Result<AssembledSystem> {
    Discretization::new(problem.clone(), mesh.clone())?.assemble(y)
}

/// `λ_max / λ_min` of an SPD matrix by power and inverse-power iteration.
pub fn estimate_condition(a: &SparseMatrix, tol: f64) -> Result<f64> {
    solvers::estimate_condition_preconditioned(a, &Preconditioner::Identity, tol)
}
