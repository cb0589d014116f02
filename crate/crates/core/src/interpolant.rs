//! Sparse-grid Lagrange interpolation of vector-valued data.
//!
//! The Smolyak operator `Σ_{g(l) ≤ w} ⊗_n (U^{m(l_n)} - U^{m(l_n - 1)})` is
//! expanded once into a combination of full tensor operators
//! `Σ_k c_k ⊗_n U^{m(k_n)}` with `c_k = Σ_{i ∈ {0,1}^N, k+i ∈ set} (-1)^{|i|}`.
//! Evaluating at `y` accumulates the per-point basis values `Ψ_j(y)` into a
//! dense vector over `H_w`; data vectors are then combined in a single pass.

use std::collections::HashSet;
use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::qmc::Halton;
use crate::sparse_grid::{
    build_index_set, for_each_tensor, key_coordinate, rule_keys, CollocationGrid, MultiIndex,
};

/// One-dimensional Clenshaw-Curtis rule of a fixed level.
#[derive(Debug, Clone)]
struct Rule1d {
    nodes: Vec<f64>,
    /// Barycentric weights (alternating sign, halved at the endpoints).
    bary: Vec<f64>,
    /// Quadrature weights against the uniform probability density on `[-1,1]`.
    quad: Vec<f64>,
}

impl Rule1d {
    fn new(level: usize) -> Self {
        let nodes: Vec<f64> = rule_keys(level).into_iter().map(key_coordinate).collect();
        let m = nodes.len();
        if m == 1 {
            return Self { nodes, bary: vec![1.0], quad: vec![1.0] };
        }
        let n = m - 1;
        let bary = (0..m)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == n {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        let quad = (0..m)
            .map(|j| {
                let c = if j == 0 || j == n { 1.0 } else { 2.0 };
                let mut acc = 1.0;
                for k in 1..=n / 2 {
                    let b = if 2 * k == n { 1.0 } else { 2.0 };
                    let theta = 2.0 * k as f64 * j as f64 * std::f64::consts::PI / n as f64;
                    acc -= b / (4.0 * (k * k) as f64 - 1.0) * theta.cos();
                }
                0.5 * c / n as f64 * acc
            })
            .collect();
        Self { nodes, bary, quad }
    }

    /// Values of all Lagrange basis polynomials at `y`.
    fn basis_values(&self, y: f64, out: &mut Vec<f64>) {
        out.clear();
        if self.nodes.len() == 1 {
            out.push(1.0);
            return;
        }
        if let Some(hit) = self.nodes.iter().position(|&x| x == y) {
            out.resize(self.nodes.len(), 0.0);
            out[hit] = 1.0;
            return;
        }
        let mut denom = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.bary) {
            let t = w / (y - x);
            out.push(t);
            denom += t;
        }
        out.iter_mut().for_each(|v| *v /= denom);
    }
}

#[derive(Debug, Clone)]
struct TensorTerm {
    coeff: f64,
    levels: Vec<usize>,
    /// Grid ids of the tensor points, last dimension varying fastest.
    ids: Vec<usize>,
}

/// Lagrange basis `{Ψ_j}` of the level-`w` sparse-grid interpolant over `H_w`.
#[derive(Debug, Clone)]
pub struct SparseGridBasis {
    dim: usize,
    level: usize,
    n_points: usize,
    terms: Vec<TensorTerm>,
    /// Indexed by 1D level; entry 0 is unused.
    rules: Vec<Rule1d>,
}

impl SparseGridBasis {
    pub fn new(grid: &CollocationGrid, level: usize) -> Result<Self> {
        if level > grid.max_level() {
            return Err(Error::Domain(format!(
                "basis level {level} above grid level {}",
                grid.max_level()
            )));
        }
        let dim = grid.dim();
        let set = build_index_set(level, grid.weights());
        let members: HashSet<&MultiIndex> = set.iter().collect();
        let max_1d = set.iter().flat_map(|k| k.levels().iter().copied()).max().unwrap_or(1);
        let rules: Vec<Rule1d> = (0..=max_1d)
            .map(|l| if l == 0 { Rule1d { nodes: vec![], bary: vec![], quad: vec![] } } else { Rule1d::new(l) })
            .collect();

        let mut terms = Vec::new();
        for k in &set {
            let mut coeff = 0i64;
            for mask in 0u32..(1u32 << dim) {
                let shifted: Vec<usize> =
                    (0..dim).map(|n| k.levels()[n] + ((mask >> n) & 1) as usize).collect();
                if members.contains(&MultiIndex::new(shifted)?) {
                    coeff += if mask.count_ones() % 2 == 0 { 1 } else { -1 };
                }
            }
            if coeff == 0 {
                continue;
            }
            let lists: Vec<Vec<u64>> = k.levels().iter().map(|&l| rule_keys(l)).collect();
            let mut ids = Vec::new();
            let mut missing = false;
            for_each_tensor(&lists, |keys| match grid.id_of_keys(keys) {
                Some(id) => ids.push(id),
                None => missing = true,
            });
            if missing {
                return Err(Error::Domain("tensor rule point missing from grid".into()));
            }
            terms.push(TensorTerm { coeff: coeff as f64, levels: k.levels().to_vec(), ids });
        }
        Ok(Self { dim, level, n_points: grid.count(level), terms, rules })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// `M_w`.
    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        self.n_points == 0
    }

    /// Number of tensor operators with a nonzero combination coefficient.
    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    fn check_point(&self, y: &[f64]) -> Result<()> {
        check_dim(self.dim, y.len())?;
        if y.iter().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::Domain("parameter point outside [-1,1]^N".into()));
        }
        Ok(())
    }

    /// `Ψ_j(y)` for every `j` in `H_w`.
    pub fn weights_at(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_points];
        self.weights_into(y, &mut out)?;
        Ok(out)
    }

    pub fn weights_into(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_point(y)?;
        check_dim(self.n_points, out.len())?;
        out.iter_mut().for_each(|v| *v = 0.0);
        // values[n][l] = 1D basis values of the level-l rule at y_n
        let mut values: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); self.rules.len()]; self.dim];
        for term in &self.terms {
            for (n, &l) in term.levels.iter().enumerate() {
                if values[n][l].is_empty() {
                    let mut buf = Vec::with_capacity(self.rules[l].nodes.len());
                    self.rules[l].basis_values(y[n], &mut buf);
                    values[n][l] = buf;
                }
            }
            let per_dim: Vec<&[f64]> =
                term.levels.iter().enumerate().map(|(n, &l)| values[n][l].as_slice()).collect();
            accumulate_tensor(&per_dim, term.coeff, &term.ids, out);
        }
        Ok(())
    }

    /// Quadrature rule `w_j = ∫ Ψ_j ρ dy` for the uniform density on `[-1,1]^N`.
    pub fn quadrature_rule(&self) -> QuadratureRule {
        let mut weights = vec![0.0; self.n_points];
        for term in &self.terms {
            let per_dim: Vec<&[f64]> = term.levels.iter().map(|&l| self.rules[l].quad.as_slice()).collect();
            accumulate_tensor(&per_dim, term.coeff, &term.ids, &mut weights);
        }
        QuadratureRule { weights }
    }
}

/// Adds `coeff · Π_n per_dim[n][i_n]` into `out[ids[flat(i)]]`, last dimension fastest.
fn accumulate_tensor(per_dim: &[&[f64]], coeff: f64, ids: &[usize], out: &mut [f64]) {
    fn rec(per_dim: &[&[f64]], d: usize, prod: f64, ids: &[usize], cursor: &mut usize, out: &mut [f64]) {
        if d == per_dim.len() {
            out[ids[*cursor]] += prod;
            *cursor += 1;
            return;
        }
        for &v in per_dim[d] {
            if v == 0.0 {
                // skip the whole sub-block
                *cursor += per_dim[d + 1..].iter().map(|p| p.len()).product::<usize>();
                continue;
            }
            rec(per_dim, d + 1, prod * v, ids, cursor, out);
        }
    }
    let mut cursor = 0;
    rec(per_dim, 0, coeff, ids, &mut cursor, out);
}

/// Sparse-grid quadrature weights over `H_w` for the density `2^{-N}` on `[-1,1]^N`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// `Σ_j w_j v_j` for scalar samples.
    pub fn integrate(&self, samples: &[f64]) -> Result<f64> {
        check_dim(self.weights.len(), samples.len())?;
        Ok(self.weights.iter().zip(samples).map(|(w, v)| w * v).sum())
    }
}

/// Immutable snapshot mapping parameter points to coefficient vectors.
#[derive(Debug, Clone)]
pub struct VectorValuedInterpolant {
    basis: Arc<SparseGridBasis>,
    values: Arc<Vec<Vec<f64>>>,
    value_dim: usize,
}

impl VectorValuedInterpolant {
    /// Interpolant of level `level` on `grid`; `values[j]` is the data at point id `j`.
    pub fn new(grid: &CollocationGrid, level: usize, values: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_basis(Arc::new(SparseGridBasis::new(grid, level)?), values)
    }

    pub fn from_basis(basis: Arc<SparseGridBasis>, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != basis.len() {
            return Err(Error::Domain(format!(
                "incomplete data: {} vectors for {} grid points",
                values.len(),
                basis.len()
            )));
        }
        let value_dim = values.first().map_or(0, Vec::len);
        if let Some(bad) = values.iter().find(|v| v.len() != value_dim) {
            return Err(Error::DimensionMismatch { expected: value_dim, found: bad.len() });
        }
        Ok(Self { basis, values: Arc::new(values), value_dim })
    }

    pub fn basis(&self) -> &SparseGridBasis {
        &self.basis
    }

    pub fn level(&self) -> usize {
        self.basis.level()
    }

    pub fn value_dim(&self) -> usize {
        self.value_dim
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Interpolated coefficient vector at `y ∈ [-1,1]^N`.
    pub fn evaluate(&self, y: &[f64]) -> Result<Vec<f64>> {
        let weights = self.basis.weights_at(y)?;
        Ok(combine(&weights, &self.values, self.value_dim))
    }

    /// Expectation of the interpolant under the uniform density.
    pub fn quadrature(&self) -> Vec<f64> {
        let rule = self.basis.quadrature_rule();
        combine(&rule.weights, &self.values, self.value_dim)
    }
}

/// `Σ_j weights[j] · values[j]`.
pub(crate) fn combine(weights: &[f64], values: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for (w, v) in weights.iter().zip(values) {
        if *w == 0.0 {
            continue;
        }
        out.iter_mut().zip(v).for_each(|(o, x)| *o += w * x);
    }
    out
}

/// Sampled lower estimate of the Lebesgue constant `max_y Σ_j |Ψ_j(y)|`
/// over `samples` Halton points, at the grid's top level.
pub fn lebesgue_estimate(grid: &CollocationGrid, samples: usize) -> Result<f64> {
    lebesgue_estimate_from(&SparseGridBasis::new(grid, grid.max_level())?, samples, 0)
}

pub fn lebesgue_estimate_from(basis: &SparseGridBasis, samples: usize, skip: u64) -> Result<f64> {
    if samples == 0 {
        return Err(Error::Domain("sample count must be positive".into()));
    }
    let mut seq = Halton::new(basis.dim(), skip)
        .ok_or_else(|| Error::Domain(format!("no quasi-random sequence for N = {}", basis.dim())))?;
    let mut weights = vec![0.0; basis.len()];
    let mut best = 0.0f64;
    for _ in 0..samples {
        let y = seq.next_symmetric();
        basis.weights_into(&y, &mut weights)?;
        best = best.max(weights.iter().map(|w| w.abs()).sum());
    }
    Ok(best)
}
