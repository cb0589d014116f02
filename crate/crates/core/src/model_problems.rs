//! Parametrized elliptic model problems.
//!
//! Parameter points are always handed around on the reference cube `[-1,1]^N`;
//! each problem carries a [`ParameterDomain`] that maps them to physical values
//! before the coefficient field is evaluated.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse_grid::AnisotropyWeights;

/// Relative slack accepted on interval bounds when validating physical inputs.
const BOUND_SLACK: f64 = 1e-14;

fn within(v: f64, lo: f64, hi: f64) -> bool {
    let slack = BOUND_SLACK * lo.abs().max(hi.abs()).max(1.0);
    v.is_finite() && v >= lo - slack && v <= hi + slack
}

/// Product of parameter intervals `Γ = Π [lo_n, hi_n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDomain {
    bounds: Vec<(f64, f64)>,
}

impl ParameterDomain {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::Domain("parameter dimension must be positive".into()));
        }
        if let Some((lo, hi)) = bounds.iter().find(|(lo, hi)| !(lo < hi)) {
            return Err(Error::Domain(format!("empty parameter interval [{lo}, {hi}]")));
        }
        Ok(Self { bounds })
    }

    /// `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![(lo, hi); dim])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    /// Affine map from the reference cube `[-1,1]^N` onto the domain.
    pub fn to_physical(&self, reference: &[f64]) -> Vec<f64> {
        reference
            .iter()
            .zip(&self.bounds)
            .map(|(&t, &(lo, hi))| 0.5 * (lo + hi) + 0.5 * (hi - lo) * t)
            .collect()
    }

    pub fn to_reference(&self, physical: &[f64]) -> Vec<f64> {
        physical
            .iter()
            .zip(&self.bounds)
            .map(|(&y, &(lo, hi))| (2.0 * y - (lo + hi)) / (hi - lo))
            .collect()
    }

    pub fn contains_physical(&self, y: &[f64]) -> bool {
        y.len() == self.dim() && y.iter().zip(&self.bounds).all(|(&v, &(lo, hi))| within(v, lo, hi))
    }
}

/// Coefficient of the one-dimensional four-parameter field at physical `y ∈ [-1,1]^4`.
///
/// `a(x,y) = 1 + exp(e^{-1/8} (y1 cos πx + y2 sin πx + y3 cos 2πx + y4 sin 2πx))`.
pub fn eval_coeff_ex1(x: f64, y: &[f64]) -> Result<f64> {
    if !within(x, 0.0, 1.0) {
        return Err(Error::Domain(format!("x = {x} outside [0,1]")));
    }
    if y.len() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, found: y.len() });
    }
    if !y.iter().all(|&v| within(v, -1.0, 1.0)) {
        return Err(Error::Domain("parameter outside [-1,1]^4".into()));
    }
    Ok(ex1_unchecked(x, y))
}

#[inline]
fn ex1_unchecked(x: f64, y: &[f64]) -> f64 {
    let scale = (-0.125f64).exp();
    let (s1, c1) = (PI * x).sin_cos();
    let (s2, c2) = (2.0 * PI * x).sin_cos();
    1.0 + (scale * (y[0] * c1 + y[1] * s1 + y[2] * c2 + y[3] * s2)).exp()
}

/// Truncated expansion of a Gaussian-covariance log field in `x1`, with `N` terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ex52Field {
    /// Physical correlation length `R_c`.
    pub correlation_length: f64,
    /// `R_p = max(1, 2 R_c)`.
    pub rp: f64,
    /// `R = R_c / R_p`.
    pub r: f64,
    /// Magnitude multiplying each `y_n`; entry 0 is the `y_1` factor `(√π R / 2)^{1/2}`.
    pub magnitudes: Vec<f64>,
}

impl Ex52Field {
    pub fn new(terms: usize, correlation_length: f64) -> Result<Self> {
        if terms == 0 {
            return Err(Error::Domain("expansion needs at least one term".into()));
        }
        if !(correlation_length > 0.0) {
            return Err(Error::Domain("correlation length must be positive".into()));
        }
        let rp = f64::max(1.0, 2.0 * correlation_length);
        let r = correlation_length / rp;
        let mut magnitudes = Vec::with_capacity(terms);
        magnitudes.push((PI.sqrt() * r / 2.0).sqrt());
        magnitudes.extend((2..=terms).map(|n| zeta(n, r)));
        Ok(Self { correlation_length, rp, r, magnitudes })
    }

    pub fn terms(&self) -> usize {
        self.magnitudes.len()
    }

    #[inline]
    fn log_shift(&self, x1: f64, y: &[f64]) -> f64 {
        let mut s = 1.0 + y[0] * self.magnitudes[0];
        for n in 2..=self.terms() {
            s += self.magnitudes[n - 1] * phi(n, x1, self.rp) * y[n - 1];
        }
        s
    }

    /// `a = 0.5 + exp(1 + y1 (√πR/2)^{1/2} + Σ ζ_n φ_n(x1) y_n)` at physical `y`.
    #[inline]
    pub fn value(&self, x1: f64, y: &[f64]) -> f64 {
        0.5 + self.log_shift(x1, y).exp()
    }
}

/// Eigen-magnitude `ζ_n = (√π R)^{1/2} exp(-(⌊n/2⌋ π R)^2 / 8)` for `n ≥ 2`.
pub fn zeta(n: usize, r: f64) -> f64 {
    let k = (n / 2) as f64;
    (PI.sqrt() * r).sqrt() * (-(k * PI * r).powi(2) / 8.0).exp()
}

/// Eigenfunction `φ_n(x1)`: sine for even `n`, cosine for odd `n`, argument `⌊n/2⌋ π x1 / R_p`.
pub fn phi(n: usize, x1: f64, rp: f64) -> f64 {
    let arg = (n / 2) as f64 * PI * x1 / rp;
    if n.is_multiple_of(2) {
        arg.sin()
    } else {
        arg.cos()
    }
}

/// Coefficient of the two-dimensional field at `x ∈ [0,1]^2`, physical `y ∈ [-√3,√3]^N`.
pub fn eval_coeff_ex2(x: &[f64], y: &[f64], correlation_length: f64) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::Domain("N = 0".into()));
    }
    if x.len() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: x.len() });
    }
    if !x.iter().all(|&v| within(v, 0.0, 1.0)) {
        return Err(Error::Domain("x outside the unit square".into()));
    }
    let b = 3f64.sqrt();
    if !y.iter().all(|&v| within(v, -b, b)) {
        return Err(Error::Domain("parameter outside [-√3,√3]^N".into()));
    }
    let field = Ex52Field::new(y.len(), correlation_length)?;
    Ok(field.value(x[0], y))
}

/// Fixed anisotropy weights used with the eleven-term field.
pub fn anisotropy_weights_ex2() -> AnisotropyWeights {
    AnisotropyWeights::new(vec![0.85, 0.8, 0.8, 1.0, 1.0, 1.6, 1.6, 2.6, 2.6, 3.7, 3.7])
        .expect("static weights are positive")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CoefficientField {
    /// One-dimensional four-parameter field (`a > 1`).
    Ex51,
    /// Two-dimensional truncated expansion (`a > 0.5`).
    Ex52(Ex52Field),
    /// Parameter-independent constant.
    Constant(f64),
}

impl CoefficientField {
    /// Guaranteed pointwise lower bound.
    pub fn lower_bound(&self) -> f64 {
        match self {
            CoefficientField::Ex51 => 1.0,
            CoefficientField::Ex52(_) => 0.5,
            CoefficientField::Constant(c) => *c,
        }
    }

    /// Evaluates at spatial point `x` and physical parameter `y` without bounds checks.
    #[inline]
    pub fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            CoefficientField::Ex51 => ex1_unchecked(x[0], y),
            CoefficientField::Ex52(f) => f.value(x[0], y),
            CoefficientField::Constant(c) => *c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Forcing {
    Constant(f64),
    /// `cos(x1) sin(x2)`.
    CosSin,
    /// `f(x) = x1`.
    Linear,
    /// `d π² Π sin(π x_i)`, whose Dirichlet solution for `a ≡ 1` is `Π sin(π x_i)`.
    SineMode,
}

impl Forcing {
    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Forcing::Constant(c) => *c,
            Forcing::CosSin => x[0].cos() * x[1].sin(),
            Forcing::Linear => x[0],
            Forcing::SineMode => {
                x.len() as f64 * PI * PI * x.iter().map(|&v| (PI * v).sin()).product::<f64>()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BoundaryCondition {
    Dirichlet(f64),
    /// Prescribed normal derivative `∂u/∂n`.
    Neumann(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Nonlinearity {
    None,
    /// `F[u] = u^5`.
    PowerFive,
    /// `F[u] = u u'`.
    UTimesUPrime,
}

/// One parametrized boundary-value problem `-∇·(a ∇u) + F[u] = f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub name: String,
    pub spatial_dim: usize,
    pub coefficient: CoefficientField,
    pub forcing: Forcing,
    /// 1D: `[left, right]`; 2D: `[bottom, right, top, left]`.
    pub boundary: Vec<BoundaryCondition>,
    pub nonlinearity: Nonlinearity,
    pub domain: ParameterDomain,
}

impl ProblemSpec {
    /// `-(a u')' = 10` on `[0,1]`, homogeneous Dirichlet, four parameters in `[-1,1]`.
    pub fn ex51() -> Self {
        Self {
            name: "ex51".into(),
            spatial_dim: 1,
            coefficient: CoefficientField::Ex51,
            forcing: Forcing::Constant(10.0),
            boundary: vec![BoundaryCondition::Dirichlet(0.0); 2],
            nonlinearity: Nonlinearity::None,
            domain: ParameterDomain::cube(4, -1.0, 1.0).expect("valid cube"),
        }
    }

    /// `-∇·(a∇u) = cos(x1) sin(x2)` on the unit square with an `N`-term field.
    pub fn ex52(terms: usize, correlation_length: f64) -> Result<Self> {
        let b = 3f64.sqrt();
        Ok(Self {
            name: "ex52".into(),
            spatial_dim: 2,
            coefficient: CoefficientField::Ex52(Ex52Field::new(terms, correlation_length)?),
            forcing: Forcing::CosSin,
            boundary: vec![BoundaryCondition::Dirichlet(0.0); 4],
            nonlinearity: Nonlinearity::None,
            domain: ParameterDomain::cube(terms, -b, b)?,
        })
    }

    /// `-(a u')' + F[u] = x`, `u(0) = 0`, `u'(1) = 1`, with the four-parameter field.
    pub fn ex53(nonlinearity: Nonlinearity) -> Self {
        Self {
            name: "ex53".into(),
            spatial_dim: 1,
            coefficient: CoefficientField::Ex51,
            forcing: Forcing::Linear,
            boundary: vec![BoundaryCondition::Dirichlet(0.0), BoundaryCondition::Neumann(1.0)],
            nonlinearity,
            domain: ParameterDomain::cube(4, -1.0, 1.0).expect("valid cube"),
        }
    }

    /// Constant coefficient smoke-test problem with homogeneous Dirichlet data.
    pub fn constant(spatial_dim: usize, params: usize, coefficient: f64, forcing: Forcing) -> Result<Self> {
        let p = Self {
            name: "constant".into(),
            spatial_dim,
            coefficient: CoefficientField::Constant(coefficient),
            forcing,
            boundary: vec![BoundaryCondition::Dirichlet(0.0); 2 * spatial_dim],
            nonlinearity: Nonlinearity::None,
            domain: ParameterDomain::cube(params, -1.0, 1.0)?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn param_dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.spatial_dim) {
            return Err(Error::Config(format!("spatial dimension {} unsupported", self.spatial_dim)));
        }
        if self.boundary.len() != 2 * self.spatial_dim {
            return Err(Error::Config("one boundary condition per side is required".into()));
        }
        if self.nonlinearity != Nonlinearity::None && self.spatial_dim != 1 {
            return Err(Error::Config("nonlinear terms are only supported in 1D".into()));
        }
        if let CoefficientField::Constant(c) = self.coefficient {
            if !(c > 0.0) {
                return Err(Error::Config("constant coefficient must be positive".into()));
            }
        }
        if let CoefficientField::Ex52(f) = &self.coefficient {
            if f.terms() != self.param_dim() {
                return Err(Error::DimensionMismatch { expected: f.terms(), found: self.param_dim() });
            }
        }
        if matches!(self.coefficient, CoefficientField::Ex51) && self.param_dim() != 4 {
            return Err(Error::DimensionMismatch { expected: 4, found: self.param_dim() });
        }
        Ok(())
    }

    /// Coefficient at spatial `x` for a physical parameter point.
    #[inline]
    pub fn coefficient_at(&self, x: &[f64], y_physical: &[f64]) -> f64 {
        self.coefficient.value(x, y_physical)
    }
}
