//! Closed-form accuracy and complexity bounds for the collocation sweep, and
//! least-squares fits of the unknown constants from measured error curves.

use std::f64::consts::{E, LN_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Safety factor applied to fitted constants before checking bounds.
pub const FIT_SLACK: f64 = 2.0;

/// Constants entering the estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateParams {
    /// Parameter dimension `N`.
    pub n: usize,
    /// Spatial dimension, used for `M_h ≈ h^{-d}`.
    pub spatial_dim: usize,
    /// FE convergence rate `s`.
    pub s: f64,
    pub c_fem: f64,
    pub c_sc: f64,
    /// Sparse-grid decay rate `r`.
    pub r: f64,
    /// Continuity constant `α`.
    pub alpha: f64,
    /// Coercivity constant `β`.
    pub beta: f64,
    /// `κ ≤ (C_κ / h)²`.
    pub c_kappa: f64,
    /// `sup_y ‖u_h(y)‖_{H¹₀}`.
    pub u_sup: f64,
    pub c_d: f64,
}

impl EstimateParams {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Domain("parameter dimension must be positive".into()));
        }
        let named = [
            ("s", self.s),
            ("c_fem", self.c_fem),
            ("c_sc", self.c_sc),
            ("r", self.r),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("c_kappa", self.c_kappa),
            ("u_sup", self.u_sup),
            ("c_d", self.c_d),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    fn nf(&self) -> f64 {
        self.n as f64
    }

    /// `log(3 C_sc / ε)`; requires `ε < 3 C_sc`.
    fn log_target(&self, eps: f64) -> Result<f64> {
        if !(eps > 0.0) {
            return Err(Error::Domain("accuracy must be positive".into()));
        }
        if eps >= 3.0 * self.c_sc {
            return Err(Error::Domain(format!("accuracy {eps} not below 3·C_sc = {}", 3.0 * self.c_sc)));
        }
        Ok((3.0 * self.c_sc / eps).ln())
    }
}

/// Mesh size `h = (ε / (3 C_fem))^{1/s}`.
pub fn h_of_eps(p: &EstimateParams, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Domain("accuracy must be positive".into()));
    }
    Ok((eps / (3.0 * p.c_fem)).powf(1.0 / p.s))
}

/// Real-valued level `(N / log 2) · log(log(3 C_sc / ε) / (rN))` before rounding.
fn lmax_real(p: &EstimateParams, eps: f64) -> Result<f64> {
    let inner = p.log_target(eps)? / (p.r * p.nf());
    Ok(p.nf() / LN_2 * inner.ln())
}

/// Smallest level meeting the sparse-grid share of the error budget (clamped at 0).
pub fn lmax_of_eps(p: &EstimateParams, eps: f64) -> Result<usize> {
    Ok(lmax_real(p, eps)?.ceil().max(0.0) as usize)
}

/// Solver tolerance `τ = √β ε / (3 (L_max + 2)^{2N})`.
pub fn tau_of_eps(beta: f64, eps: f64, lmax: usize, n: usize) -> f64 {
    beta.sqrt() * eps / (3.0 * ((lmax + 2) as f64).powi(2 * n as i32))
}

/// `[(L+1)(L+2)]^N`.
pub fn lebesgue_bound(level: usize, n: usize) -> f64 {
    (((level + 1) * (level + 2)) as f64).powi(n as i32)
}

/// `log((√κ+1)/(√κ−1))`, infinite for `κ ≤ 1`.
pub fn cg_rate(kappa: f64) -> f64 {
    if kappa <= 1.0 {
        return f64::INFINITY;
    }
    let s = kappa.sqrt();
    ((s + 1.0) / (s - 1.0)).ln()
}

/// `log(numerator / τ) / rate(κ)`, or 0 when the logarithm is not positive.
pub fn cg_iteration_bound(numerator: f64, tau: f64, kappa: f64) -> f64 {
    let top = (numerator / tau).ln();
    if !(top > 0.0) {
        return 0.0;
    }
    top / cg_rate(kappa)
}

/// Zero-start and warm-start per-solve iteration bounds at level `level ≥ 1`.
pub fn k_bounds(p: &EstimateParams, tau: f64, kappa: f64, level: usize) -> (f64, f64) {
    let zero = cg_iteration_bound(2.0 * p.alpha.sqrt() * p.u_sup, tau, kappa);
    let decay = (-p.r * p.nf() * 2f64.powf((level as f64 - 1.0) / p.nf())).exp();
    let acc = cg_iteration_bound(4.0 * p.alpha.sqrt() * p.c_sc * decay, tau, kappa);
    (zero, acc)
}

/// `(1 + L/(N−1))^{N−1}`, read as 1 for `N = 1`.
fn binomial_factor(level: f64, n: usize) -> f64 {
    if n == 1 {
        1.0
    } else {
        let m = (n - 1) as f64;
        (1.0 + level / m).powf(m)
    }
}

/// `M_L ≤ e^{N−1} 2^{L+1} (1 + L/(N−1))^{N−1}`.
pub fn m_bound(level: usize, n: usize) -> f64 {
    E.powi(n as i32 - 1) * 2f64.powi(level as i32 + 1) * binomial_factor(level as f64, n)
}

/// `C_int ≤ 16 M_h e^{2(N−1)} 4^L (1 + L/(N−1))^{2(N−1)}`.
pub fn int_cost_bound(level: usize, n: usize, m_h: f64) -> f64 {
    16.0 * m_h * E.powi(2 * (n as i32 - 1)) * 4f64.powi(level as i32) * binomial_factor(level as f64, n).powi(2)
}

/// Named constants of the total-cost bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c8: f64,
}

pub fn bound_constants(p: &EstimateParams) -> BoundConstants {
    let n = p.nf();
    let ratio = (p.alpha / p.beta).sqrt();
    let c4 = 2.0 * n * (2.0 * n / LN_2).ln();
    BoundConstants {
        c1: (E / LN_2).powf(n - 1.0) * (2.0 / (p.r * n)).powf(n),
        c2: 1.0 + (1.0 / (p.r * n)).ln() / LN_2,
        c3: 6.0 * ratio * p.u_sup,
        c4,
        c5: c4 + (4.0 * ratio).ln(),
        c8: 64.0 * E.powf(2.0 * (n - 1.0)),
    }
}

/// Asymptotic totals as functions of the target accuracy `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TotalBounds {
    pub h: f64,
    pub lmax: usize,
    pub tau: f64,
    /// `κ̄ = (C_κ / h)²`.
    pub kappa: f64,
    pub k_zero: f64,
    pub k_acc: f64,
    pub c_int: f64,
    pub m_l: f64,
}

/// Total-iteration, interpolation-cost and point-count bounds at accuracy `ε`.
pub fn k_totals_bounds(p: &EstimateParams, eps: f64) -> Result<TotalBounds> {
    p.validate()?;
    let n = p.nf();
    let lt = p.log_target(eps)?;
    let inner = lt / (p.r * n);
    if !(inner > 1.0) {
        return Err(Error::Domain(format!("accuracy {eps} too coarse for the asymptotic bounds")));
    }
    let c = bound_constants(p);
    let h = h_of_eps(p, eps)?;
    let lmax = lmax_of_eps(p, eps)?;
    let tau = tau_of_eps(p.beta, eps, lmax, p.n);
    let kappa = (p.c_kappa / h).powi(2);
    let rate = cg_rate(kappa);
    let loglog = inner.ln().ln();
    let level_term = c.c2 + lt.ln() / LN_2;
    if !(level_term > 0.0) || !loglog.is_finite() {
        return Err(Error::Domain(format!("accuracy {eps} too coarse for the asymptotic bounds")));
    }
    let prefix = c.c1 * lt.powf(n) * level_term.powf(n - 1.0) / rate;
    let k_zero = prefix * ((c.c3 / eps).ln() + c.c4 + 2.0 * n * loglog);
    let k_acc = prefix * (c.c5 + 2.0 * (2f64.powf(1.0 / n) - 1.0) * lt + 2.0 * n * loglog);
    let m_h = h.powi(-(p.spatial_dim as i32));
    let c_int = m_h * c.c8 * inner.powf(2.0 * n) * level_term.powf(2.0 * (n - 1.0));
    let m_l = 2.0 * E.powf(n - 1.0) * lt.powf(n) * level_term.powf(n - 1.0);
    Ok(TotalBounds { h, lmax, tau, kappa, k_zero, k_acc, c_int, m_l })
}

/// Least-squares fit of `err ≈ C_sc e^{−rN 2^{L/N}}` from `(L, err)` pairs.
pub fn fit_sc_constants(samples: &[(usize, f64)], n: usize) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .map(|&(l, e)| (n as f64 * 2f64.powf(l as f64 / n as f64), e))
        .collect();
    let (intercept, slope) = log_linear_fit(&pts)?;
    if !(slope < 0.0) {
        return Err(Error::Domain("error curve does not decay with level".into()));
    }
    Ok((intercept.exp(), -slope))
}

/// Least-squares fit of `err ≈ C_fem h^s` from `(h, err)` pairs.
pub fn fit_fem_constants(samples: &[(f64, f64)]) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = samples.iter().map(|&(h, e)| (h.ln(), e)).collect();
    let (intercept, slope) = log_linear_fit(&pts)?;
    if !(slope > 0.0) {
        return Err(Error::Domain("error does not decrease with h".into()));
    }
    Ok((intercept.exp(), slope))
}

/// Fits `log e = a + b x`.
fn log_linear_fit(pts: &[(f64, f64)]) -> Result<(f64, f64)> {
    if pts.len() < 2 {
        return Err(Error::Domain("at least two samples are needed for a fit".into()));
    }
    if pts.iter().any(|&(x, e)| !(e > 0.0) || !x.is_finite()) {
        return Err(Error::Domain("fit samples must have positive errors".into()));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1.ln()).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("fit abscissae are all equal".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1.ln() - my)).sum();
    let b = sxy / sxx;
    Ok((my - b * mx, b))
}

/// One measured-versus-bound comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub holds: bool,
}

impl BoundCheck {
    pub fn new(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self { name: name.into(), measured, bound, holds: measured <= bound }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize) -> EstimateParams {
        EstimateParams {
            n,
            spatial_dim: 1,
            s: 1.0,
            c_fem: 1.0,
            c_sc: 1.0,
            r: 1.0,
            alpha: 1.0,
            beta: 1.0,
            c_kappa: 1.0,
            u_sup: 1.0,
            c_d: 5.0,
        }
    }

    #[test]
    fn mesh_and_level_examples() {
        assert!((h_of_eps(&params(2), 0.3).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(lmax_of_eps(&params(2), 3e-9).unwrap(), 7);
        let mut p = params(2);
        p.s = 2.0;
        let h = h_of_eps(&p, 0.04).unwrap();
        assert!((h_of_eps(&p, 0.01).unwrap() - h / 2.0).abs() < 1e-15);
        assert!(matches!(lmax_of_eps(&params(2), 3.0), Err(Error::Domain(_))));
    }

    #[test]
    fn tolerance_examples() {
        assert!((tau_of_eps(1.0, 0.3, 2, 1) - 0.00625).abs() < 1e-15);
        assert!((tau_of_eps(4.0, 0.3, 2, 1) - 2.0 * 0.00625).abs() < 1e-15);
        assert!(tau_of_eps(1.0, 0.3, 2, 2) < tau_of_eps(1.0, 0.3, 2, 1));
        assert!(tau_of_eps(1.0, 0.3, 3, 1) < tau_of_eps(1.0, 0.3, 2, 1));
    }

    #[test]
    fn lebesgue_examples() {
        assert_eq!(lebesgue_bound(0, 1), 2.0);
        assert_eq!(lebesgue_bound(1, 1), 6.0);
        assert_eq!(lebesgue_bound(2, 2), 144.0);
    }

    #[test]
    fn iteration_bound_examples() {
        let p = params(2);
        assert_eq!(k_bounds(&p, 2.0, 100.0, 1).0, 0.0);
        assert_eq!(k_bounds(&p, 1e-6, 1.0, 1).0, 0.0);
        let near_one = k_bounds(&p, 1e-6, 1.0 + 1e-12, 1).0;
        assert!(near_one < 1.0 && near_one < k_bounds(&p, 1e-6, 100.0, 1).0);
        let (_, a1) = k_bounds(&p, 1e-10, 1e4, 1);
        let (_, a3) = k_bounds(&p, 1e-10, 1e4, 3);
        assert!(a3 < a1);
        // log(2·1/1e-3) / log(11/9)
        let (z, _) = k_bounds(&p, 1e-3, 100.0, 2);
        assert!((z - 2000f64.ln() / (11.0f64 / 9.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn point_count_bound() {
        let b = m_bound(3, 4);
        assert!((b - 16.0 * E.powi(3) * 8.0).abs() < 1e-9);
        assert!(b >= 137.0);
        assert_eq!(m_bound(0, 1), 2.0);
        assert!((2f64.powf(1.0 / 11.0) - 1.0 - 0.0650).abs() < 1e-4);
    }

    #[test]
    fn interpolation_cost_bound_dominates_exact_count() {
        // exact cost for the four-dimensional grid with 255 dofs
        let counts = [1u64, 9, 41, 137];
        let exact: u64 = (1..4).map(|w| 255 * (counts[w] - counts[w - 1]) * (2 * counts[w - 1] - 1)).sum();
        assert_eq!(exact, 2_123_640);
        assert!(int_cost_bound(3, 4, 255.0) >= exact as f64);
    }

    #[test]
    fn totals_are_monotone_in_accuracy() {
        for n in [1, 2, 4, 11] {
            let p = params(n);
            let mut last: Option<TotalBounds> = None;
            for k in 6..30 {
                let eps = 10f64.powf(-(k as f64) / 2.0);
                let Ok(b) = k_totals_bounds(&p, eps) else { continue };
                assert!(b.k_acc > 0.0 && b.k_zero > 0.0);
                if let Some(prev) = last {
                    assert!(b.k_zero >= prev.k_zero, "N = {n}");
                    assert!(b.k_acc >= prev.k_acc, "N = {n}");
                    assert!(b.c_int >= prev.c_int, "N = {n}");
                    assert!(b.m_l >= prev.m_l, "N = {n}");
                    assert!(b.lmax >= prev.lmax && b.tau <= prev.tau && b.h <= prev.h);
                }
                last = Some(b);
            }
            assert!(last.is_some());
        }
    }

    #[test]
    fn acceleration_gain_grows_with_dimension() {
        let eps = 1e-12;
        let gain = |n: usize| {
            let b = k_totals_bounds(&params(n), eps).unwrap();
            b.k_acc / b.k_zero
        };
        assert!(gain(8) < gain(2));
    }

    #[test]
    fn fits_recover_constants() {
        let (c, r) = (3.0, 0.7);
        let n = 3;
        let samples: Vec<(usize, f64)> = (1..6)
            .map(|l| (l, c * (-r * n as f64 * 2f64.powf(l as f64 / n as f64)).exp()))
            .collect();
        let (cf, rf) = fit_sc_constants(&samples, n).unwrap();
        assert!((cf - c).abs() < 1e-10 && (rf - r).abs() < 1e-12);
        let fem: Vec<(f64, f64)> = [0.1, 0.05, 0.025].iter().map(|&h| (h, 0.4 * h * h)).collect();
        let (cf, s) = fit_fem_constants(&fem).unwrap();
        assert!((cf - 0.4).abs() < 1e-12 && (s - 2.0).abs() < 1e-12);
        assert!(fit_fem_constants(&fem[..1]).is_err());
        assert!(fit_sc_constants(&[(1, 1e-3), (2, 1e-2)], 2).is_err());
    }
}
