//! Shared fixtures for the kernel benchmarks.

use sgwarm_core::{
    build_grid, AnisotropyWeights, AssembledSystem, CollocationGrid, Discretization, Mesh, ProblemSpec,
    VectorValuedInterpolant,
};

/// The four-parameter 1D problem on `cells` elements.
pub fn ex51_discretization(cells: usize) -> Discretization {
    Discretization::new(ProblemSpec::ex51(), Mesh::interval(cells).expect("mesh")).expect("discretization")
}

/// The three-term 2D problem on a `cells × cells` square.
pub fn ex52_discretization(cells: usize) -> Discretization {
    let problem = ProblemSpec::ex52(3, 1.0 / 64.0).expect("field");
    Discretization::new(problem, Mesh::unit_square(cells).expect("mesh")).expect("discretization")
}

pub fn isotropic_grid(dim: usize, level: usize) -> CollocationGrid {
    build_grid(level, &AnisotropyWeights::isotropic(dim)).expect("grid")
}

/// System at the reference point `y_ref`.
pub fn system_at(disc: &Discretization, y_ref: &[f64]) -> AssembledSystem {
    let y = disc.problem().domain.to_physical(y_ref);
    disc.assemble(&y).expect("assembly")
}

/// Interpolant of smooth synthetic vectors of length `len` over `H_level`.
pub fn synthetic_interpolant(grid: &CollocationGrid, level: usize, len: usize) -> VectorValuedInterpolant {
    let values = grid
        .level_set(level)
        .iter()
        .map(|p| {
            let s: f64 = p.coords.iter().sum();
            (0..len).map(|i| (s + i as f64 / len as f64).sin()).collect()
        })
        .collect();
    VectorValuedInterpolant::new(grid, level, values).expect("interpolant")
}
