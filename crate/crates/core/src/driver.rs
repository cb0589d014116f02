//! Level-by-level collocation sweep with warm-started solves and cost accounting.

use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::estimates::{cg_iteration_bound, int_cost_bound, m_bound, BoundCheck};
use crate::fem::{Discretization, Mesh, SparseMatrix};
use crate::interpolant::{SparseGridBasis, VectorValuedInterpolant};
use crate::model_problems::{Nonlinearity, ProblemSpec};
use crate::solvers::{
    cg_solve, extreme_eigenvalues, ic0_factor, interpolate_preconditioner, nonlinear_solve, GuessSource,
    PcKind, Preconditioner, SolveReport, Stopping,
};
use crate::sparse_grid::{build_grid, AnisotropyWeights, CollocationGrid, GridPoint};

pub const SCHEMA_VERSION: u32 = 1;

/// Tolerance of the eigenvalue estimates behind the per-solve bound checks.
const KAPPA_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Zero,
    Accelerated,
    NearestNeighbor,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Zero => "zero",
            Mode::Accelerated => "accelerated",
            Mode::NearestNeighbor => "nearest_neighbor",
        }
    }

    /// Guess source for points born after level 0.
    pub fn guess_source(&self) -> GuessSource {
        match self {
            Mode::Zero => GuessSource::Zero,
            Mode::Accelerated => GuessSource::Interpolant,
            Mode::NearestNeighbor => GuessSource::NearestNeighbor,
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "zero" => Ok(Mode::Zero),
            "accelerated" | "accel" | "acc" => Ok(Mode::Accelerated),
            "nearest_neighbor" | "nearest" | "nn" => Ok(Mode::NearestNeighbor),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

/// Preconditioner used for each linear solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PcPolicy {
    Identity,
    Diagonal,
    Ic0,
    /// IC0 at every point of `H_{l_pc}`, Lagrange-interpolated factors above.
    InterpolatedIc0 { l_pc: usize },
}

/// Where the error curve's reference expectation comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "level", rename_all = "snake_case")]
pub enum ReferenceSpec {
    None,
    /// Same mesh, level `W + 1`.
    NextLevel,
    /// Same mesh, an explicit level `L* > W`.
    Level(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub name: String,
    pub problem: ProblemSpec,
    /// Cells per side of the interval or square.
    pub mesh_cells: usize,
    pub weights: AnisotropyWeights,
    pub max_level: usize,
    pub mode: Mode,
    /// CG stopping rule for linear problems.
    pub stopping: Stopping,
    /// Relative step tolerance for nonlinear problems.
    pub rel_tol: f64,
    pub max_iter: usize,
    pub pc: PcPolicy,
    /// Flops per nonzero row of one matrix-vector product.
    pub c_d: u64,
    pub seed: u64,
    /// Worker threads; `None` uses every available core.
    pub workers: Option<usize>,
    pub reference: ReferenceSpec,
    /// Estimate `κ` and `‖c‖_A` for every linear solve.
    pub measure_bounds: bool,
}

impl RunConfig {
    pub fn new(name: impl Into<String>, problem: ProblemSpec, mesh_cells: usize, max_level: usize) -> Self {
        let weights = AnisotropyWeights::isotropic(problem.param_dim());
        Self {
            name: name.into(),
            problem,
            mesh_cells,
            weights,
            max_level,
            mode: Mode::Accelerated,
            stopping: Stopping::AbsResidual(1e-3),
            rel_tol: 1e-8,
            max_iter: 100_000,
            pc: PcPolicy::Identity,
            c_d: 5,
            seed: 0,
            workers: None,
            reference: ReferenceSpec::None,
            measure_bounds: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        check_dim(self.problem.param_dim(), self.weights.dim())?;
        if !(self.stopping.tol() > 0.0) {
            return Err(Error::Config("solver tolerance must be positive".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::Config("rel_tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be positive".into()));
        }
        if self.mesh_cells < 2 {
            return Err(Error::Config("mesh needs at least two cells per side".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be positive".into()));
        }
        if let ReferenceSpec::Level(l) = self.reference {
            if l <= self.max_level {
                return Err(Error::Config(format!("reference level {l} must exceed max level {}", self.max_level)));
            }
        }
        if self.problem.nonlinearity != Nonlinearity::None && self.problem.spatial_dim != 1 {
            return Err(Error::Config("nonlinear problems are one-dimensional only".into()));
        }
        Ok(())
    }

    pub fn mesh(&self) -> Result<Mesh> {
        match self.problem.spatial_dim {
            1 => Mesh::interval(self.mesh_cells),
            2 => Mesh::unit_square(self.mesh_cells),
            d => Err(Error::Config(format!("unsupported spatial dimension {d}"))),
        }
    }

    fn sweep_top(&self) -> usize {
        match self.reference {
            ReferenceSpec::None => self.max_level,
            ReferenceSpec::NextLevel => self.max_level + 1,
            ReferenceSpec::Level(l) => l,
        }
    }
}

/// Committed solutions, appended one whole level at a time.
#[derive(Debug, Clone)]
pub struct SolutionStore {
    counts: Vec<usize>,
    solutions: Vec<Vec<f64>>,
    committed: Option<usize>,
}

impl SolutionStore {
    pub fn new(grid: &CollocationGrid) -> Self {
        Self { counts: grid.counts().to_vec(), solutions: Vec::with_capacity(grid.len()), committed: None }
    }

    pub fn committed_level(&self) -> Option<usize> {
        self.committed
    }

    /// Solutions of `H_w` for the last committed `w`, in id order.
    pub fn solutions(&self) -> &[Vec<f64>] {
        &self.solutions
    }

    pub fn commit_level(&mut self, level: usize, solutions: Vec<Vec<f64>>) -> Result<()> {
        let expected = self.committed.map_or(0, |c| c + 1);
        if level != expected {
            return Err(Error::Barrier(format!("commit of level {level} while level {expected} is next")));
        }
        let fresh = self.counts.get(level).copied().ok_or_else(|| Error::Barrier(format!("level {level} is not in the grid")))?
            - if level == 0 { 0 } else { self.counts[level - 1] };
        check_dim(fresh, solutions.len())?;
        self.solutions.extend(solutions);
        self.committed = Some(level);
        Ok(())
    }

    /// Immutable interpolant over `H_w`.
    pub fn snapshot(&self, basis: Arc<SparseGridBasis>) -> Result<VectorValuedInterpolant> {
        let w = basis.level();
        match self.committed {
            Some(c) if c >= w => {}
            _ => return Err(Error::Barrier(format!("level {w} is not committed"))),
        }
        VectorValuedInterpolant::from_basis(basis, self.solutions[..self.counts[w]].to_vec())
    }
}

/// Warm start from the previous level's interpolant; the zero vector when there is none.
pub fn predict_initial(interp: Option<&VectorValuedInterpolant>, y_ref: &[f64], n_dofs: usize) -> Result<Vec<f64>> {
    match interp {
        None => Ok(vec![0.0; n_dofs]),
        Some(i) => {
            check_dim(n_dofs, i.value_dim())?;
            i.evaluate(y_ref)
        }
    }
}

/// Solution of the Euclidean-nearest prior point, lowest id on ties.
///
/// `solutions[j]` belongs to `points[j]`; coordinates are in the reference cube.
pub fn predict_nearest(points: &[GridPoint], solutions: &[Vec<f64>], y_ref: &[f64], n_dofs: usize) -> Vec<f64> {
    let mut best: Option<(f64, usize)> = None;
    for (j, p) in points.iter().take(solutions.len()).enumerate() {
        let d: f64 = p.coords.iter().zip(y_ref).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, j));
        }
    }
    match best {
        Some((_, j)) => solutions[j].clone(),
        None => vec![0.0; n_dofs],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub id: usize,
    pub level: usize,
    pub iterations: usize,
    pub converged: bool,
    pub guess: GuessSource,
    pub final_residual: f64,
    pub true_residual: f64,
    pub flops: u64,
    pub pc_fallback: bool,
    /// `κ(P⁻¹A)` when measured.
    pub kappa: Option<f64>,
    /// `‖c‖_A` of the computed solution.
    pub norm_a: Option<f64>,
    /// `‖c − c₀‖_A`.
    pub initial_error_a: Option<f64>,
    /// `⌈log(2‖c − c₀‖_A/τ)/log((√κ+1)/(√κ−1))⌉` for zero-start solves.
    pub k_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: usize,
    /// `M_w`.
    pub points: usize,
    /// `ΔM_w`.
    pub new_points: usize,
    pub iterations: Vec<usize>,
    pub mean: f64,
    pub min: usize,
    pub max: usize,
    pub solve_cost: u64,
    pub interp_cost: u64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    /// `K`.
    pub iterations: u64,
    /// `C_iter = C_D · M_h`.
    pub c_iter: u64,
    pub solve_cost: u64,
    pub interp_cost: u64,
    pub total_cost: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelError {
    pub level: usize,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub name: String,
    pub problem: String,
    pub mode: Mode,
    pub nonlinear: bool,
    pub param_dim: usize,
    pub spatial_dim: usize,
    pub mesh_cells: usize,
    /// `M_h`.
    pub m_h: usize,
    pub max_level: usize,
    pub weights: Vec<f64>,
    pub stopping: Stopping,
    pub rel_tol: f64,
    pub pc: PcPolicy,
    pub c_d: u64,
    pub seed: u64,
    /// `M_w` for `w = 0..=W`.
    pub point_counts: Vec<usize>,
    pub levels: Vec<LevelStats>,
    pub solves: Vec<SolveRecord>,
    pub totals: Totals,
    pub reference_level: Option<usize>,
    pub errors: Vec<LevelError>,
    pub bound_checks: Vec<BoundCheck>,
    pub failed: bool,
    pub wall_seconds: f64,
}

impl ExperimentReport {
    /// Totals over levels `0..=w`.
    pub fn prefix_totals(&self, w: usize) -> Totals {
        totals_of(&self.levels[..=w.min(self.levels.len() - 1)], self.c_d * self.m_h as u64)
    }

    pub fn mean_iterations(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.mean).collect()
    }

    pub fn violations(&self) -> impl Iterator<Item = &BoundCheck> {
        self.bound_checks.iter().filter(|c| !c.holds)
    }
}

fn totals_of(levels: &[LevelStats], c_iter: u64) -> Totals {
    let mut t = Totals { c_iter, ..Totals::default() };
    for l in levels {
        t.iterations += l.iterations.iter().map(|&k| k as u64).sum::<u64>();
        t.solve_cost += l.solve_cost;
        t.interp_cost += l.interp_cost;
    }
    t.total_cost = t.solve_cost + t.interp_cost;
    t
}

/// `(K_base − K)/K_base` and `(C_base − C)/C_base`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Savings {
    pub iterations: f64,
    pub cost: f64,
}

pub fn savings(base: &Totals, other: &Totals) -> Savings {
    let frac = |b: u64, o: u64| if b == 0 { 0.0 } else { (b as f64 - o as f64) / b as f64 };
    Savings { iterations: frac(base.iterations, other.iterations), cost: frac(base.total_cost, other.total_cost) }
}

/// `Σ_{w=1}^{W} M_h · ΔM_w · (2M_{w−1} − 1)` for point counts `M_0..M_W`.
pub fn interpolation_cost(m_h: u64, counts: &[usize]) -> u64 {
    (1..counts.len()).map(|w| level_interp_cost(m_h, counts, w)).sum()
}

fn level_interp_cost(m_h: u64, counts: &[usize], w: usize) -> u64 {
    if w == 0 {
        return 0;
    }
    let fresh = (counts[w] - counts[w - 1]) as u64;
    m_h * fresh * (2 * counts[w - 1] as u64 - 1)
}

/// Cost savings from bare iteration totals: `C_zero = C_D M_h K_zero`,
/// `C_acc = C_D M_h K_acc + C_int`.
pub fn cost_savings(m_h: u64, c_d: u64, k_zero: u64, k_acc: u64, c_int: u64) -> f64 {
    let c_zero = (c_d * m_h * k_zero) as f64;
    let c_acc = (c_d * m_h * k_acc + c_int) as f64;
    (c_zero - c_acc) / c_zero
}

/// `‖E[u_w] − E[u_ref]‖_{L²}` for each level expectation in `expectations`.
pub fn error_curve(
    mass: &SparseMatrix,
    expectations: &[Vec<f64>],
    reference: &VectorValuedInterpolant,
) -> Result<Vec<LevelError>> {
    let e_ref = reference.quadrature();
    check_dim(mass.dim(), e_ref.len())?;
    expectations
        .iter()
        .enumerate()
        .map(|(level, e)| {
            check_dim(e_ref.len(), e.len())?;
            let diff: Vec<f64> = e.iter().zip(&e_ref).map(|(a, b)| a - b).collect();
            Ok(LevelError { level, error: mass.energy(&diff)?.max(0.0).sqrt() })
        })
        .collect()
}

/// Everything a sweep produced, for callers that need the raw solutions.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: ExperimentReport,
    /// Grid up to the reference level when one was swept.
    pub grid: CollocationGrid,
    /// Solutions in point-id order.
    pub solutions: Vec<Vec<f64>>,
    pub discretization: Arc<Discretization>,
}

pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentReport> {
    Ok(run_experiment_full(cfg)?.report)
}

struct PointResult {
    solution: Vec<f64>,
    record: SolveRecord,
    factor: Option<Preconditioner>,
}

enum Guess<'a> {
    Zero,
    Interpolant(&'a VectorValuedInterpolant),
    Nearest(&'a [GridPoint], &'a [Vec<f64>]),
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    disc: &'a Discretization,
    nonlinear: bool,
    pc_bases: Option<(Arc<Vec<Preconditioner>>, Arc<SparseGridBasis>)>,
    keep_factor: bool,
}

impl Ctx<'_> {
    fn solve(&self, point: &GridPoint, guess: &Guess<'_>) -> Result<PointResult> {
        let n = self.disc.n_dofs();
        let (x0, source) = match guess {
            Guess::Zero => (vec![0.0; n], GuessSource::Zero),
            Guess::Interpolant(i) => (predict_initial(Some(i), &point.coords, n)?, GuessSource::Interpolant),
            Guess::Nearest(p, s) => (predict_nearest(p, s, &point.coords, n), GuessSource::NearestNeighbor),
        };
        let y = self.cfg.problem.domain.to_physical(&point.coords);
        if self.nonlinear {
            let (x, mut rep) = nonlinear_solve(self.disc, &y, &x0, self.cfg.rel_tol, self.cfg.max_iter)?;
            rep.guess = source;
            return Ok(PointResult { record: record(point, &rep), solution: x, factor: None });
        }
        let sys = self.disc.assemble(&y)?;
        let pc = match (self.cfg.pc, &self.pc_bases) {
            (PcPolicy::Identity, _) => Preconditioner::Identity,
            (PcPolicy::Diagonal, _) => Preconditioner::diagonal(&sys.matrix)?,
            (PcPolicy::Ic0, _) | (PcPolicy::InterpolatedIc0 { .. }, None) => ic0_factor(&sys.matrix)?,
            (PcPolicy::InterpolatedIc0 { .. }, Some((bases, basis))) => {
                interpolate_preconditioner(bases.clone(), basis, &point.coords)?
            }
        };
        let (x, mut rep) = cg_solve(&sys.matrix, &sys.rhs, &x0, &pc, self.cfg.stopping, self.cfg.max_iter)?;
        rep.guess = source;
        let mut rec = record(point, &rep);
        if self.cfg.measure_bounds {
            let norm_a = sys.matrix.energy_norm(&x)?;
            let e0: Vec<f64> = x.iter().zip(&x0).map(|(a, b)| a - b).collect();
            let initial_error = sys.matrix.energy_norm(&e0)?;
            rec.norm_a = Some(norm_a);
            rec.initial_error_a = Some(initial_error);
            let measurable = pc.kind() != PcKind::Interpolated && !rep.pc_fallback;
            if measurable {
                let (lmax, lmin) = extreme_eigenvalues(&sys.matrix, &pc, KAPPA_TOL)?;
                let kappa = lmax / lmin;
                rec.kappa = Some(kappa);
                if let (GuessSource::Zero, Stopping::AbsResidual(tau)) = (source, self.cfg.stopping) {
                    rec.k_bound = Some(cg_iteration_bound(2.0 * initial_error, tau, kappa).ceil());
                }
            }
        }
        let factor = if self.keep_factor { Some(pc) } else { None };
        Ok(PointResult { solution: x, record: rec, factor })
    }
}

fn record(point: &GridPoint, rep: &SolveReport) -> SolveRecord {
    SolveRecord {
        id: point.id,
        level: point.level,
        iterations: rep.iterations,
        converged: rep.converged,
        guess: rep.guess,
        final_residual: rep.final_residual,
        true_residual: rep.true_residual,
        flops: rep.flops,
        pc_fallback: rep.pc_fallback,
        kappa: None,
        norm_a: None,
        initial_error_a: None,
        k_bound: None,
    }
}

/// Runs the sweep for `w = 0..=W`, plus the reference levels when configured.
///
/// Solves above `W` feed only the error curve and are excluded from every total.
pub fn run_experiment_full(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let started = Instant::now();
    let disc = Arc::new(Discretization::new(cfg.problem.clone(), cfg.mesh()?)?);
    let top = cfg.sweep_top();
    let grid = build_grid(top, &cfg.weights)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let nonlinear = cfg.problem.nonlinearity != Nonlinearity::None;
    let m_h = disc.n_dofs() as u64;
    let c_iter = cfg.c_d * m_h;
    let l_pc = match cfg.pc {
        PcPolicy::InterpolatedIc0 { l_pc } if !nonlinear => Some(l_pc),
        _ => None,
    };

    let mut store = SolutionStore::new(&grid);
    let mut bases: Vec<Arc<SparseGridBasis>> = Vec::with_capacity(top + 1);
    let mut pc_factors: Vec<Preconditioner> = Vec::new();
    let mut pc_bases = None;
    let mut levels = Vec::new();
    let mut solves = Vec::new();
    let mut failed = false;

    for w in 0..=top {
        let t0 = Instant::now();
        let snapshot = match (cfg.mode, w) {
            (Mode::Accelerated, w) if w > 0 => Some(store.snapshot(bases[w - 1].clone())?),
            _ => None,
        };
        let guess = match (cfg.mode, &snapshot) {
            _ if w == 0 => Guess::Zero,
            (Mode::Accelerated, Some(s)) => Guess::Interpolant(s),
            (Mode::NearestNeighbor, _) => Guess::Nearest(grid.points(), store.solutions()),
            _ => Guess::Zero,
        };
        let ctx = Ctx {
            cfg,
            disc: &disc,
            nonlinear,
            pc_bases: pc_bases.clone(),
            keep_factor: l_pc.is_some_and(|l| w <= l),
        };
        let fresh = grid.new_points(w);
        let results: Vec<Result<PointResult>> =
            pool.install(|| fresh.par_iter().map(|p| ctx.solve(p, &guess)).collect());
        let mut solutions = Vec::with_capacity(fresh.len());
        let mut records = Vec::with_capacity(fresh.len());
        for r in results {
            let r = r?;
            solutions.push(r.solution);
            records.push(r.record);
            if let Some(f) = r.factor {
                pc_factors.push(f);
            }
        }
        store.commit_level(w, solutions)?;
        bases.push(Arc::new(SparseGridBasis::new(&grid, w)?));
        if l_pc == Some(w) {
            pc_bases = Some((Arc::new(std::mem::take(&mut pc_factors)), bases[w].clone()));
        }
        if records.iter().any(|r| !r.converged) {
            failed = true;
        }
        if w <= cfg.max_level {
            let iterations: Vec<usize> = records.iter().map(|r| r.iterations).collect();
            let solve_cost = if nonlinear {
                records.iter().map(|r| r.flops).sum()
            } else {
                c_iter * iterations.iter().map(|&k| k as u64).sum::<u64>()
            };
            let interp_cost = match cfg.mode {
                Mode::Accelerated => level_interp_cost(m_h, grid.counts(), w),
                _ => 0,
            };
            levels.push(LevelStats {
                level: w,
                points: grid.count(w),
                new_points: fresh.len(),
                mean: iterations.iter().sum::<usize>() as f64 / iterations.len() as f64,
                min: iterations.iter().copied().min().unwrap_or(0),
                max: iterations.iter().copied().max().unwrap_or(0),
                iterations,
                solve_cost,
                interp_cost,
                wall_seconds: t0.elapsed().as_secs_f64(),
            });
            solves.extend(records);
        }
    }

    let solutions = store.solutions().to_vec();
    let (reference_level, errors) = if top > cfg.max_level {
        let mass = disc.mass_matrix();
        let expectations: Vec<Vec<f64>> = (0..=cfg.max_level)
            .map(|w| {
                let interp = VectorValuedInterpolant::from_basis(bases[w].clone(), solutions[..grid.count(w)].to_vec())?;
                Ok(interp.quadrature())
            })
            .collect::<Result<_>>()?;
        let reference = VectorValuedInterpolant::from_basis(bases[top].clone(), solutions.clone())?;
        (Some(top), error_curve(&mass, &expectations, &reference)?)
    } else {
        (None, Vec::new())
    };

    let mut bound_checks = Vec::new();
    let n = grid.dim();
    for w in 0..=cfg.max_level {
        bound_checks.push(BoundCheck::new(format!("points_level_{w}"), grid.count(w) as f64, m_bound(w, n)));
    }
    if cfg.mode == Mode::Accelerated {
        let c_int: u64 = levels.iter().map(|l| l.interp_cost).sum();
        bound_checks.push(BoundCheck::new("interp_cost", c_int as f64, int_cost_bound(cfg.max_level, n, m_h as f64)));
    }
    for s in &solves {
        if let Some(b) = s.k_bound {
            bound_checks.push(BoundCheck::new(format!("cg_iterations_point_{}", s.id), s.iterations as f64, b));
        }
    }

    let totals = totals_of(&levels, c_iter);
    let report = ExperimentReport {
        schema_version: SCHEMA_VERSION,
        name: cfg.name.clone(),
        problem: cfg.problem.name.clone(),
        mode: cfg.mode,
        nonlinear,
        param_dim: n,
        spatial_dim: cfg.problem.spatial_dim,
        mesh_cells: cfg.mesh_cells,
        m_h: disc.n_dofs(),
        max_level: cfg.max_level,
        weights: cfg.weights.values().to_vec(),
        stopping: cfg.stopping,
        rel_tol: cfg.rel_tol,
        pc: cfg.pc,
        c_d: cfg.c_d,
        seed: cfg.seed,
        point_counts: grid.counts()[..=cfg.max_level].to_vec(),
        levels,
        solves,
        totals,
        reference_level,
        errors,
        bound_checks,
        failed,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    Ok(RunOutcome { report, grid, solutions, discretization: disc })
}
