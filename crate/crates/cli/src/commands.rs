use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, Context};
use sgwarm_core::driver::SCHEMA_VERSION;
use sgwarm_core::estimates::{cg_iteration_bound, int_cost_bound, lebesgue_bound, m_bound};
use sgwarm_core::interpolant::lebesgue_estimate_from;
use sgwarm_core::{
    build_grid, run_experiment, AnisotropyWeights, BoundCheck, ExperimentReport, GuessSource, Mode, SparseGridBasis,
    Stopping,
};

use crate::config::{parse_modes, parse_real, Experiment, KeyValues};
use crate::tables::{compare_table, level_table, sig6, timing_table, ReportFile, Table};
use crate::{CheckArgs, CompareArgs, GridArgs, RunArgs};

/// Command failure with its process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad configuration, unreadable input, missing measurements or mismatched grids.
    Usage(anyhow::Error),
    Nonconverged(String),
    Bounds(usize),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Nonconverged(_) => 2,
            Failure::Bounds(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(e) => write!(f, "{e:#}"),
            Failure::Nonconverged(m) => write!(f, "solver did not converge: {m}"),
            Failure::Bounds(n) => write!(f, "{n} bound violations"),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

impl From<sgwarm_core::Error> for Failure {
    fn from(e: sgwarm_core::Error) -> Self {
        Failure::Usage(e.into())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_table(table: &Table, path: &Path) -> Outcome {
    table.write_csv(create(path)?)?;
    Ok(())
}

pub fn run(args: RunArgs) -> Outcome {
    let path = args
        .config
        .ok_or_else(|| anyhow!("`run` needs --config PATH\nusage: sgwarm run --config PATH [--out DIR] [--modes LIST]"))?;
    let mut kv = KeyValues::load(&path)?;
    if let Some(m) = &args.modes {
        parse_modes(m)?;
        kv.set("modes", m.clone());
    }
    if let Some(w) = args.workers {
        kv.set("workers", w.to_string());
    }
    if let Some(s) = args.seed {
        kv.set("seed", s.to_string());
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    let experiment = Experiment::from_kv(&kv, stem)?;
    let name = experiment.base.name.clone();
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let mut reports = Vec::new();
    for &mode in &experiment.modes {
        eprintln!("{name}: running {} ...", mode.name());
        reports.push(run_experiment(&experiment.config_for(mode))?);
    }
    let file = ReportFile { schema_version: SCHEMA_VERSION, name: name.clone(), config: kv.entries().clone(), reports };
    if args.format.json() {
        let mut out = create(&args.out.join(format!("{name}_report.json")))?;
        serde_json::to_writer_pretty(&mut out, &file).context("writing report")?;
        writeln!(out)?;
        out.flush()?;
    }
    if args.format.csv() {
        write_table(&level_table(&file.reports), &args.out.join(format!("{name}_table.csv")))?;
        write_table(&timing_table(&file.reports), &args.out.join(format!("{name}_timing.csv")))?;
    }
    for r in &file.reports {
        let t = &r.totals;
        eprintln!("{name} {}: K = {}, cost = {}, C_int = {}", r.mode.name(), t.iterations, t.total_cost, t.interp_cost);
    }
    let failed: Vec<&str> = file.reports.iter().filter(|r| r.failed).map(|r| r.mode.name()).collect();
    if !failed.is_empty() {
        return Err(Failure::Nonconverged(format!("modes {}", failed.join(", "))));
    }
    Ok(())
}

fn same_grid(a: &ExperimentReport, b: &ExperimentReport) -> bool {
    a.param_dim == b.param_dim && a.weights == b.weights && a.point_counts == b.point_counts
}

pub fn compare(args: CompareArgs) -> Outcome {
    let mut reports: Vec<ExperimentReport> = Vec::new();
    for p in &args.reports {
        reports.extend(ReportFile::load(p)?.reports);
    }
    if reports.len() < 2 {
        return Err(anyhow!("compare needs at least two reports, found {}", reports.len()).into());
    }
    if let Some(r) = reports.iter().find(|r| !same_grid(&reports[0], r)) {
        return Err(anyhow!("grid mismatch: `{}` ({}) differs from `{}`", r.name, r.mode.name(), reports[0].name).into());
    }
    let table = compare_table(&reports);
    match args.out {
        Some(dir) => {
            fs::create_dir_all(&dir)?;
            write_table(&table, &dir.join("compare.csv"))?;
        }
        None => table.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

/// Bound checks recomputed from the stored measurements.
fn recheck(r: &ExperimentReport) -> Result<Vec<BoundCheck>, Failure> {
    let mut checks = Vec::new();
    for (w, &m) in r.point_counts.iter().enumerate() {
        checks.push(BoundCheck::new(format!("points_level_{w}"), m as f64, m_bound(w, r.param_dim)));
    }
    if r.mode == Mode::Accelerated {
        checks.push(BoundCheck::new(
            "interp_cost",
            r.totals.interp_cost as f64,
            int_cost_bound(r.max_level, r.param_dim, r.m_h as f64),
        ));
    }
    if r.nonlinear {
        return Ok(checks);
    }
    let Stopping::AbsResidual(tau) = r.stopping else {
        return Err(anyhow!("`{}` ({}): per-solve bounds need an absolute tolerance", r.name, r.mode.name()).into());
    };
    let mut measured = 0;
    for s in r.solves.iter().filter(|s| s.guess == GuessSource::Zero) {
        if let (Some(kappa), Some(e0)) = (s.kappa, s.initial_error_a) {
            measured += 1;
            let bound = cg_iteration_bound(2.0 * e0, tau, kappa).ceil();
            checks.push(BoundCheck::new(format!("cg_iterations_point_{}", s.id), s.iterations as f64, bound));
        }
    }
    if measured == 0 {
        return Err(anyhow!("`{}` ({}) has no measured κ and A-norms; rerun with measure_bounds = true", r.name, r.mode.name())
            .into());
    }
    Ok(checks)
}

fn lebesgue_checks(params: &KeyValues) -> Result<Vec<BoundCheck>, Failure> {
    let get = |k: &str, d: usize| -> Result<usize, Failure> {
        match params.get(k) {
            None => Ok(d),
            Some(v) => v.parse().map_err(|_| anyhow!("`{k}`: cannot parse `{v}`").into()),
        }
    };
    let (max_dim, max_level, samples) =
        (get("lebesgue_max_dim", 3)?, get("lebesgue_max_level", 4)?, get("lebesgue_samples", 2000)?);
    let mut checks = Vec::new();
    for n in 1..=max_dim {
        let grid = build_grid(max_level, &AnisotropyWeights::isotropic(n))?;
        for l in 0..=max_level {
            let basis = SparseGridBasis::new(&grid, l)?;
            let est = lebesgue_estimate_from(&basis, samples, 0)?;
            checks.push(BoundCheck::new(format!("lebesgue_n{n}_l{l}"), est, lebesgue_bound(l, n)));
        }
    }
    Ok(checks)
}

fn params_file(path: &Path) -> Result<KeyValues, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut kv = KeyValues::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| anyhow!("{}:{}: expected `key = value`", path.display(), i + 1))?;
        let k = k.trim();
        if !matches!(k, "lebesgue_max_dim" | "lebesgue_max_level" | "lebesgue_samples") {
            return Err(anyhow!("{}:{}: unknown key `{k}`", path.display(), i + 1).into());
        }
        kv.set(k, v.trim().to_string());
    }
    Ok(kv)
}

pub fn check_bounds(args: CheckArgs) -> Outcome {
    let file = ReportFile::load(&args.report)?;
    let mut table = Table {
        header: ["report", "mode", "check", "measured", "bound", "holds"].iter().map(|s| s.to_string()).collect(),
        rows: Vec::new(),
    };
    let mut violations = 0;
    let mut push = |report: &str, mode: &str, c: &BoundCheck| {
        if !c.holds {
            violations += 1;
        }
        table.rows.push(vec![
            report.to_string(),
            mode.to_string(),
            c.name.clone(),
            sig6(c.measured),
            sig6(c.bound),
            c.holds.to_string(),
        ]);
    };
    for r in &file.reports {
        for c in recheck(r)? {
            push(&r.name, r.mode.name(), &c);
        }
    }
    if let Some(p) = &args.params {
        for c in lebesgue_checks(&params_file(p)?)? {
            push("lebesgue", "-", &c);
        }
    }
    let dir = match &args.out {
        Some(d) => d.clone(),
        None => args.report.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    fs::create_dir_all(&dir)?;
    let out = dir.join(format!("{}_bounds.csv", file.name));
    write_table(&table, &out)?;
    eprintln!("{} checks, {violations} violations; table in {}", table.rows.len(), out.display());
    if violations > 0 {
        return Err(Failure::Bounds(violations));
    }
    Ok(())
}

pub fn dump_grid(args: GridArgs) -> Outcome {
    let (weights, level, name) = match &args.config {
        Some(path) => {
            let kv = KeyValues::load(path)?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("grid");
            let e = Experiment::from_kv(&kv, stem)?;
            (e.base.weights.clone(), args.level.unwrap_or(e.base.max_level), e.base.name)
        }
        None => {
            let level = args.level.ok_or_else(|| anyhow!("dump-grid needs --config or --level"))?;
            let weights = match (&args.weights, args.dim) {
                (Some(w), _) => AnisotropyWeights::new(
                    w.split(',').map(|v| parse_real(v).ok_or_else(|| anyhow!("bad weight `{v}`"))).collect::<Result<_, _>>()?,
                )?,
                (None, Some(d)) => AnisotropyWeights::isotropic(d),
                (None, None) => return Err(anyhow!("dump-grid needs --dim or --weights").into()),
            };
            if args.dim.is_some_and(|d| d != weights.dim()) {
                return Err(anyhow!("--dim does not match the number of weights").into());
            }
            (weights, level, "grid".to_string())
        }
    };
    let grid = build_grid(level, &weights)?;
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let mut out = create(&dir.join(format!("{name}_grid.txt")))?;
            grid.write_table(&mut out)?;
            out.flush()?;
        }
        None => grid.write_table(io::stdout().lock())?,
    }
    Ok(())
}
