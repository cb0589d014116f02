//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use sgwarm_core::model_problems::anisotropy_weights_ex2;
use sgwarm_core::{
    AnisotropyWeights, Forcing, Mode, Nonlinearity, PcPolicy, ProblemSpec, ReferenceSpec, RunConfig, Stopping,
};

pub const KEYS: &[&str] = &[
    "name",
    "problem",
    "nonlinearity",
    "terms",
    "correlation_length",
    "params",
    "spatial_dim",
    "coefficient",
    "forcing",
    "mesh_cells",
    "max_level",
    "weights",
    "stopping",
    "tau",
    "rel_tol",
    "max_iter",
    "pc",
    "l_pc",
    "c_d",
    "seed",
    "workers",
    "modes",
    "reference",
    "measure_bounds",
];

/// Parsed key/value pairs, sorted by key.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    map: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", lineno + 1))?;
            let k = k.trim().to_ascii_lowercase();
            if !KEYS.contains(&k.as_str()) {
                bail!("line {}: unknown key `{k}`", lineno + 1);
            }
            if map.insert(k.clone(), v.trim().to_string()).is_some() {
                bail!("line {}: duplicate key `{k}`", lineno + 1);
            }
        }
        Ok(Self { map })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: String) {
        self.map.insert(key.to_string(), value);
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.map
    }

    fn num<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| anyhow!("`{key}`: cannot parse `{v}`")),
        }
    }

    fn real(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => parse_real(v).ok_or_else(|| anyhow!("`{key}`: cannot parse `{v}`")),
        }
    }
}

/// Accepts plain floats and fractions such as `1/64`.
pub fn parse_real(s: &str) -> Option<f64> {
    match s.split_once('/') {
        Some((a, b)) => {
            let (a, b): (f64, f64) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
            (b != 0.0).then(|| a / b)
        }
        None => s.trim().parse().ok(),
    }
}

/// A run configuration plus the modes to sweep.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub base: RunConfig,
    pub modes: Vec<Mode>,
}

pub fn parse_modes(s: &str) -> Result<Vec<Mode>> {
    let modes: Vec<Mode> = s.split(',').filter(|m| !m.trim().is_empty()).map(|m| Ok(m.parse()?)).collect::<Result<_>>()?;
    if modes.is_empty() {
        bail!("no modes given");
    }
    Ok(modes)
}

fn problem(kv: &KeyValues) -> Result<ProblemSpec> {
    let name = kv.get("problem").ok_or_else(|| anyhow!("missing key `problem`"))?;
    Ok(match name {
        "ex51" => ProblemSpec::ex51(),
        "ex52" => ProblemSpec::ex52(kv.num("terms", 3)?, kv.real("correlation_length", 1.0 / 64.0)?)?,
        "ex53" => {
            let nl = match kv.get("nonlinearity").unwrap_or("u5") {
                "u5" | "power_five" => Nonlinearity::PowerFive,
                "uux" | "u_du" | "u_times_u_prime" => Nonlinearity::UTimesUPrime,
                other => bail!("unknown nonlinearity `{other}`"),
            };
            ProblemSpec::ex53(nl)
        }
        "constant" => ProblemSpec::constant(
            kv.num("spatial_dim", 1)?,
            kv.num("params", 2)?,
            kv.real("coefficient", 1.0)?,
            Forcing::Constant(kv.real("forcing", 1.0)?),
        )?,
        other => bail!("unknown problem `{other}`"),
    })
}

impl Experiment {
    pub fn from_kv(kv: &KeyValues, default_name: &str) -> Result<Self> {
        let problem = problem(kv)?;
        let max_level = kv.get("max_level").ok_or_else(|| anyhow!("missing key `max_level`"))?;
        let max_level: usize = max_level.parse().map_err(|_| anyhow!("`max_level`: cannot parse `{max_level}`"))?;
        let default_cells = if problem.spatial_dim == 2 { 16 } else { 256 };
        let mut cfg = RunConfig::new(
            kv.get("name").unwrap_or(default_name),
            problem,
            kv.num("mesh_cells", default_cells)?,
            max_level,
        );
        cfg.weights = match kv.get("weights") {
            None | Some("isotropic") => AnisotropyWeights::isotropic(cfg.problem.param_dim()),
            Some("ex52") => {
                let all = anisotropy_weights_ex2();
                AnisotropyWeights::new(all.values()[..cfg.problem.param_dim().min(all.dim())].to_vec())?
            }
            Some(list) => AnisotropyWeights::new(
                list.split(',')
                    .map(|v| parse_real(v).ok_or_else(|| anyhow!("`weights`: cannot parse `{v}`")))
                    .collect::<Result<_>>()?,
            )?,
        };
        let tau = kv.real("tau", 1e-3)?;
        cfg.stopping = match kv.get("stopping").unwrap_or("abs") {
            "abs" | "absolute" => Stopping::AbsResidual(tau),
            "rel" | "relative" => Stopping::RelResidual(tau),
            other => bail!("unknown stopping rule `{other}`"),
        };
        cfg.rel_tol = kv.real("rel_tol", 1e-8)?;
        cfg.max_iter = kv.num("max_iter", 100_000)?;
        cfg.pc = match kv.get("pc").unwrap_or("identity") {
            "identity" | "none" => PcPolicy::Identity,
            "diagonal" | "jacobi" => PcPolicy::Diagonal,
            "ic0" => PcPolicy::Ic0,
            "interpolated_ic0" => PcPolicy::InterpolatedIc0 { l_pc: kv.num("l_pc", 1)? },
            other => bail!("unknown preconditioner `{other}`"),
        };
        cfg.c_d = kv.num("c_d", 5)?;
        cfg.seed = kv.num("seed", 0)?;
        cfg.workers = match kv.get("workers") {
            None | Some("auto") => None,
            Some(_) => Some(kv.num("workers", 1)?),
        };
        cfg.reference = match kv.get("reference").unwrap_or("none") {
            "none" => ReferenceSpec::None,
            "next" | "next_level" => ReferenceSpec::NextLevel,
            level => ReferenceSpec::Level(level.parse().map_err(|_| anyhow!("`reference`: cannot parse `{level}`"))?),
        };
        cfg.measure_bounds = kv.num("measure_bounds", false)?;
        let modes = parse_modes(kv.get("modes").unwrap_or("zero,accelerated"))?;
        cfg.validate()?;
        Ok(Self { base: cfg, modes })
    }

    pub fn config_for(&self, mode: Mode) -> RunConfig {
        RunConfig { mode, ..self.base.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_fractions() {
        let kv = KeyValues::parse("# header\nproblem = ex52  # inline\nterms=3\ncorrelation_length = 1/64\nmax_level=2\n").unwrap();
        let e = Experiment::from_kv(&kv, "x").unwrap();
        assert_eq!(e.base.problem.param_dim(), 3);
        assert_eq!(e.base.name, "x");
        assert_eq!(e.modes, vec![Mode::Zero, Mode::Accelerated]);
        assert_eq!(parse_real("1/4"), Some(0.25));
        assert_eq!(parse_real("1/0"), None);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(KeyValues::parse("problem ex51").is_err());
        assert!(KeyValues::parse("colour = red").is_err());
        assert!(KeyValues::parse("tau = 1\ntau = 2").is_err());
        let kv = KeyValues::parse("problem = ex51\nmax_level = 2\ntau = -1").unwrap();
        assert!(Experiment::from_kv(&kv, "x").is_err());
        let kv = KeyValues::parse("problem = ex51").unwrap();
        assert!(Experiment::from_kv(&kv, "x").is_err());
    }

    #[test]
    fn preconditioner_and_modes() {
        let kv = KeyValues::parse("problem=ex51\nmax_level=1\npc=interpolated_ic0\nl_pc=2\nmodes=zero,accel,nn").unwrap();
        let e = Experiment::from_kv(&kv, "x").unwrap();
        assert_eq!(e.base.pc, PcPolicy::InterpolatedIc0 { l_pc: 2 });
        assert_eq!(e.modes.len(), 3);
        assert_eq!(e.config_for(Mode::Zero).mode, Mode::Zero);
    }
}
