//! Nested anisotropic Smolyak index sets and Clenshaw-Curtis point sets.
//!
//! One-dimensional nodes are identified by an exact dyadic key: node `j` of
//! a level-`l` rule sits at angle fraction `t = j / 2^{l-1}`, stored as
//! `j · 2^{FINE_BITS-(l-1)}`. Coordinates are computed once from the reduced
//! key, so the same node reached from different levels is bit-identical and
//! grid unions need no floating-point tolerance.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Resolution of the dyadic node keys; supports 1D levels up to `FINE_BITS + 1`.
pub const FINE_BITS: u32 = 48;
const CENTER_KEY: u64 = 1 << (FINE_BITS - 1);
const FULL_KEY: u64 = 1 << FINE_BITS;

/// Highest total level accepted by [`build_grid`].
pub const MAX_SUPPORTED_LEVEL: usize = FINE_BITS as usize - 1;

/// Tolerance on the weighted level function when comparing against an integer level.
pub const LEVEL_EPS: f64 = 1e-10;

/// Default cap on the number of grid points.
pub const DEFAULT_POINT_CAP: usize = 5_000_000;

/// Number of nodes of the level-`l` Clenshaw-Curtis rule: `m(1) = 1`, `m(l) = 2^{l-1} + 1`.
pub fn growth_m(l: usize) -> Result<usize> {
    match l {
        0 => Err(Error::Domain("growth rule is defined for l >= 1".into())),
        1 => Ok(1),
        l if l - 1 > FINE_BITS as usize => Err(Error::Domain(format!("level {l} too large"))),
        l => Ok((1usize << (l - 1)) + 1),
    }
}

/// `m(l)` with the convention `m(0) = 0`.
pub(crate) fn growth_m0(l: usize) -> usize {
    if l == 0 {
        0
    } else {
        growth_m(l).expect("level within range")
    }
}

/// Multi-index `(l_1, ..., l_N)` with every component at least 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(levels: Vec<usize>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Domain("multi-index needs at least one component".into()));
        }
        if levels.contains(&0) {
            return Err(Error::Domain("multi-index components must be >= 1".into()));
        }
        Ok(Self(levels))
    }

    pub fn ones(dim: usize) -> Self {
        Self(vec![1; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn levels(&self) -> &[usize] {
        &self.0
    }
}

/// Positive per-dimension importance weights `α`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnisotropyWeights {
    values: Vec<f64>,
    min: f64,
}

impl AnisotropyWeights {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("weights need at least one component".into()));
        }
        if values.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
            return Err(Error::Domain("weights must be positive and finite".into()));
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self { values, min })
    }

    pub fn isotropic(dim: usize) -> Self {
        Self { values: vec![1.0; dim.max(1)], min: 1.0 }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn is_isotropic(&self) -> bool {
        self.values.iter().all(|&a| a == self.min)
    }

    fn ratio(&self, n: usize) -> f64 {
        self.values[n] / self.min
    }
}

/// Weighted level `g(l) = Σ (α_n / α_min)(l_n - 1)`.
pub fn level_g(index: &MultiIndex, weights: &AnisotropyWeights) -> Result<f64> {
    check_dim(weights.dim(), index.dim())?;
    Ok(level_unchecked(index.levels(), weights))
}

fn level_unchecked(levels: &[usize], weights: &AnisotropyWeights) -> f64 {
    levels
        .iter()
        .enumerate()
        .map(|(n, &l)| weights.ratio(n) * (l - 1) as f64)
        .sum()
}

/// Smallest integer level whose index set contains an index of weighted level `g`.
fn birth_of(g: f64) -> usize {
    (g - LEVEL_EPS).ceil().max(0.0) as usize
}

/// Key of node `j` (0-based) in the level-`l` rule.
pub(crate) fn node_key(l: usize, j: usize) -> u64 {
    if l == 1 {
        CENTER_KEY
    } else {
        (j as u64) << (FINE_BITS as usize - (l - 1))
    }
}

/// Canonical coordinate `-cos(π t)` of a node key, written as `sin(π (t - 1/2))`
/// so the center maps to exactly 0 and the rule is exactly antisymmetric.
pub(crate) fn key_coordinate(key: u64) -> f64 {
    let s = key as f64 / FULL_KEY as f64 - 0.5;
    let v = (std::f64::consts::PI * s.abs()).sin();
    if s < 0.0 {
        -v
    } else {
        v
    }
}

/// One-dimensional level at which a node first appears.
#[cfg(test)]
pub(crate) fn key_birth_level(key: u64) -> usize {
    if key == CENTER_KEY {
        1
    } else if key == 0 || key == FULL_KEY {
        2
    } else {
        FINE_BITS as usize - key.trailing_zeros() as usize + 1
    }
}

/// Keys of the nodes first appearing at 1D level `l`, ascending.
fn new_node_keys(l: usize) -> Vec<u64> {
    match l {
        1 => vec![CENTER_KEY],
        2 => vec![0, FULL_KEY],
        _ => {
            let shift = FINE_BITS as usize - (l - 1);
            (0..(1u64 << (l - 2))).map(|i| (2 * i + 1) << shift).collect()
        }
    }
}

/// Node keys of the full level-`l` rule, ascending.
pub(crate) fn rule_keys(l: usize) -> Vec<u64> {
    let m = growth_m0(l);
    (0..m).map(|j| node_key(l, j)).collect()
}

/// Clenshaw-Curtis abscissas of level `l`, strictly increasing.
pub fn cc_nodes(l: usize) -> Result<Vec<f64>> {
    growth_m(l)?;
    Ok(rule_keys(l).into_iter().map(key_coordinate).collect())
}

/// All multi-indices with `g(l) ≤ max_level`, in lexicographic order.
pub fn build_index_set(max_level: usize, weights: &AnisotropyWeights) -> Vec<MultiIndex> {
    let dim = weights.dim();
    let bound = max_level as f64 + LEVEL_EPS;
    let mut out = Vec::new();
    let mut current = vec![1usize; dim];

    fn recurse(
        n: usize,
        partial: f64,
        bound: f64,
        weights: &AnisotropyWeights,
        current: &mut Vec<usize>,
        out: &mut Vec<MultiIndex>,
    ) {
        if n == current.len() {
            out.push(MultiIndex(current.clone()));
            return;
        }
        let ratio = weights.ratio(n);
        let mut l = 1;
        while partial + ratio * (l - 1) as f64 <= bound {
            current[n] = l;
            recurse(n + 1, partial + ratio * (l - 1) as f64, bound, weights, current, out);
            l += 1;
        }
        current[n] = 1;
    }

    recurse(0, 0.0, bound, weights, &mut current, &mut out);
    out
}

/// A collocation point with its birth level.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub id: usize,
    /// Smallest level `w` with the point in `H_w`.
    pub level: usize,
    pub coords: Vec<f64>,
    pub(crate) keys: Vec<u64>,
}

/// Nested point sets `H_0 ⊂ H_1 ⊂ ... ⊂ H_W`.
///
/// Points are ordered by birth level, then lexicographically by coordinates,
/// so `H_w` is always the id prefix `0..M_w`.
#[derive(Debug, Clone)]
pub struct CollocationGrid {
    weights: AnisotropyWeights,
    max_level: usize,
    points: Vec<GridPoint>,
    /// `M_w` for `w = 0..=W`.
    counts: Vec<usize>,
    lookup: HashMap<Vec<u64>, usize>,
}

/// Builds the grid up to level `max_level` with the default point cap.
pub fn build_grid(max_level: usize, weights: &AnisotropyWeights) -> Result<CollocationGrid> {
    build_grid_capped(max_level, weights, DEFAULT_POINT_CAP)
}

pub fn build_grid_capped(
    max_level: usize,
    weights: &AnisotropyWeights,
    max_points: usize,
) -> Result<CollocationGrid> {
    if max_level > MAX_SUPPORTED_LEVEL {
        return Err(Error::Resource(format!("level {max_level} exceeds {MAX_SUPPORTED_LEVEL}")));
    }
    let indices = build_index_set(max_level, weights);

    // Each point is enumerated exactly once: from the index whose components are
    // the 1D birth levels of its coordinates.
    let mut total = 0usize;
    for idx in &indices {
        let n: usize = idx.levels().iter().map(|&l| growth_m0(l) - growth_m0(l - 1)).product();
        total = total.saturating_add(n);
        if total > max_points {
            return Err(Error::Resource(format!("grid exceeds the cap of {max_points} points")));
        }
    }

    let mut raw: Vec<(usize, Vec<u64>)> = Vec::with_capacity(total);
    for idx in &indices {
        let birth = birth_of(level_unchecked(idx.levels(), weights));
        let lists: Vec<Vec<u64>> = idx.levels().iter().map(|&l| new_node_keys(l)).collect();
        for_each_tensor(&lists, |keys| raw.push((birth, keys.to_vec())));
    }
    raw.sort();

    let mut counts = vec![0usize; max_level + 1];
    let mut lookup = HashMap::with_capacity(raw.len());
    let points: Vec<GridPoint> = raw
        .into_iter()
        .enumerate()
        .map(|(id, (level, keys))| {
            counts[level] += 1;
            lookup.insert(keys.clone(), id);
            GridPoint { id, level, coords: keys.iter().map(|&k| key_coordinate(k)).collect(), keys }
        })
        .collect();
    for w in 1..counts.len() {
        counts[w] += counts[w - 1];
    }
    Ok(CollocationGrid { weights: weights.clone(), max_level, points, counts, lookup })
}

/// Calls `f` on every element of the Cartesian product of `lists`.
pub(crate) fn for_each_tensor<T: Copy>(lists: &[Vec<T>], mut f: impl FnMut(&[T])) {
    if lists.iter().any(|l| l.is_empty()) {
        return;
    }
    let mut pos = vec![0usize; lists.len()];
    let mut item: Vec<T> = lists.iter().map(|l| l[0]).collect();
    loop {
        f(&item);
        let mut d = lists.len();
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            pos[d] += 1;
            if pos[d] < lists[d].len() {
                item[d] = lists[d][pos[d]];
                break;
            }
            pos[d] = 0;
            item[d] = lists[d][0];
        }
    }
}

impl CollocationGrid {
    pub fn dim(&self) -> usize {
        self.weights.dim()
    }

    pub fn max_level(&self) -> usize {
        self.max_level
    }

    pub fn weights(&self) -> &AnisotropyWeights {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[GridPoint] {
        &self.points
    }

    pub fn point(&self, id: usize) -> &GridPoint {
        &self.points[id]
    }

    /// `M_w`, the size of `H_w`.
    pub fn count(&self, level: usize) -> usize {
        self.counts[level.min(self.max_level)]
    }

    /// `ΔM_w`, the number of points born at level `w`.
    pub fn new_count(&self, level: usize) -> usize {
        if level == 0 {
            self.counts[0]
        } else {
            self.counts[level] - self.counts[level - 1]
        }
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Points of `H_w`.
    pub fn level_set(&self, level: usize) -> &[GridPoint] {
        &self.points[..self.count(level)]
    }

    /// Points of `ΔH_w = H_w \ H_{w-1}`.
    pub fn new_points(&self, level: usize) -> &[GridPoint] {
        let start = if level == 0 { 0 } else { self.counts[level - 1] };
        &self.points[start..self.counts[level]]
    }

    pub(crate) fn id_of_keys(&self, keys: &[u64]) -> Option<usize> {
        self.lookup.get(keys).copied()
    }

    /// Writes the grid as a whitespace-separated table: `id level y_1 ... y_N`.
    pub fn write_table<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let weights: Vec<String> = self.weights.values().iter().map(|w| format!("{w:?}")).collect();
        writeln!(out, "# sgwarm-grid v1")?;
        writeln!(out, "# dim {} max_level {} weights {}", self.dim(), self.max_level, weights.join(","))?;
        for p in &self.points {
            write!(out, "{} {}", p.id, p.level)?;
            for c in &p.coords {
                write!(out, " {c:?}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Reads a table written by [`CollocationGrid::write_table`], rebuilding the grid
    /// from its header and checking every row bit-for-bit.
    pub fn read_table<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let mut next = || -> Result<Option<String>> {
            lines.next().transpose().map_err(|e| Error::Parse(e.to_string()))
        };
        let magic = next()?.ok_or_else(|| Error::Parse("empty grid file".into()))?;
        if magic.trim() != "# sgwarm-grid v1" {
            return Err(Error::Parse(format!("unexpected header {magic:?}")));
        }
        let header = next()?.ok_or_else(|| Error::Parse("missing grid header".into()))?;
        let fields: Vec<&str> = header.trim_start_matches('#').split_whitespace().collect();
        let (dim, level, weights) = match fields.as_slice() {
            ["dim", d, "max_level", l, "weights", w] => (
                parse_num::<usize>(d)?,
                parse_num::<usize>(l)?,
                w.split(',').map(parse_num::<f64>).collect::<Result<Vec<_>>>()?,
            ),
            _ => return Err(Error::Parse(format!("malformed grid header {header:?}"))),
        };
        check_dim(dim, weights.len())?;
        let grid = build_grid(level, &AnisotropyWeights::new(weights)?)?;
        let mut seen = 0usize;
        while let Some(line) = next()? {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != dim + 2 {
                return Err(Error::Parse(format!("row has {} columns, expected {}", cols.len(), dim + 2)));
            }
            let id = parse_num::<usize>(cols[0])?;
            let birth = parse_num::<usize>(cols[1])?;
            let p = grid
                .points
                .get(id)
                .ok_or_else(|| Error::Parse(format!("point id {id} not in grid")))?;
            let coords_match = cols[2..]
                .iter()
                .zip(&p.coords)
                .map(|(s, c)| parse_num::<f64>(s).map(|v| v.to_bits() == c.to_bits()))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .all(|b| b);
            if p.level != birth || !coords_match {
                return Err(Error::Parse(format!("row for point {id} does not match the grid")));
            }
            seen += 1;
        }
        if seen != grid.len() {
            return Err(Error::Parse(format!("expected {} rows, read {seen}", grid.len())));
        }
        Ok(grid)
    }
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Parse(format!("cannot parse {s:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn growth_rule() {
        assert_eq!(growth_m(1).unwrap(), 1);
        assert_eq!(growth_m(2).unwrap(), 3);
        assert_eq!(growth_m(4).unwrap(), 9);
        assert!(growth_m(0).is_err());
    }

    #[test]
    fn level_function_examples() {
        let iso = AnisotropyWeights::isotropic(2);
        assert_eq!(level_g(&MultiIndex::ones(2), &iso).unwrap(), 0.0);
        assert_eq!(level_g(&MultiIndex::new(vec![2, 1]).unwrap(), &iso).unwrap(), 1.0);
        let aniso = AnisotropyWeights::new(vec![0.85, 1.7]).unwrap();
        let g = level_g(&MultiIndex::new(vec![2, 2]).unwrap(), &aniso).unwrap();
        assert!((g - 3.0).abs() < 1e-15);
        assert!(level_g(&MultiIndex::ones(3), &iso).is_err());
    }

    #[test]
    fn nodes_match_cosine_formula() {
        assert_eq!(cc_nodes(1).unwrap(), vec![0.0]);
        assert_eq!(cc_nodes(2).unwrap(), vec![-1.0, 0.0, 1.0]);
        let n3 = cc_nodes(3).unwrap();
        let h = 2f64.sqrt() / 2.0;
        let expected = [-1.0, -h, 0.0, h, 1.0];
        for (a, b) in n3.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        for l in 2..8 {
            let nodes = cc_nodes(l).unwrap();
            let m = nodes.len();
            for (j, y) in nodes.iter().enumerate() {
                let direct = -(std::f64::consts::PI * j as f64 / (m - 1) as f64).cos();
                assert!((y - direct).abs() < 1e-15);
            }
            assert!(nodes.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn nodes_are_nested_bitwise() {
        for l in 2..12 {
            let fine: HashSet<u64> = cc_nodes(l).unwrap().iter().map(|v| v.to_bits()).collect();
            for v in cc_nodes(l - 1).unwrap() {
                assert!(fine.contains(&v.to_bits()), "level {l}");
            }
        }
    }

    #[test]
    fn birth_levels_of_keys() {
        for l in 1..10 {
            for k in new_node_keys(l) {
                assert_eq!(key_birth_level(k), l);
            }
            assert_eq!(rule_keys(l).len(), growth_m(l).unwrap());
        }
    }

    #[test]
    fn index_set_examples() {
        let iso2 = AnisotropyWeights::isotropic(2);
        assert_eq!(build_index_set(0, &AnisotropyWeights::isotropic(5)), vec![MultiIndex::ones(5)]);
        let s1: HashSet<Vec<usize>> = build_index_set(1, &iso2).into_iter().map(|m| m.0).collect();
        assert_eq!(s1, HashSet::from([vec![1, 1], vec![2, 1], vec![1, 2]]));
        let s2: HashSet<Vec<usize>> = build_index_set(2, &iso2).into_iter().map(|m| m.0).collect();
        assert_eq!(s2.len(), 6);
        for extra in [vec![3, 1], vec![2, 2], vec![1, 3]] {
            assert!(s2.contains(&extra));
        }
    }

    #[test]
    fn index_sets_are_downward_closed() {
        for weights in [
            AnisotropyWeights::isotropic(3),
            AnisotropyWeights::new(vec![0.85, 0.8, 1.6, 2.6]).unwrap(),
        ] {
            let set = build_index_set(4, &weights);
            let lookup: HashSet<&MultiIndex> = set.iter().collect();
            for idx in &set {
                for n in 0..idx.dim() {
                    if idx.0[n] > 1 {
                        let mut lower = idx.0.clone();
                        lower[n] -= 1;
                        assert!(lookup.contains(&MultiIndex(lower)));
                    }
                }
            }
        }
    }

    #[test]
    fn small_grids() {
        let g0 = build_grid(0, &AnisotropyWeights::isotropic(3)).unwrap();
        assert_eq!(g0.len(), 1);
        assert_eq!(g0.point(0).coords, vec![0.0; 3]);
        let g1 = build_grid(1, &AnisotropyWeights::isotropic(2)).unwrap();
        assert_eq!(g1.count(1), 5);
        let expected: HashSet<Vec<u64>> = [[0.0, 0.0], [-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]]
            .iter()
            .map(|p| p.iter().map(|v: &f64| v.to_bits()).collect())
            .collect();
        let got: HashSet<Vec<u64>> =
            g1.points().iter().map(|p| p.coords.iter().map(|v| v.to_bits()).collect()).collect();
        assert_eq!(got, expected);
    }

    /// Oracle: union of full tensor grids, birth level = smallest w containing the point.
    fn brute_force_counts(max_level: usize, weights: &AnisotropyWeights) -> Vec<usize> {
        let mut birth: HashMap<Vec<u64>, usize> = HashMap::new();
        for w in 0..=max_level {
            for idx in build_index_set(w, weights) {
                let lists: Vec<Vec<u64>> = idx.levels().iter().map(|&l| rule_keys(l)).collect();
                for_each_tensor(&lists, |k| {
                    birth.entry(k.to_vec()).or_insert(w);
                });
            }
        }
        (0..=max_level).map(|w| birth.values().filter(|&&b| b <= w).count()).collect()
    }

    #[test]
    fn counts_match_tensor_union() {
        for (w, weights) in [
            (4, AnisotropyWeights::isotropic(2)),
            (4, AnisotropyWeights::isotropic(3)),
            (3, AnisotropyWeights::isotropic(4)),
            (4, AnisotropyWeights::new(vec![0.85, 0.8, 1.6]).unwrap()),
        ] {
            let g = build_grid(w, &weights).unwrap();
            assert_eq!(g.counts().to_vec(), brute_force_counts(w, &weights));
        }
    }

    #[test]
    fn four_dim_counts() {
        let g = build_grid(7, &AnisotropyWeights::isotropic(4)).unwrap();
        assert_eq!(&g.counts()[3..], &[137, 401, 1105, 2929, 7537]);
    }

    #[test]
    fn grid_is_nested_and_ordered() {
        let g = build_grid(4, &AnisotropyWeights::isotropic(3)).unwrap();
        let mut total = 0;
        for w in 0..=4 {
            let pts = g.new_points(w);
            assert!(pts.iter().all(|p| p.level == w));
            assert!(pts.windows(2).all(|p| p[0].coords < p[1].coords));
            total += g.new_count(w);
        }
        assert_eq!(total, g.count(4));
        for (i, p) in g.points().iter().enumerate() {
            assert_eq!(p.id, i);
            assert_eq!(g.id_of_keys(&p.keys), Some(i));
        }
    }

    #[test]
    fn anisotropic_grid_is_smaller() {
        let aniso = crate::model_problems::anisotropy_weights_ex2();
        let iso = AnisotropyWeights::isotropic(11);
        for w in 2..=3 {
            let a = build_grid(w, &aniso).unwrap();
            let i = build_grid(w, &iso).unwrap();
            assert!(a.len() < i.len(), "w = {w}: {} vs {}", a.len(), i.len());
        }
    }

    #[test]
    fn point_cap_is_enforced() {
        let err = build_grid_capped(6, &AnisotropyWeights::isotropic(4), 1000).unwrap_err();
        assert!(matches!(err, Error::Resource(_)));
    }

    #[test]
    fn table_round_trip() {
        let g = build_grid(3, &AnisotropyWeights::new(vec![1.0, 1.5]).unwrap()).unwrap();
        let mut buf = Vec::new();
        g.write_table(&mut buf).unwrap();
        let back = CollocationGrid::read_table(buf.as_slice()).unwrap();
        assert_eq!(back.points(), g.points());

        let text = String::from_utf8(buf).unwrap().replacen(" 0.0", " 0.5", 1);
        assert!(CollocationGrid::read_table(text.as_bytes()).is_err());
    }
}
