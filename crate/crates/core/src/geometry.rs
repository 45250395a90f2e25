//! Site spaces: lattice boxes and subsets of ℤ^d with the sup-norm metric,
//! connected graphs with the hop-count metric, and abstract linearly indexed
//! bases with `|i − j|`.
//!
//! A [`SiteSpace`] is immutable once built. Sites are dense indices
//! `0..len()`; every metric query is O(1) (graphs carry a precomputed BFS
//! distance table).

use std::collections::{HashMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::linear_fit;

/// Dense site index.
pub type Site = usize;

/// Construction parameters for a [`SiteSpace`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceSpec {
    /// Full box of side `side` in ℤ^dim around `center`.
    LatticeBox {
        dim: usize,
        side: usize,
        #[serde(default)]
        center: Option<Vec<i64>>,
    },
    /// Arbitrary finite subset of ℤ^dim, metric inherited from ℤ^dim.
    LatticeSites { dim: usize, coords: Vec<Vec<i64>> },
    /// Undirected connected graph; `root` is the base vertex for `|u|`.
    Graph {
        vertices: usize,
        edges: Vec<(usize, usize)>,
        #[serde(default)]
        root: usize,
    },
    /// Abstract basis `e_0, e_1, …` with `d(e_i, e_j) = |i − j|`.
    Linear { n: usize },
}

#[derive(Clone, Debug)]
enum Layout {
    Lattice {
        dim: usize,
        coords: Vec<i64>,
        lookup: HashMap<Vec<i64>, Site>,
    },
    Graph {
        adjacency: Vec<Vec<Site>>,
        dist: Vec<u32>,
        root: Site,
    },
    Linear,
}

#[derive(Clone, Debug)]
pub struct SiteSpace {
    spec: SpaceSpec,
    len: usize,
    layout: Layout,
    diameter: usize,
}

impl SiteSpace {
    pub fn build(spec: SpaceSpec) -> Result<Self> {
        match &spec {
            SpaceSpec::LatticeBox { dim, side, center } => {
                check_dim(*dim)?;
                if *side == 0 {
                    return Err(Error::param("lattice side length must be at least 1"));
                }
                let center = match center {
                    Some(c) if c.len() != *dim => {
                        return Err(Error::param(format!(
                            "center has {} coordinates, dimension is {dim}",
                            c.len()
                        )))
                    }
                    Some(c) => c.clone(),
                    None => vec![0; *dim],
                };
                let half = (*side / 2) as i64;
                let mut coords = Vec::with_capacity(side.pow(*dim as u32) * dim);
                let mut cur: Vec<i64> = center.iter().map(|c| c - half).collect();
                loop {
                    coords.extend_from_slice(&cur);
                    // odometer with the last axis fastest
                    let mut axis = *dim;
                    loop {
                        if axis == 0 {
                            return Self::from_lattice(spec.clone(), *dim, coords);
                        }
                        axis -= 1;
                        cur[axis] += 1;
                        if cur[axis] < center[axis] - half + *side as i64 {
                            break;
                        }
                        cur[axis] = center[axis] - half;
                    }
                }
            }
            SpaceSpec::LatticeSites { dim, coords } => {
                check_dim(*dim)?;
                if coords.is_empty() {
                    return Err(Error::param("lattice site set is empty"));
                }
                let mut flat = Vec::with_capacity(coords.len() * dim);
                for c in coords {
                    if c.len() != *dim {
                        return Err(Error::param(format!(
                            "site {c:?} does not have {dim} coordinates"
                        )));
                    }
                    flat.extend_from_slice(c);
                }
                Self::from_lattice(spec.clone(), *dim, flat)
            }
            SpaceSpec::Graph {
                vertices,
                edges,
                root,
            } => Self::from_graph(spec.clone(), *vertices, edges, *root),
            SpaceSpec::Linear { n } => {
                if *n == 0 {
                    return Err(Error::param("linear basis size must be at least 1"));
                }
                Ok(SiteSpace {
                    spec: spec.clone(),
                    len: *n,
                    layout: Layout::Linear,
                    diameter: n - 1,
                })
            }
        }
    }

    fn from_lattice(spec: SpaceSpec, dim: usize, coords: Vec<i64>) -> Result<Self> {
        let len = coords.len() / dim;
        let mut lookup = HashMap::with_capacity(len);
        for i in 0..len {
            let c = coords[i * dim..(i + 1) * dim].to_vec();
            if lookup.insert(c.clone(), i).is_some() {
                return Err(Error::param(format!("duplicate lattice site {c:?}")));
            }
        }
        let mut lo = vec![i64::MAX; dim];
        let mut hi = vec![i64::MIN; dim];
        for i in 0..len {
            for a in 0..dim {
                lo[a] = lo[a].min(coords[i * dim + a]);
                hi[a] = hi[a].max(coords[i * dim + a]);
            }
        }
        let diameter = (0..dim)
            .map(|a| (hi[a] - lo[a]) as usize)
            .max()
            .unwrap_or(0);
        Ok(SiteSpace {
            spec,
            len,
            layout: Layout::Lattice {
                dim,
                coords,
                lookup,
            },
            diameter,
        })
    }

    fn from_graph(
        spec: SpaceSpec,
        n: usize,
        edges: &[(usize, usize)],
        root: usize,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("graph must have at least one vertex"));
        }
        if root >= n {
            return Err(Error::param(format!(
                "root {root} is not a vertex of a {n}-vertex graph"
            )));
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::param(format!(
                    "edge ({u}, {v}) references a vertex ≥ {n}"
                )));
            }
            if u == v {
                return Err(Error::param(format!("self-loop at vertex {u}")));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for nb in &mut adjacency {
            nb.sort_unstable();
            nb.dedup();
        }
        let mut dist = vec![u32::MAX; n * n];
        for s in 0..n {
            let row = &mut dist[s * n..(s + 1) * n];
            bfs_into(&adjacency, s, row);
            if s == 0 {
                if let Some(first) = row.iter().position(|&d| d == u32::MAX) {
                    let mut comp = vec![u32::MAX; n];
                    bfs_into(&adjacency, first, &mut comp);
                    let stranded = (0..n).filter(|&v| comp[v] != u32::MAX).collect();
                    return Err(Error::Disconnected { from: 0, stranded });
                }
            }
        }
        let diameter = dist.iter().copied().max().unwrap_or(0) as usize;
        Ok(SiteSpace {
            spec,
            len: n,
            layout: Layout::Graph {
                adjacency,
                dist,
                root,
            },
            diameter,
        })
    }

    pub fn spec(&self) -> &SpaceSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn diameter(&self) -> usize {
        self.diameter
    }

    /// Dimension used by the summability conditions: the lattice dimension,
    /// 1 for linear bases, `None` for graphs.
    pub fn dimension(&self) -> Option<usize> {
        match &self.layout {
            Layout::Lattice { dim, .. } => Some(*dim),
            Layout::Linear => Some(1),
            Layout::Graph { .. } => None,
        }
    }

    pub fn is_graph(&self) -> bool {
        matches!(self.layout, Layout::Graph { .. })
    }

    pub fn coords(&self, x: Site) -> Option<&[i64]> {
        match &self.layout {
            Layout::Lattice { dim, coords, .. } => Some(&coords[x * dim..(x + 1) * dim]),
            _ => None,
        }
    }

    pub fn site_at(&self, coords: &[i64]) -> Option<Site> {
        match &self.layout {
            Layout::Lattice { lookup, .. } => lookup.get(coords).copied(),
            Layout::Linear
                if coords.len() == 1 && coords[0] >= 0 && (coords[0] as usize) < self.len =>
            {
                Some(coords[0] as usize)
            }
            _ => None,
        }
    }

    /// Distance between two sites.
    pub fn metric(&self, x: Site, y: Site) -> usize {
        match &self.layout {
            Layout::Lattice { dim, coords, .. } => (0..*dim)
                .map(|a| (coords[x * dim + a] - coords[y * dim + a]).unsigned_abs() as usize)
                .max()
                .unwrap_or(0),
            Layout::Graph { dist, .. } => dist[x * self.len + y] as usize,
            Layout::Linear => x.abs_diff(y),
        }
    }

    /// `|x|`: sup-norm of the lattice coordinates, hop distance to the root
    /// for graphs, the index itself for linear bases.
    pub fn norm(&self, x: Site) -> usize {
        match &self.layout {
            Layout::Lattice { dim, coords, .. } => (0..*dim)
                .map(|a| coords[x * dim + a].unsigned_abs() as usize)
                .max()
                .unwrap_or(0),
            Layout::Graph { dist, root, .. } => dist[root * self.len + x] as usize,
            Layout::Linear => x,
        }
    }

    /// The site closest to the origin (smallest `|x|`, ties to the smallest
    /// index).
    pub fn origin(&self) -> Site {
        (0..self.len)
            .min_by_key(|&x| (self.norm(x), x))
            .unwrap_or(0)
    }

    /// Nearest-neighbour adjacency: ℓ¹ distance 1 on lattices, edges on graphs,
    /// `i ± 1` on linear bases.
    pub fn neighbors(&self, x: Site) -> Vec<Site> {
        match &self.layout {
            Layout::Lattice {
                dim,
                coords,
                lookup,
            } => {
                let mut out = Vec::with_capacity(2 * dim);
                let mut c = coords[x * dim..(x + 1) * dim].to_vec();
                for a in 0..*dim {
                    for step in [-1i64, 1] {
                        c[a] += step;
                        if let Some(&y) = lookup.get(&c) {
                            out.push(y);
                        }
                        c[a] -= step;
                    }
                }
                out.sort_unstable();
                out
            }
            Layout::Graph { adjacency, .. } => adjacency[x].clone(),
            Layout::Linear => {
                let mut out = Vec::with_capacity(2);
                if x > 0 {
                    out.push(x - 1);
                }
                if x + 1 < self.len {
                    out.push(x + 1);
                }
                out
            }
        }
    }

    /// Stable key identifying a site independently of the enumeration order.
    /// Lattice sites are keyed by their coordinates, so nested boxes share
    /// keys on their common sites.
    pub fn site_key(&self, x: Site) -> u64 {
        match &self.layout {
            Layout::Lattice { dim, coords, .. } => {
                let mut key = 0u64;
                for a in 0..*dim {
                    let v = coords[x * dim + a];
                    let zig = ((v << 1) ^ (v >> 63)) as u64 & 0x1f_ffff;
                    key = (key << 21) | zig;
                }
                key
            }
            _ => x as u64,
        }
    }

    fn check_site(&self, x: Site) -> Result<()> {
        if x >= self.len {
            Err(Error::param(format!(
                "site {x} is outside a space of {} sites",
                self.len
            )))
        } else {
            Ok(())
        }
    }

    /// Sites of the box `Λ_L(x)`: the closed metric ball of radius `⌊L/2⌋`,
    /// clipped to the space. `L = 1` gives `{x}`.
    pub fn indicator(&self, x: Site, side: usize) -> Result<Vec<Site>> {
        self.check_site(x)?;
        if side == 0 {
            return Err(Error::param("box side must be at least 1"));
        }
        let radius = side / 2;
        Ok((0..self.len)
            .filter(|&y| self.metric(x, y) <= radius)
            .collect())
    }

    /// Sites at exact distance `radius` from `u`.
    pub fn sphere(&self, u: Site, radius: usize) -> Result<Vec<Site>> {
        self.check_site(u)?;
        Ok((0..self.len)
            .filter(|&y| self.metric(u, y) == radius)
            .collect())
    }

    /// Sphere counts `𝒩_L(u)` for `L = 1..=l_max` and the fitted growth
    /// exponent.
    pub fn sphere_census(&self, u: Site, l_max: usize) -> Result<GrowthProfile> {
        self.check_site(u)?;
        if l_max == 0 {
            return Err(Error::param("census radius must be at least 1"));
        }
        let mut counts = vec![0usize; l_max + 1];
        for y in 0..self.len {
            let d = self.metric(u, y);
            if d <= l_max {
                counts[d] += 1;
            }
        }
        let radii: Vec<usize> = (1..=l_max).collect();
        let sphere_counts: Vec<usize> = counts[1..].to_vec();
        Ok(GrowthProfile::from_counts(
            u,
            radii,
            sphere_counts,
            self.diameter,
        ))
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if (1..=3).contains(&dim) {
        Ok(())
    } else {
        Err(Error::param(format!(
            "lattice dimension must be 1, 2 or 3, got {dim}"
        )))
    }
}

fn bfs_into(adjacency: &[Vec<Site>], source: Site, dist: &mut [u32]) {
    dist[source] = 0;
    let mut queue = VecDeque::from([source]);
    while let Some(v) = queue.pop_front() {
        for &w in &adjacency[v] {
            if dist[w] == u32::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
}

/// Guard on `β̂ < 1`: the analytic exponent of exponential growth is exactly
/// one and the regression reproduces it only up to rounding.
pub const GROWTH_EXPONENT_GUARD: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthProfile {
    pub base: Site,
    pub radii: Vec<usize>,
    pub sphere_counts: Vec<usize>,
    /// Least-squares slope of `ln ln 𝒩_L` against `ln L` over radii with `𝒩_L ≥ 2`.
    pub beta_fit: f64,
    /// Smallest `C` with `𝒩_L ≤ C·e^{L^β̂}` on the sampled radii.
    pub volume_constant: f64,
    /// Smallest `β` with `𝒩_L ≤ e^{L^β}` on every sampled radius (no constant);
    /// infinite when `𝒩_1 > e`.
    pub beta_envelope: f64,
    pub passes_moderate_growth: bool,
    /// Some radii exceed the diameter; their counts are zero.
    pub beyond_diameter: bool,
}

impl GrowthProfile {
    fn from_counts(
        base: Site,
        radii: Vec<usize>,
        sphere_counts: Vec<usize>,
        diameter: usize,
    ) -> Self {
        let (xs, ys): (Vec<f64>, Vec<f64>) = radii
            .iter()
            .zip(&sphere_counts)
            .filter(|(_, &n)| n >= 2)
            .map(|(&l, &n)| ((l as f64).ln(), (n as f64).ln().ln()))
            .unzip();
        let beta_fit = linear_fit(&xs, &ys).map(|(s, _, _)| s).unwrap_or(0.0);
        let volume_constant = radii
            .iter()
            .zip(&sphere_counts)
            .map(|(&l, &n)| n as f64 / (l as f64).powf(beta_fit).exp())
            .fold(0.0, f64::max);
        let beta_envelope = radii
            .iter()
            .zip(&sphere_counts)
            .map(|(&l, &n)| {
                let ln_n = (n as f64).ln();
                if n == 0 || ln_n <= 1.0 {
                    f64::NEG_INFINITY
                } else if l == 1 {
                    f64::INFINITY
                } else {
                    ln_n.ln() / (l as f64).ln()
                }
            })
            .fold(f64::NEG_INFINITY, f64::max)
            .max(0.0);
        GrowthProfile {
            base,
            beyond_diameter: radii.last().is_some_and(|&l| l > diameter),
            passes_moderate_growth: beta_fit < 1.0 - GROWTH_EXPONENT_GUARD,
            radii,
            sphere_counts,
            beta_fit,
            volume_constant,
            beta_envelope,
        }
    }
}

// --- graph constructors -------------------------------------------------

/// Path graph `0 – 1 – … – (n−1)` rooted at 0.
pub fn path_graph(n: usize) -> SpaceSpec {
    SpaceSpec::Graph {
        vertices: n,
        edges: (1..n).map(|i| (i - 1, i)).collect(),
        root: 0,
    }
}

/// Full binary tree with `depth` levels below the root (`2^{depth+1} − 1`
/// vertices), root 0.
pub fn binary_tree(depth: usize) -> SpaceSpec {
    let n = (1usize << (depth + 1)) - 1;
    SpaceSpec::Graph {
        vertices: n,
        edges: (1..n).map(|v| ((v - 1) / 2, v)).collect(),
        root: 0,
    }
}

/// Rooted tree whose level `L` (distance `L` from the root) has
/// `level_sizes[L − 1]` vertices. Children are dealt to the parents of the
/// previous level round-robin, so every parent is used before any gets a
/// second child.
pub fn layered_tree(level_sizes: &[usize]) -> Result<SpaceSpec> {
    let mut edges = Vec::new();
    let mut prev: Vec<usize> = vec![0];
    let mut next_id = 1usize;
    for (depth, &size) in level_sizes.iter().enumerate() {
        if size == 0 {
            return Err(Error::param(format!(
                "level {} of the tree is empty",
                depth + 1
            )));
        }
        let level: Vec<usize> = (next_id..next_id + size).collect();
        for (i, &v) in level.iter().enumerate() {
            edges.push((prev[i % prev.len()], v));
        }
        next_id += size;
        prev = level;
    }
    Ok(SpaceSpec::Graph {
        vertices: next_id,
        edges,
        root: 0,
    })
}

/// Rooted tree with `𝒩_L = L²` for `L = 1..=depth`.
pub fn quadratic_growth_tree(depth: usize) -> SpaceSpec {
    let sizes: Vec<usize> = (1..=depth).map(|l| l * l).collect();
    layered_tree(&sizes).expect("level sizes are positive")
}

/// Reads an edge-list file: one `u v` pair per line, 0-based vertices.
/// Blank lines and lines starting with `#` are skipped. The vertex count is
/// one more than the largest vertex id.
pub fn read_edge_list(path: &Path) -> Result<SpaceSpec> {
    let text = std::fs::read_to_string(path)?;
    parse_edge_list(&text)
}

pub fn parse_edge_list(text: &str) -> Result<SpaceSpec> {
    let mut edges = Vec::new();
    let mut max_vertex = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let parse = |tok: Option<&str>| -> Result<usize> {
            tok.ok_or_else(|| Error::Format(format!("line {}: expected two vertices", lineno + 1)))?
                .parse::<usize>()
                .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))
        };
        let u = parse(parts.next())?;
        let v = parse(parts.next())?;
        if parts.next().is_some() {
            return Err(Error::Format(format!(
                "line {}: trailing tokens",
                lineno + 1
            )));
        }
        max_vertex = max_vertex.max(u).max(v);
        edges.push((u, v));
    }
    if edges.is_empty() {
        return Err(Error::Format("edge list is empty".into()));
    }
    Ok(SpaceSpec::Graph {
        vertices: max_vertex + 1,
        edges,
        root: 0,
    })
}
