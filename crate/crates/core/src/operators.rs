//! Hamiltonians (graph Laplacian, Anderson model, disjoint-cluster Laplacian)
//! and the weight operators `T` entering the α-weights.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Site, SiteSpace, SpaceSpec};

/// Operators with at least this many sites are stored sparsely.
pub const DENSE_LIMIT: usize = 4000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HamiltonianLabel {
    Laplacian,
    Anderson {
        disorder: f64,
        seed: u64,
    },
    Cluster {
        copies: usize,
        separation: usize,
        base_sites: usize,
    },
    Imported,
}

#[derive(Clone, Debug)]
enum Storage {
    Dense(DMatrix<f64>),
    Sparse,
}

/// Real symmetric operator on `ℓ²(sites)`.
///
/// The diagonal and the upper-triangle hoppings are the source of truth; the
/// dense matrix (when present) is filled from them with both triangles
/// written from the same value, so the matrix is exactly symmetric.
#[derive(Clone, Debug)]
pub struct Hamiltonian {
    space: SiteSpace,
    label: HamiltonianLabel,
    diagonal: Vec<f64>,
    potential: Vec<f64>,
    hoppings: Vec<(Site, Site, f64)>,
    storage: Storage,
}

impl Hamiltonian {
    fn assemble(
        space: SiteSpace,
        label: HamiltonianLabel,
        diagonal: Vec<f64>,
        potential: Vec<f64>,
        mut hoppings: Vec<(Site, Site, f64)>,
    ) -> Self {
        for h in &mut hoppings {
            if h.0 > h.1 {
                std::mem::swap(&mut h.0, &mut h.1);
            }
        }
        hoppings.sort_by_key(|&(i, j, _)| (i, j));
        let n = space.len();
        let storage = if n < DENSE_LIMIT {
            let mut m = DMatrix::zeros(n, n);
            for (i, &d) in diagonal.iter().enumerate() {
                m[(i, i)] = d;
            }
            for &(i, j, v) in &hoppings {
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
            Storage::Dense(m)
        } else {
            Storage::Sparse
        };
        Hamiltonian {
            space,
            label,
            diagonal,
            potential,
            hoppings,
            storage,
        }
    }

    pub fn space(&self) -> &SiteSpace {
        &self.space
    }

    pub fn label(&self) -> &HamiltonianLabel {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.space.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    /// The random (or imported) potential added on top of the kinetic term.
    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    /// Upper-triangle hoppings `(i, j, value)` with `i < j`.
    pub fn hoppings(&self) -> &[(Site, Site, f64)] {
        &self.hoppings
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.storage {
            Storage::Dense(m) => m.clone(),
            Storage::Sparse => {
                let n = self.dim();
                let mut m = DMatrix::zeros(n, n);
                for (i, &d) in self.diagonal.iter().enumerate() {
                    m[(i, i)] = d;
                }
                for &(i, j, v) in &self.hoppings {
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
                m
            }
        }
    }

    /// `H v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self.diagonal.iter().zip(v).map(|(d, x)| d * x).collect();
        for &(i, j, h) in &self.hoppings {
            out[i] += h * v[j];
            out[j] += h * v[i];
        }
        out
    }

    /// Nonzero entries `(row, col, value)` in row-major order, both triangles.
    pub fn triplets(&self) -> Vec<(Site, Site, f64)> {
        let mut rows: BTreeMap<(Site, Site), f64> = BTreeMap::new();
        for (i, &d) in self.diagonal.iter().enumerate() {
            if d != 0.0 {
                rows.insert((i, i), d);
            }
        }
        for &(i, j, v) in &self.hoppings {
            if v != 0.0 {
                rows.insert((i, j), v);
                rows.insert((j, i), v);
            }
        }
        rows.into_iter().map(|((i, j), v)| (i, j, v)).collect()
    }

    /// Largest Gershgorin radius `max_i Σ_j |H_ij|`, an upper bound on `‖H‖`.
    pub fn gershgorin_norm(&self) -> f64 {
        let mut rows: Vec<f64> = self.diagonal.iter().map(|d| d.abs()).collect();
        for &(i, j, v) in &self.hoppings {
            rows[i] += v.abs();
            rows[j] += v.abs();
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    /// Interval `[min diag − max row hopping, max diag + max row hopping]`.
    pub fn gershgorin_interval(&self) -> (f64, f64) {
        let mut radius = vec![0.0f64; self.dim()];
        for &(i, j, v) in &self.hoppings {
            radius[i] += v.abs();
            radius[j] += v.abs();
        }
        let r = radius.iter().copied().fold(0.0, f64::max);
        let lo = self.diagonal.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self
            .diagonal
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        (lo - r, hi + r)
    }

    /// Connected components of the off-diagonal support, each sorted, in
    /// order of their smallest site.
    pub fn blocks(&self) -> Vec<Vec<Site>> {
        let n = self.dim();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for &(i, j, v) in &self.hoppings {
            if v != 0.0 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<Site>> = BTreeMap::new();
        for x in 0..n {
            let r = find(&mut parent, x);
            groups.entry(r).or_default().push(x);
        }
        groups.into_values().collect()
    }
}

fn laplacian_parts(space: &SiteSpace) -> (Vec<f64>, Vec<(Site, Site, f64)>) {
    let mut diagonal = Vec::with_capacity(space.len());
    let mut hoppings = Vec::new();
    for x in 0..space.len() {
        let nb = space.neighbors(x);
        diagonal.push(nb.len() as f64);
        hoppings.extend(nb.into_iter().filter(|&y| y > x).map(|y| (x, y, -1.0)));
    }
    (diagonal, hoppings)
}

/// Graph Laplacian `(−Δψ)(x) = Σ_{y∼x} (ψ(x) − ψ(y))`.
pub fn build_laplacian(space: &SiteSpace) -> Hamiltonian {
    let (diagonal, hoppings) = laplacian_parts(space);
    let potential = vec![0.0; space.len()];
    Hamiltonian::assemble(
        space.clone(),
        HamiltonianLabel::Laplacian,
        diagonal,
        potential,
        hoppings,
    )
}

/// Uniform draw in `[−W/2, W/2)` for the site with the given key. Each site
/// owns a ChaCha8 stream, so the value does not depend on how many other
/// sites exist or in which order they are visited.
pub fn site_potential(disorder: f64, seed: u64, site_key: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(site_key);
    disorder * (rng.gen::<f64>() - 0.5)
}

/// Anderson model `H = −Δ + V`, `V(x)` i.i.d. uniform on `[−W/2, W/2]`.
pub fn build_anderson(space: &SiteSpace, disorder: f64, seed: u64) -> Result<Hamiltonian> {
    if !(disorder >= 0.0 && disorder.is_finite()) {
        return Err(Error::param(format!(
            "disorder width must be finite and ≥ 0, got {disorder}"
        )));
    }
    let (mut diagonal, hoppings) = laplacian_parts(space);
    let potential: Vec<f64> = (0..space.len())
        .map(|x| {
            if disorder == 0.0 {
                0.0
            } else {
                site_potential(disorder, seed, space.site_key(x))
            }
        })
        .collect();
    for (d, v) in diagonal.iter_mut().zip(&potential) {
        *d += v;
    }
    Ok(Hamiltonian::assemble(
        space.clone(),
        HamiltonianLabel::Anderson { disorder, seed },
        diagonal,
        potential,
        hoppings,
    ))
}

/// Laplacian of `copies` translated disjoint copies of a lattice cluster,
/// `⊕_j (−Δ|_{𝒞_j})`.
///
/// Copy `j` is the base shifted by `j·(width + separation)` along the first
/// axis, where `width` is the base's extent along that axis, so neighbouring
/// copies are exactly `separation` apart in the sup metric. No hopping ever
/// connects two copies.
#[derive(Clone, Debug)]
pub struct ClusterOperator {
    pub hamiltonian: Hamiltonian,
    /// Copy index of every site.
    pub copy_of: Vec<usize>,
    pub base_sites: usize,
}

/// Lattice coordinates of a base cluster given as a space spec.
pub fn cluster_coords(base: &SpaceSpec) -> Result<(usize, Vec<Vec<i64>>)> {
    match base {
        SpaceSpec::LatticeBox { .. } | SpaceSpec::LatticeSites { .. } => {
            let s = SiteSpace::build(base.clone())?;
            let dim = s.dimension().unwrap_or(1);
            Ok((
                dim,
                (0..s.len())
                    .map(|x| s.coords(x).unwrap().to_vec())
                    .collect(),
            ))
        }
        SpaceSpec::Linear { n } => Ok((1, (0..*n as i64).map(|i| vec![i]).collect())),
        SpaceSpec::Graph { .. } => Err(Error::param(
            "cluster base must be a lattice cluster (lattice_box, lattice_sites or linear)",
        )),
    }
}

pub fn build_cluster_laplacian(
    base: &SpaceSpec,
    copies: usize,
    separation: usize,
) -> Result<ClusterOperator> {
    if copies < 2 {
        return Err(Error::param(format!(
            "need at least 2 copies, got {copies}"
        )));
    }
    let (dim, coords) = cluster_coords(base)?;
    let base_space = SiteSpace::build(SpaceSpec::LatticeSites {
        dim,
        coords: coords.clone(),
    })?;
    // connectivity of the base under nearest-neighbour adjacency
    let mut seen = vec![false; base_space.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(x) = stack.pop() {
        for y in base_space.neighbors(x) {
            if !seen[y] {
                seen[y] = true;
                stack.push(y);
            }
        }
    }
    if let Some(first) = seen.iter().position(|s| !s) {
        return Err(Error::Disconnected {
            from: 0,
            stranded: vec![first],
        });
    }
    let lo = coords.iter().map(|c| c[0]).min().unwrap();
    let hi = coords.iter().map(|c| c[0]).max().unwrap();
    let shift = hi - lo + separation as i64;
    let mut all = Vec::with_capacity(coords.len() * copies);
    let mut copy_of = Vec::with_capacity(coords.len() * copies);
    for j in 0..copies {
        for c in &coords {
            let mut t = c.clone();
            t[0] += j as i64 * shift;
            all.push(t);
            copy_of.push(j);
        }
    }
    let space =
        SiteSpace::build(SpaceSpec::LatticeSites { dim, coords: all }).map_err(|e| match e {
            Error::Parameter(msg) => Error::Overlap(msg),
            other => other,
        })?;
    let m = coords.len();
    let mut min_gap = usize::MAX;
    for a in 0..space.len() {
        for b in (a + 1)..space.len() {
            if copy_of[a] != copy_of[b] {
                min_gap = min_gap.min(space.metric(a, b));
            }
        }
    }
    if min_gap < separation.max(1) {
        return Err(Error::Overlap(format!(
            "copies are {min_gap} apart, requested separation {separation}"
        )));
    }
    let mut diagonal = vec![0.0; space.len()];
    let mut hoppings = Vec::new();
    for x in 0..space.len() {
        let nb: Vec<Site> = space
            .neighbors(x)
            .into_iter()
            .filter(|&y| copy_of[y] == copy_of[x])
            .collect();
        diagonal[x] = nb.len() as f64;
        hoppings.extend(nb.into_iter().filter(|&y| y > x).map(|y| (x, y, -1.0)));
    }
    let potential = vec![0.0; space.len()];
    Ok(ClusterOperator {
        hamiltonian: Hamiltonian::assemble(
            space,
            HamiltonianLabel::Cluster {
                copies,
                separation,
                base_sites: m,
            },
            diagonal,
            potential,
            hoppings,
        ),
        copy_of,
        base_sites: m,
    })
}

// --- weights ------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightKind {
    /// `T(x) = ⟨x⟩^κ`, `⟨x⟩ = √(1+|x|²)`, requires `κ > d/2`.
    Polynomial { kappa: f64 },
    /// `T(u) = e^{|u|^α}`, `α ∈ (0, 1)`.
    Exponential { alpha: f64 },
}

#[derive(Clone, Debug)]
pub struct WeightOperator {
    kind: WeightKind,
    values: Vec<f64>,
}

pub fn japanese_bracket(r: f64) -> f64 {
    (1.0 + r * r).sqrt()
}

pub fn build_weight(space: &SiteSpace, kind: WeightKind) -> Result<WeightOperator> {
    let values = match kind {
        WeightKind::Polynomial { kappa } => {
            let d = space.dimension().ok_or_else(|| {
                Error::param("polynomial weights need a lattice or linear space; use the exponential weight on graphs")
            })?;
            if !(kappa > d as f64 / 2.0) {
                return Err(Error::param(format!(
                    "κ = {kappa} must exceed d/2 = {} for Σ_x ⟨x⟩^(-2κ) to be summable",
                    d as f64 / 2.0
                )));
            }
            (0..space.len())
                .map(|x| japanese_bracket(space.norm(x) as f64).powf(kappa))
                .collect()
        }
        WeightKind::Exponential { alpha } => {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::param(format!(
                    "exponential weight needs α ∈ (0,1), got {alpha}"
                )));
            }
            (0..space.len())
                .map(|x| (space.norm(x) as f64).powf(alpha).exp())
                .collect()
        }
    };
    Ok(WeightOperator { kind, values })
}

impl WeightOperator {
    pub fn kind(&self) -> &WeightKind {
        &self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, x: Site) -> f64 {
        self.values[x]
    }

    /// `κ` for polynomial weights.
    pub fn kappa(&self) -> Option<f64> {
        match self.kind {
            WeightKind::Polynomial { kappa } => Some(kappa),
            WeightKind::Exponential { .. } => None,
        }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.values).map(|(a, t)| a * t).collect()
    }

    pub fn apply_inverse(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.values).map(|(a, t)| a / t).collect()
    }
}

// --- export / import ------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianHeader {
    pub format: String,
    pub label: HamiltonianLabel,
    pub dimension: usize,
    pub space: SpaceSpec,
    pub nonzeros: usize,
}

pub const HAMILTONIAN_FORMAT: &str = "dynloc-hamiltonian/1";

/// Writes the JSON header and the `row,col,value` triplet CSV.
pub fn export_hamiltonian(h: &Hamiltonian, header_path: &Path, triplets_path: &Path) -> Result<()> {
    let triplets = h.triplets();
    let header = HamiltonianHeader {
        format: HAMILTONIAN_FORMAT.into(),
        label: h.label.clone(),
        dimension: h.dim(),
        space: h.space.spec().clone(),
        nonzeros: triplets.len(),
    };
    std::fs::write(header_path, serde_json::to_string_pretty(&header)? + "\n")?;
    let mut w = csv::Writer::from_path(triplets_path)?;
    w.write_record(["row", "col", "value"])?;
    for (i, j, v) in triplets {
        w.write_record([i.to_string(), j.to_string(), format!("{v:e}")])?;
    }
    w.flush()?;
    Ok(())
}

pub fn import_hamiltonian(header_path: &Path, triplets_path: &Path) -> Result<Hamiltonian> {
    let header: HamiltonianHeader = serde_json::from_str(&std::fs::read_to_string(header_path)?)?;
    if header.format != HAMILTONIAN_FORMAT {
        return Err(Error::Format(format!(
            "unsupported format tag {:?}",
            header.format
        )));
    }
    let space = SiteSpace::build(header.space.clone())?;
    if space.len() != header.dimension {
        return Err(Error::Format(format!(
            "header dimension {} does not match the {}-site space",
            header.dimension,
            space.len()
        )));
    }
    let n = space.len();
    let mut diagonal = vec![0.0; n];
    let mut upper: BTreeMap<(Site, Site), f64> = BTreeMap::new();
    let mut lower: BTreeMap<(Site, Site), f64> = BTreeMap::new();
    let mut r = csv::Reader::from_path(triplets_path)?;
    let mut count = 0;
    for rec in r.deserialize() {
        let (i, j, v): (usize, usize, f64) = rec?;
        if i >= n || j >= n {
            return Err(Error::Format(format!(
                "entry ({i},{j}) outside a {n}×{n} operator"
            )));
        }
        count += 1;
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => diagonal[i] = v,
            std::cmp::Ordering::Less => {
                upper.insert((i, j), v);
            }
            std::cmp::Ordering::Greater => {
                lower.insert((j, i), v);
            }
        }
    }
    if count != header.nonzeros {
        return Err(Error::Format(format!(
            "header announces {} nonzeros, file has {count}",
            header.nonzeros
        )));
    }
    if upper != lower {
        return Err(Error::Format(
            "triplets do not describe a symmetric operator".into(),
        ));
    }
    let hoppings = upper.into_iter().map(|((i, j), v)| (i, j, v)).collect();
    let (kinetic, _) = laplacian_parts(&space);
    let potential = match header.label {
        HamiltonianLabel::Anderson { .. } => {
            diagonal.iter().zip(&kinetic).map(|(d, k)| d - k).collect()
        }
        _ => vec![0.0; n],
    };
    Ok(Hamiltonian::assemble(
        space,
        header.label,
        diagonal,
        potential,
        hoppings,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::path_graph;
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;

    fn sorted_eigs(h: &Hamiltonian) -> Vec<f64> {
        let mut e: Vec<f64> = SymmetricEigen::new(h.to_dense())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        e.sort_by(f64::total_cmp);
        e
    }

    fn line(n: usize) -> SiteSpace {
        SiteSpace::build(SpaceSpec::Linear { n }).unwrap()
    }

    #[test]
    fn path_laplacian_spectrum_matches_closed_form() {
        // graph Laplacian of the N-path: 2 − 2cos(kπ/N), k = 0..N−1
        for n in [2usize, 3, 7] {
            let h = build_laplacian(&line(n));
            let e = sorted_eigs(&h);
            let mut exact: Vec<f64> = (0..n)
                .map(|k| 2.0 - 2.0 * (k as f64 * std::f64::consts::PI / n as f64).cos())
                .collect();
            exact.sort_by(f64::total_cmp);
            for (a, b) in e.iter().zip(&exact) {
                assert!((a - b).abs() < 1e-12, "{e:?} vs {exact:?}");
            }
        }
        let e3 = sorted_eigs(&build_laplacian(&line(3)));
        assert!(
            (e3[0]).abs() < 1e-12 && (e3[1] - 1.0).abs() < 1e-12 && (e3[2] - 3.0).abs() < 1e-12
        );
    }

    #[test]
    fn single_site_laplacian_is_zero() {
        let h = build_laplacian(&line(1));
        assert_eq!(h.to_dense(), DMatrix::zeros(1, 1));
    }

    #[test]
    fn anderson_reproducibility_and_shape() {
        let s = SiteSpace::build(SpaceSpec::LatticeBox {
            dim: 2,
            side: 6,
            center: None,
        })
        .unwrap();
        let lap = build_laplacian(&s);
        assert_eq!(
            build_anderson(&s, 0.0, 9).unwrap().to_dense(),
            lap.to_dense()
        );
        let a = build_anderson(&s, 4.0, 1).unwrap();
        let b = build_anderson(&s, 4.0, 1).unwrap();
        assert_eq!(a.to_dense(), b.to_dense());
        let c = build_anderson(&s, 4.0, 2).unwrap();
        assert_eq!(a.hoppings(), c.hoppings());
        assert!(a.diagonal().iter().zip(c.diagonal()).any(|(x, y)| x != y));
        assert!(a.potential().iter().all(|v| (-2.0..=2.0).contains(v)));
        assert!(build_anderson(&s, -1.0, 0).is_err());
    }

    #[test]
    fn anderson_potential_is_shared_by_nested_boxes() {
        let small = SiteSpace::build(SpaceSpec::LatticeBox {
            dim: 1,
            side: 8,
            center: None,
        })
        .unwrap();
        let big = SiteSpace::build(SpaceSpec::LatticeBox {
            dim: 1,
            side: 16,
            center: None,
        })
        .unwrap();
        let hs = build_anderson(&small, 3.0, 77).unwrap();
        let hb = build_anderson(&big, 3.0, 77).unwrap();
        for x in 0..small.len() {
            let y = big.site_at(small.coords(x).unwrap()).unwrap();
            assert_eq!(hs.potential()[x], hb.potential()[y]);
        }
    }

    #[test]
    fn cluster_spectrum_is_degenerate_and_separation_independent() {
        let base = SpaceSpec::Linear { n: 2 };
        let c = build_cluster_laplacian(&base, 2, 5).unwrap();
        let e = sorted_eigs(&c.hamiltonian);
        assert_eq!(e.len(), 4);
        assert!(e[0].abs() < 1e-12 && e[1].abs() < 1e-12);
        assert!((e[2] - 2.0).abs() < 1e-12 && (e[3] - 2.0).abs() < 1e-12);

        let single = build_cluster_laplacian(&SpaceSpec::Linear { n: 1 }, 3, 4).unwrap();
        assert_eq!(single.hamiltonian.to_dense(), DMatrix::zeros(3, 3));

        let base4 = SpaceSpec::Linear { n: 4 };
        let e10 = sorted_eigs(&build_cluster_laplacian(&base4, 2, 10).unwrap().hamiltonian);
        let e80 = sorted_eigs(&build_cluster_laplacian(&base4, 2, 80).unwrap().hamiltonian);
        assert_eq!(e10, e80);
        let c = build_cluster_laplacian(&base4, 2, 10).unwrap();
        let s = c.hamiltonian.space();
        let gap = (0..4)
            .flat_map(|a| (4..8).map(move |b| (a, b)))
            .map(|(a, b)| s.metric(a, b))
            .min();
        assert_eq!(gap, Some(10));
        assert_eq!(c.hamiltonian.blocks().len(), 2);
    }

    #[test]
    fn cluster_errors() {
        let base = SpaceSpec::Linear { n: 3 };
        assert!(matches!(
            build_cluster_laplacian(&base, 2, 0),
            Err(Error::Overlap(_))
        ));
        assert!(build_cluster_laplacian(&base, 1, 3).is_err());
        assert!(build_cluster_laplacian(&path_graph(3), 2, 3).is_err());
        let broken = SpaceSpec::LatticeSites {
            dim: 1,
            coords: vec![vec![0], vec![2]],
        };
        assert!(build_cluster_laplacian(&broken, 2, 3).is_err());
    }

    #[test]
    fn weights() {
        let s = SiteSpace::build(SpaceSpec::LatticeBox {
            dim: 1,
            side: 5,
            center: None,
        })
        .unwrap();
        let t = build_weight(&s, WeightKind::Polynomial { kappa: 1.0 }).unwrap();
        assert_eq!(t.at(s.site_at(&[0]).unwrap()), 1.0);
        assert!((t.at(s.site_at(&[2]).unwrap()) - 5f64.sqrt()).abs() < 1e-15);
        assert!(t.values().iter().all(|&w| w >= 1.0));
        assert!(build_weight(&s, WeightKind::Polynomial { kappa: 0.5 }).is_err());

        let g = SiteSpace::build(path_graph(6)).unwrap();
        let t = build_weight(&g, WeightKind::Exponential { alpha: 0.5 }).unwrap();
        assert!((t.at(4) - 2f64.exp()).abs() < 1e-12);
        assert!(build_weight(&g, WeightKind::Exponential { alpha: 1.0 }).is_err());
        assert!(build_weight(&g, WeightKind::Polynomial { kappa: 2.0 }).is_err());
        let v = vec![1.0; 6];
        let back = t.apply(&t.apply_inverse(&v));
        assert!(back.iter().all(|x| (x - 1.0).abs() < 1e-14));
    }

    #[test]
    fn export_import_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let s = SiteSpace::build(SpaceSpec::LatticeBox {
            dim: 2,
            side: 4,
            center: None,
        })
        .unwrap();
        let h = build_anderson(&s, 2.5, 11).unwrap();
        let (hp, tp) = (dir.path().join("h.json"), dir.path().join("h.csv"));
        export_hamiltonian(&h, &hp, &tp).unwrap();
        let back = import_hamiltonian(&hp, &tp).unwrap();
        assert_eq!(back.to_dense(), h.to_dense());
        assert_eq!(back.label(), h.label());
        let text = std::fs::read_to_string(&tp).unwrap();
        assert!(text.starts_with("row,col,value\n"));
    }

    #[test]
    fn sparse_storage_above_limit() {
        let s = line(DENSE_LIMIT);
        let h = build_laplacian(&s);
        assert!(!h.is_dense());
        let v: Vec<f64> = (0..DENSE_LIMIT).map(|i| (i as f64).sin()).collect();
        let hv = h.apply(&v);
        assert!((hv[5] - (2.0 * v[5] - v[4] - v[6])).abs() < 1e-14);
        assert!(build_laplacian(&line(10)).is_dense());
    }

    proptest! {
        #[test]
        fn symmetric_with_adjacent_support_and_gershgorin(dim in 1usize..3, side in 1usize..6, w in 0.0f64..8.0, seed in any::<u64>()) {
            let s = SiteSpace::build(SpaceSpec::LatticeBox { dim, side, center: None }).unwrap();
            let h = build_anderson(&s, w, seed).unwrap();
            let m = h.to_dense();
            prop_assert_eq!(&m, &m.transpose());
            for i in 0..s.len() {
                let nb = s.neighbors(i);
                for j in 0..s.len() {
                    if i != j {
                        prop_assert_eq!(m[(i, j)] != 0.0, nb.contains(&j));
                    }
                }
            }
            let (lo, hi) = h.gershgorin_interval();
            for e in sorted_eigs(&h) {
                prop_assert!(e >= lo - 1e-10 && e <= hi + 1e-10);
            }
        }
    }
}
