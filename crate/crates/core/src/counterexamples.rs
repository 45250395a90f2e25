//! The two constructions showing that the weaker localization properties do
//! not imply the stronger ones: the lowest Landau level (projectors localize,
//! eigenfunction correlations do not decay) and disjoint copies of a finite
//! cluster (compactly supported eigenbasis, yet no common localization
//! center per eigenspace).

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::diagnostics::{
    center_cluster_check, sudec_check, sudec_plus_check, sule_fit, Family, RateFunction,
};
use crate::dynamics::{DecayParams, EnergyWindow};
use crate::error::{Error, Result};
use crate::geometry::SpaceSpec;
use crate::numeric::gauss_legendre;
use crate::operators::{build_cluster_laplacian, build_weight, WeightKind};
use crate::spectral::{
    diagonalize, pairwise_symmetric_rotation, random_orthogonal, rotation_rng, SpectralData,
};

/// Ratio above which a Landau correlation counts as violating the bound.
pub const VIOLATION_THRESHOLD: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandauSpec {
    /// Field strength `B > 0`.
    pub b: f64,
    pub n_max: usize,
}

impl LandauSpec {
    pub fn new(b: f64, n_max: usize) -> Result<Self> {
        let s = LandauSpec { b, n_max };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(Error::param(format!("B must be > 0, got {}", self.b)));
        }
        Ok(())
    }

    /// Radius `√(2n/B)` maximizing `r^{2n} e^{−Br²/2}`.
    pub fn peak_radius(&self, n: usize) -> f64 {
        (2.0 * n as f64 / self.b).sqrt()
    }

    fn check_index(&self, n: usize) -> Result<()> {
        self.validate()?;
        if n > self.n_max {
            return Err(Error::param(format!(
                "n = {n} exceeds n_max = {}",
                self.n_max
            )));
        }
        Ok(())
    }
}

fn ln_prefactor(b: f64, n: usize) -> f64 {
    let n = n as f64;
    0.5 * (n * b.ln() - n * 2f64.ln() - (2.0 * PI).ln() - ln_gamma(n + 1.0))
}

fn amplitude_at_radius(b: f64, n: usize, r: f64) -> f64 {
    if r == 0.0 {
        return if n == 0 {
            ln_prefactor(b, 0).exp()
        } else {
            0.0
        };
    }
    (ln_prefactor(b, n) + n as f64 * r.ln() - 0.25 * b * r * r).exp()
}

/// `|φ_n(z)|` for `φ_n(z) = (B^n/(2π 2^n n!))^{1/2} z^n e^{−B|z|²/4}`.
pub fn landau_amplitude(spec: &LandauSpec, n: usize, z: Complex64) -> Result<f64> {
    spec.check_index(n)?;
    Ok(amplitude_at_radius(spec.b, n, z.norm()))
}

/// `2π ∫₀^∞ |φ_n(r)|² r dr` by composite Gauss–Legendre quadrature. The
/// closed form is `1/B`.
pub fn landau_norm(spec: &LandauSpec, n: usize) -> Result<f64> {
    spec.check_index(n)?;
    let b = spec.b;
    // the integrand in v = Br²/2 is a Gamma(n+1) density scaled by 1/B
    let v_hi = n as f64 + 60.0 + 12.0 * (n as f64).sqrt();
    let r_hi = (2.0 * v_hi / b).sqrt();
    let panels = 400;
    let (nodes, weights) = gauss_legendre(16);
    let h = r_hi / panels as f64;
    let mut acc = Vec::with_capacity(panels * nodes.len());
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * h;
        for (t, w) in nodes.iter().zip(&weights) {
            let r = mid + 0.5 * h * t;
            let a = amplitude_at_radius(b, n, r);
            acc.push(0.5 * h * w * a * a * r);
        }
    }
    Ok(2.0 * PI * crate::numeric::compensated_sum(acc))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OppositeProduct {
    pub n: usize,
    /// `|φ_n(z₁)|·|φ_n(z₂)|` at `z₂ = −z₁`, `|z₁| = √(2n/B)`.
    pub direct: f64,
    /// `n^n e^{−n} / (2π n!)`.
    pub closed_form: f64,
    pub relative_error: f64,
    /// `closed_form · 2π√(2πn)`, tending to 1.
    pub stirling_ratio: f64,
}

/// `n^n e^{−n}/(2π n!)` in log form, `0⁰ = 1`.
pub fn ln_opposite_product(n: usize) -> f64 {
    let nf = n as f64;
    let nlogn = if n == 0 { 0.0 } else { nf * nf.ln() };
    nlogn - nf - (2.0 * PI).ln() - ln_gamma(nf + 1.0)
}

pub fn landau_opposite_product(spec: &LandauSpec, n: usize) -> Result<OppositeProduct> {
    spec.check_index(n)?;
    let r = spec.peak_radius(n);
    let z1 = Complex64::from_polar(r, 0.3);
    let z2 = -z1;
    let direct = landau_amplitude(spec, n, z1)? * landau_amplitude(spec, n, z2)?;
    let closed_form = ln_opposite_product(n).exp();
    let nf = n as f64;
    Ok(OppositeProduct {
        n,
        direct,
        closed_form,
        relative_error: (direct - closed_form).abs() / closed_form,
        stirling_ratio: closed_form * 2.0 * PI * (2.0 * PI * nf).sqrt(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolationRow {
    pub n: usize,
    /// `|z₁ − z₂| = 2√(2n/B)`.
    pub separation: f64,
    pub product: f64,
    /// `e^{−σ·separation^ζ}`.
    pub bound: f64,
    /// `product / bound`, `inf` past the double range (see `ln_ratio`).
    pub ratio: f64,
    pub ln_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandauViolation {
    pub b: f64,
    pub sigma: f64,
    pub zeta: f64,
    pub rows: Vec<ViolationRow>,
    /// Smallest `n` with ratio above [`VIOLATION_THRESHOLD`].
    pub first_exceeding: Option<usize>,
    /// Smallest `n` from which the ratio is nondecreasing to the end of the table.
    pub monotone_from: Option<usize>,
}

impl LandauViolation {
    /// The correlation bound fails along the table.
    pub fn violated(&self) -> bool {
        self.first_exceeding.is_some()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["n", "separation", "product", "bound", "ratio"])?;
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                r.separation.to_string(),
                r.product.to_string(),
                r.bound.to_string(),
                r.ratio.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Ratio of the opposite-point product to `e^{−σ|z₁−z₂|^ζ}` for every `n` in `ns`.
pub fn landau_sudec_violation(
    spec: &LandauSpec,
    ns: std::ops::RangeInclusive<usize>,
    sigma: f64,
    zeta: f64,
) -> Result<LandauViolation> {
    spec.validate()?;
    if ns.is_empty() {
        return Err(Error::param("empty n range"));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::param(format!("σ must be ≥ 0, got {sigma}")));
    }
    if !(zeta > 0.0 && zeta <= 1.0) {
        return Err(Error::param(format!("ζ must lie in (0, 1], got {zeta}")));
    }
    if *ns.end() > spec.n_max {
        return Err(Error::param(format!(
            "n = {} exceeds n_max = {}",
            ns.end(),
            spec.n_max
        )));
    }
    let rows: Vec<ViolationRow> = ns
        .map(|n| {
            let separation = 2.0 * spec.peak_radius(n);
            let ln_product = ln_opposite_product(n);
            let ln_bound = -sigma
                * if separation == 0.0 {
                    0.0
                } else {
                    separation.powf(zeta)
                };
            let ln_ratio = ln_product - ln_bound;
            ViolationRow {
                n,
                separation,
                product: ln_product.exp(),
                bound: ln_bound.exp(),
                ratio: ln_ratio.exp(),
                ln_ratio,
            }
        })
        .collect();
    let first_exceeding = rows
        .iter()
        .find(|r| r.ln_ratio > VIOLATION_THRESHOLD.ln())
        .map(|r| r.n);
    let mut start = rows.len() - 1;
    while start > 0 && rows[start - 1].ln_ratio <= rows[start].ln_ratio {
        start -= 1;
    }
    Ok(LandauViolation {
        b: spec.b,
        sigma,
        zeta,
        first_exceeding,
        monotone_from: Some(rows[start].n),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    pub base: SpaceSpec,
    pub copies: usize,
    /// Increasing copy separations.
    pub separations: Vec<usize>,
    pub params: DecayParams,
    pub delta: f64,
    pub weight: WeightKind,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        ClusterSpec {
            base: SpaceSpec::Linear { n: 4 },
            copies: 2,
            separations: vec![10, 20, 40, 80],
            params: DecayParams::new(0.5, 1.0),
            delta: 0.1,
            weight: WeightKind::Polynomial { kappa: 1.0 },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterRow {
    pub separation: usize,
    /// Largest eigenvalue difference from the first separation of the sweep.
    pub spectrum_shift: f64,
    /// SULE of the solver (blockwise) basis.
    pub sule_blockwise_c: f64,
    pub sule_blockwise_verdict: bool,
    pub sudec_blockwise_c: f64,
    pub sudec_blockwise_verdict: bool,
    /// SUDEC of the symmetric/antisymmetric rotated basis.
    pub sudec_rotated_c: f64,
    pub sudec_rotated_verdict: bool,
    pub sudec_plus_c: f64,
    pub sudec_plus_verdict: bool,
    pub c_delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterViolation {
    pub spec: ClusterSpec,
    pub rows: Vec<ClusterRow>,
    /// Final over initial required constant.
    pub rotated_ratio: f64,
    pub plus_ratio: f64,
    /// `C_δ(last) − C_δ(first)`.
    pub c_delta_growth: f64,
    pub rotated_increasing: bool,
    pub plus_increasing: bool,
    pub c_delta_nondecreasing: bool,
    pub sule_blockwise_constant: bool,
}

impl ClusterViolation {
    /// The SUDEC+/SULE+ constants blow up with the separation while the
    /// blockwise basis stays localized.
    pub fn violated(&self) -> bool {
        self.rotated_increasing
            && self.plus_increasing
            && self.c_delta_nondecreasing
            && self.rotated_ratio >= 10.0
            && self.plus_ratio >= 10.0
            && self.sule_blockwise_constant
            && self.rows.iter().all(|r| r.sule_blockwise_verdict)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "D",
            "required_C_rotated",
            "required_C_plus",
            "C_delta",
            "sule_blockwise_C",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.separation.to_string(),
                r.sudec_rotated_c.to_string(),
                r.sudec_plus_c.to_string(),
                r.c_delta.to_string(),
                r.sule_blockwise_c.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

/// Spectral data of `copies` copies of `base` at separation `d`.
pub fn cluster_spectrum(base: &SpaceSpec, copies: usize, d: usize) -> Result<SpectralData> {
    let op = build_cluster_laplacian(base, copies, d)?;
    diagonalize(&op.hamiltonian)
}

/// Separation sweep of the disjoint-cluster Laplacian.
pub fn cluster_suleplus_violation(spec: &ClusterSpec) -> Result<ClusterViolation> {
    spec.params.validate()?;
    if spec.separations.is_empty() {
        return Err(Error::param("empty separation sweep"));
    }
    if !spec.separations.windows(2).all(|w| w[1] > w[0]) {
        return Err(Error::param("separations must be strictly increasing"));
    }
    let p = &spec.params;
    let mut rows = Vec::with_capacity(spec.separations.len());
    let mut reference: Option<Vec<f64>> = None;
    for &d in &spec.separations {
        let sd = cluster_spectrum(&spec.base, spec.copies, d)?;
        let shift = match &reference {
            None => {
                reference = Some(sd.eigenvalues().to_vec());
                0.0
            }
            Some(e0) => e0
                .iter()
                .zip(sd.eigenvalues())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        };
        let window = EnergyWindow::full(&sd);
        let t = build_weight(sd.space(), spec.weight.clone())?;
        let blockwise = Family::from_spectral(&sd, &window, None, &t)?;
        let sule = sule_fit(&blockwise, p, None)?;
        let sudec_block = sudec_check(&blockwise, p, RateFunction::Identity)?;
        let rotated_sd = sd.rotated(pairwise_symmetric_rotation)?;
        let rotated = Family::from_spectral(&rotated_sd, &window, None, &t)?;
        let sudec_rot = sudec_check(&rotated, p, RateFunction::Identity)?;
        let plus = sudec_plus_check(&sd, &window, None, p, &t)?;
        let centers = center_cluster_check(&sd, &window, spec.delta)?;
        rows.push(ClusterRow {
            separation: d,
            spectrum_shift: shift,
            sule_blockwise_c: sule.required_c,
            sule_blockwise_verdict: sule.verdict_all,
            sudec_blockwise_c: sudec_block.required_c,
            sudec_blockwise_verdict: sudec_block.verdict(),
            sudec_rotated_c: sudec_rot.required_c,
            sudec_rotated_verdict: sudec_rot.verdict(),
            sudec_plus_c: plus.projector.required_c,
            sudec_plus_verdict: plus.verdict,
            c_delta: centers.c_delta,
        });
    }
    let col = |f: fn(&ClusterRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let rotated = col(|r| r.sudec_rotated_c);
    let plus = col(|r| r.sudec_plus_c);
    let cd = col(|r| r.c_delta);
    let sule_c = col(|r| r.sule_blockwise_c);
    let ratio = |v: &[f64]| v[v.len() - 1] / v[0];
    Ok(ClusterViolation {
        rotated_ratio: ratio(&rotated),
        plus_ratio: ratio(&plus),
        c_delta_growth: cd[cd.len() - 1] - cd[0],
        rotated_increasing: strictly_increasing(&rotated),
        plus_increasing: strictly_increasing(&plus),
        c_delta_nondecreasing: cd.windows(2).all(|w| w[1] >= w[0]),
        sule_blockwise_constant: sule_c
            .iter()
            .all(|c| (c - sule_c[0]).abs() <= 1e-9 * sule_c[0].abs()),
        spec: spec.clone(),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisIndependence {
    pub rotations: usize,
    /// `(σ̂, Ĉ, verdict)` of the SUDEC+ projector fit, solver basis first.
    pub plus_fits: Vec<(f64, f64, bool)>,
    /// Largest relative deviation of `σ̂` and `Ĉ` from the solver basis.
    pub plus_max_deviation: f64,
    pub sudec_blockwise_verdict: bool,
    /// Plain SUDEC verdicts of the randomly rotated bases.
    pub sudec_rotated_verdicts: Vec<bool>,
    pub sudec_symmetric_verdict: bool,
}

/// SUDEC+ under random orthogonal rotations of every degenerate group versus
/// plain SUDEC of the rotated bases.
pub fn basis_independence(
    sd: &SpectralData,
    window: &EnergyWindow,
    params: &DecayParams,
    weight: WeightKind,
    rotations: usize,
    seed: u64,
) -> Result<BasisIndependence> {
    let t = build_weight(sd.space(), weight)?;
    let mut rng = rotation_rng(seed);
    let mut bases = vec![sd.clone()];
    for _ in 0..rotations {
        bases.push(sd.rotated(|m| random_orthogonal(m, &mut rng))?);
    }
    let mut plus_fits = Vec::with_capacity(bases.len());
    let mut sudec_rotated_verdicts = Vec::with_capacity(rotations);
    for (i, b) in bases.iter().enumerate() {
        let plus = sudec_plus_check(b, window, None, params, &t)?;
        let f = &plus.projector.fit.at_requested;
        plus_fits.push((f.sigma_hat, f.c_hat, plus.verdict));
        if i > 0 {
            let fam = Family::from_spectral(b, window, None, &t)?;
            sudec_rotated_verdicts
                .push(sudec_check(&fam, params, RateFunction::Identity)?.verdict());
        }
    }
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
    let (s0, c0, _) = plus_fits[0];
    let plus_max_deviation = plus_fits
        .iter()
        .map(|&(s, c, _)| rel(s, s0).max(rel(c, c0)))
        .fold(0.0, f64::max);
    let block = Family::from_spectral(sd, window, None, &t)?;
    let sym_sd = sd.rotated(pairwise_symmetric_rotation)?;
    let sym = Family::from_spectral(&sym_sd, window, None, &t)?;
    Ok(BasisIndependence {
        rotations,
        plus_fits,
        plus_max_deviation,
        sudec_blockwise_verdict: sudec_check(&block, params, RateFunction::Identity)?.verdict(),
        sudec_rotated_verdicts,
        sudec_symmetric_verdict: sudec_check(&sym, params, RateFunction::Identity)?.verdict(),
    })
}
