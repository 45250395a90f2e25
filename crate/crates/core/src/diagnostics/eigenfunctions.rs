use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{center_of, witness_of, CellMax, Family, RateFunction, Witness};
use crate::dynamics::{DecayParams, EnergyWindow};
use crate::envelope::{fit_envelope, required_constant, EnvelopeFit, EnvelopePoint};
use crate::error::{Error, Result};
use crate::geometry::{Site, SiteSpace};
use crate::operators::WeightOperator;
use crate::spectral::SpectralData;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationCenter {
    /// Label of the vector in its family.
    pub index: usize,
    pub x_phi: Site,
    pub norm: usize,
    pub peak: f64,
    /// Smallest `R` with `‖χ_{|x−x_φ|≥R} φ‖² ≤ 1/9`.
    pub r_mass: usize,
    /// `(ε/σ)^{1/ζ}|x_φ| + (ln(3C)/σ)^{1/ζ}` at the vector's fitted envelope.
    pub r_phi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuleReport {
    pub centers: Vec<LocalizationCenter>,
    /// Per-vector envelopes `‖χ_x φ‖ ≤ C e^{ε|x_φ|^ζ} e^{−σ|x−x_φ|^ζ}`.
    pub per_vector: Vec<EnvelopeFit>,
    /// One envelope for the whole family, prefactor `f(α_φ)`.
    pub uniform: EnvelopeFit,
    pub min_sigma_hat: f64,
    /// Smallest constant of the uniform envelope at the requested `(σ, ζ, ε)`.
    pub required_c: f64,
    pub verdict_all: bool,
}

fn tail_radius(space: &SiteSpace, v: &[f64], center: Site) -> usize {
    let mut by_r = vec![0.0; space.diameter() + 2];
    for (x, a) in v.iter().enumerate() {
        by_r[space.metric(x, center)] += a * a;
    }
    let mut tail: f64 = by_r.iter().sum();
    for (r, m) in by_r.iter().enumerate() {
        if tail <= 1.0 / 9.0 {
            return r;
        }
        tail -= m;
    }
    by_r.len()
}

/// SULE envelopes. `rate` multiplies the bound by `f(α_φ)`; `None` is `f ≡ 1`.
pub fn sule_fit(
    family: &Family,
    params: &DecayParams,
    rate: Option<RateFunction>,
) -> Result<SuleReport> {
    params.validate()?;
    let space = family.space;
    let eps_exp = params.zeta_prime;
    let prefactor = |i: usize| rate.map_or(1.0, |f| f.eval(family.alpha[i]));
    let per: Vec<(LocalizationCenter, EnvelopeFit, Vec<EnvelopePoint>)> = (0..family.len())
        .into_par_iter()
        .map(|i| {
            let v = family.vectors[i];
            let c = center_of(v);
            let s = space.norm(c);
            let pts: Vec<EnvelopePoint> = (0..space.len())
                .map(|x| EnvelopePoint::new(space.metric(x, c), s, v[x].abs(), prefactor(i)))
                .collect();
            let fit = fit_envelope(&pts, params, eps_exp);
            let f = &fit.at_requested;
            let z = f.zeta_hat;
            let r_phi = if f.sigma_hat > 0.0 && f.sigma_hat.is_finite() {
                (f.epsilon_hat / f.sigma_hat).powf(1.0 / z) * s as f64
                    + ((3.0 * f.c_hat).ln().max(0.0) / f.sigma_hat).powf(1.0 / z)
            } else {
                f64::INFINITY
            };
            let center = LocalizationCenter {
                index: family.labels[i],
                x_phi: c,
                norm: s,
                peak: v[c].abs(),
                r_mass: tail_radius(space, v, c),
                r_phi,
            };
            (center, fit, pts)
        })
        .collect();
    let pooled: Vec<EnvelopePoint> = per.iter().flat_map(|p| p.2.iter().copied()).collect();
    let uniform = fit_envelope(&pooled, params, eps_exp);
    let required_c = required_constant(
        &pooled,
        params.sigma,
        params.zeta,
        params.epsilon,
        eps_exp.unwrap_or(params.zeta),
    );
    let min_sigma_hat = per
        .iter()
        .map(|p| p.1.at_requested.sigma_hat)
        .fold(f64::INFINITY, f64::min);
    let verdict_all = per.iter().all(|p| p.1.verdict());
    let (centers, per_vector): (Vec<_>, Vec<_>) = per.into_iter().map(|(c, f, _)| (c, f)).unzip();
    Ok(SuleReport {
        centers,
        per_vector,
        uniform,
        min_sigma_hat,
        required_c,
        verdict_all,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SudecReport {
    pub rate: RateFunction,
    pub fit: EnvelopeFit,
    /// Distinct `(|x−u|, |u|)` cells the pairs reduce to.
    pub cells: usize,
    pub pairs: usize,
    /// Smallest constant at the requested `(σ, ζ, ε)`.
    pub required_c: f64,
    pub worst: Option<Witness>,
}

impl SudecReport {
    pub fn verdict(&self) -> bool {
        self.fit.verdict()
    }
}

fn max_norm(space: &SiteSpace) -> usize {
    (0..space.len()).map(|x| space.norm(x)).max().unwrap_or(0)
}

/// Cell maxima of `ln(a_i(x) a_i(u) / prefactor_i)` over all items and pairs.
fn pair_cells(space: &SiteSpace, amplitudes: &[Vec<f64>], prefactor: &[f64]) -> CellMax {
    let (r_max, s_max) = (space.diameter(), max_norm(space));
    let norms: Vec<usize> = (0..space.len()).map(|x| space.norm(x)).collect();
    amplitudes
        .par_iter()
        .enumerate()
        .fold(
            || CellMax::new(r_max, s_max),
            |mut cells, (i, a)| {
                let ln_pre = prefactor[i].ln();
                let logs: Vec<f64> = a
                    .iter()
                    .map(|v| if *v > 0.0 { v.ln() } else { f64::NEG_INFINITY })
                    .collect();
                for u in 0..a.len() {
                    if logs[u] == f64::NEG_INFINITY {
                        continue;
                    }
                    for x in 0..a.len() {
                        if logs[x] == f64::NEG_INFINITY {
                            continue;
                        }
                        cells.offer(
                            space.metric(x, u),
                            norms[u],
                            logs[x] + logs[u] - ln_pre,
                            (i, x, u),
                        );
                    }
                }
                cells
            },
        )
        .reduce(|| CellMax::new(r_max, s_max), CellMax::merge)
}

fn correlation_fit(
    space: &SiteSpace,
    amplitudes: &[Vec<f64>],
    prefactor: &[f64],
    params: &DecayParams,
    rate: RateFunction,
) -> SudecReport {
    let cells = pair_cells(space, amplitudes, prefactor);
    let (points, who) = cells.points();
    let fit = fit_envelope(&points, params, params.zeta_prime);
    let worst = witness_of(&fit.at_requested, &who, |i| prefactor[i], &points);
    let eps_exp = params.zeta_prime.unwrap_or(params.zeta);
    SudecReport {
        rate,
        required_c: required_constant(&points, params.sigma, params.zeta, params.epsilon, eps_exp),
        cells: points.len(),
        pairs: amplitudes.len() * space.len() * space.len(),
        fit,
        worst,
    }
}

/// `‖χ_x φ‖‖χ_u φ‖ ≤ C f(α_φ) e^{ε|u|^ζ} e^{−σ|x−u|^ζ}` over all pairs and
/// vectors of the family. With `params.zeta_prime` set, the ε-factor uses ζ′.
pub fn sudec_check(
    family: &Family,
    params: &DecayParams,
    rate: RateFunction,
) -> Result<SudecReport> {
    params.validate()?;
    let amplitudes: Vec<Vec<f64>> = family
        .vectors
        .iter()
        .map(|v| v.iter().map(|a| a.abs()).collect())
        .collect();
    let prefactor: Vec<f64> = family.alpha.iter().map(|&a| rate.eval(a)).collect();
    if prefactor.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::param(
            "rate function must be positive on the α-weights",
        ));
    }
    Ok(correlation_fit(
        family.space,
        &amplitudes,
        &prefactor,
        params,
        rate,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SudecPlusReport {
    pub groups: Vec<usize>,
    /// `‖χ_x P_E‖₂ ‖χ_u P_E‖₂ ≤ C α_E e^{ε|u|^ζ} e^{−σ|x−u|^ζ}`.
    pub projector: SudecReport,
    /// Common centers `x_E = argmax_x ‖χ_x P_E‖₂`.
    pub centers: Vec<Site>,
    /// `‖χ_x P_E‖₂ ≤ C √α_E e^{ε|x_E|^ζ} e^{−σ|x−x_E|^ζ}`.
    pub sule_plus: EnvelopeFit,
    /// Smallest `C` with `tr P_E ≤ C α_E T(x_E)²` (`T(x)² = ⟨x⟩^{2κ}` for
    /// polynomial weights).
    pub trace_constant: f64,
    pub verdict: bool,
}

/// Projector-level (basis independent) SUDEC+ and SULE+ checks over the
/// window's groups (or `groups` when given).
pub fn sudec_plus_check(
    sd: &SpectralData,
    window: &EnergyWindow,
    groups: Option<&[usize]>,
    params: &DecayParams,
    t: &WeightOperator,
) -> Result<SudecPlusReport> {
    params.validate()?;
    let groups: Vec<usize> = match groups {
        Some(g) => g.to_vec(),
        None => window.selected_groups(sd),
    };
    if groups.is_empty() {
        return Err(Error::param("no spectral group inside the window"));
    }
    let space = sd.space();
    let n = sd.dim();
    let roots: Vec<Vec<f64>> = groups
        .iter()
        .map(|&g| (0..n).map(|x| sd.site_mass(g, x).max(0.0).sqrt()).collect())
        .collect();
    let alpha_e: Vec<f64> = groups
        .iter()
        .map(|&g| {
            sd.groups()[g]
                .indices
                .iter()
                .map(|&k| crate::spectral::alpha_phi(sd.vector(k), t))
                .sum()
        })
        .collect();
    let mut projector = correlation_fit(space, &roots, &alpha_e, params, RateFunction::Identity);
    if let Some(w) = projector.worst.as_mut() {
        w.item = groups[w.item];
    }
    let centers: Vec<Site> = roots.iter().map(|r| center_of(r)).collect();
    let mut points = Vec::with_capacity(groups.len() * n);
    for (i, r) in roots.iter().enumerate() {
        let c = centers[i];
        let s = space.norm(c);
        let pre = alpha_e[i].sqrt();
        points.extend((0..n).map(|x| EnvelopePoint::new(space.metric(x, c), s, r[x], pre)));
    }
    let sule_plus = fit_envelope(&points, params, params.zeta_prime);
    let trace_constant = groups
        .iter()
        .enumerate()
        .map(|(i, &g)| sd.groups()[g].multiplicity as f64 / (alpha_e[i] * t.at(centers[i]).powi(2)))
        .fold(0.0, f64::max);
    Ok(SudecPlusReport {
        verdict: projector.verdict() && sule_plus.verdict(),
        groups,
        projector,
        centers,
        sule_plus,
        trace_constant,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedExponentReport {
    pub zeta: f64,
    pub zeta_prime: f64,
    /// SUDEC′: α-weighted, ε-factor at ζ′.
    pub sudec_prime: SudecReport,
    /// SULE′: no α, ε-factor at ζ′.
    pub sule_prime: EnvelopeFit,
    /// Plain SUDEC at the same (σ, ζ, ε) for comparison.
    pub sudec_plain: SudecReport,
}

pub fn mixed_exponent_check(family: &Family, params: &DecayParams) -> Result<MixedExponentReport> {
    params.validate()?;
    let zp = params
        .zeta_prime
        .ok_or_else(|| Error::param("mixed-exponent check needs ζ′"))?;
    let sudec_prime = sudec_check(family, params, RateFunction::Identity)?;
    let sule = sule_fit(family, params, None)?;
    let plain = DecayParams {
        zeta_prime: None,
        ..*params
    };
    let sudec_plain = sudec_check(family, &plain, RateFunction::Identity)?;
    Ok(MixedExponentReport {
        zeta: params.zeta,
        zeta_prime: zp,
        sudec_prime,
        sule_prime: sule.uniform,
        sudec_plain,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaCenterBound {
    /// `α_φ T(x_φ)²` per vector (`α_φ ⟨x_φ⟩^{2κ}` for polynomial weights).
    pub products: Vec<f64>,
    pub minimum: f64,
    pub verdict: bool,
}

pub fn alpha_center_bound(
    family: &Family,
    centers: &[LocalizationCenter],
    t: &WeightOperator,
) -> AlphaCenterBound {
    let products: Vec<f64> = centers
        .iter()
        .zip(&family.alpha)
        .map(|(c, a)| a * t.at(c.x_phi).powi(2))
        .collect();
    let minimum = products.iter().copied().fold(f64::INFINITY, f64::min);
    AlphaCenterBound {
        verdict: minimum > 0.0 && minimum.is_finite(),
        products,
        minimum,
    }
}
