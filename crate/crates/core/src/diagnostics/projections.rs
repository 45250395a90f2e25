use serde::{Deserialize, Serialize};

use crate::dynamics::{liminf_cesaro, sup_kernel, DecayParams, EnergyWindow};
use crate::envelope::{fit_envelope, EnvelopeFit, EnvelopePoint};
use crate::error::{Error, Result};
use crate::geometry::Site;
use crate::numeric::compensated_sum;
use crate::spectral::SpectralData;

/// `𝒳(H)P_E(x, u)` summed over the group with per-vector cutoff values.
fn windowed_entry(sd: &SpectralData, window: &EnergyWindow, g: usize, x: Site, u: Site) -> f64 {
    sd.groups()[g]
        .indices
        .iter()
        .map(|&k| window.values[k] * sd.vectors()[(x, k)] * sd.vectors()[(u, k)])
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SulpProfile {
    pub u: Site,
    /// `𝓟_u(x,𝒳) = sup_E ‖χ_x 𝒳(H)P_E χ_u‖₂` per site.
    pub p_profile: Vec<f64>,
    /// `𝓛_u(σ,ζ,𝒳) = Σ_x e^{σ|x−u|^ζ} 𝓟_u(x)²`.
    pub l_value: f64,
    pub liminf: f64,
    /// `max_x 𝓟_u(x) e^{σ/2 |x−u|^ζ} / √liminf` at the requested σ; at most 1
    /// because the liminf dominates `𝓛_u`.
    pub requested_constant: f64,
    /// Envelope of `𝓟_u / √liminf` with rate `σ̂/2`.
    pub envelope: EnvelopeFit,
    /// `σ̂`, twice the fitted rate at the requested ζ.
    pub sigma_hat: f64,
    pub c_hat: f64,
    pub verdict: bool,
}

pub fn sulp_profile(
    sd: &SpectralData,
    window: &EnergyWindow,
    u: Site,
    params: &DecayParams,
) -> Result<SulpProfile> {
    params.validate()?;
    let space = sd.space();
    let n = sd.dim();
    let groups = window.selected_groups(sd);
    let p_profile: Vec<f64> = (0..n)
        .map(|x| {
            groups
                .iter()
                .map(|&g| windowed_entry(sd, window, g, x, u).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let l_value = compensated_sum(
        (0..n).map(|x| params.weight_exponent(space.metric(x, u)).exp() * p_profile[x].powi(2)),
    );
    let liminf = liminf_cesaro(sd, window, u, params)?;
    let root = liminf.sqrt();
    let requested_constant = (0..n)
        .map(|x| p_profile[x] * (params.weight_exponent(space.metric(x, u)) / 2.0).exp() / root)
        .fold(0.0, f64::max);
    let points: Vec<EnvelopePoint> = (0..n)
        .map(|x| EnvelopePoint::new(space.metric(x, u), 0, p_profile[x], root))
        .collect();
    let half = DecayParams::new(params.sigma / 2.0, params.zeta);
    let envelope = fit_envelope(&points, &half, None);
    Ok(SulpProfile {
        u,
        sigma_hat: 2.0 * envelope.at_requested.sigma_hat,
        c_hat: envelope.at_requested.c_hat,
        verdict: envelope.verdict(),
        p_profile,
        l_value,
        liminf,
        requested_constant,
        envelope,
    })
}

/// `‖χ_u P_k‖₂²` below this is indistinguishable from zero: eigenvector
/// entries carry an absolute error near machine precision.
pub const MASS_FLOOR: f64 = 1e-28;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectorMassLedger {
    pub u: Site,
    /// Kept groups `k` (inside the window, `‖χ_u P_k‖₂ > 0`).
    pub groups: Vec<usize>,
    /// Window groups with no mass at `u` (at most [`MASS_FLOOR`]).
    pub excluded: Vec<usize>,
    /// `a_{kx}(u) = ‖χ_x P_k χ_u‖₂² / ‖χ_u P_k‖₂²`, one row per kept group.
    pub a: Vec<Vec<f64>>,
    /// `A_k(σ,ζ,u) = Σ_x e^{σ|x−u|^ζ} a_{kx}(u)` per kept group.
    pub a_weighted: Vec<f64>,
    pub sorted_a: Vec<f64>,
    /// `max_k |Σ_x a_{kx} − 1|`.
    pub row_sum_error: f64,
    /// `max_x Σ_k a_{kx}`.
    pub column_sum_max: f64,
    /// Largest `C̃` with `A_(k) ≥ exp(C̃ k^{ζ/d})` along the sorted sequence.
    pub c_tilde: f64,
    pub growth_exponent: f64,
    pub degenerate: bool,
}

impl ProjectorMassLedger {
    /// `N(l) = #{k : A_k ≤ l}`.
    pub fn counting(&self, l: f64) -> usize {
        self.sorted_a.partition_point(|&a| a <= l)
    }
}

pub fn ak_ledger(
    sd: &SpectralData,
    window: &EnergyWindow,
    u: Site,
    params: &DecayParams,
) -> Result<ProjectorMassLedger> {
    params.validate()?;
    let space = sd.space();
    let n = sd.dim();
    let weights: Vec<f64> = (0..n)
        .map(|x| params.weight_exponent(space.metric(x, u)).exp())
        .collect();
    let mut groups = Vec::new();
    let mut excluded = Vec::new();
    let mut a = Vec::new();
    let mut a_weighted = Vec::new();
    for g in window.selected_groups(sd) {
        let mass = sd.site_mass(g, u);
        if mass <= MASS_FLOOR {
            excluded.push(g);
            continue;
        }
        let row: Vec<f64> = (0..n)
            .map(|x| sd.projector_entry(g, x, u).powi(2) / mass)
            .collect();
        a_weighted.push(compensated_sum(
            row.iter().zip(&weights).map(|(r, w)| r * w),
        ));
        a.push(row);
        groups.push(g);
    }
    let row_sum_error = a
        .iter()
        .map(|row| (compensated_sum(row.iter().copied()) - 1.0).abs())
        .fold(0.0, f64::max);
    let column_sum_max = (0..n)
        .map(|x| compensated_sum(a.iter().map(|row| row[x])))
        .fold(0.0, f64::max);
    let mut sorted_a = a_weighted.clone();
    sorted_a.sort_by(f64::total_cmp);
    let d = space.dimension().unwrap_or(1) as f64;
    let growth_exponent = params.zeta / d;
    let c_tilde = sorted_a
        .iter()
        .enumerate()
        .map(|(i, &v)| v.ln() / ((i + 1) as f64).powf(growth_exponent))
        .fold(f64::INFINITY, f64::min);
    Ok(ProjectorMassLedger {
        u,
        degenerate: groups.is_empty(),
        groups,
        excluded,
        a,
        a_weighted,
        sorted_a,
        row_sum_error,
        column_sum_max,
        c_tilde: if c_tilde.is_finite() { c_tilde } else { 0.0 },
        growth_exponent,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelInterpolation {
    pub u: Site,
    pub gamma: f64,
    /// `sup_t ‖χ_x e^{−itH}𝒳(H)χ_u‖₂` over the time grid.
    pub sup_kernel: Vec<f64>,
    /// `𝓟_u(x)^{1−γ} 𝓛_u^{γ/2}`.
    pub bound_base: Vec<f64>,
    /// Smallest `C` with `sup_kernel ≤ C·bound_base` at every site.
    pub c_min: f64,
    pub violations: usize,
    /// `H(x) = Σ_k ‖χ_x P_k‖₂^γ A_k^{−γ/2}` over the ledger's kept groups.
    pub holder: Vec<f64>,
    pub holder_finite: bool,
    /// Chained SUDL envelope `C′·C^{1−γ}·liminf^{(1−γ)/2}·𝓛^{γ/2}·e^{−(1−γ)σ̂/2 |x−u|^ζ}`.
    pub chain_rate: f64,
    pub chain_constant: f64,
    pub chain_violations: usize,
    pub verdict: bool,
}

pub fn kernel_interpolation_check(
    sd: &SpectralData,
    window: &EnergyWindow,
    u: Site,
    params: &DecayParams,
    times: &[f64],
) -> Result<KernelInterpolation> {
    params.validate()?;
    let gamma = params
        .gamma
        .ok_or_else(|| Error::param("kernel interpolation needs γ ∈ (0, 1)"))?;
    let sulp = sulp_profile(sd, window, u, params)?;
    let ledger = ak_ledger(sd, window, u, params)?;
    let sup = sup_kernel(sd, window, u, times);
    let n = sd.dim();
    let bound_base: Vec<f64> = sulp
        .p_profile
        .iter()
        .map(|p| p.powf(1.0 - gamma) * sulp.l_value.powf(gamma / 2.0))
        .collect();
    let mut c_min = 0.0f64;
    for x in 0..n {
        if sup[x] > 0.0 {
            c_min = c_min.max(if bound_base[x] > 0.0 {
                sup[x] / bound_base[x]
            } else {
                f64::INFINITY
            });
        }
    }
    let tol = 1.0 + 1e-12;
    let violations = (0..n)
        .filter(|&x| sup[x] > c_min * bound_base[x] * tol)
        .count();
    let holder: Vec<f64> = (0..n)
        .map(|x| {
            compensated_sum(
                ledger
                    .groups
                    .iter()
                    .zip(&ledger.a_weighted)
                    .map(|(&g, &ak)| sd.site_mass(g, x).sqrt().powf(gamma) * ak.powf(-gamma / 2.0)),
            )
        })
        .collect();
    let holder_finite = holder.iter().all(|h| h.is_finite());
    let rate = sulp.envelope.at_requested.sigma_hat;
    let chain_rate = (1.0 - gamma) * rate;
    let chain_constant = c_min
        * (sulp.c_hat * sulp.liminf.sqrt()).powf(1.0 - gamma)
        * sulp.l_value.powf(gamma / 2.0);
    let space = sd.space();
    let chain_violations = (0..n)
        .filter(|&x| {
            let r = space.metric(x, u) as f64;
            let env = chain_constant
                * (-chain_rate * if r > 0.0 { r.powf(params.zeta) } else { 0.0 }).exp();
            sup[x] > env * (1.0 + 1e-9)
        })
        .count();
    Ok(KernelInterpolation {
        u,
        gamma,
        verdict: c_min.is_finite() && violations == 0 && holder_finite && chain_violations == 0,
        sup_kernel: sup,
        bound_base,
        c_min,
        violations,
        holder,
        holder_finite,
        chain_rate,
        chain_constant,
        chain_violations,
    })
}
