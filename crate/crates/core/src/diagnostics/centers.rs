use serde::{Deserialize, Serialize};

use super::center_of;
use crate::dynamics::EnergyWindow;
use crate::error::{Error, Result};
use crate::geometry::{Site, SiteSpace};
use crate::operators::{japanese_bracket, WeightOperator};
use crate::spectral::SpectralData;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupCenters {
    pub group: usize,
    /// Centers of the group's vectors followed by those of `(φ ± ψ)/√2` for
    /// every pair.
    pub centers: Vec<Site>,
    /// `max (|x_a − x_b| − δ|x_a|)` over ordered pairs, at least 0.
    pub c_delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterClusterReport {
    pub delta: f64,
    pub groups: Vec<GroupCenters>,
    /// Multiplicity-one groups, for which the check does not apply.
    pub skipped: Vec<usize>,
    pub c_delta: f64,
}

fn c_delta(space: &SiteSpace, centers: &[Site], delta: f64) -> f64 {
    let mut best = 0.0f64;
    for &a in centers {
        for &b in centers {
            best = best.max(space.metric(a, b) as f64 - delta * space.norm(a) as f64);
        }
    }
    best
}

/// Required `C_δ` in `|x_φ − x_ψ| ≤ δ|x_φ| + C_δ` within each degenerate group.
pub fn center_cluster_check(
    sd: &SpectralData,
    window: &EnergyWindow,
    delta: f64,
) -> Result<CenterClusterReport> {
    if !(delta >= 0.0) {
        return Err(Error::param(format!("δ must be ≥ 0, got {delta}")));
    }
    let space = sd.space();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut groups = Vec::new();
    let mut skipped = Vec::new();
    for g in window.selected_groups(sd) {
        let idx = &sd.groups()[g].indices;
        if idx.len() < 2 {
            skipped.push(g);
            continue;
        }
        let mut centers: Vec<Site> = idx.iter().map(|&k| center_of(sd.vector(k))).collect();
        for (i, &a) in idx.iter().enumerate() {
            for &b in &idx[i + 1..] {
                let (va, vb) = (sd.vector(a), sd.vector(b));
                let plus: Vec<f64> = va.iter().zip(vb).map(|(p, q)| s * (p + q)).collect();
                let minus: Vec<f64> = va.iter().zip(vb).map(|(p, q)| s * (p - q)).collect();
                centers.push(center_of(&plus));
                centers.push(center_of(&minus));
            }
        }
        groups.push(GroupCenters {
            group: g,
            c_delta: c_delta(space, &centers, delta),
            centers,
        });
    }
    let c = groups.iter().map(|g| g.c_delta).fold(0.0, f64::max);
    Ok(CenterClusterReport {
        delta,
        groups,
        skipped,
        c_delta: c,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterCensus {
    pub kappa: f64,
    pub radii: Vec<usize>,
    /// `N_L = #{n : |x_{φ_n}| ≤ L}`.
    pub n_l: Vec<usize>,
    /// `Ñ_L = #{E : |x_E| ≤ L}`.
    pub ntilde_l: Vec<usize>,
    /// `⟨x_{φ_n}⟩` after increasing reorder.
    pub sorted_brackets: Vec<f64>,
    /// Largest `c` with `⟨x_{φ_n}⟩ ≥ c·n^{1/2κ}` along the reordered sequence.
    pub ordering_constant: f64,
    pub alpha_total: f64,
    /// Smallest `C` with `N_L ≤ C L^{2κ} α_{H,ℰ}` for every `L ≥ 1`.
    pub counting_constant: f64,
    pub counting_violations: usize,
    pub verdict: bool,
}

/// Census of localization centers in the window, for polynomial weights.
pub fn center_census(
    sd: &SpectralData,
    window: &EnergyWindow,
    t: &WeightOperator,
) -> Result<CenterCensus> {
    let kappa = t
        .kappa()
        .ok_or_else(|| Error::param("the center census needs a polynomial weight ⟨x⟩^κ"))?;
    let space = sd.space();
    let selected: Vec<usize> = window.selected().collect();
    if selected.is_empty() {
        return Err(Error::param("window contains no eigenvalue"));
    }
    let norms: Vec<usize> = selected
        .iter()
        .map(|&k| space.norm(center_of(sd.vector(k))))
        .collect();
    let group_norms: Vec<usize> = window
        .selected_groups(sd)
        .into_iter()
        .map(|g| {
            let mass: Vec<f64> = (0..sd.dim()).map(|x| sd.site_mass(g, x)).collect();
            space.norm(center_of(&mass))
        })
        .collect();
    let l_max = norms.iter().chain(&group_norms).copied().max().unwrap_or(0);
    let radii: Vec<usize> = (0..=l_max).collect();
    let n_l: Vec<usize> = radii
        .iter()
        .map(|&l| norms.iter().filter(|&&r| r <= l).count())
        .collect();
    let ntilde_l: Vec<usize> = radii
        .iter()
        .map(|&l| group_norms.iter().filter(|&&r| r <= l).count())
        .collect();
    let mut sorted_brackets: Vec<f64> = norms.iter().map(|&r| japanese_bracket(r as f64)).collect();
    sorted_brackets.sort_by(f64::total_cmp);
    let ordering_constant = sorted_brackets
        .iter()
        .enumerate()
        .map(|(i, b)| b / ((i + 1) as f64).powf(1.0 / (2.0 * kappa)))
        .fold(f64::INFINITY, f64::min);
    let groups = window.selected_groups(sd);
    let alpha_total = sd.alpha_total(t, |g| groups.contains(&g));
    let scale = |l: usize| (l as f64).powf(2.0 * kappa) * alpha_total;
    let counting_constant = radii
        .iter()
        .filter(|&&l| l >= 1)
        .map(|&l| n_l[l] as f64 / scale(l))
        .fold(0.0, f64::max);
    let counting_violations = radii
        .iter()
        .filter(|&&l| l >= 1 && n_l[l] as f64 > counting_constant * scale(l) * (1.0 + 1e-12))
        .count();
    Ok(CenterCensus {
        kappa,
        verdict: ordering_constant > 0.0
            && counting_violations == 0
            && counting_constant.is_finite(),
        radii,
        n_l,
        ntilde_l,
        sorted_brackets,
        ordering_constant,
        alpha_total,
        counting_constant,
        counting_violations,
    })
}
