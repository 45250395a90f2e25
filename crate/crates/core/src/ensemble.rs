//! Disorder-ensemble averages of moments and kernels for the Anderson model.
//!
//! Realizations run in parallel; every reduction walks them in index order
//! with compensated sums, so a fixed master seed reproduces the output bit
//! for bit.

use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{sup_kernel, DecayParams, EnergyWindow, MomentSeries, TimeGrid, WindowSpec};
use crate::envelope::{fit_envelope, EnvelopeFit, EnvelopePoint};
use crate::error::{Error, Result};
use crate::geometry::{Site, SiteSpace, SpaceSpec};
use crate::numeric::compensated_sum;
use crate::operators::build_anderson;
use crate::spectral::{diagonalize, SpectralData};

pub const MAX_REALIZATIONS: usize = 1000;
/// Relative tolerance of the translated-`u` agreement check on `σ̂`.
pub const TRANSLATION_TOLERANCE: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub space: SpaceSpec,
    pub disorder: f64,
    pub realizations: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub window: WindowSpec,
    pub params: DecayParams,
    #[serde(default)]
    pub grid: TimeGrid,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 || self.realizations > MAX_REALIZATIONS {
            return Err(Error::param(format!(
                "realization count must lie in 1..={MAX_REALIZATIONS}, got {}",
                self.realizations
            )));
        }
        if !(self.disorder >= 0.0 && self.disorder.is_finite()) {
            return Err(Error::param(format!(
                "disorder width must be finite and ≥ 0, got {}",
                self.disorder
            )));
        }
        self.params.validate()
    }

    /// Seed of realization `index`.
    pub fn seed(&self, index: usize) -> u64 {
        realization_seed(self.master_seed, index)
    }
}

pub fn realization_seed(master: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index as u64);
    rng.next_u64()
}

/// Spectral data and window of one realization.
pub fn realization(
    spec: &EnsembleSpec,
    space: &SiteSpace,
    index: usize,
) -> Result<(SpectralData, EnergyWindow)> {
    let h = build_anderson(space, spec.disorder, spec.seed(index))?;
    let sd = diagonalize(&h)?;
    let w = spec.window.build(&sd)?;
    Ok((sd, w))
}

fn mean_std(columns: &[&[f64]], i: usize) -> (f64, f64) {
    let r = columns.len() as f64;
    let mean = compensated_sum(columns.iter().map(|c| c[i])) / r;
    let var = if columns.len() > 1 {
        compensated_sum(columns.iter().map(|c| (c[i] - mean).powi(2))) / (r - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealizationDigest {
    pub index: usize,
    pub seed: u64,
    pub sup_over_grid: f64,
    pub final_cesaro: f64,
    pub spectrum: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMoments {
    pub u: Site,
    pub realizations: usize,
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    /// Sample standard deviation (`R − 1` normalization, 0 for `R = 1`).
    pub std: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Cesàro and Abel averages of the mean series.
    pub cesaro: Vec<f64>,
    pub abel: Vec<f64>,
    /// `𝔼 sup_t M`: mean over realizations of the grid supremum.
    pub mean_of_sup: f64,
    /// `sup_t 𝔼 M` over the report grid.
    pub sup_of_mean: f64,
    pub digests: Vec<RealizationDigest>,
}

impl EnsembleMoments {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "mean", "std", "stderr", "cesaro_T", "abel_T"])?;
        for i in 0..self.times.len() {
            w.write_record([
                format!("{:e}", self.times[i]),
                format!("{:e}", self.mean[i]),
                format!("{:e}", self.std[i]),
                format!("{:e}", self.stderr[i]),
                format!("{:e}", self.cesaro[i]),
                format!("{:e}", self.abel[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Ensemble statistics of `M_{u,ω}(σ,ζ,𝒳,t)`; `u = None` is the origin.
pub fn ensemble_moments(spec: &EnsembleSpec, u: Option<Site>) -> Result<EnsembleMoments> {
    spec.validate()?;
    let space = SiteSpace::build(spec.space.clone())?;
    let u = u.unwrap_or_else(|| space.origin());
    if u >= space.len() {
        return Err(Error::param(format!("site {u} out of range")));
    }
    let series: Vec<(MomentSeries, (f64, f64))> = (0..spec.realizations)
        .into_par_iter()
        .map(|i| {
            let (sd, w) = realization(spec, &space, i)?;
            let s = MomentSeries::compute(&sd, &w, u, &spec.params, &spec.grid)?;
            Ok((s, (sd.eigenvalues()[0], *sd.eigenvalues().last().unwrap())))
        })
        .collect::<Result<Vec<_>>>()?;
    let times = series[0].0.times.clone();
    let r = series.len();
    let values: Vec<&[f64]> = series.iter().map(|s| s.0.values.as_slice()).collect();
    let cesaros: Vec<&[f64]> = series.iter().map(|s| s.0.cesaro.as_slice()).collect();
    let abels: Vec<&[f64]> = series.iter().map(|s| s.0.abel.as_slice()).collect();
    let (mean, std): (Vec<f64>, Vec<f64>) = (0..times.len()).map(|i| mean_std(&values, i)).unzip();
    let stderr = std.iter().map(|s| s / (r as f64).sqrt()).collect();
    // the averages are linear, so averaging them equals averaging the mean series
    let cesaro = (0..times.len()).map(|i| mean_std(&cesaros, i).0).collect();
    let abel = (0..times.len()).map(|i| mean_std(&abels, i).0).collect();
    let mean_of_sup = compensated_sum(series.iter().map(|s| s.0.sup_over_grid)) / r as f64;
    let sup_of_mean = mean.iter().copied().fold(0.0, f64::max);
    let digests = series
        .iter()
        .enumerate()
        .map(|(i, (s, spectrum))| RealizationDigest {
            index: i,
            seed: spec.seed(i),
            sup_over_grid: s.sup_over_grid,
            final_cesaro: *s.cesaro.last().unwrap(),
            spectrum: *spectrum,
        })
        .collect();
    Ok(EnsembleMoments {
        u,
        realizations: r,
        times,
        mean,
        std,
        stderr,
        cesaro,
        abel,
        mean_of_sup,
        sup_of_mean,
        digests,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleKernel {
    pub u: Site,
    /// `𝔼 sup_t |⟨δ_x, e^{−itH}𝒳(H)δ_u⟩|` per site.
    pub mean_sup_kernel: Vec<f64>,
    pub std_sup_kernel: Vec<f64>,
    /// `𝔼 sup_k |𝒳(E_k)P_k(x, u)|` per site.
    pub mean_projector_kernel: Vec<f64>,
    pub std_projector_kernel: Vec<f64>,
    /// Envelope `C e^{−σ|x−u|^ζ}` of the averaged sup-t kernel, no ε-factor.
    pub dynamical: EnvelopeFit,
    pub projector: EnvelopeFit,
}

impl EnsembleKernel {
    pub fn write_csv(&self, space: &SiteSpace, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "x",
            "r",
            "mean_sup_kernel",
            "std_sup_kernel",
            "mean_projector",
            "std_projector",
        ])?;
        for x in 0..self.mean_sup_kernel.len() {
            w.write_record([
                x.to_string(),
                space.metric(x, self.u).to_string(),
                format!("{:e}", self.mean_sup_kernel[x]),
                format!("{:e}", self.std_sup_kernel[x]),
                format!("{:e}", self.mean_projector_kernel[x]),
                format!("{:e}", self.std_projector_kernel[x]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn projector_sup(sd: &SpectralData, w: &EnergyWindow, u: Site) -> Vec<f64> {
    let groups = w.selected_groups(sd);
    (0..sd.dim())
        .map(|x| {
            groups
                .iter()
                .map(|&g| (w.values[sd.groups()[g].indices[0]] * sd.projector_entry(g, x, u)).abs())
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Averaged kernels and their envelopes at every base site in `us`.
pub fn ensemble_kernel_decay(spec: &EnsembleSpec, us: &[Site]) -> Result<Vec<EnsembleKernel>> {
    spec.validate()?;
    if us.is_empty() {
        return Err(Error::param("no base site given"));
    }
    let space = SiteSpace::build(spec.space.clone())?;
    if let Some(&bad) = us.iter().find(|&&u| u >= space.len()) {
        return Err(Error::param(format!("site {bad} out of range")));
    }
    // per realization, per u: (sup-t kernel, sup-k projector kernel)
    let per: Vec<Vec<(Vec<f64>, Vec<f64>)>> = (0..spec.realizations)
        .into_par_iter()
        .map(|i| {
            let (sd, w) = realization(spec, &space, i)?;
            Ok(us
                .iter()
                .map(|&u| {
                    (
                        sup_kernel(&sd, &w, u, &spec.grid.times),
                        projector_sup(&sd, &w, u),
                    )
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let params = DecayParams::new(spec.params.sigma, spec.params.zeta);
    let fit = |u: Site, profile: &[f64]| {
        let pts: Vec<EnvelopePoint> = (0..space.len())
            .map(|x| EnvelopePoint::new(space.metric(x, u), 0, profile[x], 1.0))
            .collect();
        fit_envelope(&pts, &params, None)
    };
    Ok(us
        .iter()
        .enumerate()
        .map(|(j, &u)| {
            let dyn_cols: Vec<&[f64]> = per.iter().map(|r| r[j].0.as_slice()).collect();
            let proj_cols: Vec<&[f64]> = per.iter().map(|r| r[j].1.as_slice()).collect();
            let (mean_sup_kernel, std_sup_kernel): (Vec<f64>, Vec<f64>) =
                (0..space.len()).map(|x| mean_std(&dyn_cols, x)).unzip();
            let (mean_projector_kernel, std_projector_kernel): (Vec<f64>, Vec<f64>) =
                (0..space.len()).map(|x| mean_std(&proj_cols, x)).unzip();
            EnsembleKernel {
                u,
                dynamical: fit(u, &mean_sup_kernel),
                projector: fit(u, &mean_projector_kernel),
                mean_sup_kernel,
                std_sup_kernel,
                mean_projector_kernel,
                std_projector_kernel,
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranslationCheck {
    pub sigma_hat: Vec<f64>,
    /// `max |σ̂_i − σ̂_0| / σ̂_0`.
    pub relative_spread: f64,
    pub tolerance: f64,
    pub verdict: bool,
}

/// Uniformity in `u` of the averaged sup-t kernel envelope.
pub fn translation_check(kernels: &[EnsembleKernel]) -> TranslationCheck {
    let sigma_hat: Vec<f64> = kernels
        .iter()
        .map(|k| k.dynamical.at_requested.sigma_hat)
        .collect();
    let s0 = sigma_hat[0];
    let relative_spread = sigma_hat
        .iter()
        .map(|s| (s - s0).abs() / s0)
        .fold(0.0, f64::max);
    TranslationCheck {
        verdict: s0 > 0.0 && relative_spread <= TRANSLATION_TOLERANCE,
        sigma_hat,
        relative_spread,
        tolerance: TRANSLATION_TOLERANCE,
    }
}

/// Site at offset `shift` from the origin along the first axis, or index
/// `origin + shift` on graphs and linear bases.
pub fn shifted_site(space: &SiteSpace, shift: i64) -> Result<Site> {
    let o = space.origin();
    let site = match space.coords(o) {
        Some(c) => {
            let mut c = c.to_vec();
            c[0] += shift;
            space.site_at(&c)
        }
        None => usize::try_from(o as i64 + shift)
            .ok()
            .filter(|&s| s < space.len()),
    };
    site.ok_or_else(|| Error::param(format!("no site at offset {shift} from the origin")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub spec: EnsembleSpec,
    pub moments: EnsembleMoments,
    pub kernels: Vec<EnsembleKernel>,
    pub translation: TranslationCheck,
}

/// Moments at the origin and kernels at the origin and at `L/4` along the
/// first axis (for graphs: at index offset `n/4`).
pub fn ensemble_report(spec: &EnsembleSpec) -> Result<EnsembleReport> {
    let space = SiteSpace::build(spec.space.clone())?;
    let u0 = space.origin();
    let quarter = shifted_site(&space, (space.diameter() as i64 + 1) / 4)?;
    let moments = ensemble_moments(spec, Some(u0))?;
    let kernels = ensemble_kernel_decay(spec, &[u0, quarter])?;
    Ok(EnsembleReport {
        spec: spec.clone(),
        translation: translation_check(&kernels),
        moments,
        kernels,
    })
}
