//! Smooth energy cutoffs, exact time evolution through the eigenbasis, and the
//! subexponential transport moments with their Cesàro and Abel averages.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Site;
use crate::numeric::{compensated_sum, gauss_legendre, log_grid, log_sum_exp};
use crate::spectral::SpectralData;

/// Largest `ln M` that still fits in an `f64`.
pub const LN_MAX: f64 = 709.0;
pub const ABEL_HORIZON: f64 = 40.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayParams {
    pub sigma: f64,
    pub zeta: f64,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub zeta_prime: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
}

impl DecayParams {
    pub fn new(sigma: f64, zeta: f64) -> Self {
        DecayParams {
            sigma,
            zeta,
            epsilon: 0.0,
            zeta_prime: None,
            gamma: None,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_zeta_prime(mut self, zeta_prime: f64) -> Self {
        self.zeta_prime = Some(zeta_prime);
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = Some(gamma);
        self
    }

    /// σ ≥ 0 and ε ≥ 0 are accepted so that the unweighted (σ = 0) moment
    /// and the ε-free expectation bounds share the same parameter type.
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::param(format!(
                "σ must be finite and ≥ 0, got {}",
                self.sigma
            )));
        }
        if !(self.zeta > 0.0 && self.zeta <= 1.0) {
            return Err(Error::param(format!(
                "ζ must lie in (0, 1], got {}",
                self.zeta
            )));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::param(format!(
                "ε must be finite and ≥ 0, got {}",
                self.epsilon
            )));
        }
        if let Some(zp) = self.zeta_prime {
            if !(zp >= self.zeta && zp <= 1.0) {
                return Err(Error::param(format!("ζ′ must lie in [ζ, 1], got {zp}")));
            }
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g < 1.0) {
                return Err(Error::param(format!(
                    "γ must lie strictly inside (0, 1), got {g}"
                )));
            }
        }
        Ok(())
    }

    /// `σ·r^ζ`, the exponent of the spatial weight at distance `r`.
    pub fn weight_exponent(&self, r: usize) -> f64 {
        if r == 0 {
            0.0
        } else {
            self.sigma * (r as f64).powf(self.zeta)
        }
    }
}

// --- window ---------------------------------------------------------------

fn bump(y: f64) -> f64 {
    if y.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - y * y)).exp()
    }
}

/// Smooth step `F: [0,1] → [0,1]`, the normalized cumulative integral of the
/// bump `exp(−1/(1−y²))` on `[−1, 1]`. `F(0) = 0`, `F(1/2) = 1/2`, `F(1) = 1`.
pub fn smooth_step(s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    if s >= 1.0 {
        return 1.0;
    }
    let (nodes, weights) = gauss_legendre(64);
    let integral = |hi: f64| -> f64 {
        let half = (hi + 1.0) / 2.0;
        compensated_sum(
            nodes
                .iter()
                .zip(&weights)
                .map(|(z, w)| w * half * bump(-1.0 + half * (z + 1.0))),
        )
    };
    // the bump is even, so the full integral is twice the left half
    if s <= 0.5 {
        integral(2.0 * s - 1.0) / (2.0 * integral(0.0))
    } else {
        1.0 - smooth_step(1.0 - s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyWindow {
    pub lo: f64,
    pub hi: f64,
    pub margin: f64,
    /// `𝒳(E_k)` for every eigenvalue index `k`.
    pub values: Vec<f64>,
    /// No eigenvalue has `𝒳(E_k) > 0`.
    pub degenerate: bool,
}

impl EnergyWindow {
    /// `𝒳(E)`: zero outside `[lo, hi]`, one on the plateau of relative width
    /// `1 − margin`, smooth ramps of width `margin·(hi − lo)/2` on each side.
    pub fn profile(lo: f64, hi: f64, margin: f64, e: f64) -> f64 {
        if e <= lo || e >= hi {
            return 0.0;
        }
        let ramp = margin * (hi - lo) / 2.0;
        if e < lo + ramp {
            smooth_step((e - lo) / ramp)
        } else if e > hi - ramp {
            smooth_step((hi - e) / ramp)
        } else {
            1.0
        }
    }

    pub fn at(&self, e: f64) -> f64 {
        Self::profile(self.lo, self.hi, self.margin, e)
    }

    /// Window whose plateau contains the whole spectrum: `𝒳(E_k) = 1` for all `k`.
    pub fn full(sd: &SpectralData) -> EnergyWindow {
        let (a, b) = (sd.eigenvalues()[0], *sd.eigenvalues().last().unwrap());
        let pad = 0.5 * (b - a).max(1.0);
        let (lo, hi) = (a - pad, b + pad);
        make_window(sd, lo, hi, pad / (hi - lo)).expect("full window is valid")
    }

    pub fn selected(&self) -> impl Iterator<Item = usize> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(k, _)| k)
    }

    /// Groups with at least one vector inside the window.
    pub fn selected_groups(&self, sd: &SpectralData) -> Vec<usize> {
        (0..sd.groups().len())
            .filter(|&g| sd.groups()[g].indices.iter().any(|&k| self.values[k] > 0.0))
            .collect()
    }
}

/// Serializable window description: `interval = None` is [`EnergyWindow::full`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    #[serde(default)]
    pub interval: Option<(f64, f64)>,
    #[serde(default = "default_margin")]
    pub margin: f64,
}

fn default_margin() -> f64 {
    0.2
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            interval: None,
            margin: default_margin(),
        }
    }
}

impl WindowSpec {
    pub fn interval(lo: f64, hi: f64, margin: f64) -> Self {
        WindowSpec {
            interval: Some((lo, hi)),
            margin,
        }
    }

    pub fn build(&self, sd: &SpectralData) -> Result<EnergyWindow> {
        match self.interval {
            None => Ok(EnergyWindow::full(sd)),
            Some((lo, hi)) => make_window(sd, lo, hi, self.margin),
        }
    }
}

pub fn make_window(sd: &SpectralData, lo: f64, hi: f64, margin: f64) -> Result<EnergyWindow> {
    if !(lo < hi) {
        return Err(Error::param(format!(
            "window needs a < b, got [{lo}, {hi}]"
        )));
    }
    if !(margin > 0.0 && margin < 1.0) {
        return Err(Error::param(format!(
            "margin must lie in (0, 1), got {margin}"
        )));
    }
    let values: Vec<f64> = sd
        .eigenvalues()
        .iter()
        .map(|&e| EnergyWindow::profile(lo, hi, margin, e))
        .collect();
    let degenerate = values.iter().all(|&v| v == 0.0);
    Ok(EnergyWindow {
        lo,
        hi,
        margin,
        values,
        degenerate,
    })
}

// --- evolution ------------------------------------------------------------

/// Real and imaginary parts of `e^{−itH}𝒳(H)δ_u` for several times at once,
/// as `n × times` matrices.
fn evolve_columns(
    sd: &SpectralData,
    window: &EnergyWindow,
    u: Site,
    times: &[f64],
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = sd.dim();
    let kept: Vec<usize> = window.selected().collect();
    if kept.is_empty() {
        return (
            DMatrix::zeros(n, times.len()),
            DMatrix::zeros(n, times.len()),
        );
    }
    let v = DMatrix::from_fn(n, kept.len(), |i, a| sd.vectors()[(i, kept[a])]);
    let amp: Vec<f64> = kept
        .iter()
        .map(|&k| window.values[k] * sd.vectors()[(u, k)])
        .collect();
    let re = DMatrix::from_fn(kept.len(), times.len(), |a, j| {
        amp[a] * (times[j] * sd.eigenvalues()[kept[a]]).cos()
    });
    let im = DMatrix::from_fn(kept.len(), times.len(), |a, j| {
        -amp[a] * (times[j] * sd.eigenvalues()[kept[a]]).sin()
    });
    (&v * re, &v * im)
}

/// `‖χ_X e^{−itH}𝒳(H) χ_U‖₂`.
pub fn evolved_kernel(
    sd: &SpectralData,
    window: &EnergyWindow,
    x: &[Site],
    u: &[Site],
    t: f64,
) -> f64 {
    let mut total = 0.0;
    for &b in u {
        let (re, im) = evolve_columns(sd, window, b, &[t]);
        total += x
            .iter()
            .map(|&a| re[(a, 0)].powi(2) + im[(a, 0)].powi(2))
            .sum::<f64>();
    }
    total.sqrt()
}

/// `|⟨δ_x, e^{−itH}𝒳(H)δ_u⟩|` for all sites `x` and every time in `times`,
/// as rows of a `times × n` table.
pub fn kernel_profiles(
    sd: &SpectralData,
    window: &EnergyWindow,
    u: Site,
    times: &[f64],
) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(times.len());
    for chunk in times.chunks(256) {
        let (re, im) = evolve_columns(sd, window, u, chunk);
        for j in 0..chunk.len() {
            out.push(
                (0..sd.dim())
                    .map(|x| re[(x, j)].hypot(im[(x, j)]))
                    .collect(),
            );
        }
    }
    out
}

/// `sup_t |⟨δ_x, e^{−itH}𝒳(H)δ_u⟩|` over `times`, per site.
pub fn sup_kernel(sd: &SpectralData, window: &EnergyWindow, u: Site, times: &[f64]) -> Vec<f64> {
    let mut sup = vec![0.0f64; sd.dim()];
    for chunk in times.chunks(256) {
        let (re, im) = evolve_columns(sd, window, u, chunk);
        for j in 0..chunk.len() {
            for (x, s) in sup.iter_mut().enumerate() {
                *s = s.max(re[(x, j)].hypot(im[(x, j)]));
            }
        }
    }
    sup
}

fn log_weights(sd: &SpectralData, u: Site, params: &DecayParams) -> Vec<f64> {
    (0..sd.dim())
        .map(|x| params.weight_exponent(sd.space().metric(x, u)))
        .collect()
}

/// `ln M_u(σ,ζ,𝒳,t)` for each time, accumulated in log space.
pub fn moment_ln_series(
    sd: &SpectralData,
    window: &EnergyWindow,
    u: Site,
    params: &DecayParams,
    times: &[f64],
) -> Result<Vec<f64>> {
    params.validate()?;
    let lw = log_weights(sd, u, params);
    let mut out = Vec::with_capacity(times.len());
    let mut terms = vec![0.0; sd.dim()];
    for chunk in times.chunks(256) {
        let (re, im) = evolve_columns(sd, window, u, chunk);
        for j in 0..chunk.len() {
            for x in 0..sd.dim() {
                let p = re[(x, j)].powi(2) + im[(x, j)].powi(2);
                terms[x] = if p > 0.0 {
                    lw[x] + p.ln()
                } else {
                    f64::NEG_INFINITY
                };
            }
            out.push(log_sum_exp(&terms));
        }
    }
    Ok(out)
}

pub fn moment_ln(
    sd: &SpectralData,
    window: &EnergyWindow,
    u: Site,
    params: &DecayParams,
    t: f64,
) -> Result<f64> {
    Ok(moment_ln_series(sd, window, u, params, &[t])?[0])
}

fn checked_exp(ln: f64) -> Result<f64> {
    if ln > LN_MAX {
        Err(Error::Overflow { log_value: ln })
    } else {
        Ok(ln.exp())
    }
}

/// `M_u(σ,ζ,𝒳,t) = Σ_x e^{σ d(x,u)^ζ} ‖χ_x e^{−itH}𝒳(H) χ_u‖₂²`.
pub fn moment(
    sd: &SpectralData,
    window: &EnergyWindow,
    u: Site,
    params: &DecayParams,
    t: f64,
) -> Result<f64> {
    checked_exp(moment_ln(sd, window, u, params, t)?)
}

/// Infinite-time Cesàro limit: the diagonal terms
/// `Σ_E Σ_x e^{σ d(x,u)^ζ} ‖χ_x 𝒳(H) P_E χ_u‖₂²`, with the whole group
/// projector inside numerically degenerate groups.
pub fn liminf_cesaro(
    sd: &SpectralData,
    window: &EnergyWindow,
    u: Site,
    params: &DecayParams,
) -> Result<f64> {
    params.validate()?;
    let lw = log_weights(sd, u, params);
    let mut terms = Vec::new();
    for g in sd.groups() {
        if g.indices.iter().all(|&k| window.values[k] == 0.0) {
            continue;
        }
        for (x, w) in lw.iter().enumerate() {
            let q: f64 = g
                .indices
                .iter()
                .map(|&k| window.values[k] * sd.vectors()[(x, k)] * sd.vectors()[(u, k)])
                .sum();
            if q != 0.0 {
                terms.push(w + 2.0 * q.abs().ln());
            }
        }
    }
    checked_exp(log_sum_exp(&terms))
}

// --- series -----------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    /// Report times; `t = 0` is always included.
    pub times: Vec<f64>,
    /// Uniform integration step for the averages; `None` picks `π/(8Δ)` with
    /// `Δ` the width of the windowed spectrum.
    #[serde(default)]
    pub step: Option<f64>,
    /// Skip the Cesàro/Abel integration (only values and the supremum).
    #[serde(default)]
    pub values_only: bool,
}

impl TimeGrid {
    pub fn log(lo: f64, hi: f64, n: usize) -> TimeGrid {
        let mut times = vec![0.0];
        times.extend(log_grid(lo, hi, n));
        TimeGrid {
            times,
            step: None,
            values_only: false,
        }
    }

    pub fn values_only(mut self) -> Self {
        self.values_only = true;
        self
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = Some(step);
        self
    }
}

impl Default for TimeGrid {
    /// 200 log-spaced points in `[0.1, 10⁴]` plus `t = 0`.
    fn default() -> Self {
        TimeGrid::log(0.1, 1e4, 200)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSeries {
    pub params: DecayParams,
    pub u: Site,
    pub window_interval: (f64, f64),
    pub window_margin: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// `(1/T)∫₀^T M dt` at every report time (`T = 0` gives `M(0)`).
    pub cesaro: Vec<f64>,
    /// `(1/T)∫₀^{min(40T, t_end)} e^{−t/T} M dt`.
    pub abel: Vec<f64>,
    /// Bound on the Abel tail beyond the integration horizon,
    /// `max M · e^{−horizon/T}`.
    pub abel_tail: Vec<f64>,
    pub sup_over_grid: f64,
    /// Integration step actually used (0 when averages were skipped).
    pub step: f64,
    pub degenerate_window: bool,
}

fn trapezoid_cumulative(t: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; t.len()];
    let mut acc = 0.0;
    let mut comp = 0.0;
    for i in 1..t.len() {
        let y = 0.5 * (t[i] - t[i - 1]) * (f[i] + f[i - 1]) - comp;
        let s = acc + y;
        comp = (s - acc) - y;
        acc = s;
        out[i] = acc;
    }
    out
}

/// Cesàro averages of a sampled function at each sample time.
pub fn cesaro_average(t: &[f64], f: &[f64]) -> Vec<f64> {
    let cum = trapezoid_cumulative(t, f);
    t.iter()
        .zip(&cum)
        .zip(f)
        .map(|((&tt, &c), &v)| if tt > 0.0 { c / tt } else { v })
        .collect()
}

/// Abel average `(1/T)∫₀^{min(40T, t_last)} e^{−t/T} f dt` by the trapezoid rule.
pub fn abel_average(t: &[f64], f: &[f64], big_t: f64) -> f64 {
    if big_t <= 0.0 {
        return f.first().copied().unwrap_or(0.0);
    }
    let horizon = ABEL_HORIZON * big_t;
    let g: Vec<(f64, f64)> = t
        .iter()
        .zip(f)
        .take_while(|(&tt, _)| tt <= horizon)
        .map(|(&tt, &v)| (tt, (-tt / big_t).exp() * v / big_t))
        .collect();
    compensated_sum(
        g.windows(2)
            .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[1].1 + w[0].1)),
    )
}

impl MomentSeries {
    pub fn compute(
        sd: &SpectralData,
        window: &EnergyWindow,
        u: Site,
        params: &DecayParams,
        grid: &TimeGrid,
    ) -> Result<MomentSeries> {
        let mut times = grid.times.clone();
        if !times.contains(&0.0) {
            times.push(0.0);
        }
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::param("report times must be finite and ≥ 0"));
        }
        times.sort_by(f64::total_cmp);
        times.dedup();
        let values = moment_ln_series(sd, window, u, params, &times)?
            .into_iter()
            .map(checked_exp)
            .collect::<Result<Vec<f64>>>()?;
        let sup_over_grid = values.iter().copied().fold(0.0, f64::max);
        let n = times.len();
        if grid.values_only || window.degenerate {
            // an empty window averages to zero; skipped averages are NaN
            let skipped = if window.degenerate { 0.0 } else { f64::NAN };
            return Ok(MomentSeries {
                params: *params,
                u,
                window_interval: (window.lo, window.hi),
                window_margin: window.margin,
                cesaro: vec![skipped; n],
                abel: vec![skipped; n],
                abel_tail: vec![0.0; n],
                times,
                values,
                sup_over_grid,
                step: 0.0,
                degenerate_window: window.degenerate,
            });
        }
        let t_end = *times.last().unwrap();
        let width = {
            let sel: Vec<f64> = window.selected().map(|k| sd.eigenvalues()[k]).collect();
            sel.last().unwrap() - sel[0]
        };
        let step = grid.step.unwrap_or(if width > 0.0 {
            std::f64::consts::PI / (8.0 * width)
        } else {
            t_end.max(1.0)
        });
        // uniform mesh merged with the report times
        let mesh_len = (t_end / step).ceil() as usize;
        let mut mesh: Vec<f64> = (0..=mesh_len)
            .map(|i| (i as f64 * step).min(t_end))
            .collect();
        mesh.extend(&times);
        mesh.sort_by(f64::total_cmp);
        mesh.dedup();
        let mesh_values = moment_ln_series(sd, window, u, params, &mesh)?
            .into_iter()
            .map(checked_exp)
            .collect::<Result<Vec<f64>>>()?;
        let cum = trapezoid_cumulative(&mesh, &mesh_values);
        let sup_mesh = mesh_values.iter().copied().fold(sup_over_grid, f64::max);
        let mut cesaro = Vec::with_capacity(n);
        let mut abel = Vec::with_capacity(n);
        let mut abel_tail = Vec::with_capacity(n);
        for (i, &t) in times.iter().enumerate() {
            let pos = mesh.partition_point(|&m| m < t);
            cesaro.push(if t > 0.0 { cum[pos] / t } else { values[i] });
            abel.push(abel_average(&mesh, &mesh_values, t));
            let horizon = (ABEL_HORIZON * t).min(t_end);
            abel_tail.push(if t > 0.0 {
                sup_mesh * (-horizon / t).exp()
            } else {
                0.0
            });
        }
        Ok(MomentSeries {
            params: *params,
            u,
            window_interval: (window.lo, window.hi),
            window_margin: window.margin,
            times,
            values,
            cesaro,
            abel,
            abel_tail,
            sup_over_grid,
            step,
            degenerate_window: false,
        })
    }

    /// Cesàro average at the report time closest to `t`.
    pub fn cesaro_at(&self, t: f64) -> f64 {
        let i = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(i, _)| i)
            .unwrap();
        self.cesaro[i]
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "M", "cesaro_T", "abel_T"])?;
        for i in 0..self.times.len() {
            w.write_record([
                format!("{:e}", self.times[i]),
                format!("{:e}", self.values[i]),
                format!("{:e}", self.cesaro[i]),
                format!("{:e}", self.abel[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn sidecar(&self) -> serde_json::Value {
        serde_json::json!({
            "params": self.params,
            "u": self.u,
            "window_interval": [self.window_interval.0, self.window_interval.1],
            "window_margin": self.window_margin,
            "sup_over_grid": self.sup_over_grid,
            "integration_step": self.step,
            "abel_horizon_factor": ABEL_HORIZON,
            "max_abel_tail": self.abel_tail.iter().copied().fold(0.0, f64::max),
            "degenerate_window": self.degenerate_window,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{SiteSpace, SpaceSpec};
    use crate::operators::{build_anderson, build_laplacian};
    use crate::spectral::diagonalize;
    use proptest::prelude::*;

    fn path(n: usize) -> SpectralData {
        diagonalize(&build_laplacian(
            &SiteSpace::build(SpaceSpec::Linear { n }).unwrap(),
        ))
        .unwrap()
    }

    fn anderson(n: usize, seed: u64) -> SpectralData {
        let s = SiteSpace::build(SpaceSpec::LatticeBox {
            dim: 1,
            side: n,
            center: None,
        })
        .unwrap();
        diagonalize(&build_anderson(&s, 4.0, seed).unwrap()).unwrap()
    }

    /// Exact Cesàro average from the spectral representation:
    /// `(1/T)∫₀^T e^{−iωt} dt = (1 − e^{−iωT})/(iωT)`.
    fn exact_cesaro(
        sd: &SpectralData,
        w: &EnergyWindow,
        u: Site,
        p: &DecayParams,
        big_t: f64,
    ) -> f64 {
        let n = sd.dim();
        let mut total = 0.0;
        for k in 0..n {
            for l in 0..n {
                let mut a = 0.0;
                for x in 0..n {
                    a += p.weight_exponent(sd.space().metric(x, u)).exp()
                        * sd.vectors()[(x, k)]
                        * sd.vectors()[(x, l)];
                }
                let c = w.values[k] * w.values[l] * sd.vectors()[(u, k)] * sd.vectors()[(u, l)] * a;
                let om = sd.eigenvalues()[l] - sd.eigenvalues()[k];
                let avg = if (om * big_t).abs() < 1e-12 {
                    1.0
                } else {
                    (om * big_t).sin() / (om * big_t)
                };
                total += c * avg;
            }
        }
        total
    }

    #[test]
    fn smooth_step_shape() {
        assert_eq!(smooth_step(0.0), 0.0);
        assert_eq!(smooth_step(1.0), 1.0);
        assert!((smooth_step(0.5) - 0.5).abs() < 1e-15);
        let mut prev = 0.0;
        for i in 1..100 {
            let v = smooth_step(i as f64 / 100.0);
            assert!(v >= prev && v <= 1.0);
            prev = v;
        }
        // symmetric ramp
        assert!((smooth_step(0.3) + smooth_step(0.7) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn window_examples() {
        let sd = path(5);
        let full = EnergyWindow::full(&sd);
        assert!(full.values.iter().all(|&v| v == 1.0));
        let below = make_window(&sd, -10.0, -5.0, 0.2).unwrap();
        assert!(below.degenerate && below.values.iter().all(|&v| v == 0.0));
        // ramp midpoint: a + ramp/2
        let (a, b, m) = (0.0, 4.0, 0.5);
        let ramp = m * (b - a) / 2.0;
        assert!((EnergyWindow::profile(a, b, m, a + ramp / 2.0) - 0.5).abs() < 1e-14);
        assert_eq!(EnergyWindow::profile(a, b, m, 2.0), 1.0);
        assert!(make_window(&sd, 1.0, 0.0, 0.2).is_err());
        assert!(make_window(&sd, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn kernel_examples() {
        let sd = path(2);
        let w = EnergyWindow::full(&sd);
        assert!((evolved_kernel(&sd, &w, &[0], &[0], 0.0) - 1.0).abs() < 1e-14);
        for t in [0.3, 1.7, 12.0] {
            assert!((evolved_kernel(&sd, &w, &[0, 1], &[0], t) - 1.0).abs() < 1e-14);
            assert!((evolved_kernel(&sd, &w, &[1], &[0], t) - t.sin().abs()).abs() < 1e-14);
        }
    }

    #[test]
    fn moment_examples() {
        let sd = path(2);
        let w = EnergyWindow::full(&sd);
        let p = DecayParams::new(1.0, 1.0);
        assert!((moment(&sd, &w, 0, &p, 0.0).unwrap() - 1.0).abs() < 1e-14);
        let t = std::f64::consts::FRAC_PI_2;
        assert!((moment(&sd, &w, 0, &p, t).unwrap() - std::f64::consts::E).abs() < 1e-13);
        let sd = anderson(30, 4);
        let win = make_window(&sd, 0.0, 3.0, 0.3).unwrap();
        for t in [0.0, 1.0, 50.0] {
            assert!(moment(&sd, &win, 3, &DecayParams::new(0.0, 1.0), t).unwrap() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn moment_overflow_is_reported() {
        let sd = path(40);
        let w = EnergyWindow::full(&sd);
        let p = DecayParams::new(30.0, 1.0);
        let ln = moment_ln(&sd, &w, 0, &p, 100.0).unwrap();
        assert!(ln > LN_MAX);
        assert!(matches!(
            moment(&sd, &w, 0, &p, 100.0),
            Err(Error::Overflow { .. })
        ));
    }

    #[test]
    fn averages_of_simple_series() {
        let t: Vec<f64> = (0..=20000).map(|i| i as f64 * 0.01).collect();
        let c = vec![3.0; t.len()];
        let ces = cesaro_average(&t, &c);
        assert!(ces.iter().all(|v| (v - 3.0).abs() < 1e-12));
        let ab = abel_average(&t, &c, 2.0);
        assert!((ab - 3.0 * (1.0 - (-40f64).exp())).abs() < 1e-4);
        let cos2: Vec<f64> = t.iter().map(|x| x.cos().powi(2)).collect();
        let ces = cesaro_average(&t, &cos2);
        let big_t = *t.last().unwrap();
        let exact = 0.5 + (2.0 * big_t).sin() / (4.0 * big_t);
        assert!((ces.last().unwrap() - exact).abs() < 1e-6);
        assert!((ces.last().unwrap() - 0.5).abs() < 2e-3);
    }

    #[test]
    fn series_matches_exact_cesaro_and_liminf() {
        let sd = anderson(24, 2);
        let w = EnergyWindow::full(&sd);
        let p = DecayParams::new(0.3, 1.0);
        let grid = TimeGrid::log(0.1, 500.0, 40);
        let s = MomentSeries::compute(&sd, &w, 12, &p, &grid).unwrap();
        for (i, &t) in s.times.iter().enumerate().skip(1) {
            let exact = exact_cesaro(&sd, &w, 12, &p, t);
            assert!(
                (s.cesaro[i] - exact).abs() < 1e-3 * exact,
                "T={t}: {} vs {exact}",
                s.cesaro[i]
            );
        }
        let lim = liminf_cesaro(&sd, &w, 12, &p).unwrap();
        let far = exact_cesaro(&sd, &w, 12, &p, 1e9);
        assert!((lim - far).abs() < 1e-4 * lim);
        assert!(lim <= s.sup_over_grid);
        for i in 0..s.times.len() {
            let sup_to_t = s.values[..=i].iter().copied().fold(0.0, f64::max);
            assert!(s.cesaro[i] <= sup_to_t * (1.0 + 1e-9) || i > 0);
        }
    }

    #[test]
    fn liminf_special_cases() {
        let sd = path(1);
        let w = EnergyWindow::full(&sd);
        let p = DecayParams::new(1.0, 1.0);
        assert!(
            (liminf_cesaro(&sd, &w, 0, &p).unwrap() - moment(&sd, &w, 0, &p, 0.0).unwrap()).abs()
                < 1e-15
        );
        let sd = anderson(20, 9);
        let w = EnergyWindow::full(&sd);
        assert!(
            (liminf_cesaro(&sd, &w, 5, &DecayParams::new(0.0, 1.0)).unwrap() - 1.0).abs() < 1e-12
        );
    }

    #[test]
    fn degenerate_window_series_is_zero() {
        let sd = path(4);
        let w = make_window(&sd, 10.0, 11.0, 0.5).unwrap();
        let s = MomentSeries::compute(
            &sd,
            &w,
            0,
            &DecayParams::new(0.5, 1.0),
            &TimeGrid::log(0.1, 10.0, 5),
        )
        .unwrap();
        assert!(s
            .values
            .iter()
            .chain(&s.cesaro)
            .chain(&s.abel)
            .all(|&v| v == 0.0));
    }

    #[test]
    fn csv_export() {
        let dir = tempfile::tempdir().unwrap();
        let sd = path(3);
        let w = EnergyWindow::full(&sd);
        let s = MomentSeries::compute(
            &sd,
            &w,
            0,
            &DecayParams::new(0.5, 1.0),
            &TimeGrid::log(0.1, 10.0, 5),
        )
        .unwrap();
        let p = dir.path().join("m.csv");
        s.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("t,M,cesaro_T,abel_T\n"));
        assert_eq!(text.lines().count(), 7);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn monotone_in_sigma_and_time_symmetric(seed in any::<u64>(), s1 in 0.0f64..1.0, ds in 0.0f64..1.0, t in 0.0f64..50.0, u in 0usize..16) {
            let sd = anderson(16, seed);
            let w = EnergyWindow::full(&sd);
            let a = moment(&sd, &w, u, &DecayParams::new(s1, 0.7), t).unwrap();
            let b = moment(&sd, &w, u, &DecayParams::new(s1 + ds, 0.7), t).unwrap();
            prop_assert!(a <= b * (1.0 + 1e-12));
            let back = moment(&sd, &w, u, &DecayParams::new(s1, 0.7), -t).unwrap();
            prop_assert!((a - back).abs() <= 1e-12 * a);
        }
    }
}
