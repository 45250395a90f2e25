//! Certified envelope fitting: majorants `value ≤ C·e^{ε s^ζ_ε}·e^{−σ r^ζ}`
//! that hold at every data point, never regressions through the data.
//!
//! On finite data any σ is feasible with a large enough `C`, so the fit is
//! anchored: with `c₀ = max ln(value)` the constant is capped at
//! `SLACK·e^{c₀}`, and `σ̂` is the largest rate compatible with that cap.

use serde::{Deserialize, Serialize};

use crate::dynamics::DecayParams;
use crate::numeric::linear_fit;

/// Allowed ratio between the certified constant and the largest data value.
pub const SLACK: f64 = 10.0;
pub const ZETA_GRID: [f64; 4] = [0.25, 0.5, 0.75, 1.0];
/// Relative rounding allowance when rechecking a fitted envelope.
const RECHECK_TOL: f64 = 1e-12;

/// One data point: `value = e^{y}·prefactor` at distance `r` with ε-argument `s`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopePoint {
    pub r: f64,
    pub s: f64,
    /// `ln(value / prefactor)`; `-inf` for a vanishing value.
    pub y: f64,
}

impl EnvelopePoint {
    pub fn new(r: usize, s: usize, value: f64, prefactor: f64) -> Self {
        EnvelopePoint {
            r: r as f64,
            s: s as f64,
            y: if value > 0.0 {
                (value / prefactor).ln()
            } else {
                f64::NEG_INFINITY
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub zeta_hat: f64,
    pub sigma_hat: f64,
    pub epsilon_hat: f64,
    pub c_hat: f64,
    /// Exponent of the ε-factor (ζ itself unless a mixed variant is fitted).
    pub epsilon_exponent: f64,
    /// R² of `ln value` against `r^ζ̂`, informational only.
    pub r2: f64,
    pub requested: DecayParams,
    pub violations: usize,
    /// Index and log-excess of the worst point under the fitted envelope.
    pub worst: Option<(usize, f64)>,
    pub points: usize,
    pub verdict: bool,
}

impl DecayFit {
    /// `ln` of the envelope at a point.
    pub fn ln_bound(&self, p: &EnvelopePoint) -> f64 {
        self.c_hat.ln() + self.epsilon_hat * pow(p.s, self.epsilon_exponent)
            - self.sigma_hat * pow(p.r, self.zeta_hat)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    /// Fit at the requested ζ; carries the verdict.
    pub at_requested: DecayFit,
    /// Largest grid ζ whose fit passes, else the requested fit.
    pub best: DecayFit,
    pub per_zeta: Vec<DecayFit>,
}

impl EnvelopeFit {
    pub fn verdict(&self) -> bool {
        self.at_requested.verdict
    }
}

fn pow(x: f64, e: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.powf(e)
    }
}

/// Smallest `C` with `e^{y} ≤ C e^{ε s^{ζ_ε}} e^{−σ r^ζ}` at every point, in log form.
pub fn required_ln_constant(
    points: &[EnvelopePoint],
    sigma: f64,
    zeta: f64,
    epsilon: f64,
    eps_exp: f64,
) -> f64 {
    points
        .iter()
        .filter(|p| p.y.is_finite())
        .map(|p| p.y + sigma * pow(p.r, zeta) - epsilon * pow(p.s, eps_exp))
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn required_constant(
    points: &[EnvelopePoint],
    sigma: f64,
    zeta: f64,
    epsilon: f64,
    eps_exp: f64,
) -> f64 {
    required_ln_constant(points, sigma, zeta, epsilon, eps_exp).exp()
}

fn anchor(points: &[EnvelopePoint]) -> f64 {
    points.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max)
}

/// Largest σ with `y ≤ c₀ + ln SLACK + ε s^{ζ_ε} − σ r^ζ` at every point.
pub fn max_sigma(points: &[EnvelopePoint], zeta: f64, epsilon: f64, eps_exp: f64) -> f64 {
    let budget = anchor(points) + SLACK.ln();
    points
        .iter()
        .filter(|p| p.y.is_finite() && p.r > 0.0)
        .map(|p| (budget + epsilon * pow(p.s, eps_exp) - p.y) / pow(p.r, zeta))
        .fold(f64::INFINITY, f64::min)
}

/// Smallest ε ≥ 0 for which σ is certifiable within the budget, `None` when a
/// point with `s = 0` already rules σ out.
pub fn min_epsilon(points: &[EnvelopePoint], sigma: f64, zeta: f64, eps_exp: f64) -> Option<f64> {
    let budget = anchor(points) + SLACK.ln();
    let mut eps = 0.0f64;
    for p in points.iter().filter(|p| p.y.is_finite()) {
        let need = p.y + sigma * pow(p.r, zeta) - budget;
        if need <= 0.0 {
            continue;
        }
        let sp = pow(p.s, eps_exp);
        if sp == 0.0 {
            return None;
        }
        eps = eps.max(need / sp);
    }
    Some(eps)
}

fn recheck(points: &[EnvelopePoint], fit: &mut DecayFit) {
    let mut violations = 0;
    let mut worst: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        if !p.y.is_finite() {
            continue;
        }
        let excess = p.y - fit.ln_bound(p);
        if worst.is_none_or(|(_, w)| excess > w) {
            worst = Some((i, excess));
        }
        if excess > RECHECK_TOL * (1.0 + p.y.abs()) {
            violations += 1;
        }
    }
    fit.violations = violations;
    fit.worst = worst;
}

/// Certified fit at a single ζ.
pub fn fit_at(
    points: &[EnvelopePoint],
    zeta: f64,
    requested: &DecayParams,
    eps_exp: Option<f64>,
) -> DecayFit {
    let eps_exp = eps_exp.unwrap_or(zeta);
    let finite: Vec<&EnvelopePoint> = points.iter().filter(|p| p.y.is_finite()).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = finite.iter().map(|p| (pow(p.r, zeta), p.y)).unzip();
    let r2 = linear_fit(&xs, &ys).map(|f| f.2).unwrap_or(f64::NAN);
    if finite.is_empty() {
        return DecayFit {
            zeta_hat: zeta,
            sigma_hat: f64::INFINITY,
            epsilon_hat: 0.0,
            c_hat: 0.0,
            epsilon_exponent: eps_exp,
            r2,
            requested: *requested,
            violations: 0,
            worst: None,
            points: points.len(),
            verdict: true,
        };
    }
    let sigma_req = max_sigma(points, zeta, requested.epsilon, eps_exp);
    let (sigma_hat, epsilon_hat) = if sigma_req >= requested.sigma {
        // ε minimized last, σ re-maximized at that ε
        let eps = min_epsilon(points, requested.sigma, zeta, eps_exp)
            .unwrap_or(requested.epsilon)
            .min(requested.epsilon);
        (
            max_sigma(points, zeta, eps, eps_exp).max(requested.sigma),
            eps,
        )
    } else {
        (sigma_req, requested.epsilon)
    };
    let sigma_hat = if sigma_hat.is_finite() {
        sigma_hat
    } else {
        f64::MAX.sqrt()
    };
    let ln_c = required_ln_constant(points, sigma_hat, zeta, epsilon_hat, eps_exp);
    let mut fit = DecayFit {
        zeta_hat: zeta,
        sigma_hat,
        epsilon_hat,
        c_hat: ln_c.exp(),
        epsilon_exponent: eps_exp,
        r2,
        requested: *requested,
        violations: 0,
        worst: None,
        points: points.len(),
        verdict: false,
    };
    recheck(points, &mut fit);
    fit.verdict = fit.violations == 0 && fit.sigma_hat >= requested.sigma;
    fit
}

/// Fits over the ζ grid (plus the requested ζ); the verdict is the one at
/// the requested ζ.
pub fn fit_envelope(
    points: &[EnvelopePoint],
    requested: &DecayParams,
    eps_exp: Option<f64>,
) -> EnvelopeFit {
    let mut zetas: Vec<f64> = ZETA_GRID.to_vec();
    if !zetas.contains(&requested.zeta) {
        zetas.push(requested.zeta);
        zetas.sort_by(f64::total_cmp);
    }
    let per_zeta: Vec<DecayFit> = zetas
        .iter()
        .map(|&z| fit_at(points, z, requested, eps_exp))
        .collect();
    let at_requested = per_zeta
        .iter()
        .find(|f| f.zeta_hat == requested.zeta)
        .unwrap()
        .clone();
    let best = per_zeta
        .iter()
        .rev()
        .find(|f| f.verdict)
        .cloned()
        .unwrap_or_else(|| at_requested.clone());
    EnvelopeFit {
        at_requested,
        best,
        per_zeta,
    }
}
