//! Localization criteria as measurable quantities: projector and kernel decay
//! (SULP, SUDL), the `A_k` ledger, eigenfunction correlations and centers
//! (SUDEC, SULE and their `+` forms), and the center census.
//!
//! Every fitted bound is a certified envelope (see [`crate::envelope`]).

mod centers;
mod eigenfunctions;
mod projections;

pub use centers::*;
pub use eigenfunctions::*;
pub use projections::*;

use serde::{Deserialize, Serialize};

use crate::dynamics::EnergyWindow;
use crate::error::{Error, Result};
use crate::geometry::{Site, SiteSpace};
use crate::operators::WeightOperator;
use crate::spectral::{alpha_phi, SpectralData};

/// Rate function `f` multiplying the SUDEC/SULE bounds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateFunction {
    /// `f(s) = s`, plain SUDEC.
    #[default]
    Identity,
    /// `f ≡ 1`.
    One,
    /// `f(s) = s^p`.
    Power { p: f64 },
}

impl RateFunction {
    pub fn eval(&self, s: f64) -> f64 {
        match *self {
            RateFunction::Identity => s,
            RateFunction::One => 1.0,
            RateFunction::Power { p } => s.powf(p),
        }
    }
}

/// Orthonormal vectors on a site space with their α-weights.
#[derive(Clone, Debug)]
pub struct Family<'a> {
    pub space: &'a SiteSpace,
    pub vectors: Vec<&'a [f64]>,
    pub alpha: Vec<f64>,
    /// Caller-side identifier of each vector (eigenvector index).
    pub labels: Vec<usize>,
}

impl<'a> Family<'a> {
    /// Eigenvectors inside the window, optionally restricted to `selection`.
    pub fn from_spectral(
        sd: &'a SpectralData,
        window: &EnergyWindow,
        selection: Option<&[usize]>,
        t: &WeightOperator,
    ) -> Result<Family<'a>> {
        let labels: Vec<usize> = match selection {
            Some(s) => s
                .iter()
                .copied()
                .filter(|&k| window.values[k] > 0.0)
                .collect(),
            None => window.selected().collect(),
        };
        if labels.is_empty() {
            return Err(Error::param(
                "selection contains no eigenvector inside the window",
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&k| k >= sd.dim()) {
            return Err(Error::param(format!(
                "eigenvector index {bad} out of range"
            )));
        }
        let vectors: Vec<&[f64]> = labels.iter().map(|&k| sd.vector(k)).collect();
        let alpha = vectors.iter().map(|v| alpha_phi(v, t)).collect();
        Ok(Family {
            space: sd.space(),
            vectors,
            alpha,
            labels,
        })
    }

    pub fn from_vectors(
        space: &'a SiteSpace,
        vectors: &'a [Vec<f64>],
        t: &WeightOperator,
    ) -> Result<Family<'a>> {
        if vectors.is_empty() {
            return Err(Error::param("empty vector family"));
        }
        if vectors.iter().any(|v| v.len() != space.len()) {
            return Err(Error::param("vector length does not match the site space"));
        }
        Ok(Family {
            space,
            alpha: vectors.iter().map(|v| alpha_phi(v, t)).collect(),
            vectors: vectors.iter().map(|v| v.as_slice()).collect(),
            labels: (0..vectors.len()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Argmax of `|v(x)|`, ties to the smallest site.
pub fn center_of(v: &[f64]) -> Site {
    let mut best = 0;
    for (x, a) in v.iter().enumerate() {
        if a.abs() > v[best].abs() {
            best = x;
        }
    }
    best
}

/// Point of a fitted data set that came closest to (or exceeded) the bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    /// Vector or group index the point came from.
    pub item: usize,
    pub x: Site,
    pub u: Site,
    pub value: f64,
    /// `ln value − ln bound`; positive means a violation.
    pub log_excess: f64,
}

/// Dense table of maxima over cells `(r, s)`, the only coordinates an
/// envelope constraint depends on. Reducing to cell maxima is exact.
#[derive(Clone, Debug)]
pub(crate) struct CellMax {
    s_len: usize,
    y: Vec<f64>,
    who: Vec<(usize, Site, Site)>,
}

impl CellMax {
    pub(crate) fn new(r_max: usize, s_max: usize) -> Self {
        let cells = (r_max + 1) * (s_max + 1);
        CellMax {
            s_len: s_max + 1,
            y: vec![f64::NEG_INFINITY; cells],
            who: vec![(usize::MAX, 0, 0); cells],
        }
    }

    pub(crate) fn offer(&mut self, r: usize, s: usize, y: f64, who: (usize, Site, Site)) {
        let i = r * self.s_len + s;
        if y > self.y[i] || (y == self.y[i] && who < self.who[i]) {
            self.y[i] = y;
            self.who[i] = who;
        }
    }

    pub(crate) fn merge(mut self, other: CellMax) -> CellMax {
        for i in 0..self.y.len() {
            if other.y[i] > self.y[i] || (other.y[i] == self.y[i] && other.who[i] < self.who[i]) {
                self.y[i] = other.y[i];
                self.who[i] = other.who[i];
            }
        }
        self
    }

    pub(crate) fn points(
        &self,
    ) -> (
        Vec<crate::envelope::EnvelopePoint>,
        Vec<(usize, Site, Site)>,
    ) {
        let mut pts = Vec::new();
        let mut who = Vec::new();
        for (i, &y) in self.y.iter().enumerate() {
            if y.is_finite() {
                pts.push(crate::envelope::EnvelopePoint {
                    r: (i / self.s_len) as f64,
                    s: (i % self.s_len) as f64,
                    y,
                });
                who.push(self.who[i]);
            }
        }
        (pts, who)
    }
}

pub(crate) fn witness_of(
    fit: &crate::envelope::DecayFit,
    who: &[(usize, Site, Site)],
    prefactor: impl Fn(usize) -> f64,
    points: &[crate::envelope::EnvelopePoint],
) -> Option<Witness> {
    fit.worst.map(|(i, excess)| {
        let (item, x, u) = who[i];
        Witness {
            item,
            x,
            u,
            value: points[i].y.exp() * prefactor(item),
            log_excess: excess,
        }
    })
}
