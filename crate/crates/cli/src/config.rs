use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dynloc::diagnostics::RateFunction;
use dynloc::dynamics::{DecayParams, TimeGrid, WindowSpec};
use dynloc::geometry::{Site, SiteSpace, SpaceSpec};
use dynloc::operators::WeightKind;

pub const SCHEMA: &str = "dynloc-config/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Must equal [`SCHEMA`].
    pub schema: String,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub window: WindowSpec,
    #[serde(default)]
    pub params: ParamsBlock,
    /// Defaults to `⟨x⟩^{d/2+1/2}` on lattices and `e^{|u|^{1/2}}` on graphs.
    #[serde(default)]
    pub weight: Option<WeightKind>,
    /// Defaults to the origin of the space.
    #[serde(default)]
    pub base_site: Option<Site>,
    #[serde(default)]
    pub time_grid: TimeGrid,
    #[serde(default)]
    pub checks: Vec<CheckSpec>,
    #[serde(default)]
    pub ensemble: Option<EnsembleBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Required except for cluster and imported operators.
    #[serde(default)]
    pub space: Option<SpaceSpec>,
    pub operator: OperatorSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    Laplacian,
    Anderson {
        disorder: f64,
        #[serde(default)]
        seed: u64,
    },
    Cluster {
        base: SpaceSpec,
        copies: usize,
        separation: usize,
    },
    Import {
        header: PathBuf,
        triplets: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsBlock {
    #[serde(default = "default_sigma")]
    pub sigma: Vec<f64>,
    #[serde(default = "default_zeta")]
    pub zeta: Vec<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: Vec<f64>,
    #[serde(default)]
    pub zeta_prime: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
}

fn default_sigma() -> Vec<f64> {
    vec![0.1]
}

fn default_zeta() -> Vec<f64> {
    vec![1.0]
}

fn default_epsilon() -> Vec<f64> {
    vec![0.0]
}

impl Default for ParamsBlock {
    fn default() -> Self {
        ParamsBlock {
            sigma: default_sigma(),
            zeta: default_zeta(),
            epsilon: default_epsilon(),
            zeta_prime: None,
            gamma: None,
        }
    }
}

impl ParamsBlock {
    /// Cartesian product in the order σ, ζ, ε.
    pub fn grid(&self) -> dynloc::Result<Vec<DecayParams>> {
        let mut out = Vec::new();
        for &s in &self.sigma {
            for &z in &self.zeta {
                for &e in &self.epsilon {
                    let mut p = DecayParams::new(s, z).with_epsilon(e);
                    p.zeta_prime = self.zeta_prime;
                    p.gamma = self.gamma;
                    p.validate()?;
                    out.push(p);
                }
            }
        }
        if out.is_empty() {
            return Err(dynloc::Error::Parameter("empty parameter grid".into()));
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expect {
    #[default]
    Pass,
    /// The bound is meant to fail; the check succeeds when it does.
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub check: CheckKind,
    #[serde(default)]
    pub expect: Expect,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CheckKind {
    Moments,
    Sulp,
    AkLedger,
    KernelInterpolation,
    Sule {
        #[serde(default)]
        rate: Option<RateFunction>,
    },
    Sudec {
        #[serde(default)]
        rate: RateFunction,
    },
    SudecPlus,
    MixedExponent,
    AlphaCenter,
    CenterCluster {
        #[serde(default = "default_delta")]
        delta: f64,
        /// Pass iff `C_δ ≤ max_c_delta`; without it the check only reports.
        #[serde(default)]
        max_c_delta: Option<f64>,
    },
    CenterCensus,
    Growth {
        #[serde(default)]
        l_max: Option<usize>,
    },
    Landau {
        #[serde(default = "default_b")]
        b: f64,
        #[serde(default = "default_n_max")]
        n_max: usize,
        #[serde(default = "default_landau_sigma")]
        sigma: Vec<f64>,
        #[serde(default = "default_one")]
        zeta: f64,
    },
    Cluster {
        #[serde(default = "default_cluster_base")]
        base: SpaceSpec,
        #[serde(default = "default_copies")]
        copies: usize,
        #[serde(default = "default_separations")]
        separations: Vec<usize>,
        #[serde(default = "default_cluster_sigma")]
        sigma: f64,
        #[serde(default = "default_delta")]
        delta: f64,
    },
    Ensemble,
}

fn default_delta() -> f64 {
    0.1
}
fn default_b() -> f64 {
    1.0
}
fn default_n_max() -> usize {
    10_000
}
fn default_landau_sigma() -> Vec<f64> {
    vec![0.1, 0.5, 1.0]
}
fn default_one() -> f64 {
    1.0
}
fn default_cluster_base() -> SpaceSpec {
    SpaceSpec::Linear { n: 4 }
}
fn default_copies() -> usize {
    2
}
fn default_separations() -> Vec<usize> {
    vec![10, 20, 40, 80]
}
fn default_cluster_sigma() -> f64 {
    0.5
}

impl CheckKind {
    pub fn name(&self) -> &'static str {
        match self {
            CheckKind::Moments => "moments",
            CheckKind::Sulp => "sulp",
            CheckKind::AkLedger => "ak_ledger",
            CheckKind::KernelInterpolation => "kernel_interpolation",
            CheckKind::Sule { .. } => "sule",
            CheckKind::Sudec { .. } => "sudec",
            CheckKind::SudecPlus => "sudec_plus",
            CheckKind::MixedExponent => "mixed_exponent",
            CheckKind::AlphaCenter => "alpha_center",
            CheckKind::CenterCluster { .. } => "center_cluster",
            CheckKind::CenterCensus => "center_census",
            CheckKind::Growth { .. } => "growth",
            CheckKind::Landau { .. } => "landau",
            CheckKind::Cluster { .. } => "cluster",
            CheckKind::Ensemble => "ensemble",
        }
    }

    /// Needs the configured model's spectral data.
    pub fn needs_spectrum(&self) -> bool {
        !matches!(
            self,
            CheckKind::Landau { .. }
                | CheckKind::Cluster { .. }
                | CheckKind::Ensemble
                | CheckKind::Growth { .. }
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleBlock {
    pub realizations: usize,
    #[serde(default)]
    pub master_seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default)]
    pub directory: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_formats() -> Vec<Format> {
    vec![Format::Json, Format::Csv]
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            directory: None,
            formats: default_formats(),
        }
    }
}

impl OutputBlock {
    pub fn csv(&self) -> bool {
        self.formats.contains(&Format::Csv)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<ExperimentConfig, ConfigError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let invalid = |message: String| ConfigError::Invalid {
            path: path.to_path_buf(),
            message,
        };
        if cfg.schema != SCHEMA {
            return Err(invalid(format!(
                "schema must be {SCHEMA:?}, got {:?}",
                cfg.schema
            )));
        }
        cfg.params
            .grid()
            .map_err(|e| invalid(format!("params: {e}")))?;
        if let Some(m) = &cfg.model {
            let needs_space = matches!(
                m.operator,
                OperatorSpec::Laplacian | OperatorSpec::Anderson { .. }
            );
            if needs_space && m.space.is_none() {
                return Err(invalid(
                    "model.space is required for laplacian and anderson operators".into(),
                ));
            }
        }
        for (i, c) in cfg.checks.iter().enumerate() {
            if c.check.needs_spectrum() && cfg.model.is_none() {
                return Err(invalid(format!(
                    "checks[{i}] ({}) needs a model block",
                    c.check.name()
                )));
            }
            if matches!(c.check, CheckKind::Growth { .. })
                && cfg.model.as_ref().is_none_or(|m| m.space.is_none())
            {
                return Err(invalid(format!("checks[{i}] (growth) needs model.space")));
            }
            if matches!(c.check, CheckKind::KernelInterpolation) && cfg.params.gamma.is_none() {
                return Err(invalid(format!(
                    "checks[{i}] (kernel_interpolation) needs params.gamma"
                )));
            }
            if matches!(c.check, CheckKind::MixedExponent) && cfg.params.zeta_prime.is_none() {
                return Err(invalid(format!(
                    "checks[{i}] (mixed_exponent) needs params.zeta_prime"
                )));
            }
            if matches!(c.check, CheckKind::Ensemble) {
                let anderson = matches!(
                    cfg.model.as_ref().map(|m| &m.operator),
                    Some(OperatorSpec::Anderson { .. })
                );
                if !anderson || cfg.ensemble.is_none() {
                    return Err(invalid(format!(
                        "checks[{i}] (ensemble) needs an anderson model and an ensemble block"
                    )));
                }
            }
        }
        Ok(cfg)
    }

    /// Replaces the disorder seed and the ensemble master seed.
    pub fn override_seed(&mut self, seed: u64) {
        if let Some(ModelSpec {
            operator: OperatorSpec::Anderson { seed: s, .. },
            ..
        }) = &mut self.model
        {
            *s = seed;
        }
        if let Some(e) = &mut self.ensemble {
            e.master_seed = seed;
        }
    }
}

/// Default weight of a space when the config names none.
pub fn default_weight(space: &SiteSpace) -> WeightKind {
    match space.dimension() {
        Some(d) => WeightKind::Polynomial {
            kappa: d as f64 / 2.0 + 0.5,
        },
        None => WeightKind::Exponential { alpha: 0.5 },
    }
}
