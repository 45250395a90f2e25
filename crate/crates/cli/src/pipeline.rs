use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use dynloc::counterexamples::{
    cluster_suleplus_violation, landau_opposite_product, landau_sudec_violation, ClusterSpec,
    LandauSpec,
};
use dynloc::diagnostics::{
    ak_ledger, alpha_center_bound, center_census, center_cluster_check, kernel_interpolation_check,
    mixed_exponent_check, sudec_check, sudec_plus_check, sule_fit, sulp_profile, Family,
};
use dynloc::dynamics::{DecayParams, EnergyWindow, MomentSeries};
use dynloc::ensemble::{ensemble_report, EnsembleSpec};
use dynloc::geometry::{Site, SiteSpace, SpaceSpec};
use dynloc::operators::{
    build_anderson, build_cluster_laplacian, build_laplacian, build_weight, import_hamiltonian,
    Hamiltonian, WeightKind, WeightOperator,
};
use dynloc::spectral::{diagonalize, SpectralData};

use crate::config::{default_weight, CheckKind, CheckSpec, Expect, ExperimentConfig, OperatorSpec};
use crate::output::Artifact;

/// Spectral data and the objects every diagnostic shares.
pub struct Model {
    pub sd: SpectralData,
    pub window: EnergyWindow,
    pub weight: WeightOperator,
    pub u: Site,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn build_hamiltonian(cfg: &ExperimentConfig, config_dir: &Path) -> Result<Hamiltonian> {
    let model = cfg
        .model
        .as_ref()
        .context("the config has no model block")?;
    let space = || -> Result<SiteSpace> {
        let spec = model.space.clone().context("model.space is required")?;
        Ok(SiteSpace::build(spec)?)
    };
    Ok(match &model.operator {
        OperatorSpec::Laplacian => build_laplacian(&space()?),
        OperatorSpec::Anderson { disorder, seed } => build_anderson(&space()?, *disorder, *seed)?,
        OperatorSpec::Cluster {
            base,
            copies,
            separation,
        } => build_cluster_laplacian(base, *copies, *separation)?.hamiltonian,
        OperatorSpec::Import { header, triplets } => {
            import_hamiltonian(&resolve(config_dir, header), &resolve(config_dir, triplets))?
        }
    })
}

pub fn build_model(cfg: &ExperimentConfig, config_dir: &Path) -> Result<Model> {
    let h = build_hamiltonian(cfg, config_dir)?;
    let sd = diagonalize(&h)?;
    let window = cfg.window.build(&sd)?;
    let kind = cfg
        .weight
        .clone()
        .unwrap_or_else(|| default_weight(sd.space()));
    let weight = build_weight(sd.space(), kind)?;
    let u = cfg.base_site.unwrap_or_else(|| sd.space().origin());
    if u >= sd.dim() {
        bail!("base_site {u} is outside the {}-site space", sd.dim());
    }
    Ok(Model {
        sd,
        window,
        weight,
        u,
    })
}

pub fn spectrum_artifacts(model: &Model, csv: bool) -> Result<Vec<Artifact>> {
    let sd = &model.sd;
    let summary = json!({
        "label": sd.label(),
        "dimension": sd.dim(),
        "residual": sd.residual(),
        "orthonormality_error": sd.orthonormality_error(),
        "operator_norm": sd.operator_norm(),
        "degeneracy_tolerance": sd.tolerance(),
        "groups": sd.groups().len(),
        "max_multiplicity": sd.groups().iter().map(|g| g.multiplicity).max().unwrap_or(0),
        "min_gap": sd.min_gap(),
        "window": {"lo": model.window.lo, "hi": model.window.hi, "margin": model.window.margin},
        "selected": model.window.selected().count(),
        "base_site": model.u,
    });
    let mut out = vec![Artifact::json("spectrum.json", &summary)?];
    if csv {
        let rows: Vec<(usize, f64, usize, usize, f64)> = (0..sd.dim())
            .map(|k| {
                let g = sd.group_of(k);
                (
                    k,
                    sd.eigenvalues()[k],
                    g,
                    sd.groups()[g].multiplicity,
                    model.window.values[k],
                )
            })
            .collect();
        out.push(Artifact::with("spectrum.csv", move |p| {
            let mut w = csv::Writer::from_path(p)?;
            w.write_record(["k", "energy", "group", "multiplicity", "window"])?;
            for (k, e, g, m, x) in rows {
                w.write_record([
                    k.to_string(),
                    format!("{e:e}"),
                    g.to_string(),
                    m.to_string(),
                    format!("{x:e}"),
                ])?;
            }
            w.flush()?;
            Ok(())
        }));
    }
    Ok(out)
}

/// Moment series at the base site for every parameter set.
pub fn moment_artifacts(
    cfg: &ExperimentConfig,
    model: &Model,
    prefix: &str,
) -> Result<(bool, String, Vec<Artifact>)> {
    let mut sidecars = Vec::new();
    let mut artifacts = Vec::new();
    let mut ok = true;
    let mut sups = Vec::new();
    for (j, p) in cfg.params.grid()?.iter().enumerate() {
        match MomentSeries::compute(&model.sd, &model.window, model.u, p, &cfg.time_grid) {
            Ok(s) => {
                sups.push(s.sup_over_grid);
                sidecars.push(s.sidecar());
                if cfg.output.csv() {
                    artifacts.push(Artifact::with(format!("{prefix}-p{j}.csv"), move |path| {
                        s.write_csv(path)
                    }));
                }
            }
            Err(e @ dynloc::Error::Overflow { .. }) => {
                ok = false;
                sidecars.push(json!({"params": p, "error": e.to_string()}));
            }
            Err(e) => return Err(e.into()),
        }
    }
    artifacts.push(Artifact::json(format!("{prefix}.json"), &sidecars)?);
    let sups = sups
        .iter()
        .map(|s| format!("{s:.6e}"))
        .collect::<Vec<_>>()
        .join(", ");
    Ok((
        ok,
        format!("sup over grid per parameter set: [{sups}]"),
        artifacts,
    ))
}

#[derive(Serialize)]
pub struct CheckSummary {
    pub index: usize,
    pub kind: &'static str,
    pub expect: Expect,
    /// Whether the inequality holds.
    pub verdict: bool,
    /// `pass`, `fail`, `expected-fail` or `unexpected-pass`.
    pub outcome: &'static str,
    pub ok: bool,
    pub inequality: &'static str,
    pub detail: String,
}

pub struct CheckResult {
    pub summary: CheckSummary,
    pub artifacts: Vec<Artifact>,
}

fn outcome(expect: Expect, verdict: bool) -> (&'static str, bool) {
    match (expect, verdict) {
        (Expect::Pass, true) => ("pass", true),
        (Expect::Pass, false) => ("fail", false),
        (Expect::Fail, false) => ("expected-fail", true),
        (Expect::Fail, true) => ("unexpected-pass", false),
    }
}

fn inequality(kind: &CheckKind) -> &'static str {
    match kind {
        CheckKind::Moments => "sup_t M_u(σ,ζ,𝒳,t) < ∞",
        CheckKind::Sulp => "𝓟_u(x) ≤ C √(liminf M_u) e^{−(σ/2)|x−u|^ζ}",
        CheckKind::AkLedger => "Σ_x a_kx(u) = 1 and Σ_k a_kx(u) ≤ 1",
        CheckKind::KernelInterpolation => "sup_t ‖χ_x e^{−itH}𝒳(H)χ_u‖ ≤ C 𝓟_u(x)^{1−γ} 𝓛_u^{γ/2}",
        CheckKind::Sule { .. } => "‖χ_x φ‖ ≤ C e^{ε|x_φ|^ζ} e^{−σ|x−x_φ|^ζ}",
        CheckKind::Sudec { .. } => "‖χ_x φ‖‖χ_u φ‖ ≤ C f(α_φ) e^{ε|u|^ζ} e^{−σ|x−u|^ζ}",
        CheckKind::SudecPlus => "‖χ_x P_E‖‖χ_u P_E‖ ≤ C α_E e^{ε|u|^ζ} e^{−σ|x−u|^ζ}",
        CheckKind::MixedExponent => "‖χ_x φ‖‖χ_u φ‖ ≤ C α_φ e^{ε|u|^ζ′} e^{−σ|x−u|^ζ}",
        CheckKind::AlphaCenter => "α_φ T(x_φ)² ≥ c > 0",
        CheckKind::CenterCluster { .. } => "|x_φ − x_ψ| ≤ δ|x_φ| + C_δ",
        CheckKind::CenterCensus => "⟨x_φn⟩ ≥ c n^{1/2κ} and N_L ≤ C L^{2κ} α_{H,ℰ}",
        CheckKind::Growth { .. } => "𝒩_L(u) ≤ e^{L^β} with β < 1",
        CheckKind::Landau { .. } => "|φ_n(z₁)φ_n(z₂)| ≤ C e^{−σ|z₁−z₂|^ζ}",
        CheckKind::Cluster { .. } => "SUDEC+ and center constants bounded in the copy separation",
        CheckKind::Ensemble => "𝔼 sup_t ‖χ_x e^{−itH}𝒳(H)χ_u‖ ≤ C e^{−σ|x−u|^ζ} uniformly in u",
    }
}

fn per_params<T: Serialize + Send>(
    cfg: &ExperimentConfig,
    f: impl Fn(&DecayParams) -> dynloc::Result<(bool, T)> + Sync,
) -> Result<(bool, Vec<T>)> {
    let grid = cfg.params.grid()?;
    let results = grid
        .par_iter()
        .map(&f)
        .collect::<dynloc::Result<Vec<_>>>()?;
    let verdict = results.iter().all(|r| r.0);
    Ok((verdict, results.into_iter().map(|r| r.1).collect()))
}

fn family<'a>(model: &'a Model) -> dynloc::Result<Family<'a>> {
    Family::from_spectral(&model.sd, &model.window, None, &model.weight)
}

fn cluster_weight(base: &SpaceSpec) -> WeightKind {
    let d = match base {
        SpaceSpec::LatticeBox { dim, .. } | SpaceSpec::LatticeSites { dim, .. } => *dim,
        _ => 1,
    };
    WeightKind::Polynomial {
        kappa: d as f64 / 2.0 + 0.5,
    }
}

/// Runs one configured check; `model` is `None` only for model-free checks.
pub fn run_check(
    index: usize,
    spec: &CheckSpec,
    cfg: &ExperimentConfig,
    model: Option<&Model>,
) -> Result<CheckResult> {
    let name = spec.check.name();
    let stem = format!("checks/{index:02}-{name}");
    let need = || model.context("this check needs a model");
    let csv = cfg.output.csv();
    let mut artifacts = Vec::new();
    let (verdict, detail): (bool, String) = match &spec.check {
        CheckKind::Moments => {
            let (ok, detail, arts) = moment_artifacts(cfg, need()?, &stem)?;
            artifacts = arts;
            (ok, detail)
        }
        CheckKind::Sulp => {
            let m = need()?;
            let (v, rs) = per_params(cfg, |p| {
                let r = sulp_profile(&m.sd, &m.window, m.u, p)?;
                Ok((r.verdict, r))
            })?;
            let detail = rs
                .iter()
                .map(|r| format!("σ̂={:.4} C={:.4}", r.sigma_hat, r.c_hat))
                .collect::<Vec<_>>()
                .join("; ");
            artifacts.push(Artifact::json(format!("{stem}.json"), &rs)?);
            (v, detail)
        }
        CheckKind::AkLedger => {
            let m = need()?;
            let (v, rs) = per_params(cfg, |p| {
                let l = ak_ledger(&m.sd, &m.window, m.u, p)?;
                let ok =
                    !l.degenerate && l.row_sum_error <= 1e-12 && l.column_sum_max <= 1.0 + 1e-12;
                let digest = json!({
                    "params": p,
                    "u": l.u,
                    "groups": l.groups,
                    "excluded": l.excluded,
                    "a_weighted": l.a_weighted,
                    "sorted_a": l.sorted_a,
                    "row_sum_error": l.row_sum_error,
                    "column_sum_max": l.column_sum_max,
                    "c_tilde": l.c_tilde,
                    "growth_exponent": l.growth_exponent,
                });
                Ok((ok, (digest, l.sorted_a)))
            })?;
            let detail = rs
                .iter()
                .map(|r| {
                    format!(
                        "row-sum error {:.2e}, max column sum {:.15}",
                        r.0["row_sum_error"].as_f64().unwrap_or(f64::NAN),
                        r.0["column_sum_max"].as_f64().unwrap_or(f64::NAN)
                    )
                })
                .collect::<Vec<_>>()
                .join("; ");
            let (digests, sorted): (Vec<_>, Vec<_>) = rs.into_iter().unzip();
            artifacts.push(Artifact::json(format!("{stem}.json"), &digests)?);
            if csv {
                for (j, s) in sorted.into_iter().enumerate() {
                    artifacts.push(Artifact::with(format!("{stem}-p{j}.csv"), move |path| {
                        let mut w = csv::Writer::from_path(path)?;
                        w.write_record(["rank", "A_k", "N"])?;
                        for (i, a) in s.iter().enumerate() {
                            w.write_record([
                                (i + 1).to_string(),
                                format!("{a:e}"),
                                (i + 1).to_string(),
                            ])?;
                        }
                        w.flush()?;
                        Ok(())
                    }));
                }
            }
            (v, detail)
        }
        CheckKind::KernelInterpolation => {
            let m = need()?;
            let times = cfg.time_grid.times.clone();
            let (v, rs) = per_params(cfg, |p| {
                let r = kernel_interpolation_check(&m.sd, &m.window, m.u, p, &times)?;
                Ok((r.verdict, r))
            })?;
            let detail = rs
                .iter()
                .map(|r| {
                    format!(
                        "C={:.4} violations={} Hölder finite={}",
                        r.c_min, r.violations, r.holder_finite
                    )
                })
                .collect::<Vec<_>>()
                .join("; ");
            artifacts.push(Artifact::json(format!("{stem}.json"), &rs)?);
            (v, detail)
        }
        CheckKind::Sule { rate } => {
            let m = need()?;
            let fam = family(m)?;
            let (v, rs) = per_params(cfg, |p| {
                let r = sule_fit(&fam, p, *rate)?;
                Ok((r.verdict_all, r))
            })?;
            let detail = rs
                .iter()
                .map(|r| {
                    format!(
                        "min σ̂={:.4} uniform C={:.4}",
                        r.min_sigma_hat, r.uniform.at_requested.c_hat
                    )
                })
                .collect::<Vec<_>>()
                .join("; ");
            artifacts.push(Artifact::json(format!("{stem}.json"), &rs)?);
            (v, detail)
        }
        CheckKind::Sudec { rate } => {
            let m = need()?;
            let fam = family(m)?;
            let (v, rs) = per_params(cfg, |p| {
                let r = sudec_check(&fam, p, *rate)?;
                Ok((r.verdict(), r))
            })?;
            let detail = rs
                .iter()
                .map(|r| {
                    let f = &r.fit.at_requested;
                    format!(
                        "σ̂={:.4} C={:.4} required C={:.4e}",
                        f.sigma_hat, f.c_hat, r.required_c
                    )
                })
                .collect::<Vec<_>>()
                .join("; ");
            artifacts.push(Artifact::json(format!("{stem}.json"), &rs)?);
            (v, detail)
        }
        CheckKind::SudecPlus => {
            let m = need()?;
            let (v, rs) = per_params(cfg, |p| {
                let r = sudec_plus_check(&m.sd, &m.window, None, p, &m.weight)?;
                Ok((r.verdict, r))
            })?;
            let detail = rs
                .iter()
                .map(|r| {
                    let f = &r.projector.fit.at_requested;
                    format!(
                        "σ̂={:.4} C={:.4} trace constant={:.4}",
                        f.sigma_hat, f.c_hat, r.trace_constant
                    )
                })
                .collect::<Vec<_>>()
                .join("; ");
            artifacts.push(Artifact::json(format!("{stem}.json"), &rs)?);
            (v, detail)
        }
        CheckKind::MixedExponent => {
            let m = need()?;
            let fam = family(m)?;
            let (v, rs) = per_params(cfg, |p| {
                let r = mixed_exponent_check(&fam, p)?;
                Ok((r.sudec_prime.verdict() && r.sule_prime.verdict(), r))
            })?;
            let detail = rs
                .iter()
                .map(|r| {
                    format!(
                        "ζ′={} SUDEC′ σ̂={:.4}, SULE′ σ̂={:.4}",
                        r.zeta_prime,
                        r.sudec_prime.fit.at_requested.sigma_hat,
                        r.sule_prime.at_requested.sigma_hat
                    )
                })
                .collect::<Vec<_>>()
                .join("; ");
            artifacts.push(Artifact::json(format!("{stem}.json"), &rs)?);
            (v, detail)
        }
        CheckKind::AlphaCenter => {
            let m = need()?;
            let fam = family(m)?;
            let p = cfg.params.grid()?[0];
            let centers = sule_fit(&fam, &p, None)?.centers;
            let r = alpha_center_bound(&fam, &centers, &m.weight);
            artifacts.push(Artifact::json(format!("{stem}.json"), &r)?);
            (r.verdict, format!("min α_φ T(x_φ)² = {:.4e}", r.minimum))
        }
        CheckKind::CenterCluster { delta, max_c_delta } => {
            let m = need()?;
            let r = center_cluster_check(&m.sd, &m.window, *delta)?;
            artifacts.push(Artifact::json(format!("{stem}.json"), &r)?);
            let v = max_c_delta.is_none_or(|c| r.c_delta <= c);
            (
                v,
                format!(
                    "C_δ = {} over {} degenerate groups",
                    r.c_delta,
                    r.groups.len()
                ),
            )
        }
        CheckKind::CenterCensus => {
            let m = need()?;
            let r = center_census(&m.sd, &m.window, &m.weight)?;
            artifacts.push(Artifact::json(format!("{stem}.json"), &r)?);
            (
                r.verdict,
                format!(
                    "ordering c={:.4}, counting C={:.4e}, violations={}",
                    r.ordering_constant, r.counting_constant, r.counting_violations
                ),
            )
        }
        CheckKind::Growth { l_max } => {
            let spec = cfg
                .model
                .as_ref()
                .and_then(|m| m.space.clone())
                .context("growth needs model.space")?;
            let space = SiteSpace::build(spec)?;
            let u = cfg.base_site.unwrap_or_else(|| space.origin());
            let r = space.sphere_census(u, l_max.unwrap_or_else(|| space.diameter()))?;
            artifacts.push(Artifact::json(format!("{stem}.json"), &r)?);
            (
                r.passes_moderate_growth,
                format!(
                    "β̂={:.4}, volume constant {:.4}",
                    r.beta_fit, r.volume_constant
                ),
            )
        }
        CheckKind::Landau {
            b,
            n_max,
            sigma,
            zeta,
        } => {
            let spec = LandauSpec::new(*b, *n_max)?;
            let products: Vec<_> = [1usize, 5, 10, 20, 50, 200]
                .into_iter()
                .filter(|&n| n <= *n_max)
                .map(|n| landau_opposite_product(&spec, n))
                .collect::<dynloc::Result<_>>()?;
            let mut summaries = Vec::new();
            // The bound holds when some rate of the grid survives.
            let mut holds = false;
            let mut parts = Vec::new();
            for (j, &s) in sigma.iter().enumerate() {
                let v = landau_sudec_violation(&spec, 1..=*n_max, s, *zeta)?;
                holds |= !v.violated();
                parts.push(format!(
                    "σ={s}: first n with ratio > 1e6 = {:?}",
                    v.first_exceeding
                ));
                summaries.push(json!({
                    "sigma": s,
                    "zeta": zeta,
                    "first_exceeding": v.first_exceeding,
                    "monotone_from": v.monotone_from,
                    "max_ln_ratio": v.rows.iter().map(|r| r.ln_ratio).fold(f64::NEG_INFINITY, f64::max),
                }));
                if csv {
                    artifacts.push(Artifact::with(format!("{stem}-sigma{j}.csv"), move |p| {
                        v.write_csv(p)
                    }));
                }
            }
            let report = json!({"b": b, "n_max": n_max, "opposite_products": products, "violations": summaries});
            artifacts.push(Artifact::json(format!("{stem}.json"), &report)?);
            (holds, parts.join("; "))
        }
        CheckKind::Cluster {
            base,
            copies,
            separations,
            sigma,
            delta,
        } => {
            let spec = ClusterSpec {
                base: base.clone(),
                copies: *copies,
                separations: separations.clone(),
                params: DecayParams::new(*sigma, 1.0),
                delta: *delta,
                weight: cluster_weight(base),
            };
            let r = cluster_suleplus_violation(&spec)?;
            let detail = format!(
                "required C ratio rotated {:.3e}, SUDEC+ {:.3e}; C_δ growth {:.1}",
                r.rotated_ratio, r.plus_ratio, r.c_delta_growth
            );
            let holds = !r.violated();
            artifacts.push(Artifact::json(format!("{stem}.json"), &r)?);
            if csv {
                artifacts.push(Artifact::with(format!("{stem}.csv"), move |p| {
                    r.write_csv(p)
                }));
            }
            (holds, detail)
        }
        CheckKind::Ensemble => {
            let spec = ensemble_spec(cfg)?;
            let r = ensemble_report(&spec)?;
            let certified = r.kernels.iter().all(|k| {
                k.dynamical.at_requested.violations == 0 && k.dynamical.at_requested.sigma_hat > 0.0
            });
            let v = certified
                && r.translation.verdict
                && r.moments.mean_of_sup >= r.moments.sup_of_mean;
            let detail = format!(
                "σ̂ per base site {:.4?} (spread {:.1}%), mean-of-sup {:.4e}, sup-of-mean {:.4e}",
                r.translation.sigma_hat,
                100.0 * r.translation.relative_spread,
                r.moments.mean_of_sup,
                r.moments.sup_of_mean
            );
            artifacts.extend(ensemble_artifacts(&stem, r, csv)?);
            (v, detail)
        }
    };
    let (outcome, ok) = outcome(spec.expect, verdict);
    Ok(CheckResult {
        summary: CheckSummary {
            index,
            kind: name,
            expect: spec.expect,
            verdict,
            outcome,
            ok,
            inequality: inequality(&spec.check),
            detail,
        },
        artifacts,
    })
}

pub fn ensemble_spec(cfg: &ExperimentConfig) -> Result<EnsembleSpec> {
    let model = cfg.model.as_ref().context("ensemble needs a model block")?;
    let OperatorSpec::Anderson { disorder, .. } = model.operator else {
        bail!("ensemble needs an anderson model");
    };
    let block = cfg
        .ensemble
        .as_ref()
        .context("ensemble needs an ensemble block")?;
    Ok(EnsembleSpec {
        space: model.space.clone().context("ensemble needs model.space")?,
        disorder,
        realizations: block.realizations,
        master_seed: block.master_seed,
        window: cfg.window.clone(),
        params: cfg.params.grid()?[0],
        grid: cfg.time_grid.clone(),
    })
}

pub fn ensemble_artifacts(
    stem: &str,
    r: dynloc::ensemble::EnsembleReport,
    csv: bool,
) -> Result<Vec<Artifact>> {
    let mut out = vec![Artifact::json(format!("{stem}.json"), &r)?];
    if csv {
        let space = SiteSpace::build(r.spec.space.clone())?;
        let moments = r.moments.clone();
        out.push(Artifact::with(format!("{stem}-moments.csv"), move |p| {
            moments.write_csv(p)
        }));
        for k in r.kernels {
            let space = space.clone();
            out.push(Artifact::with(
                format!("{stem}-kernel-u{}.csv", k.u),
                move |p| k.write_csv(&space, p),
            ));
        }
    }
    Ok(out)
}
