//! Acceptance suite: one line per criterion, `PASS` or `FAIL`, with the
//! measured numbers. Tolerances are fixed; a failing criterion fails the test.

use std::io::Write;
use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

use dynloc::counterexamples::{
    basis_independence, cluster_spectrum, cluster_suleplus_violation, landau_opposite_product,
    landau_sudec_violation, ClusterSpec, LandauSpec,
};
use dynloc::diagnostics::{
    ak_ledger, center_census, kernel_interpolation_check, sudec_check, sule_fit, sulp_profile,
    Family, RateFunction,
};
use dynloc::dynamics::{
    liminf_cesaro, DecayParams, EnergyWindow, MomentSeries, TimeGrid, WindowSpec,
};
use dynloc::ensemble::{ensemble_report, EnsembleSpec};
use dynloc::geometry::{binary_tree, quadratic_growth_tree, SiteSpace, SpaceSpec};
use dynloc::operators::{build_anderson, build_laplacian, build_weight, WeightKind};
use dynloc::spectral::{diagonalize, SpectralData};

static SERIAL: Mutex<()> = Mutex::new(());

/// Criteria run one at a time so that each runtime is measured without
/// competing for the thread pool.
fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(n: u32, pass: bool, elapsed: Duration, budget: Duration, detail: String) {
    let ok = pass && elapsed < budget;
    // Written to the raw handle so the line shows without --nocapture.
    let line = format!(
        "criterion {n:>2}: {} ({:.2}s of {}s) {detail}\n",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
    assert!(ok, "criterion {n} failed: {detail}");
}

fn chain(side: usize) -> SiteSpace {
    SiteSpace::build(SpaceSpec::LatticeBox {
        dim: 1,
        side,
        center: None,
    })
    .unwrap()
}

fn anderson(side: usize, disorder: f64, seed: u64) -> SpectralData {
    diagonalize(&build_anderson(&chain(side), disorder, seed).unwrap()).unwrap()
}

/// Anderson d = 1, L = 64, W = 4, seed 1.
fn fixture() -> SpectralData {
    anderson(64, 4.0, 1)
}

fn sup_moment(sd: &SpectralData, params: &DecayParams) -> f64 {
    let w = EnergyWindow::full(sd);
    MomentSeries::compute(
        sd,
        &w,
        sd.space().origin(),
        params,
        &TimeGrid::default().values_only(),
    )
    .unwrap()
    .sup_over_grid
}

#[test]
fn criterion_01_landau_product_identity() {
    let _guard = serial();
    let start = Instant::now();
    let spec = LandauSpec::new(1.0, 10_000).unwrap();
    let mut worst = 0.0f64;
    for n in [1, 5, 10, 20, 50, 200] {
        worst = worst.max(landau_opposite_product(&spec, n).unwrap().relative_error);
    }
    let p1 = landau_opposite_product(&spec, 1).unwrap().direct;
    let target = (-1f64).exp() / (2.0 * std::f64::consts::PI);
    let stirling = landau_opposite_product(&spec, 50).unwrap().stirling_ratio;
    let pass = worst <= 1e-10
        && (p1 - target).abs() <= 1e-10 * target
        && (p1 - 0.0585498).abs() < 5e-8
        && (stirling - 1.0).abs() < 0.02;
    report(
        1,
        pass,
        start.elapsed(),
        Duration::from_secs(1),
        format!("max rel err {worst:.2e}, n=1 product {p1:.7}, Stirling ratio at 50 {stirling:.5}"),
    );
}

#[test]
fn criterion_02_landau_sudec_failure() {
    let _guard = serial();
    let start = Instant::now();
    let spec = LandauSpec::new(1.0, 10_000).unwrap();
    let mut firsts = Vec::new();
    for sigma in [0.1, 0.5, 1.0] {
        let v = landau_sudec_violation(&spec, 1..=10_000, sigma, 1.0).unwrap();
        firsts.push((sigma, v.first_exceeding));
    }
    let pass = firsts.iter().all(|(_, f)| f.is_some());
    report(
        2,
        pass,
        start.elapsed(),
        Duration::from_secs(1),
        format!("expected-fail holds; first n with ratio > 1e6 per σ: {firsts:?}"),
    );
}

#[test]
fn criterion_03_ak_ledger() {
    let _guard = serial();
    let start = Instant::now();
    let sd = fixture();
    let w = EnergyWindow::full(&sd);
    let u = sd.space().origin();
    let ledger = ak_ledger(&sd, &w, u, &DecayParams::new(0.1, 1.0)).unwrap();
    let lo = ledger.sorted_a[0].ln();
    let hi = ledger.sorted_a.last().unwrap().ln();
    let mut mismatches = 0;
    for i in 0..20 {
        // probes spread over and slightly beyond the range of A_k, plus exact values
        let l = if i % 4 == 3 {
            ledger.sorted_a[(i * 7) % ledger.sorted_a.len()]
        } else {
            (lo - 0.5 + (hi - lo + 1.0) * i as f64 / 19.0).exp()
        };
        let brute = ledger.a_weighted.iter().filter(|&&a| a <= l).count();
        if brute != ledger.counting(l) {
            mismatches += 1;
        }
    }
    let pass =
        ledger.row_sum_error <= 1e-12 && ledger.column_sum_max <= 1.0 + 1e-12 && mismatches == 0;
    report(
        3,
        pass,
        start.elapsed(),
        Duration::from_secs(10),
        format!(
            "row-sum error {:.2e}, max column sum {:.15}, N(l) mismatches {mismatches}/20, {} groups",
            ledger.row_sum_error,
            ledger.column_sum_max,
            ledger.groups.len()
        ),
    );
}

#[test]
fn criterion_04_projection_chain() {
    let _guard = serial();
    let start = Instant::now();
    let sd = fixture();
    let w = EnergyWindow::full(&sd);
    let u = sd.space().origin();
    let params = DecayParams::new(0.1, 1.0);
    let liminf = liminf_cesaro(&sd, &w, u, &params).unwrap();
    let series = MomentSeries::compute(&sd, &w, u, &params, &TimeGrid::default()).unwrap();
    let cesaro = series.cesaro_at(1e4);
    let rel = (cesaro - liminf).abs() / liminf;
    let sulp = sulp_profile(&sd, &w, u, &params).unwrap();
    let fit = &sulp.envelope.at_requested;
    let pass = rel <= 0.05 && fit.violations == 0 && sulp.sigma_hat > 0.0;
    report(
        4,
        pass,
        start.elapsed(),
        Duration::from_secs(60),
        format!(
            "liminf {liminf:.6}, Cesàro(1e4) {cesaro:.6}, rel {rel:.2e}; SULP σ̂ {:.4}, C {:.4}, violations {}",
            sulp.sigma_hat, sulp.c_hat, fit.violations
        ),
    );
}

#[test]
fn criterion_05_kernel_interpolation() {
    let _guard = serial();
    let start = Instant::now();
    let sd = fixture();
    let w = EnergyWindow::full(&sd);
    let u = sd.space().origin();
    let params = DecayParams::new(0.1, 1.0).with_gamma(0.5);
    let k = kernel_interpolation_check(&sd, &w, u, &params, &TimeGrid::default().times).unwrap();
    let holder_max = k.holder.iter().copied().fold(0.0, f64::max);
    let pass = k.violations == 0 && k.holder_finite;
    report(
        5,
        pass,
        start.elapsed(),
        Duration::from_secs(60),
        format!(
            "C {:.4}, violations {}, Hölder sums finite: {} (max {holder_max:.4})",
            k.c_min, k.violations, k.holder_finite
        ),
    );
}

#[test]
fn criterion_06_localization_control() {
    let _guard = serial();
    let start = Instant::now();
    let params = DecayParams::new(0.05, 1.0);
    let mut min_sigma = f64::INFINITY;
    let mut worst_change = 0.0f64;
    let mut failing_seeds = Vec::new();
    for seed in 1..=10u64 {
        let big = anderson(256, 4.0, seed);
        let w = EnergyWindow::full(&big);
        let t = build_weight(big.space(), WeightKind::Polynomial { kappa: 1.0 }).unwrap();
        let fam = Family::from_spectral(&big, &w, None, &t).unwrap();
        let sule = sule_fit(&fam, &params, None).unwrap();
        min_sigma = min_sigma.min(sule.min_sigma_hat);
        if sule.min_sigma_hat < 0.05 {
            failing_seeds.push(seed);
        }
        let m_params = DecayParams::new(sule.min_sigma_hat / 4.0, 1.0);
        let small = anderson(128, 4.0, seed);
        let (m_small, m_big) = (sup_moment(&small, &m_params), sup_moment(&big, &m_params));
        worst_change = worst_change.max((m_big - m_small).abs() / m_small);
    }
    let pass = min_sigma >= 0.05 && worst_change < 0.05;
    report(
        6,
        pass,
        start.elapsed(),
        Duration::from_secs(600),
        format!(
            "min SULE σ̂ over 10 seeds {min_sigma:.4} (seeds below 0.05: {failing_seeds:?}), max moment change 128→256 {:.2}%",
            100.0 * worst_change
        ),
    );
}

#[test]
fn criterion_07_delocalization_control() {
    let _guard = serial();
    let start = Instant::now();
    let free = |side: usize| diagonalize(&build_laplacian(&chain(side))).unwrap();
    let sd = free(128);
    let w = EnergyWindow::full(&sd);
    let t = build_weight(sd.space(), WeightKind::Polynomial { kappa: 1.0 }).unwrap();
    let fam = Family::from_spectral(&sd, &w, None, &t).unwrap();
    let sudec = sudec_check(&fam, &DecayParams::new(0.02, 1.0), RateFunction::Identity).unwrap();
    let sigma = sudec.fit.at_requested.sigma_hat;
    let m_params = DecayParams::new(0.1, 1.0);
    let (m64, m128) = (sup_moment(&free(64), &m_params), sup_moment(&sd, &m_params));
    let pass = sigma < 0.02 && m128 >= 2.0 * m64;
    report(
        7,
        pass,
        start.elapsed(),
        Duration::from_secs(120),
        format!(
            "SUDEC σ̂ {sigma:.5}, sup M 64 → 128: {m64:.4e} → {m128:.4e} (×{:.1})",
            m128 / m64
        ),
    );
}

#[test]
fn criterion_08_cluster_counterexample() {
    let _guard = serial();
    let start = Instant::now();
    let spec = ClusterSpec::default();
    let r = cluster_suleplus_violation(&spec).unwrap();
    let sule_c: Vec<f64> = r.rows.iter().map(|row| row.sule_blockwise_c).collect();
    let c_delta: Vec<f64> = r.rows.iter().map(|row| row.c_delta).collect();
    let pass = r.rows.iter().all(|row| row.sule_blockwise_verdict)
        && r.sule_blockwise_constant
        && r.rotated_increasing
        && r.plus_increasing
        && r.rotated_ratio >= 10.0
        && r.plus_ratio >= 10.0
        && r.c_delta_nondecreasing
        && r.c_delta_growth >= (80.0 - 10.0) * (1.0 - spec.delta);
    report(
        8,
        pass,
        start.elapsed(),
        Duration::from_secs(30),
        format!(
            "blockwise SULE C {sule_c:.4?}; rotated ratio {:.3e}, SUDEC+ ratio {:.3e}; C_δ {c_delta:?} (growth {:.1})",
            r.rotated_ratio, r.plus_ratio, r.c_delta_growth
        ),
    );
}

#[test]
fn criterion_09_basis_independence() {
    let _guard = serial();
    let start = Instant::now();
    let params = DecayParams::new(0.5, 1.0);
    let mut worst = 0.0f64;
    let mut plus_consistent = true;
    let mut plain_differs = true;
    for (i, d) in [10usize, 20, 40, 80].into_iter().enumerate() {
        let sd = cluster_spectrum(&SpaceSpec::Linear { n: 4 }, 2, d).unwrap();
        let w = EnergyWindow::full(&sd);
        let b = basis_independence(
            &sd,
            &w,
            &params,
            WeightKind::Polynomial { kappa: 1.0 },
            5,
            100 + i as u64,
        )
        .unwrap();
        worst = worst.max(b.plus_max_deviation);
        plus_consistent &= b.plus_fits.iter().all(|f| f.2 == b.plus_fits[0].2);
        plain_differs &= b.sudec_blockwise_verdict != b.sudec_symmetric_verdict;
    }
    let pass = worst <= 1e-10 && plus_consistent && plain_differs;
    report(
        9,
        pass,
        start.elapsed(),
        Duration::from_secs(30),
        format!(
            "SUDEC+ max rel deviation over 5 rotations {worst:.2e}, verdicts identical: {plus_consistent}; plain SUDEC blockwise vs rotated differ: {plain_differs}"
        ),
    );
}

#[test]
fn criterion_10_center_census() {
    let _guard = serial();
    let start = Instant::now();
    let sd = fixture();
    let w = EnergyWindow::full(&sd);
    let t = build_weight(sd.space(), WeightKind::Polynomial { kappa: 1.0 }).unwrap();
    let c = center_census(&sd, &w, &t).unwrap();
    let pass = c.ordering_constant > 0.0 && c.counting_violations == 0 && c.verdict;
    report(
        10,
        pass,
        start.elapsed(),
        Duration::from_secs(60),
        format!(
            "ordering c {:.4}, counting C {:.4e}, violations {}",
            c.ordering_constant, c.counting_constant, c.counting_violations
        ),
    );
}

#[test]
fn criterion_11_ensemble() {
    let _guard = serial();
    let start = Instant::now();
    let spec = EnsembleSpec {
        space: SpaceSpec::LatticeBox {
            dim: 1,
            side: 128,
            center: None,
        },
        disorder: 4.0,
        realizations: 20,
        master_seed: 2024,
        window: WindowSpec::default(),
        params: DecayParams::new(0.1, 1.0),
        grid: TimeGrid::default(),
    };
    let a = ensemble_report(&spec).unwrap();
    let b = ensemble_report(&spec).unwrap();
    let identical = serde_json::to_string(&a).unwrap() == serde_json::to_string(&b).unwrap();
    let sigmas: Vec<f64> = a
        .kernels
        .iter()
        .map(|k| k.dynamical.at_requested.sigma_hat)
        .collect();
    let certified = a.kernels.iter().all(|k| {
        k.dynamical.at_requested.violations == 0 && k.dynamical.at_requested.epsilon_hat == 0.0
    });
    let ordering = a.moments.mean_of_sup >= a.moments.sup_of_mean;
    let pass = sigmas.iter().all(|&s| s > 0.0)
        && certified
        && a.translation.verdict
        && ordering
        && identical;
    report(
        11,
        pass,
        start.elapsed(),
        Duration::from_secs(600),
        format!(
            "σ̂ at u=0, L/4: {sigmas:.4?} (spread {:.1}%), mean-of-sup {:.4} ≥ sup-of-mean {:.4}: {ordering}, reruns identical: {identical}",
            100.0 * a.translation.relative_spread,
            a.moments.mean_of_sup,
            a.moments.sup_of_mean
        ),
    );
}

#[test]
fn criterion_12_growth_gate() {
    let _guard = serial();
    let start = Instant::now();
    let binary = SiteSpace::build(binary_tree(10)).unwrap();
    let g_bin = binary.sphere_census(binary.origin(), 10).unwrap();
    let quad = SiteSpace::build(quadratic_growth_tree(10)).unwrap();
    let g_quad = quad.sphere_census(quad.origin(), 10).unwrap();
    // end to end on the passing tree
    let sd = diagonalize(&build_anderson(&quad, 4.0, 3).unwrap()).unwrap();
    let w = EnergyWindow::full(&sd);
    let u = quad.origin();
    let params = DecayParams::new(0.1, 1.0);
    let t = build_weight(&quad, WeightKind::Exponential { alpha: 0.5 }).unwrap();
    let pipeline = (|| -> dynloc::Result<bool> {
        let sulp = sulp_profile(&sd, &w, u, &params)?;
        let ledger = ak_ledger(&sd, &w, u, &params)?;
        let fam = Family::from_spectral(&sd, &w, None, &t)?;
        let sule = sule_fit(&fam, &params, None)?;
        let series = MomentSeries::compute(&sd, &w, u, &params, &TimeGrid::log(0.1, 1e3, 60))?;
        Ok(sulp.sigma_hat.is_finite()
            && ledger.row_sum_error <= 1e-12
            && sule.centers.len() == quad.len()
            && series.sup_over_grid.is_finite())
    })();
    let ran = matches!(pipeline, Ok(true));
    let pass = g_bin.beta_fit >= 1.0 - 1e-9
        && !g_bin.passes_moderate_growth
        && g_quad.beta_fit < 1.0
        && g_quad.passes_moderate_growth
        && ran;
    report(
        12,
        pass,
        start.elapsed(),
        Duration::from_secs(120),
        format!(
            "binary tree β̂ {:.4} (passes: {}), quadratic tree β̂ {:.4} (passes: {}), pipeline on {} sites ran: {ran}",
            g_bin.beta_fit,
            g_bin.passes_moderate_growth,
            g_quad.beta_fit,
            g_quad.passes_moderate_growth,
            quad.len()
        ),
    );
}
