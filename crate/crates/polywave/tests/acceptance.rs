//! Acceptance suite: one test per quantitative criterion, each printing a
//! pass/fail line with the measured numbers. Tolerances are pinned in the
//! assertions. Run with `cargo test --test acceptance -- --nocapture`.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use num_complex::Complex64;
use polywave::cone_heat::{
    cheeger_compare, cone_diagonal_heat, diffraction_integral, ConeParams, HeatQuery,
};
use polywave::evolution::{
    band_modes, duhamel, dyadic_strichartz, propagate, random_state_on, strichartz_ratio,
    AdmissiblePair, Ensemble,
};
use polywave::geometry::{double, PolygonSpec, Point2};
use polywave::littlewood_paley::{
    bump, dyadic_profile, mihlin_norm, randomized_profile, squarefunction, widened_profile,
};
use polywave::mesh::{triangulate, MeshParams};
use polywave::spectral::{
    apply_multiplier, sobolev_norm, BasisPair, ModeParity, SolveStrategy, SpectralBasis,
    SpectralState, SpectrumKind,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn report(criterion: u32, pass: bool, detail: &str) {
    println!(
        "criterion {criterion:>2} {}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn unit_square() -> PolygonSpec {
    PolygonSpec::parse("name unit-square\nouter 4\n0 0\n1 0\n1 1\n0 1\n").unwrap()
}

fn square17() -> PolygonSpec {
    PolygonSpec::parse("name square17\nouter 4\n0 0\n1.7 0\n1.7 1.7\n0 1.7\n").unwrap()
}

/// Separation-of-variables eigenvalues of the square of side L.
fn square_oracle(side: f64, dirichlet: bool, count: usize) -> Vec<f64> {
    let mut vals = Vec::new();
    let lo = if dirichlet { 1u32 } else { 0 };
    for m in lo..60 {
        for n in lo..60 {
            vals.push(PI * PI * ((m * m + n * n) as f64) / (side * side));
        }
    }
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals.truncate(count);
    vals
}

/// Merged oracle (value, is_even) for the doubled square: Neumann modes are
/// even under the mirror, Dirichlet modes odd.
fn merged_oracle(side: f64, count: usize) -> Vec<(f64, bool)> {
    let mut vals: Vec<(f64, bool)> = square_oracle(side, true, count + 8)
        .into_iter()
        .map(|v| (v, false))
        .chain(square_oracle(side, false, count + 8).into_iter().map(|v| (v, true)))
        .collect();
    vals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    vals.truncate(count);
    vals
}

/// Doubled unit square pair for the doubling-correspondence check, solved
/// directly (no parity shortcut) so the classification is a real test.
fn square_pair_direct() -> &'static BasisPair {
    static PAIR: OnceLock<BasisPair> = OnceLock::new();
    PAIR.get_or_init(|| {
        let mesh = triangulate(&double(unit_square()), &MeshParams::new(0.08)).unwrap();
        BasisPair::build(Arc::new(mesh), SpectrumKind::Closed, false, 40, SolveStrategy::Direct)
            .unwrap()
    })
}

/// The 1.7-square working basis for band experiments: large enough that the
/// low dyadic bands hold several trusted frequencies each.
fn band_pair() -> &'static BasisPair {
    static PAIR: OnceLock<BasisPair> = OnceLock::new();
    PAIR.get_or_init(|| {
        let mesh = triangulate(&double(square17()), &MeshParams::new(0.041)).unwrap();
        BasisPair::build(
            Arc::new(mesh),
            SpectrumKind::Closed,
            false,
            240,
            SolveStrategy::ParityMerge,
        )
        .unwrap()
    })
}

/// The fine unit-square pair for the heat-kernel comparison.
fn heat_pair() -> &'static BasisPair {
    static PAIR: OnceLock<BasisPair> = OnceLock::new();
    PAIR.get_or_init(|| {
        let mesh = triangulate(&double(unit_square()), &MeshParams::new(0.02)).unwrap();
        BasisPair::build(
            Arc::new(mesh),
            SpectrumKind::Closed,
            false,
            340,
            SolveStrategy::ParityMerge,
        )
        .unwrap()
    })
}

#[test]
fn criterion_01_eigenvalue_oracle() {
    let start = Instant::now();
    let spec = double(unit_square());
    let mesh0 = triangulate(&spec, &MeshParams::new(0.08)).unwrap();
    let mesh1 = mesh0.uniform_refine();
    let mesh2 = mesh1.uniform_refine();
    let meshes = [mesh0, mesh1, mesh2];

    let mut worst_final = 0.0f64;
    let mut orders = Vec::new();
    for (kind, dirichlet) in [(SpectrumKind::Dirichlet, true), (SpectrumKind::Neumann, false)] {
        let oracle = square_oracle(1.0, dirichlet, 10);
        let mut errs = Vec::new();
        for mesh in &meshes {
            let basis = SpectralBasis::compute(
                Arc::new(mesh.clone()),
                kind,
                false,
                10,
                SolveStrategy::ParityMerge,
            )
            .unwrap();
            let e: Vec<f64> = (0..10)
                .map(|j| {
                    if oracle[j] == 0.0 {
                        basis.lambda_sq[j].abs()
                    } else {
                        (basis.lambda_sq[j] - oracle[j]).abs() / oracle[j]
                    }
                })
                .collect();
            errs.push(e);
        }
        for j in 0..10 {
            worst_final = worst_final.max(errs[2][j]);
            if oracle[j] > 0.0 && errs[2][j] > 0.0 {
                orders.push((errs[1][j] / errs[2][j]).log2());
            }
        }
    }
    let mean_order = orders.iter().sum::<f64>() / orders.len() as f64;
    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst_final < 0.01 && mean_order >= 1.8 && elapsed <= 120.0;
    report(
        1,
        pass,
        &format!(
            "first 10 Dirichlet+Neumann eigenvalues: worst rel err {worst_final:.2e} (< 1e-2), \
             mean h-order {mean_order:.2} (>= 1.8), runtime {elapsed:.1}s (<= 120s)"
        ),
    );
}

#[test]
fn criterion_02_doubling_correspondence() {
    let pair = square_pair_direct();
    let basis = &pair.fine;
    // first 10 of the doubled spectrum against the merged oracle
    let oracle = merged_oracle(1.0, 10);
    let mut worst = 0.0f64;
    for j in 0..10 {
        let err = if oracle[j].0 == 0.0 {
            basis.lambda_sq[j].abs()
        } else {
            (basis.lambda_sq[j] - oracle[j].0).abs() / oracle[j].0
        };
        worst = worst.max(err);
    }

    // parity classification of trusted modes against the oracle multiset,
    // grouped by (near-)equal oracle values
    let trusted: Vec<usize> = (0..basis.count()).filter(|&j| basis.trusted[j]).collect();
    let oracle_full = merged_oracle(1.0, trusted.len());
    let mut correct = 0usize;
    let mut i = 0usize;
    while i < trusted.len() {
        // group of equal oracle values
        let mut j = i + 1;
        while j < trusted.len() && (oracle_full[j].0 - oracle_full[i].0).abs() < 1e-9 * (1.0 + oracle_full[i].0)
        {
            j += 1;
        }
        let oracle_even = oracle_full[i..j].iter().filter(|(_, e)| *e).count();
        let oracle_odd = (j - i) - oracle_even;
        let got_even = trusted[i..j]
            .iter()
            .filter(|&&m| basis.parity[m] == ModeParity::Even)
            .count();
        let got_odd = trusted[i..j]
            .iter()
            .filter(|&&m| basis.parity[m] == ModeParity::Odd)
            .count();
        correct += oracle_even.min(got_even) + oracle_odd.min(got_odd);
        i = j;
    }
    let fraction = correct as f64 / trusted.len() as f64;
    let pass = worst < 0.01 && fraction >= 0.95;
    report(
        2,
        pass,
        &format!(
            "doubled spectrum vs merged Dirichlet+Neumann oracle: worst rel err {worst:.2e} \
             (< 1e-2); parity classification correct for {:.1}% of {} trusted modes (>= 95%)",
            100.0 * fraction,
            trusted.len()
        ),
    );
}

#[test]
fn criterion_03_partition_and_projector_identities() {
    let basis = &band_pair().fine;
    // partition of unity at every trusted frequency
    let mut worst = 0.0f64;
    for j in 0..basis.count() {
        if !basis.trusted[j] {
            continue;
        }
        let total: f64 = (0..=40).map(|k| dyadic_profile(k).value(basis.lambda[j])).sum();
        worst = worst.max((total - 1.0).abs());
    }

    // reconstruction in coefficients
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let modes: Vec<usize> = (0..basis.count()).collect();
    let state = random_state_on(basis, &modes, &mut rng);
    let mut recon = SpectralState::zero(basis);
    let kmax = polywave::littlewood_paley::kmax_for(basis.lambda.last().copied().unwrap_or(1.0));
    for k in 0..=kmax {
        let uk = apply_multiplier(basis, &dyadic_profile(k), &state).unwrap();
        for (r, u) in recon.coeffs.iter_mut().zip(&uk.coeffs) {
            *r += u;
        }
    }
    let mut recon_err = 0.0f64;
    for j in 0..basis.count() {
        recon_err = recon_err
            .max((recon.coeffs[j] - state.coeffs[j]).norm() / state.coeffs[j].norm().max(1e-300));
    }

    // widened identity at 100 points per band
    let mut widened_err = 0.0f64;
    for k in 0..=8u32 {
        let b = dyadic_profile(k);
        let w = widened_profile(k);
        let (lo, hi) = (b.support.0.max(1e-3), b.support.1);
        for i in 0..100 {
            let z = lo + (hi - lo) * (i as f64 + 0.5) / 100.0;
            widened_err = widened_err.max((w.value(z) * b.value(z) - b.value(z)).abs());
        }
    }
    let pass = worst < 1e-12 && recon_err < 1e-13 && widened_err < 1e-12;
    report(
        3,
        pass,
        &format!(
            "partition sum err {worst:.2e} (< 1e-12) over trusted frequencies; \
             band reconstruction rel err {recon_err:.2e} (< 1e-13); \
             widened identity err {widened_err:.2e} (< 1e-12)"
        ),
    );
}

#[test]
fn criterion_04_frequency_scaled_bound() {
    let basis = &band_pair().fine;
    // max of the bump over a fine grid (attained value 1 by construction)
    let max_beta = (0..100_000)
        .map(|i| bump(0.25 + 0.75 * i as f64 / 100_000.0))
        .fold(0.0f64, f64::max);
    let kmax = polywave::littlewood_paley::kmax_for(basis.lambda.last().copied().unwrap_or(1.0));
    let mut worst = 0.0f64;
    for k in 0..=kmax {
        let band = dyadic_profile(k);
        let scale = 2f64.powi(-2 * k as i32);
        for j in 0..basis.count() {
            if basis.trusted[j] {
                let v = scale * basis.lambda_sq[j] * band.value(basis.lambda[j]);
                worst = worst.max(v);
            }
        }
    }
    let bound = 16.0 * max_beta;
    let pass = worst <= bound;
    report(
        4,
        pass,
        &format!(
            "sup over trusted modes and bands of 2^-2k lambda^2 beta_k(lambda) = {worst:.4} \
             <= 16 max beta = {bound:.4}"
        ),
    );
}

#[test]
fn criterion_05_squarefunction_equivalence() {
    let basis = &band_pair().fine;
    let ceiling = basis.trusted_ceiling();
    let cutoffs = [ceiling / 2.0, ceiling];

    // single-mode scalar lies in [1/sqrt(3), 1] for every trusted mode
    let mut scalar_lo = f64::INFINITY;
    let mut scalar_hi = 0.0f64;
    for j in 0..basis.count() {
        if !basis.trusted[j] || basis.lambda[j] == 0.0 {
            continue;
        }
        let s: f64 = (0..=20)
            .map(|k| dyadic_profile(k).value(basis.lambda[j]).powi(2))
            .sum::<f64>()
            .sqrt();
        scalar_lo = scalar_lo.min(s);
        scalar_hi = scalar_hi.max(s);
    }
    let scalars_ok = scalar_lo >= 1.0 / 3f64.sqrt() - 1e-12 && scalar_hi <= 1.0 + 1e-12;

    let mut pass = scalars_ok;
    let mut detail = format!(
        "single-mode scalars in [{scalar_lo:.6}, {scalar_hi:.6}] (within [3^-1/2, 1]); "
    );
    for q in [4.0, 6.0] {
        let mut intervals = Vec::new();
        for (ci, &cutoff) in cutoffs.iter().enumerate() {
            let modes: Vec<usize> = (0..basis.count())
                .filter(|&j| basis.trusted[j] && basis.lambda[j] <= cutoff)
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(100 + ci as u64);
            let mut lo = f64::INFINITY;
            let mut hi = 0.0f64;
            for _ in 0..64 {
                let state = random_state_on(basis, &modes, &mut rng);
                let (_, ratio) = squarefunction(basis, &state, q).unwrap();
                lo = lo.min(ratio);
                hi = hi.max(ratio);
            }
            intervals.push((lo, hi));
        }
        let lo_shift = (intervals[1].0 - intervals[0].0).abs() / intervals[0].0;
        let hi_shift = (intervals[1].1 - intervals[0].1).abs() / intervals[0].1;
        pass = pass && lo_shift < 0.25 && hi_shift < 0.25;
        detail.push_str(&format!(
            "q={q}: [{:.4},{:.4}] -> [{:.4},{:.4}] under cutoff doubling \
             (shifts {:.1}%/{:.1}% < 25%); ",
            intervals[0].0,
            intervals[0].1,
            intervals[1].0,
            intervals[1].1,
            100.0 * lo_shift,
            100.0 * hi_shift
        ));
    }
    report(5, pass, &detail);
}

#[test]
fn criterion_06_mihlin_theta_uniformity() {
    // sup over dyadic theta grids of increasing depth
    let sup_over = |depth: u32| -> f64 {
        let n = 1u64 << depth;
        let mut sup = 0.0f64;
        for j in 0..n {
            let theta = j as f64 / n as f64;
            sup = sup.max(mihlin_norm(&randomized_profile(theta, 12, false), 2).unwrap());
        }
        sup
    };
    let s64 = sup_over(6);
    let s128 = sup_over(7);
    let s256 = sup_over(8);
    let var1 = (s128 - s64).abs() / s128;
    let var2 = (s256 - s64).abs() / s256;

    // dilation invariance across bands
    let reference = mihlin_norm(&dyadic_profile(1), 2).unwrap();
    let mut band_dev = 0.0f64;
    for k in 2..=10u32 {
        band_dev = band_dev.max((mihlin_norm(&dyadic_profile(k), 2).unwrap() - reference).abs());
    }
    let pass = var1 < 0.01 && var2 < 0.01 && band_dev <= 1e-10;
    report(
        6,
        pass,
        &format!(
            "sup_theta mihlin(F_theta) on 64/128/256 dyadic thetas = \
             {s64:.6}/{s128:.6}/{s256:.6} (variation {:.2e}, {:.2e} < 1%); \
             mihlin(beta_k) spread over k=1..10 is {band_dev:.2e} (<= 1e-10)",
            var1, var2
        ),
    );
}

#[test]
fn criterion_07_dyadic_no_growth() {
    let basis = &band_pair().fine;
    let start = Instant::now();
    let pair = AdmissiblePair::new(4.0, 4.0).unwrap();
    let ens = Ensemble {
        samples: 32,
        seed: 7,
    };
    let t_horizon = 0.25; // spans 2 dyadic intervals at k = 2, 16 at k = 6
    let mut per_k = std::collections::BTreeMap::new();
    let mut per_k_lossy = std::collections::BTreeMap::new();
    let mut detail = String::new();
    for k in 2..=6u32 {
        let ratios = dyadic_strichartz(basis, k, pair, t_horizon, ens).unwrap();
        let max_lossy = ratios.iter().cloned().fold(0.0f64, f64::max);
        // The loss-normalized ratio carries an inherent 2^{-k/p} interval
        // factor for generic data; the uniformity diagnostic is the family
        // ||u_k|| / ||u_k(0)||_2 with the loss factor multiplied back.
        let max_plain = max_lossy * 2f64.powf(k as f64 / pair.p);
        per_k.insert(k as i64, max_plain);
        per_k_lossy.insert(k as i64, max_lossy);
        detail.push_str(&format!(
            "k={k}: max {max_plain:.4} ({} modes); ",
            band_modes(basis, k).len()
        ));
    }
    let slope = polywave::cli::slope_of_log_max(&per_k);
    let slope_lossy = polywave::cli::slope_of_log_max(&per_k_lossy);
    let elapsed = start.elapsed().as_secs_f64();
    // two-sided flatness for the plain family, one-sided no-growth for the
    // loss-normalized one
    let pass = slope.abs() <= 0.15 && slope_lossy <= 0.15 && elapsed <= 600.0;
    report(
        7,
        pass,
        &format!(
            "dyadic ratios ||u_k||_L4L4 / ||u_k(0)||_2, p=q=4, 32 samples: {detail}slope of \
             log max vs k = {slope:+.4} (|.| <= 0.15); loss-normalized slope {slope_lossy:+.4} \
             (<= 0.15); runtime {elapsed:.0}s (<= 600s)"
        ),
    );
}

#[test]
fn criterion_08_full_ratio_no_growth() {
    let basis = &band_pair().fine;
    let pair = AdmissiblePair::new(4.0, 4.0).unwrap();
    let mut per_k = std::collections::BTreeMap::new();
    let mut detail = String::new();
    for k in 2..=6u32 {
        let modes = band_modes(basis, k);
        let mut rng = ChaCha8Rng::seed_from_u64(900 + k as u64);
        let mut max = 0.0f64;
        for _ in 0..12 {
            let f = random_state_on(basis, &modes, &mut rng);
            let ratio = strichartz_ratio(basis, &f, pair, 0.25).unwrap();
            max = max.max(ratio);
        }
        per_k.insert(k as i64, max);
        detail.push_str(&format!("k={k}: max {max:.4}; "));
    }
    let slope = polywave::cli::slope_of_log_max(&per_k);
    let pass = slope.abs() <= 0.15;
    report(
        8,
        pass,
        &format!(
            "full ratios ||u||_L4L4 / ||f||_H^(1/4) over band ensembles: {detail}\
             slope of log max vs k = {slope:+.4} (|.| <= 0.15)"
        ),
    );
}

#[test]
fn criterion_09_cone_closed_forms() {
    // rho = 1: the free plane, 1/(4 pi t)
    let plane = ConeParams::new(1.0).unwrap();
    let mut plane_err = 0.0f64;
    for (r, t) in [(0.0, 0.004), (0.3, 0.05), (1.5, 0.7)] {
        let v = cone_diagonal_heat(plane, HeatQuery::new(r, t).unwrap()).unwrap();
        let expect = 1.0 / (4.0 * PI * t);
        plane_err = plane_err.max((v - expect).abs() / expect);
    }
    // rho = 1/2: the angle-pi cone is the plane modulo a half-turn; images
    // give (1/(2 pi t))(1/2 + e^{-r^2/t}/2). The geometric term at y = pi
    // sits on the endpoint of the cosine integration and carries the
    // averaged weight 1/2 (which the surface kernel near a square corner
    // confirms independently in criterion 10).
    let half = ConeParams::new(0.5).unwrap();
    let mut half_err = 0.0f64;
    for (r, t) in [(0.05, 0.01), (0.3, 0.05), (1.0, 0.4)] {
        let v = cone_diagonal_heat(half, HeatQuery::new(r, t).unwrap()).unwrap();
        let expect = (0.5 + 0.5 * (-r * r / t).exp()) / (2.0 * PI * t);
        half_err = half_err.max((v - expect).abs() / expect);
    }
    // exact zeros of the diffraction integral
    let mut zeros_exact = true;
    for rho in [1.0, 0.5, 1.0 / 3.0] {
        let cone = ConeParams::new(rho).unwrap();
        let v = diffraction_integral(cone, HeatQuery::new(0.3, 0.2).unwrap()).unwrap();
        zeros_exact &= v == 0.0;
    }
    // rho = 3/2 diffraction integral against an independent Simpson oracle
    let cone = ConeParams::new(1.5).unwrap();
    let q = HeatQuery::new(0.4, 0.3).unwrap();
    let adaptive = diffraction_integral(cone, q).unwrap();
    let oracle = {
        // dense composite Simpson on [0, 60] with 1.2e6 intervals
        let a = q.r * q.r / (2.0 * q.t);
        let f = |y: f64| {
            let arg = PI / 1.5;
            (-(1.0 + y.cosh()) * a).exp() * arg.sin()
                / (2.0 * PI * 1.5 * ((y / 1.5).cosh() - arg.cos()))
        };
        let n = 1_200_000usize;
        let h = 60.0 / n as f64;
        let mut acc = f(0.0) + f(60.0);
        for i in 1..n {
            acc += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    };
    let diff_err = (adaptive - oracle).abs();
    let pass = plane_err < 1e-10 && half_err < 1e-10 && zeros_exact && diff_err < 1e-10;
    report(
        9,
        pass,
        &format!(
            "plane kernel rel err {plane_err:.2e} (< 1e-10); rho=1/2 closed form rel err \
             {half_err:.2e} (< 1e-10); diffraction integral exactly zero at rho in \
             {{1, 1/2, 1/3}}: {zeros_exact}; rho=3/2 integral vs Simpson oracle: \
             {diff_err:.2e} (< 1e-10)"
        ),
    );
}

#[test]
fn criterion_10_cheeger_comparison() {
    let pair = heat_pair();
    let basis = &pair.fine;
    let ceiling = basis.trusted_ceiling();
    let area = basis.mesh.total_area();
    // smallest time at which the Weyl tail above the trusted ceiling is
    // negligible (the same estimate spectral_heat enforces)
    let t_min = 1.05 * (2.0 * area * 1e8).ln() / (ceiling * ceiling);
    // The largest time is chosen where the genuine difference between the
    // compact surface and the cone model (heat wrapping through the other
    // corners, ~ e^{-L^2/4t}) rises above the discretization floor, so the
    // decreasing trend toward t -> 0 is observable.
    let times = [0.15, 2.0 * t_min, t_min];

    let corner = basis
        .mesh
        .cone_vertex_ids
        .iter()
        .copied()
        .find(|&v| basis.mesh.vertices[v as usize] == Point2::new(0.0, 0.0))
        .unwrap() as usize;
    let rows = cheeger_compare(pair, corner, 0.5, &[0.1], &times).unwrap();
    let dev_large = rows[0].rel_dev;
    let dev_mid = rows[1].rel_dev;
    let dev_small = rows[2].rel_dev;
    let pass = dev_small < 1e-3 && dev_small <= dev_large && dev_mid <= dev_large;
    report(
        10,
        pass,
        &format!(
            "corner rho=1/2, r = {:.4}: rel dev {dev_small:.2e} at t = {:.4} (< 1e-3, trusted \
             ceiling lambda = {ceiling:.1}); decreasing toward small t: {dev_small:.2e}, \
             {dev_mid:.2e} <= {dev_large:.2e} at t = {:.2}",
            rows[0].r, times[2], times[0]
        ),
    );
}

#[test]
fn criterion_11_conservation_and_duhamel() {
    let basis = &band_pair().fine;
    let mut rng = ChaCha8Rng::seed_from_u64(5150);
    let modes: Vec<usize> = (0..basis.count()).collect();
    let f = random_state_on(basis, &modes, &mut rng);
    let m0 = f.l2_norm();

    // coefficient-level mass conservation
    let mut mass_err = 0.0f64;
    for t in [1e-3, 0.1, 1.0, 17.0] {
        let u = propagate(basis, &f, t).unwrap();
        mass_err = mass_err.max((u.l2_norm() - m0).abs() / m0);
    }

    // group law
    let via = propagate(basis, &propagate(basis, &f, 0.4).unwrap(), 0.35).unwrap();
    let direct = propagate(basis, &f, 0.75).unwrap();
    let mut group_err = 0.0f64;
    for j in 0..basis.count() {
        group_err = group_err.max((via.coeffs[j] - direct.coeffs[j]).norm());
    }

    // Duhamel with zero forcing matches free propagation
    let times: Vec<f64> = (0..30).map(|i| 0.02 * i as f64).collect();
    let zero = vec![SpectralState::zero(basis); times.len()];
    let traj = duhamel(basis, &f, &zero, &times).unwrap();
    let mut free_err = 0.0f64;
    for (i, &t) in times.iter().enumerate() {
        let expect = propagate(basis, &f, t).unwrap();
        for j in 0..basis.count() {
            free_err = free_err.max((traj[i].coeffs[j] - expect.coeffs[j]).norm());
        }
    }

    // resonant forcing reproduces the closed form to 1e-10
    let j = 7;
    let mu = basis.lambda_sq[j];
    let times: Vec<f64> = (0..501).map(|i| 0.002 * i as f64).collect();
    let forcing: Vec<SpectralState> = times
        .iter()
        .map(|&s| {
            let mut g = SpectralState::zero(basis);
            g.coeffs[j] = Complex64::from_polar(1.0, -s * mu);
            g
        })
        .collect();
    let pure = SpectralState::pure_mode(basis, j);
    let traj = duhamel(basis, &pure, &forcing, &times).unwrap();
    let t_end = *times.last().unwrap();
    let closed = Complex64::from_polar(1.0, -t_end * mu) * Complex64::new(1.0, t_end);
    let resonant_err = (traj.last().unwrap().coeffs[j] - closed).norm();

    let pass = mass_err < 1e-13 && group_err < 1e-11 && free_err < 1e-11 && resonant_err < 1e-10;
    report(
        11,
        pass,
        &format!(
            "mass conservation rel err {mass_err:.2e} (< 1e-13); group law err {group_err:.2e} \
             (< 1e-11); zero-forcing Duhamel vs propagate {free_err:.2e} (< 1e-11); resonant \
             closed form err {resonant_err:.2e} (< 1e-10)"
        ),
    );
}

/// A flat point on the seam (interior of an edge, rho = 1) behaves like the
/// free plane: the doubled metric is smooth there.
#[test]
fn flat_seam_point_matches_free_plane() {
    let pair = heat_pair();
    let basis = &pair.fine;
    let ceiling = basis.trusted_ceiling();
    let area = basis.mesh.total_area();
    let t = 1.05 * (2.0 * area * 1e8).ln() / (ceiling * ceiling);

    // nearest coarse vertex to the midpoint of the bottom edge
    let target = Point2::new(0.5, 0.0);
    let mesh = &pair.coarse.mesh;
    let mut best = (0usize, f64::INFINITY);
    for v in 0..mesh.n_vertices() {
        let d = mesh.vertices[v].dist(target);
        if d < best.1 {
            best = (v, d);
        }
    }
    let x = best.0;
    let p = polywave::cone_heat::spectral_heat_extrapolated(pair, t, x, x).unwrap();
    let free = 1.0 / (4.0 * PI * t);
    let rel = (p - free).abs() / free;
    assert!(rel < 1e-3, "flat point kernel {p} vs free plane {free} (rel {rel})");
    println!(
        "flat seam point PASS: spectral kernel within {:.2e} of the free plane at t = {t:.4}",
        rel
    );
}

/// Weyl-law sanity over the trusted window, a standing invariant of the
/// spectral module rather than a numbered criterion.
#[test]
fn weyl_law_sanity() {
    let basis = &band_pair().fine;
    let area = basis.mesh.total_area();
    let ceiling = basis.trusted_ceiling();
    let mut worst = 0.0f64;
    for frac in [0.5, 0.7, 0.9] {
        let lambda = ceiling * frac;
        let counted = polywave::spectral::weyl_count(basis, lambda) as f64;
        let expected = polywave::spectral::weyl_expected(area, lambda);
        worst = worst.max((counted - expected).abs() / expected);
    }
    assert!(worst < 0.2, "Weyl deviation {worst:.3}");
    println!("weyl sanity PASS: counting function within {:.1}% of Area lambda^2/(4 pi)", worst * 100.0);
}

/// The H^{1/p} aggregation of band masses with the <= 3-band overlap
/// constant, checked on random data.
#[test]
fn sobolev_band_aggregation() {
    let basis = &band_pair().fine;
    let p = 4.0;
    let mut rng = ChaCha8Rng::seed_from_u64(777);
    let modes: Vec<usize> = (0..basis.count()).collect();
    for _ in 0..8 {
        let f = random_state_on(basis, &modes, &mut rng);
        let kmax = polywave::littlewood_paley::kmax_for(basis.lambda.last().copied().unwrap());
        let mut agg = 0.0f64;
        for k in 0..=kmax {
            let uk = apply_multiplier(basis, &dyadic_profile(k), &f).unwrap();
            agg += 2f64.powf(2.0 * k as f64 / p) * uk.l2_norm().powi(2);
        }
        let h_norm = sobolev_norm(basis, &f, 1.0 / p).unwrap();
        let bound = 3.0 * 2f64.powf(2.0 / p) * h_norm * h_norm;
        assert!(
            agg <= bound * (1.0 + 1e-12),
            "band aggregation {agg} exceeds {bound}"
        );
    }
    println!("band aggregation PASS: sum_k 2^(2k/p) ||u_k||^2 <= 3 * 2^(2/p) ||u||_H^(1/p)^2");
}
