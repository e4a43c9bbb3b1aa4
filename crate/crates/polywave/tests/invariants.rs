//! Cross-module invariants that tie the decomposition, the calculus, and the
//! evolution together on a shared small surface.

use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use polywave::evolution::{lplq_norm, random_state_on, AdmissiblePair, TimeGrid};
use polywave::geometry::{double, PolygonSpec};
use polywave::littlewood_paley::{dyadic_profile, mihlin_norm, widened_profile};
use polywave::mesh::{assemble, triangulate, MeshParams};
use polywave::spectral::{
    analyze, apply_multiplier, evaluate_on_mesh, lq_norm, SolveStrategy, SpectralBasis,
    SpectralState, SpectrumKind,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn basis() -> &'static SpectralBasis {
    static BASIS: OnceLock<SpectralBasis> = OnceLock::new();
    BASIS.get_or_init(|| {
        let poly = PolygonSpec::parse("name square\nouter 4\n0 0\n1 0\n1 1\n0 1\n").unwrap();
        let mesh = triangulate(&double(poly), &MeshParams::new(0.08)).unwrap();
        SpectralBasis::compute(
            Arc::new(mesh),
            SpectrumKind::Closed,
            false,
            40,
            SolveStrategy::ParityMerge,
        )
        .unwrap()
    })
}

#[test]
fn distant_band_projectors_annihilate() {
    let basis = basis();
    let mut state = SpectralState::zero(basis);
    for (j, c) in state.coeffs.iter_mut().enumerate() {
        *c = Complex64::new(1.0 + j as f64, -0.3);
    }
    for k in 0..6u32 {
        for kp in 0..6u32 {
            if (k as i32 - kp as i32).abs() < 3 {
                continue;
            }
            let once = apply_multiplier(basis, &dyadic_profile(kp), &state).unwrap();
            let twice = apply_multiplier(basis, &dyadic_profile(k), &once).unwrap();
            assert!(
                twice.coeffs.iter().all(|c| *c == Complex64::new(0.0, 0.0)),
                "bands {k} and {kp} overlap"
            );
        }
    }
}

/// The pairing |<a1, a2>| is controlled by the squarefunction of one factor
/// against the widened squarefunction of the other.
#[test]
fn duality_mechanism() {
    let basis = basis();
    let q = 4.0;
    let qp = q / (q - 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let modes: Vec<usize> = (0..basis.count()).collect();
    for _ in 0..5 {
        let a1 = random_state_on(basis, &modes, &mut rng);
        let a2 = random_state_on(basis, &modes, &mut rng);
        // L2 pairing via coefficients (mass orthonormality)
        let pairing: Complex64 = a1
            .coeffs
            .iter()
            .zip(&a2.coeffs)
            .map(|(x, y)| x * y.conj())
            .sum();

        let n = basis.n_vertices();
        let mut s1 = vec![0.0f64; n];
        let mut s2 = vec![0.0f64; n];
        for k in 0..=8u32 {
            let u1 = evaluate_on_mesh(basis, &apply_multiplier(basis, &dyadic_profile(k), &a1).unwrap()).unwrap();
            let u2 = evaluate_on_mesh(basis, &apply_multiplier(basis, &widened_profile(k), &a2).unwrap()).unwrap();
            for v in 0..n {
                s1[v] += u1[v].norm_sqr();
                s2[v] += u2[v].norm_sqr();
            }
        }
        let sf1: Vec<Complex64> = s1.iter().map(|&x| Complex64::new(x.sqrt(), 0.0)).collect();
        let sf2: Vec<Complex64> = s2.iter().map(|&x| Complex64::new(x.sqrt(), 0.0)).collect();
        let bound = lq_norm(&basis.mesh, &sf1, q) * lq_norm(&basis.mesh, &sf2, qp);
        assert!(
            pairing.norm() <= bound * (1.0 + 1e-6),
            "pairing {} exceeds {}",
            pairing.norm(),
            bound
        );
    }
}

/// Ratios over translated dyadic intervals agree exactly for single modes
/// (the modulus of a pure mode is time independent).
#[test]
fn time_translation_invariance_single_mode() {
    let basis = basis();
    let pair = AdmissiblePair::new(4.0, 4.0).unwrap();
    let k = 3u32;
    let step = 2f64.powi(-(k as i32));
    let f = SpectralState::pure_mode(basis, 12);
    let mut first = None;
    for m in [0i32, 1, 5, -3] {
        let grid = TimeGrid::new(m as f64 * step, (m + 1) as f64 * step, 33).unwrap();
        let norm = lplq_norm(basis, &f, pair, grid).unwrap();
        match first {
            None => first = Some(norm),
            Some(expect) => assert!(
                (norm - expect).abs() < 1e-10 * expect,
                "interval {m}: {norm} vs {expect}"
            ),
        }
    }
}

#[test]
fn assembly_is_thread_count_independent() {
    let poly = PolygonSpec::parse("name square\nouter 4\n0 0\n1 0\n1 1\n0 1\n").unwrap();
    let mesh = triangulate(&double(poly), &MeshParams::new(0.1)).unwrap();
    let baseline = assemble(&mesh, false).unwrap();
    for threads in [1usize, 3] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        let ops = pool.install(|| assemble(&mesh, false)).unwrap();
        assert_eq!(ops.stiffness.data, baseline.stiffness.data, "{threads} threads");
        assert_eq!(ops.mass.data, baseline.mass.data);
    }
}

#[test]
fn basis_cache_round_trip() {
    let basis = basis();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("basis.bin");
    let hash = [7u8; 32];
    basis.write_cache(&path, &hash).unwrap();
    let back = SpectralBasis::read_cache(&path, basis.mesh.clone(), &hash).unwrap();
    assert_eq!(back.lambda, basis.lambda);
    assert_eq!(back.lambda_sq, basis.lambda_sq);
    assert_eq!(back.trusted, basis.trusted);
    for j in [0usize, 5, 20] {
        assert_eq!(back.mode(j), basis.mode(j));
    }
    // analysis agrees through the rebuilt mass matrix
    let field = evaluate_on_mesh(basis, &SpectralState::pure_mode(basis, 3)).unwrap();
    let c = analyze(&back, &field).unwrap();
    assert!((c.coeffs[3].re - 1.0).abs() < 1e-10);
    // a wrong provenance hash is rejected
    assert!(SpectralBasis::read_cache(&path, basis.mesh.clone(), &[8u8; 32]).is_err());
}

#[test]
fn mihlin_rejects_low_order_and_nonfinite() {
    assert!(mihlin_norm(&dyadic_profile(2), 1).is_err());
    assert!(mihlin_norm(&dyadic_profile(2), 2).is_ok());
}

/// Spectral heat kernel sanity on the shared basis: symmetry, stochastic
/// completeness, long-time limit, and the minimal-time error.
#[test]
fn spectral_heat_kernel_behaviour() {
    use polywave::cone_heat::spectral_heat;
    let basis = basis();
    let area = basis.mesh.total_area();
    let ceiling = basis.trusted_ceiling();
    let t_ok = 1.1 * (2.0 * area * 1e8).ln() / (ceiling * ceiling);

    let (x, y) = (3usize, 11usize);
    let pxy = spectral_heat(basis, t_ok, x, y).unwrap();
    let pyx = spectral_heat(basis, t_ok, y, x).unwrap();
    assert_eq!(pxy, pyx);

    // too-small times are rejected with the admissible bound
    match spectral_heat(basis, t_ok / 100.0, x, x) {
        Err(polywave::Error::HeatTimeTooSmall { t_min, .. }) => {
            assert!(t_min > t_ok / 100.0);
        }
        other => panic!("expected HeatTimeTooSmall, got {other:?}"),
    }

    // diagonal monotonicity in t
    let p1 = spectral_heat(basis, t_ok, x, x).unwrap();
    let p2 = spectral_heat(basis, 2.0 * t_ok, x, x).unwrap();
    assert!(p2 < p1);

    // long-time limit: the constant mode dominates, P -> 1/Area = 1/2
    let p_inf = spectral_heat(basis, 50.0, x, x).unwrap();
    assert!((p_inf - 0.5).abs() < 1e-6, "{p_inf}");

    // stochastic completeness: integrating over y returns 1
    let ones = vec![Complex64::new(1.0, 0.0); basis.n_vertices()];
    let coeffs = analyze(basis, &ones).unwrap();
    let mut integral = 0.0;
    for j in 0..basis.count() {
        if basis.trusted[j] {
            integral +=
                (-t_ok * basis.lambda_sq[j]).exp() * basis.mode(j)[x] * coeffs.coeffs[j].re;
        }
    }
    assert!((integral - 1.0).abs() < 1e-6, "{integral}");
}

#[test]
fn gaussian_bound_constant_is_finite_and_stable() {
    use polywave::cone_heat::gaussian_bound_check;
    let basis = basis();
    let area = basis.mesh.total_area();
    let ceiling = basis.trusted_ceiling();
    let t0 = 1.05 * (area * 1e6).ln() / (ceiling * ceiling);
    let points: Vec<usize> = (0..basis.n_vertices()).step_by(97).collect();
    let times: Vec<f64> = vec![t0, 2.0 * t0, 8.0 * t0, 1.0];
    let report = gaussian_bound_check(basis, &points, &times, 0.125).unwrap();
    assert!(report.c_emp.is_finite() && report.c_emp > 0.0);
    // on-diagonal reduction: P(t,x,x) <= C max(1/t, 1) already at b = 0
    let diag = gaussian_bound_check(basis, &points, &times, 0.0).unwrap();
    assert!(diag.c_emp <= report.c_emp + 1e-12);
    assert!(diag.c_emp < 3.0, "on-diagonal constant {}", diag.c_emp);
}
