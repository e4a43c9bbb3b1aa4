//! Squarefunction experiment: the L^q norm of (sum_k |beta_k(sqrt(Delta)) a|^2)^(1/2)
//! against the L^q norm of a, over random states on the doubled square.
//!
//! Run with: cargo run --release --example squarefunction_ratio

use std::sync::Arc;

use polywave::evolution::random_state_on;
use polywave::geometry::{double, PolygonSpec};
use polywave::littlewood_paley::squarefunction;
use polywave::mesh::{triangulate, MeshParams};
use polywave::spectral::{SolveStrategy, SpectralBasis, SpectralState, SpectrumKind};
use rand::SeedableRng;

fn main() {
    let poly = PolygonSpec::parse(include_str!("../data/unit-square.poly")).unwrap();
    let mesh = triangulate(&double(poly), &MeshParams::new(0.07)).unwrap();
    let basis = SpectralBasis::compute(
        Arc::new(mesh),
        SpectrumKind::Closed,
        false,
        40,
        SolveStrategy::ParityMerge,
    )
    .unwrap();

    // single modes: the squarefunction is a pointwise multiple of |phi_j|
    for j in [3, 10, 25] {
        let state = SpectralState::pure_mode(&basis, j);
        let (_, ratio) = squarefunction(&basis, &state, 4.0).unwrap();
        let scalar: f64 = (0..=12)
            .map(|k| {
                polywave::littlewood_paley::dyadic_profile(k)
                    .value(basis.lambda[j])
                    .powi(2)
            })
            .sum::<f64>()
            .sqrt();
        println!(
            "mode {j}: lambda = {:.3}, band scalar = {scalar:.6} (in [3^-1/2, 1]), ratio = {ratio:.6}",
            basis.lambda[j]
        );
    }

    // random ensemble
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
    let modes: Vec<usize> = (0..basis.count()).collect();
    for q in [4.0, 6.0] {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for _ in 0..24 {
            let state = random_state_on(&basis, &modes, &mut rng);
            let (_, ratio) = squarefunction(&basis, &state, q).unwrap();
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        println!("q = {q}: squarefunction ratio over 24 random states in [{lo:.4}, {hi:.4}]");
    }
}
