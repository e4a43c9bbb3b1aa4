//! The inhomogeneous Schrodinger equation: resonant forcing grows a mode
//! linearly in time, and the integrating-factor solver inverts exactly when
//! run backward.
//!
//! Run with: cargo run --release --example duhamel_forcing

use std::sync::Arc;

use num_complex::Complex64;
use polywave::evolution::duhamel;
use polywave::geometry::{double, PolygonSpec};
use polywave::mesh::{triangulate, MeshParams};
use polywave::spectral::{SolveStrategy, SpectralBasis, SpectralState, SpectrumKind};

fn main() {
    let poly = PolygonSpec::parse(include_str!("../data/unit-square.poly")).unwrap();
    let mesh = triangulate(&double(poly), &MeshParams::new(0.09)).unwrap();
    let basis = SpectralBasis::compute(
        Arc::new(mesh),
        SpectrumKind::Closed,
        false,
        20,
        SolveStrategy::ParityMerge,
    )
    .unwrap();

    let j = 4;
    let mu = basis.lambda_sq[j];
    println!("forcing mode {j} at its own frequency (lambda^2 = {mu:.4})");

    let times: Vec<f64> = (0..401).map(|i| 0.001 * i as f64).collect();
    let forcing: Vec<SpectralState> = times
        .iter()
        .map(|&s| {
            let mut g = SpectralState::zero(&basis);
            g.coeffs[j] = Complex64::from_polar(1.0, -s * mu);
            g
        })
        .collect();
    let f0 = SpectralState::pure_mode(&basis, j);
    let traj = duhamel(&basis, &f0, &forcing, &times).unwrap();

    println!("   t     |c_j(t)|   closed form sqrt(1 + t^2)");
    for i in (0..=400).step_by(100) {
        let t = times[i];
        println!(
            "{:>5.2}  {:>9.6}  {:>9.6}",
            t,
            traj[i].coeffs[j].norm(),
            (1.0 + t * t).sqrt()
        );
    }

    // time reversal returns the initial data
    let back_times: Vec<f64> = times.iter().rev().copied().collect();
    let back_forcing: Vec<SpectralState> = forcing.iter().rev().cloned().collect();
    let back = duhamel(&basis, traj.last().unwrap(), &back_forcing, &back_times).unwrap();
    let err: f64 = back
        .last()
        .unwrap()
        .coeffs
        .iter()
        .zip(&f0.coeffs)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    println!("reversal error after 400 forward + 400 backward steps: {err:.3e}");
}
