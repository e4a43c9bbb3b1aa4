//! Solve the eigenproblem on the doubled unit square and compare against the
//! separation-of-variables spectrum pi^2 (m^2 + n^2).
//!
//! The doubled spectrum is the union of the Dirichlet and Neumann spectra of
//! the square: odd modes under the mirror involution are Dirichlet
//! eigenfunctions, even modes Neumann ones.
//!
//! Run with: cargo run --release --example eigenvalues

use std::f64::consts::PI;
use std::sync::Arc;

use polywave::geometry::{double, PolygonSpec};
use polywave::mesh::{triangulate, MeshParams};
use polywave::spectral::{BasisPair, ModeParity, SolveStrategy, SpectrumKind};

fn main() {
    let poly = PolygonSpec::parse(include_str!("../data/unit-square.poly")).unwrap();
    let spec = double(poly);
    let mesh = triangulate(&spec, &MeshParams::new(0.06)).unwrap();
    println!(
        "mesh: {} vertices, {} triangles, min angle {:.1} deg",
        mesh.n_vertices(),
        mesh.n_triangles(),
        mesh.min_angle_deg().1
    );

    let pair = BasisPair::build(
        Arc::new(mesh),
        SpectrumKind::Closed,
        false,
        16,
        SolveStrategy::ParityMerge,
    )
    .unwrap();
    let basis = &pair.fine;

    // merged oracle: Dirichlet (m,n >= 1) plus Neumann (m,n >= 0)
    let mut oracle: Vec<(f64, &'static str)> = Vec::new();
    for m in 0..12u32 {
        for n in 0..12u32 {
            let mu = PI * PI * ((m * m + n * n) as f64);
            if m >= 1 && n >= 1 {
                oracle.push((mu, "odd"));
            }
            oracle.push((mu, "even"));
        }
    }
    oracle.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    println!("  j   computed      extrapolated  oracle        parity  trusted");
    let extrap = basis.lambda_sq_extrapolated.as_ref().unwrap();
    for j in 0..basis.count() {
        println!(
            "{:>3}   {:<12.6}  {:<12.6}  {:<12.6}  {:<6}  {}",
            j,
            basis.lambda_sq[j],
            extrap[j],
            oracle[j].0,
            match basis.parity[j] {
                ModeParity::Even => "even",
                ModeParity::Odd => "odd",
                ModeParity::Mixed => "mixed",
            },
            basis.trusted[j]
        );
    }
}
