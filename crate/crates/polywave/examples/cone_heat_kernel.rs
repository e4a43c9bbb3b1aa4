//! Explicit flat-cone diagonal heat kernels and their agreement with the
//! spectral kernel of a doubled polygon near a corner.
//!
//! Run with: cargo run --release --example cone_heat_kernel

use std::sync::Arc;

use polywave::cone_heat::{
    cheeger_compare, cone_diagonal_heat, diffraction_integral, geometric_terms, ConeParams,
    HeatQuery,
};
use polywave::geometry::{double, PolygonSpec};
use polywave::mesh::{triangulate, MeshParams};
use polywave::spectral::{BasisPair, SolveStrategy, SpectrumKind};

fn main() {
    // closed forms at the non-diffractive radii
    for rho in [1.0, 0.5, 1.0 / 3.0] {
        let cone = ConeParams::new(rho).unwrap();
        let q = HeatQuery::new(0.2, 0.05).unwrap();
        println!(
            "rho = {rho:.4}: geometric terms {:?}, diffraction integral {}, P(t; r) = {:.8}",
            geometric_terms(cone),
            diffraction_integral(cone, q).unwrap(),
            cone_diagonal_heat(cone, q).unwrap()
        );
    }
    // a diffractive cone
    let cone = ConeParams::new(1.5).unwrap();
    let q = HeatQuery::new(0.2, 0.05).unwrap();
    println!(
        "rho = 1.5: diffraction integral {:.10}, P(t; r) = {:.8}\n",
        diffraction_integral(cone, q).unwrap(),
        cone_diagonal_heat(cone, q).unwrap()
    );

    // spectral kernel of the doubled unit square against the rho = 1/2 cone
    let poly = PolygonSpec::parse(include_str!("../data/unit-square.poly")).unwrap();
    let mesh = triangulate(&double(poly), &MeshParams::new(0.05)).unwrap();
    let pair = BasisPair::build(
        Arc::new(mesh),
        SpectrumKind::Closed,
        false,
        120,
        SolveStrategy::ParityMerge,
    )
    .unwrap();
    let corner = pair.coarse.mesh.cone_vertex_ids[0] as usize;
    let rows = cheeger_compare(&pair, corner, 0.5, &[0.15], &[0.1, 0.06, 0.04]).unwrap();
    println!("corner comparison (rho = 1/2):");
    println!("      r       t      cone          spectral      rel dev");
    for row in rows {
        println!(
            "{:>8.4} {:>7.3}  {:<12.6}  {:<12.6}  {:.3e}",
            row.r, row.t, row.cone_value, row.spectral_value, row.rel_dev
        );
    }
}
