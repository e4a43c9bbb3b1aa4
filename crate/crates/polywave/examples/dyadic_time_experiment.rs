//! Frequency-localized evolution: ratios ||u_k||_{L^p([0,2^-k]; L^q)} /
//! ||u_k(0)||_{L^2} for random band-limited data, whose uniformity over the
//! band index is the localized dispersive estimate.
//!
//! Run with: cargo run --release --example dyadic_time_experiment

use std::sync::Arc;

use polywave::evolution::{band_modes, dyadic_experiment, AdmissiblePair, Ensemble};
use polywave::geometry::{double, PolygonSpec};
use polywave::mesh::{triangulate, MeshParams};
use polywave::spectral::{SolveStrategy, SpectralBasis, SpectrumKind};

fn main() {
    // a 1.7 x 1.7 square: large enough that the low dyadic bands hold
    // several eigenfrequencies each
    let poly = PolygonSpec::parse(include_str!("../data/square17.poly")).unwrap();
    let mesh = triangulate(&double(poly), &MeshParams::new(0.08)).unwrap();
    let basis = SpectralBasis::compute(
        Arc::new(mesh),
        SpectrumKind::Closed,
        false,
        90,
        SolveStrategy::ParityMerge,
    )
    .unwrap();
    let pair = AdmissiblePair::new(4.0, 4.0).unwrap();
    let ens = Ensemble {
        samples: 8,
        seed: 7,
    };

    println!("band  modes  max ratio  mean ratio");
    for k in 2..=4u32 {
        let modes = band_modes(&basis, k);
        let ratios = dyadic_experiment(&basis, k, pair, ens).unwrap();
        let max = ratios.iter().cloned().fold(0.0f64, f64::max);
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        println!("{k:>4}  {:>5}  {max:>9.5}  {mean:>10.5}", modes.len());
    }
    println!("(uniformity of the max over k is the content of the localized estimate)");
}
