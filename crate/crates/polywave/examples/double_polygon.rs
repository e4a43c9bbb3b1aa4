//! Parse a polygon, double it across its boundary, and inspect the cone
//! points of the resulting flat surface.
//!
//! Run with: cargo run --release --example double_polygon

use polywave::geometry::{double, PolygonSpec};

fn main() {
    for text in [
        include_str!("../data/unit-square.poly"),
        include_str!("../data/l-shape.poly"),
        include_str!("../data/triangle.poly"),
        include_str!("../data/annulus.poly"),
    ] {
        let poly = PolygonSpec::parse(text).expect("valid polygon");
        let surf = double(poly);
        println!(
            "{}: area {:.4}, doubled area {:.4}, chi = {}",
            surf.base.name,
            surf.base.area(),
            surf.total_area,
            surf.euler_characteristic()
        );
        for (i, c) in surf.cone_points.iter().enumerate() {
            println!(
                "  cone {i}: at {}, interior angle {:.6} rad, rho = {:.6}{}",
                c.location,
                c.alpha,
                c.rho,
                if c.rho > 1.0 { "  (re-entrant)" } else { "" }
            );
        }
        println!(
            "  Gauss-Bonnet: sum(2pi - 2 alpha) - 2 pi chi = {:.3e}\n",
            surf.gauss_bonnet_defect()
        );
    }

    // Degenerate inputs are rejected with the offending vertex.
    let bowtie = "name bowtie\nouter 4\n0 0\n1 1\n1 0\n0 1\n";
    println!("bowtie: {}", PolygonSpec::parse(bowtie).unwrap_err());
}
