//! The dyadic frequency partition: the generating bump, the partition of
//! unity, widened bands, Rademacher-randomized multipliers and their Mihlin
//! constants.
//!
//! Run with: cargo run --release --example dyadic_partition

use polywave::littlewood_paley::{
    bump, dyadic_profile, mihlin_norm, randomized_profile, widened_profile, MultiplierProfile,
};

fn main() {
    println!("bump values: beta(0.2) = {}, beta(0.5) = {}, beta(4.5) = {}",
        bump(0.2), bump(0.5), bump(4.5));

    for zeta in [0.1, 1.0, 7.0, 300.0] {
        let total: f64 = (0..=40).map(|k| dyadic_profile(k).value(zeta)).sum();
        println!("partition of unity at zeta = {zeta:>5}: sum_k beta_k = {total:.15}");
    }

    // widened bands reproduce the band on its support
    let k = 4;
    let b = dyadic_profile(k);
    let w = widened_profile(k);
    let z = 10.0;
    println!(
        "widened identity at zeta = {z}: beta~_{k} * beta_{k} - beta_{k} = {:.3e}",
        w.value(z) * b.value(z) - b.value(z)
    );

    // Mihlin constants: dilation invariance across bands is exact
    let m3 = mihlin_norm(&dyadic_profile(3), 2).unwrap();
    let m8 = mihlin_norm(&dyadic_profile(8), 2).unwrap();
    println!("mihlin(beta_3) = {m3:.12}, mihlin(beta_8) = {m8:.12}, equal: {}", m3 == m8);

    // randomized multipliers: theta-sup of the Mihlin constant
    let mut sup = 0.0f64;
    for j in 0..64 {
        let theta = j as f64 / 64.0;
        let f = randomized_profile(theta, 12, false);
        sup = sup.max(mihlin_norm(&f, 2).unwrap());
    }
    println!("sup over 64 dyadic theta of mihlin(F_theta) = {sup:.6}");

    // profiles have a reproducible text form
    for text in ["beta k=3", "ftheta theta=0.40625 kmax=12"] {
        let p = MultiplierProfile::parse(text).unwrap();
        println!("parsed `{text}` -> label `{p}`, value at 9.0 = {:.6}", p.value(9.0));
    }
}
