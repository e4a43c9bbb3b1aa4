//! Empirical Khintchine constants: the L^q norms of Rademacher sums
//! G = sum_m b_m r_m are equivalent to the coefficient norm, with constants
//! measured here over a random ensemble.
//!
//! Run with: cargo run --release --example khintchine_constants

use polywave::littlewood_paley::{khintchine_check, khintchine_report};
use rand::{Rng, SeedableRng};

fn main() {
    // the exactly computable two-term case: G = r_0 + r_1 takes the values
    // {2, 0, 0, -2} on quarters of [0, 1]
    let r = khintchine_check(&[1.0, 1.0], 4.0).unwrap();
    println!(
        "b = (1,1): ||G||_2 = {:.6} (= sqrt 2), ||G||_4 = {:.6} (= 8^(1/4))",
        r.norm_2, r.norm_q
    );

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    for q in [1.5, 4.0, 6.0] {
        let samples: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                let len = rng.gen_range(1..12);
                (0..len).map(|_| rng.gen_range(-1.0..1.0f64)).collect()
            })
            .collect();
        let rep = khintchine_report(&samples, q).unwrap();
        println!(
            "q = {q}: ||G||_2 / ||G||_q over 200 random sequences in [{:.4}, {:.4}]",
            rep.c_lower, rep.c_upper
        );
    }
    println!("(both envelope ends stay bounded away from 0 and infinity)");
}
