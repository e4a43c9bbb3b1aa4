//! Quadrature rules: Gauss-Legendre nodes by Newton iteration, a degree-4
//! triangle rule, and composite Simpson weights for time integrals.

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
///
/// Newton iteration on the Legendre polynomial from the Chebyshev initial
/// guess; converges to machine precision in a handful of steps.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_n(x) and P_n'(x).
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            dp = n as f64 * (x * p - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    // Newton from the Chebyshev guess fills nodes in descending order.
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

/// Integrate `f` over [a, b] with an n-point Gauss-Legendre rule.
pub fn gl_panel(f: &dyn Fn(f64) -> f64, a: f64, b: f64, nodes: &[f64], weights: &[f64]) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (x, w) in nodes.iter().zip(weights) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// Degree-4 exact quadrature on the reference triangle, as barycentric
/// coordinates with weights summing to one (multiply by the triangle area).
pub const TRI_DEGREE4: [([f64; 3], f64); 6] = {
    // Dunavant's 6-point rule.
    const A1: f64 = 0.816847572980459;
    const B1: f64 = 0.091576213509771;
    const W1: f64 = 0.109951743655322;
    const A2: f64 = 0.108103018168070;
    const B2: f64 = 0.445948490915965;
    const W2: f64 = 0.223381589678011;
    [
        ([A1, B1, B1], W1),
        ([B1, A1, B1], W1),
        ([B1, B1, A1], W1),
        ([A2, B2, B2], W2),
        ([B2, A2, B2], W2),
        ([B2, B2, A2], W2),
    ]
};

/// Composite Simpson weights for `n` equally spaced samples with spacing `dt`.
/// `n` must be odd and at least 3.
pub fn simpson_weights(n: usize, dt: f64) -> Vec<f64> {
    assert!(n >= 3 && n % 2 == 1, "Simpson needs an odd sample count >= 3");
    let mut w = vec![0.0; n];
    for i in (0..n - 2).step_by(2) {
        w[i] += dt / 3.0;
        w[i + 1] += 4.0 * dt / 3.0;
        w[i + 2] += dt / 3.0;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_exact_on_polynomials() {
        // An n-point rule integrates degree 2n-1 exactly.
        for n in [2usize, 5, 8, 16, 32] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
            let d = 2 * n - 1;
            let value = gl_panel(&|t: f64| t.powi(d as i32) + t.powi(2), -1.0, 1.0, &x, &w);
            let exact = 2.0 / 3.0; // odd power integrates to zero
            assert!((value - exact).abs() < 1e-13, "n={n}: {value}");
        }
    }

    #[test]
    fn gauss_legendre_on_smooth_integrand() {
        let (x, w) = gauss_legendre(24);
        let value = gl_panel(&|t: f64| t.exp(), 0.0, 1.0, &x, &w);
        assert!((value - (1f64.exp() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn triangle_rule_is_degree_4() {
        // Integrate monomials x^a y^b over the unit reference triangle and
        // compare against a!b!/(a+b+2)!.
        let fact = |k: usize| (1..=k).product::<usize>() as f64;
        for a in 0..=4usize {
            for b in 0..=(4 - a) {
                let mut acc = 0.0;
                for (bary, w) in TRI_DEGREE4 {
                    // reference triangle (0,0), (1,0), (0,1)
                    let x = bary[1];
                    let y = bary[2];
                    acc += w * x.powi(a as i32) * y.powi(b as i32);
                }
                acc *= 0.5; // area of the reference triangle
                let exact = fact(a) * fact(b) / fact(a + b + 2);
                assert!((acc - exact).abs() < 1e-15, "x^{a} y^{b}: {acc} vs {exact}");
            }
        }
    }

    #[test]
    fn simpson_integrates_cubics_exactly() {
        let n = 9;
        let dt = 0.25;
        let w = simpson_weights(n, dt);
        let f = |t: f64| 1.0 + t + t * t + t * t * t;
        let total: f64 = (0..n).map(|i| w[i] * f(i as f64 * dt)).sum();
        let upper = (n - 1) as f64 * dt;
        let exact = upper + upper.powi(2) / 2.0 + upper.powi(3) / 3.0 + upper.powi(4) / 4.0;
        assert!((total - exact).abs() < 1e-12);
    }
}
