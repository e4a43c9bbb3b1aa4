//! Dyadic frequency decomposition: the smooth bump partition of unity, the
//! band profiles beta_k and their widened versions, Rademacher-randomized
//! multipliers F_theta, a Mihlin-condition functional, the squarefunction,
//! and empirical Khintchine constants.
//!
//! The bump is built from a telescoping difference of a smooth cutoff, so the
//! partition identity `sum_k beta_k = 1` holds to rounding error rather than
//! approximately: with `chi` equal to one below 1/2 and zero above 1,
//! `beta(z) = chi(z) - chi(2z)` is nonnegative, supported in (1/4, 1), and
//! `sum_{k>=1} beta(2^-k z) = 1 - chi(z)`. Arguments are scaled by exact
//! powers of two, so the telescoping cancellation is exact in floating point.

use num_complex::Complex64;

use crate::spectral::{apply_multiplier, evaluate_on_mesh, lq_norm, SpectralBasis, SpectralState};
use crate::{Error, Result};

/// Smooth one-sided mollifier: exp(-1/x) for x > 0, else 0.
fn smooth_ramp(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

/// Smooth monotone step from 0 at x <= 0 to 1 at x >= 1.
fn smooth_step(x: f64) -> f64 {
    let a = smooth_ramp(x);
    let b = smooth_ramp(1.0 - x);
    if a == 0.0 {
        0.0
    } else if b == 0.0 {
        1.0
    } else {
        a / (a + b)
    }
}

/// Smooth cutoff: 1 on [0, 1/2], 0 on [1, inf).
pub fn low_pass(zeta: f64) -> f64 {
    if zeta <= 0.5 {
        1.0
    } else if zeta >= 1.0 {
        0.0
    } else {
        smooth_step(2.0 * (1.0 - zeta))
    }
}

/// The generating bump: nonnegative, smooth, supported in (1/4, 1).
pub fn bump(zeta: f64) -> f64 {
    low_pass(zeta) - low_pass(2.0 * zeta)
}

/// The Rademacher square wave r_m(theta) = r_0(2^m theta), with r_0 equal to
/// +1 on [0, 1/2] and -1 on (1/2, 1), extended periodically.
pub fn rademacher(m: u32, theta: f64) -> f64 {
    let x = theta * 2f64.powi(m as i32);
    let frac = x - x.floor();
    if frac <= 0.5 {
        1.0
    } else {
        -1.0
    }
}

/// A scalar function of frequency with support metadata, applied through the
/// functional calculus. `value` returns exactly 0 outside the support hint.
#[derive(Clone, Debug)]
pub struct MultiplierProfile {
    pub label: String,
    /// Closed support hint [lo, hi].
    pub support: (f64, f64),
    kind: ProfileKind,
}

#[derive(Clone, Debug)]
enum ProfileKind {
    Constant(f64),
    /// zeta^s with s >= 0.
    Power(f64),
    /// beta_0 = chi, the block below frequency 1.
    LowPass,
    /// beta_k(zeta) = beta(2^-k zeta), k >= 1.
    Dyadic(u32),
    /// beta_{k-1} + beta_k + beta_{k+1} (beta_{-1} = 0).
    Widened(u32),
    Rademacher {
        theta: f64,
        kmax: u32,
        widened: bool,
    },
    Product(Box<MultiplierProfile>, Box<MultiplierProfile>),
}

/// The dyadic band profile beta_k; k = 0 is the low block `1 - sum beta_k`.
pub fn dyadic_profile(k: u32) -> MultiplierProfile {
    if k == 0 {
        MultiplierProfile {
            label: "beta k=0".into(),
            support: (0.0, 1.0),
            kind: ProfileKind::LowPass,
        }
    } else {
        MultiplierProfile {
            label: format!("beta k={k}"),
            support: (2f64.powi(k as i32 - 2), 2f64.powi(k as i32)),
            kind: ProfileKind::Dyadic(k),
        }
    }
}

/// The widened band profile, satisfying `widened_k * beta_k = beta_k`.
pub fn widened_profile(k: u32) -> MultiplierProfile {
    let lo = if k <= 1 { 0.0 } else { 2f64.powi(k as i32 - 3) };
    MultiplierProfile {
        label: format!("widened k={k}"),
        support: (lo, 2f64.powi(k as i32 + 1)),
        kind: ProfileKind::Widened(k),
    }
}

/// The sign-randomized multiplier `F_theta = sum_k r_k(theta) beta_k` (or its
/// widened variant), as a function of frequency. Bands above `kmax` are
/// dropped, so the profile only covers frequencies below `2^kmax`.
pub fn randomized_profile(theta: f64, kmax: u32, widened: bool) -> MultiplierProfile {
    let name = if widened { "ftheta-widened" } else { "ftheta" };
    MultiplierProfile {
        label: format!("{name} theta={theta} kmax={kmax}"),
        support: (0.0, 2f64.powi(kmax as i32 + 1)),
        kind: ProfileKind::Rademacher {
            theta,
            kmax,
            widened,
        },
    }
}

impl MultiplierProfile {
    pub fn constant(c: f64) -> Self {
        MultiplierProfile {
            label: format!("const c={c}"),
            support: (0.0, f64::INFINITY),
            kind: ProfileKind::Constant(c),
        }
    }

    pub fn power(s: f64) -> Self {
        assert!(s >= 0.0, "power profiles need a nonnegative exponent");
        MultiplierProfile {
            label: format!("power s={s}"),
            support: (0.0, f64::INFINITY),
            kind: ProfileKind::Power(s),
        }
    }

    /// Pointwise product of two profiles.
    pub fn product(&self, other: &MultiplierProfile) -> Self {
        MultiplierProfile {
            label: format!("({}) * ({})", self.label, other.label),
            support: (
                self.support.0.max(other.support.0),
                self.support.1.min(other.support.1),
            ),
            kind: ProfileKind::Product(Box::new(self.clone()), Box::new(other.clone())),
        }
    }

    /// Evaluate at a frequency; exactly 0 outside the support hint.
    pub fn value(&self, zeta: f64) -> f64 {
        if zeta < self.support.0 || zeta > self.support.1 {
            return 0.0;
        }
        match &self.kind {
            ProfileKind::Constant(c) => *c,
            ProfileKind::Power(s) => zeta.powf(*s),
            ProfileKind::LowPass => low_pass(zeta),
            ProfileKind::Dyadic(k) => bump(zeta * 2f64.powi(-(*k as i32))),
            ProfileKind::Widened(k) => {
                let mut acc = 0.0;
                let lo = k.saturating_sub(1);
                for j in lo..=k + 1 {
                    acc += dyadic_value(j, zeta);
                }
                acc
            }
            ProfileKind::Rademacher {
                theta,
                kmax,
                widened,
            } => {
                let mut acc = 0.0;
                for k in 0..=*kmax {
                    let b = if *widened {
                        widened_value(k, zeta)
                    } else {
                        dyadic_value(k, zeta)
                    };
                    if b != 0.0 {
                        acc += rademacher(k, *theta) * b;
                    }
                }
                acc
            }
            ProfileKind::Product(a, b) => a.value(zeta) * b.value(zeta),
        }
    }

    /// Whether the profile's bands cover every frequency up to `lambda_max`.
    pub fn covers(&self, lambda_max: f64) -> bool {
        lambda_max <= self.support.1
    }

    /// Round-trip text form, e.g. `beta k=3` or
    /// `ftheta theta=0.40625 kmax=12`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut words = text.split_whitespace();
        let head = words.next().ok_or_else(|| Error::ProfileParse(text.into()))?;
        let mut kv = std::collections::BTreeMap::new();
        for w in words {
            let (k, v) = w.split_once('=').ok_or_else(|| Error::ProfileParse(text.into()))?;
            kv.insert(k.to_string(), v.to_string());
        }
        let get = |key: &str| -> Result<f64> {
            kv.get(key)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| Error::ProfileParse(text.into()))
        };
        match head {
            "one" => Ok(Self::constant(1.0)),
            "const" => Ok(Self::constant(get("c")?)),
            "power" => Ok(Self::power(get("s")?)),
            "beta" => Ok(dyadic_profile(get("k")? as u32)),
            "widened" => Ok(widened_profile(get("k")? as u32)),
            "ftheta" => Ok(randomized_profile(get("theta")?, get("kmax")? as u32, false)),
            "ftheta-widened" => Ok(randomized_profile(get("theta")?, get("kmax")? as u32, true)),
            _ => Err(Error::ProfileParse(text.into())),
        }
    }
}

impl std::fmt::Display for MultiplierProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.label)
    }
}

fn dyadic_value(k: u32, zeta: f64) -> f64 {
    if k == 0 {
        low_pass(zeta)
    } else {
        bump(zeta * 2f64.powi(-(k as i32)))
    }
}

fn widened_value(k: u32, zeta: f64) -> f64 {
    let lo = k.saturating_sub(1);
    let mut acc = 0.0;
    for j in lo..=k + 1 {
        acc += dyadic_value(j, zeta);
    }
    acc
}

/// Mihlin-type functional: the sup over derivative orders `0..=n` and a
/// log-uniform frequency grid of `|(zeta d/dzeta)^k F(zeta)|`, the scaled
/// derivatives estimated by 5-point central differences in log zeta.
///
/// The grid is anchored at an exact power of two, so profiles that are exact
/// dyadic dilations of each other produce bit-identical values.
pub fn mihlin_norm(profile: &MultiplierProfile, n: u32) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidProfile(format!(
            "Mihlin condition needs at least 2 derivatives, got {n}"
        )));
    }
    if n > 4 {
        return Err(Error::InvalidProfile(
            "central differences implemented up to 4 derivatives".into(),
        ));
    }
    // ~4096 points per decade.
    const PER_OCTAVE: usize = 1233;
    let hi = if profile.support.1.is_finite() {
        profile.support.1
    } else {
        2f64.powi(16)
    };
    // Anchor: the largest power of two at or below the support start (or a
    // few octaves below the top for profiles reaching down to zero).
    let anchor_exp = if profile.support.0 > 0.0 {
        profile.support.0.log2().floor() as i32 - 2
    } else {
        (hi.log2().ceil() as i32) - 26
    };
    let anchor = 2f64.powi(anchor_exp);
    let octaves = ((hi.log2().ceil() as i32 + 2 - anchor_exp).max(4)) as usize;

    let npts = octaves * PER_OCTAVE + 1;
    let mut g = vec![0.0f64; npts];
    for (i, gi) in g.iter_mut().enumerate() {
        let oct = (i / PER_OCTAVE) as i32;
        let frac = (i % PER_OCTAVE) as f64 / PER_OCTAVE as f64;
        // zeta = anchor * 2^oct * 2^frac: the last factor is the same array
        // of floats in every octave, the rest are exact scalings.
        let zeta = anchor * 2f64.powi(oct) * 2f64.powf(frac);
        *gi = profile.value(zeta);
    }
    let delta = std::f64::consts::LN_2 / PER_OCTAVE as f64;

    let mut sup = 0.0f64;
    for i in 2..npts - 2 {
        let (g0, g1, g2, g3, g4) = (g[i - 2], g[i - 1], g[i], g[i + 1], g[i + 2]);
        let mut ds = [0.0f64; 5];
        ds[0] = g2;
        ds[1] = (-g4 + 8.0 * g3 - 8.0 * g1 + g0) / (12.0 * delta);
        ds[2] = (-g4 + 16.0 * g3 - 30.0 * g2 + 16.0 * g1 - g0) / (12.0 * delta * delta);
        ds[3] = (g4 - 2.0 * g3 + 2.0 * g1 - g0) / (2.0 * delta * delta * delta);
        ds[4] = (g4 - 4.0 * g3 + 6.0 * g2 - 4.0 * g1 + g0) / (delta * delta * delta * delta);
        for d in ds.iter().take(n as usize + 1) {
            if !d.is_finite() {
                return Err(Error::InvalidProfile(
                    "non-finite derivative estimate in Mihlin functional".into(),
                ));
            }
            sup = sup.max(d.abs());
        }
    }
    Ok(sup)
}

/// Pointwise squarefunction `(sum_k |beta_k(sqrt(Delta)) a|^2)^(1/2)` on the
/// mesh, and the ratio `||S a||_q / ||a||_q`.
pub fn squarefunction(
    basis: &SpectralBasis,
    state: &SpectralState,
    q: f64,
) -> Result<(Vec<f64>, f64)> {
    if state.coeffs.iter().all(|c| c.norm_sqr() == 0.0) {
        return Err(Error::ZeroState);
    }
    let lambda_max = basis.lambda.last().copied().unwrap_or(0.0);
    let kmax = kmax_for(lambda_max);
    let n = basis.n_vertices();
    let mut sqsum = vec![0.0f64; n];
    for k in 0..=kmax {
        let band = apply_multiplier(basis, &dyadic_profile(k), state)?;
        if band.coeffs.iter().all(|c| c.norm_sqr() == 0.0) {
            continue;
        }
        let uk = evaluate_on_mesh(basis, &band)?;
        for (s, u) in sqsum.iter_mut().zip(&uk) {
            *s += u.norm_sqr();
        }
    }
    let field: Vec<f64> = sqsum.iter().map(|s| s.sqrt()).collect();

    let a_field = evaluate_on_mesh(basis, state)?;
    let denom = lq_norm(&basis.mesh, &a_field, q);
    if denom == 0.0 {
        return Err(Error::ZeroState);
    }
    let complex_field: Vec<Complex64> = field.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let ratio = lq_norm(&basis.mesh, &complex_field, q) / denom;
    Ok((field, ratio))
}

/// Smallest `kmax` whose bands cover every frequency up to `lambda_max`.
pub fn kmax_for(lambda_max: f64) -> u32 {
    let mut k = 1u32;
    while 2f64.powi(k as i32 - 1) < lambda_max {
        k += 1;
    }
    k
}

/// Exact norms of the Rademacher sum `G = sum_m b_m r_m` on [0, 1].
///
/// G is constant on each dyadic interval of length 2^-M, so the L^q integral
/// is a finite sum evaluated at midpoints; `norm_2` coincides with the
/// coefficient norm by orthonormality, which callers may assert.
#[derive(Clone, Copy, Debug)]
pub struct KhintchineRatios {
    pub q: f64,
    pub norm_2: f64,
    pub norm_q: f64,
}

pub fn khintchine_check(b: &[f64], q: f64) -> Result<KhintchineRatios> {
    if b.is_empty() {
        return Err(Error::EmptySequence);
    }
    if b.len() > 22 {
        return Err(Error::InvalidProfile(format!(
            "Rademacher sum with {} terms needs 2^{} exact pieces",
            b.len(),
            b.len()
        )));
    }
    if b.iter().all(|&x| x == 0.0) {
        return Err(Error::ZeroState);
    }
    let m = b.len() as u32;
    let pieces = 1usize << m;
    let mut acc_q = 0.0f64;
    let mut acc_2 = 0.0f64;
    for j in 0..pieces {
        let theta = (j as f64 + 0.5) / pieces as f64;
        let g: f64 = b
            .iter()
            .enumerate()
            .map(|(i, &bi)| bi * rademacher(i as u32, theta))
            .sum();
        acc_q += g.abs().powf(q);
        acc_2 += g * g;
    }
    let scale = 1.0 / pieces as f64;
    Ok(KhintchineRatios {
        q,
        norm_2: (acc_2 * scale).sqrt(),
        norm_q: (acc_q * scale).powf(1.0 / q),
    })
}

/// Empirical Khintchine constants over an ensemble of coefficient sequences:
/// the envelope of `||G||_2 / ||G||_q`.
#[derive(Clone, Copy, Debug)]
pub struct KhintchineReport {
    pub q: f64,
    pub c_lower: f64,
    pub c_upper: f64,
}

pub fn khintchine_report(samples: &[Vec<f64>], q: f64) -> Result<KhintchineReport> {
    if samples.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut c_lower = f64::INFINITY;
    let mut c_upper = 0.0f64;
    for b in samples {
        let r = khintchine_check(b, q)?;
        let ratio = r.norm_2 / r.norm_q;
        c_lower = c_lower.min(ratio);
        c_upper = c_upper.max(ratio);
    }
    Ok(KhintchineReport {
        q,
        c_lower,
        c_upper,
    })
}
