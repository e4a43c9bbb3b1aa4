//! Shift-invert Lanczos for the generalized symmetric eigenproblem
//! K x = mu M x, targeting the lowest part of the spectrum.
//!
//! The operator (K - sigma*M)^{-1} M is symmetric in the M-inner product, so
//! the Lanczos basis is kept M-orthonormal with full reorthogonalization
//! (clustered cone-point eigenvalues produce spurious duplicates otherwise).
//! Converged Ritz vectors are locked and the recurrence restarts against them
//! with a fresh random vector until the requested count is reached. A final
//! inertia check (negative pivots of K - mu*M at a cut just above the last
//! wanted eigenvalue) proves that no eigenvalue below the cut was missed.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::numerics::skyline::SkylineFactor;
use crate::numerics::sparse::CsrMatrix;
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct LanczosOptions {
    /// Number of lowest eigenpairs wanted.
    pub count: usize,
    /// Relative residual target ||K x - mu M x|| / ((1+|mu|) ||x||_M-scale).
    pub tol: f64,
    /// Negative shift; `None` picks one from the matrix scales.
    pub shift: Option<f64>,
    /// Krylov dimension per restart cycle.
    pub max_krylov: usize,
    pub max_cycles: usize,
    pub seed: u64,
    /// Skip the final inertia verification (used by tests).
    pub verify_inertia: bool,
}

impl LanczosOptions {
    pub fn new(count: usize) -> Self {
        LanczosOptions {
            count,
            tol: 1e-10,
            shift: None,
            max_krylov: count + 250,
            max_cycles: 60,
            seed: 0x706f6c79,
            verify_inertia: true,
        }
    }
}

/// Lowest eigenpairs of K x = mu M x; vectors are M-orthonormal, stored
/// column-major (n rows, `values.len()` columns), values ascending.
pub struct GeneralizedEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
    pub n: usize,
    /// Worst relative residual over the returned pairs.
    pub max_residual: f64,
}

impl GeneralizedEigen {
    pub fn vector(&self, j: usize) -> &[f64] {
        &self.vectors[j * self.n..(j + 1) * self.n]
    }
}

struct MOrtho<'a> {
    m: &'a CsrMatrix,
    scratch: Vec<f64>,
}

impl<'a> MOrtho<'a> {
    fn new(m: &'a CsrMatrix) -> Self {
        MOrtho {
            m,
            scratch: vec![0.0; m.n],
        }
    }

    fn inner(&mut self, x: &[f64], y: &[f64]) -> f64 {
        self.m.matvec(y, &mut self.scratch);
        dot(x, &self.scratch)
    }

    /// One pass of modified Gram-Schmidt of `w` against the columns of each
    /// block; returns the norm after the pass.
    fn orthogonalize(&mut self, w: &mut [f64], blocks: &[&[f64]]) -> f64 {
        let n = w.len();
        self.m.matvec(w, &mut self.scratch);
        for block in blocks {
            for col in block.chunks_exact(n) {
                let c = dot(col, &self.scratch);
                if c != 0.0 {
                    axpy(w, col, -c);
                }
            }
        }
        // recompute M w once per pass for the norm
        self.m.matvec(w, &mut self.scratch);
        dot(w, &self.scratch).max(0.0).sqrt()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], x: &[f64], alpha: f64) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Shift-invert Lanczos with locking; see the module docs.
pub fn smallest_eigenpairs(
    k: &CsrMatrix,
    m: &CsrMatrix,
    opts: &LanczosOptions,
) -> Result<GeneralizedEigen> {
    let n = k.n;
    if opts.count == 0 || opts.count > n {
        return Err(Error::TooManyModes {
            requested: opts.count,
            dim: n,
        });
    }

    let trace_ratio = {
        let tk: f64 = (0..n).map(|i| k.get(i, i)).sum();
        let tm: f64 = (0..n).map(|i| m.get(i, i)).sum();
        (tk / tm).abs().max(1.0)
    };
    // A shift slightly below the spectrum keeps K - sigma*M positive definite
    // (mu >= 0 here) while staying on the scale of the wanted window.
    let sigma = opts
        .shift
        .unwrap_or(-(trace_ratio * opts.count as f64 / n as f64).max(1e-3 * trace_ratio));

    let shifted = k.add_scaled(m, 1.0, -sigma);
    let factor = match SkylineFactor::factor(&shifted) {
        Ok(f) => f,
        Err(_) => {
            // Singular shifted matrix: retry with a perturbed shift.
            let shifted = k.add_scaled(m, 1.0, -(sigma * 1.0171 - 1e-8 * trace_ratio));
            SkylineFactor::factor(&shifted)?
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut ortho = MOrtho::new(m);

    let mut locked: Vec<f64> = Vec::new(); // column-major locked vectors
    let mut locked_vals: Vec<f64> = Vec::new();
    let max_krylov = opts.max_krylov.min(n).max(8);

    // Lock a couple beyond the request; widened further whenever the inertia
    // check reveals a missed eigenvalue below the cut.
    let mut lock_target = opts.count + 2;
    let mut verified = false;

    let mut tmp = vec![0.0; n];
    for _cycle in 0..opts.max_cycles {
        if locked_vals.len() >= opts.count {
            if !opts.verify_inertia {
                break;
            }
            match completeness_gap(k, m, opts.count, &locked_vals) {
                Completeness::Complete | Completeness::Inconclusive => {
                    verified = true;
                    break;
                }
                Completeness::Missing => {
                    lock_target += 4;
                }
            }
        }
        // Fresh start vector, M-orthogonal to everything locked.
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let nrm = ortho.orthogonalize(&mut v, &[&locked]);
        if nrm < 1e-12 {
            continue;
        }
        scale(&mut v, 1.0 / nrm);

        let mut basis: Vec<f64> = Vec::with_capacity(max_krylov * n);
        basis.extend_from_slice(&v);
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();

        for step in 0..max_krylov {
            // w = (K - sigma M)^{-1} M v_step
            let vj = &basis[step * n..(step + 1) * n];
            m.matvec(vj, &mut tmp);
            let mut w = factor.solve_alloc(&tmp);

            let alpha = ortho.inner(&w, vj);
            alphas.push(alpha);

            // three-term subtraction, then full reorthogonalization
            {
                let vj = &basis[step * n..(step + 1) * n];
                axpy(&mut w, vj, -alpha);
            }
            if step > 0 {
                let vprev = &basis[(step - 1) * n..step * n];
                axpy(&mut w, vprev, -betas[step - 1]);
            }
            let mut nrm = ortho.orthogonalize(&mut w, &[&locked, &basis]);
            if nrm < 1e-13 {
                // invariant subspace exhausted; harvest and restart
                betas.push(0.0);
                break;
            }
            // second Gram-Schmidt pass when cancellation was significant
            let renrm = ortho.orthogonalize(&mut w, &[&locked, &basis]);
            if renrm < 0.5 * nrm {
                nrm = ortho.orthogonalize(&mut w, &[&locked, &basis]);
            } else {
                nrm = renrm;
            }
            betas.push(nrm);
            if nrm < 1e-13 || step + 1 == max_krylov {
                break;
            }
            scale(&mut w, 1.0 / nrm);
            basis.extend_from_slice(&w);
        }

        // Rayleigh-Ritz on the tridiagonal matrix.
        let steps = alphas.len();
        let mut t = DMatrix::<f64>::zeros(steps, steps);
        for i in 0..steps {
            t[(i, i)] = alphas[i];
            if i + 1 < steps && betas[i] != 0.0 {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let eig = SymmetricEigen::new(t);

        // Largest theta of the shift-inverted operator = smallest mu.
        let mut order: Vec<usize> = (0..steps).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

        let beta_last = *betas.last().unwrap_or(&0.0);
        for &i in &order {
            if locked_vals.len() >= lock_target {
                break;
            }
            let theta = eig.eigenvalues[i];
            if theta <= 0.0 {
                break;
            }
            let mu = sigma + 1.0 / theta;
            // Residual bound for the shift-inverted pair.
            let bound = (beta_last * eig.eigenvectors[(steps - 1, i)]).abs();
            if bound > 1e-9 * theta {
                continue;
            }
            // Assemble the Ritz vector and verify the true residual.
            let mut x = vec![0.0; n];
            for s in 0..steps {
                let c = eig.eigenvectors[(s, i)];
                axpy(&mut x, &basis[s * n..(s + 1) * n], c);
            }
            let nrm = ortho.orthogonalize(&mut x, &[&locked]);
            if nrm < 0.1 {
                continue; // already represented in the locked set
            }
            scale(&mut x, 1.0 / nrm);
            let res = relative_residual(k, m, mu, &x);
            if res > opts.tol {
                continue;
            }
            locked.extend_from_slice(&x);
            locked_vals.push(mu);
        }
    }

    if locked_vals.len() < opts.count {
        return Err(Error::Eigensolver(format!(
            "converged only {} of {} modes within the iteration budget",
            locked_vals.len(),
            opts.count
        )));
    }
    if opts.verify_inertia && !verified {
        if let Completeness::Missing = completeness_gap(k, m, opts.count, &locked_vals) {
            return Err(Error::Eigensolver(
                "inertia count shows an eigenvalue was missed below the cut".into(),
            ));
        }
    }

    // Sort locked pairs ascending and keep the lowest `count`.
    let mut order: Vec<usize> = (0..locked_vals.len()).collect();
    order.sort_by(|&a, &b| locked_vals[a].partial_cmp(&locked_vals[b]).unwrap());
    let mut values = Vec::with_capacity(opts.count);
    let mut vectors = Vec::with_capacity(opts.count * n);
    for &i in order.iter().take(opts.count) {
        values.push(locked_vals[i]);
        vectors.extend_from_slice(&locked[i * n..(i + 1) * n]);
    }

    let mut max_residual = 0.0f64;
    for j in 0..values.len() {
        max_residual = max_residual.max(relative_residual(
            k,
            m,
            values[j],
            &vectors[j * n..(j + 1) * n],
        ));
    }

    Ok(GeneralizedEigen {
        values,
        vectors,
        n,
        max_residual,
    })
}

fn scale(v: &mut [f64], s: f64) {
    for x in v.iter_mut() {
        *x *= s;
    }
}

/// || K x - mu M x ||_2 / ((1 + |mu|) * ||M x||_2), a scale-free residual.
pub fn relative_residual(k: &CsrMatrix, m: &CsrMatrix, mu: f64, x: &[f64]) -> f64 {
    let kx = k.matvec_alloc(x);
    let mx = m.matvec_alloc(x);
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for i in 0..x.len() {
        num += (kx[i] - mu * mx[i]).powi(2);
        den += mx[i].powi(2);
    }
    num.sqrt() / ((1.0 + mu.abs()) * den.sqrt().max(f64::MIN_POSITIVE))
}

enum Completeness {
    Complete,
    Missing,
    Inconclusive,
}

/// Sylvester inertia check: the number of eigenvalues below a cut placed in
/// the first clear gap at/above the `count`-th converged eigenvalue must
/// match the number of converged eigenvalues below that cut.
fn completeness_gap(k: &CsrMatrix, m: &CsrMatrix, count: usize, locked: &[f64]) -> Completeness {
    let mut sorted = locked.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let last = sorted[count - 1];

    // Walk upward from the last wanted eigenvalue to find a relative gap.
    let gap_tol = 1e-5 * (last.abs() + 1.0);
    let mut cut = last + gap_tol;
    for w in sorted.windows(2) {
        if w[0] >= last - gap_tol && w[1] - w[0] > 4.0 * gap_tol {
            cut = 0.5 * (w[0] + w[1]);
            break;
        }
    }
    let expected = sorted.iter().filter(|&&v| v < cut).count();

    for attempt in 0..4 {
        let shifted = k.add_scaled(m, 1.0, -cut * (1.0 + attempt as f64 * 3e-6));
        match SkylineFactor::factor(&shifted) {
            Ok(f) => {
                return if f.negative_pivots() == expected {
                    Completeness::Complete
                } else {
                    Completeness::Missing
                };
            }
            Err(_) => continue, // cut landed on an eigenvalue; nudge and retry
        }
    }
    Completeness::Inconclusive
}

/// Dense reference path (Cholesky reduction to a standard symmetric problem).
/// Intended for small operators and as an independent oracle in tests.
pub fn smallest_eigenpairs_dense(
    k: &CsrMatrix,
    m: &CsrMatrix,
    count: usize,
) -> Result<GeneralizedEigen> {
    let n = k.n;
    if count == 0 || count > n {
        return Err(Error::TooManyModes {
            requested: count,
            dim: n,
        });
    }
    let mut md = DMatrix::<f64>::zeros(n, n);
    let mut kd = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let (cols, vals) = k.row(i);
        for (c, v) in cols.iter().zip(vals) {
            kd[(i, *c as usize)] = *v;
        }
        let (cols, vals) = m.row(i);
        for (c, v) in cols.iter().zip(vals) {
            md[(i, *c as usize)] = *v;
        }
    }
    let chol = md
        .cholesky()
        .ok_or_else(|| Error::Eigensolver("mass matrix not positive definite".into()))?;
    let l = chol.l();
    // B = L^{-1} K L^{-T}
    let mut b = kd;
    l.solve_lower_triangular_mut(&mut b);
    b.transpose_mut();
    l.solve_lower_triangular_mut(&mut b);
    // symmetrize roundoff
    let bt = b.transpose();
    let b = (b + bt) * 0.5;
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());

    let mut values = Vec::with_capacity(count);
    let mut vectors = Vec::with_capacity(count * n);
    let lt = l.transpose();
    for &i in order.iter().take(count) {
        values.push(eig.eigenvalues[i]);
        let y = eig.eigenvectors.column(i).into_owned();
        let x = lt.clone().solve_upper_triangular(&y).unwrap();
        vectors.extend(x.iter());
    }
    let mut max_residual = 0.0f64;
    for j in 0..count {
        max_residual = max_residual.max(relative_residual(
            k,
            m,
            values[j],
            &vectors[j * n..(j + 1) * n],
        ));
    }
    Ok(GeneralizedEigen {
        values,
        vectors,
        n,
        max_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::sparse::Triplets;
    use rand::{Rng, SeedableRng};

    /// 1D Dirichlet Laplacian stencil and a tridiagonal mass matrix; the
    /// eigenvalues of the pencil are known via the discrete sine transform.
    fn fem_1d(n: usize) -> (CsrMatrix, CsrMatrix) {
        let h = 1.0 / (n + 1) as f64;
        let mut k = Triplets::new(n);
        let mut m = Triplets::new(n);
        for i in 0..n {
            k.push(i as u32, i as u32, 2.0 / h);
            m.push(i as u32, i as u32, 4.0 * h / 6.0);
            if i + 1 < n {
                k.push(i as u32, (i + 1) as u32, -1.0 / h);
                k.push((i + 1) as u32, i as u32, -1.0 / h);
                m.push(i as u32, (i + 1) as u32, h / 6.0);
                m.push((i + 1) as u32, i as u32, h / 6.0);
            }
        }
        (k.to_csr(), m.to_csr())
    }

    #[test]
    fn lanczos_matches_dense_on_fem_pencil() {
        let (k, m) = fem_1d(120);
        let dense = smallest_eigenpairs_dense(&k, &m, 15).unwrap();
        let sparse = smallest_eigenpairs(&k, &m, &LanczosOptions::new(15)).unwrap();
        for j in 0..15 {
            let rel = (dense.values[j] - sparse.values[j]).abs() / dense.values[j];
            assert!(rel < 1e-9, "mode {j}: {} vs {}", dense.values[j], sparse.values[j]);
        }
        assert!(sparse.max_residual < 1e-9);
    }

    #[test]
    fn handles_multiplicities() {
        // Block-diagonal pencil with exactly repeated eigenvalues.
        let n = 90;
        let mut k = Triplets::new(n);
        let m = CsrMatrix::identity(n);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        // eigenvalues 1,1,1,2,2,3,3,... then random tail
        let mut vals = vec![1.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0];
        while vals.len() < n {
            vals.push(5.0 + rng.gen_range(0.0..50.0));
        }
        for (i, v) in vals.iter().enumerate() {
            k.push(i as u32, i as u32, *v);
        }
        let got = smallest_eigenpairs(&k.to_csr(), &m, &LanczosOptions::new(8)).unwrap();
        let expect = [1.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0];
        for j in 0..8 {
            assert!(
                (got.values[j] - expect[j]).abs() < 1e-8,
                "mode {j}: {} vs {}",
                got.values[j],
                expect[j]
            );
        }
    }

    #[test]
    fn vectors_are_m_orthonormal() {
        let (k, m) = fem_1d(80);
        let got = smallest_eigenpairs(&k, &m, &LanczosOptions::new(10)).unwrap();
        for a in 0..10 {
            for b in a..10 {
                let ip = m.bilinear(got.vector(a), got.vector(b));
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-10, "({a},{b}): {ip}");
            }
        }
    }

    #[test]
    fn deterministic_across_runs() {
        let (k, m) = fem_1d(60);
        let a = smallest_eigenpairs(&k, &m, &LanczosOptions::new(6)).unwrap();
        let b = smallest_eigenpairs(&k, &m, &LanczosOptions::new(6)).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.vectors, b.vectors);
    }
}
