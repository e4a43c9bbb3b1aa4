//! Envelope (skyline) LDL^T factorization with reverse Cuthill-McKee
//! ordering.
//!
//! Two-dimensional mesh operators reordered by RCM have envelope width
//! O(sqrt(n)), so the profile factorization runs in O(n * b^2) time and the
//! triangular solves in O(n * b) — fast enough to sit inside a shift-invert
//! Lanczos loop. The factorization also exposes the inertia (number of
//! negative pivots), which counts eigenvalues below the shift by Sylvester's
//! law; the eigensolver uses that to prove no eigenvalue was missed.

use crate::numerics::sparse::CsrMatrix;
use crate::{Error, Result};

/// Reverse Cuthill-McKee ordering of the matrix graph.
///
/// Returns `new_of[old] = new`. Starts from a pseudo-peripheral vertex found
/// by two breadth-first sweeps; ties are broken by vertex index so the result
/// is deterministic.
pub fn reverse_cuthill_mckee(pattern: &CsrMatrix) -> Vec<u32> {
    let n = pattern.n;
    let degree = |v: usize| pattern.indptr[v + 1] - pattern.indptr[v];

    let bfs_far = |start: usize| -> usize {
        let mut seen = vec![false; n];
        let mut frontier = vec![start];
        seen[start] = true;
        let mut last = start;
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for &v in &frontier {
                for &c in pattern.row(v).0 {
                    let c = c as usize;
                    if !seen[c] {
                        seen[c] = true;
                        next.push(c);
                    }
                }
            }
            if let Some(&v) = next.iter().min_by_key(|&&v| (degree(v), v)) {
                last = v;
            }
            frontier = next;
        }
        last
    };

    let mut order = Vec::with_capacity(n);
    let mut visited = vec![false; n];
    // Components are swept in index order.
    for root in 0..n {
        if visited[root] {
            continue;
        }
        let start = bfs_far(bfs_far(root));
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(start);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v as u32);
            let mut nbrs: Vec<usize> = pattern
                .row(v)
                .0
                .iter()
                .map(|&c| c as usize)
                .filter(|&c| !visited[c])
                .collect();
            nbrs.sort_by_key(|&c| (degree(c), c));
            for c in nbrs {
                visited[c] = true;
                queue.push_back(c);
            }
        }
    }
    order.reverse();
    let mut new_of = vec![0u32; n];
    for (new, &old) in order.iter().enumerate() {
        new_of[old as usize] = new as u32;
    }
    new_of
}

/// LDL^T factor of a symmetric matrix in envelope storage.
pub struct SkylineFactor {
    n: usize,
    /// new_of[old] = permuted index.
    new_of: Vec<u32>,
    old_of: Vec<u32>,
    /// first[j] = first row of column j inside the envelope.
    first: Vec<usize>,
    colptr: Vec<usize>,
    /// Strictly-upper entries of L^T, i.e. cols[..] holds L[j][k] for k in first[j]..j.
    cols: Vec<f64>,
    diag: Vec<f64>,
    negative_pivots: usize,
}

impl SkylineFactor {
    /// Factor `a` (symmetric, full pattern stored). Fails on a numerically
    /// singular pivot.
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let new_of = reverse_cuthill_mckee(a);
        Self::factor_with_ordering(a, new_of)
    }

    pub fn factor_with_ordering(a: &CsrMatrix, new_of: Vec<u32>) -> Result<Self> {
        let n = a.n;
        let mut old_of = vec![0u32; n];
        for (old, &new) in new_of.iter().enumerate() {
            old_of[new as usize] = old as u32;
        }

        // Envelope: first[j] = min over pattern rows of column j (permuted).
        let mut first: Vec<usize> = (0..n).collect();
        for i in 0..n {
            let pi = new_of[i] as usize;
            for &c in a.row(i).0 {
                let pj = new_of[c as usize] as usize;
                let (lo, hi) = (pi.min(pj), pi.max(pj));
                first[hi] = first[hi].min(lo);
            }
        }
        let mut colptr = vec![0usize; n + 1];
        for j in 0..n {
            colptr[j + 1] = colptr[j] + (j - first[j]);
        }

        let mut cols = vec![0.0f64; colptr[n]];
        let mut diag = vec![0.0f64; n];
        for i in 0..n {
            let (cs, vs) = a.row(i);
            let pi = new_of[i] as usize;
            for (&c, &v) in cs.iter().zip(vs) {
                let pj = new_of[c as usize] as usize;
                if pi == pj {
                    diag[pi] = v;
                } else if pi < pj {
                    cols[colptr[pj] + (pi - first[pj])] = v;
                }
            }
        }

        // Column-wise factorization. `u` holds D[k] * L[j][k] for the current
        // column; the stored entries are the unit-lower factors L[j][k].
        let mut u = vec![0.0f64; n];
        let mut negative_pivots = 0usize;
        let mut scale = 0.0f64;
        for j in 0..n {
            scale = scale.max(diag[j].abs());
        }
        let tiny = scale * 1e-18 + f64::MIN_POSITIVE;

        for j in 0..n {
            let fj = first[j];
            for k in fj..j {
                let fk = first[k];
                let lo = fj.max(fk);
                let mut s = cols[colptr[j] + (k - fj)];
                // dot(L[., k], u[., j]) over the overlapping envelope rows
                let col_k = &cols[colptr[k]..colptr[k + 1]];
                for m in lo..k {
                    s -= col_k[m - fk] * u[m];
                }
                u[k] = s;
            }
            let mut d = diag[j];
            for k in fj..j {
                let l = u[k] / diag[k];
                cols[colptr[j] + (k - fj)] = l;
                d -= u[k] * l;
            }
            if d.abs() <= tiny || !d.is_finite() {
                return Err(Error::Eigensolver(format!(
                    "singular pivot {d:.3e} at column {j} during LDL^T"
                )));
            }
            if d < 0.0 {
                negative_pivots += 1;
            }
            diag[j] = d;
        }

        Ok(SkylineFactor {
            n,
            new_of,
            old_of,
            first,
            colptr,
            cols,
            diag,
            negative_pivots,
        })
    }

    /// Number of negative pivots = number of eigenvalues below the shift.
    pub fn negative_pivots(&self) -> usize {
        self.negative_pivots
    }

    /// Solve A x = b in the original (unpermuted) indexing.
    pub fn solve(&self, b: &[f64], x: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        let mut y = vec![0.0f64; self.n];
        for i in 0..self.n {
            y[self.new_of[i] as usize] = b[i];
        }
        // Forward: L z = y (dot-product form on contiguous column segments).
        for j in 0..self.n {
            let fj = self.first[j];
            let col = &self.cols[self.colptr[j]..self.colptr[j + 1]];
            let mut s = y[j];
            for k in fj..j {
                s -= col[k - fj] * y[k];
            }
            y[j] = s;
        }
        for j in 0..self.n {
            y[j] /= self.diag[j];
        }
        // Backward: L^T x = z (axpy form).
        for j in (0..self.n).rev() {
            let fj = self.first[j];
            let col = &self.cols[self.colptr[j]..self.colptr[j + 1]];
            let xj = y[j];
            for k in fj..j {
                y[k] -= col[k - fj] * xj;
            }
        }
        for i in 0..self.n {
            x[i] = y[self.new_of[i] as usize];
        }
    }

    pub fn solve_alloc(&self, b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        self.solve(b, &mut x);
        x
    }

    /// Mean envelope height, a diagnostic for the ordering quality.
    pub fn mean_profile(&self) -> f64 {
        self.colptr[self.n] as f64 / self.n.max(1) as f64
    }

    pub fn ordering(&self) -> &[u32] {
        &self.old_of
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::sparse::Triplets;
    use rand::{Rng, SeedableRng};

    /// Laplacian-like SPD matrix on a 1D chain plus random symmetric noise.
    fn random_spd(n: usize, seed: u64) -> CsrMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut t = Triplets::new(n);
        for i in 0..n {
            t.push(i as u32, i as u32, 4.0 + rng.gen_range(0.0..1.0));
            if i + 1 < n {
                let v = -1.0 + rng.gen_range(-0.2..0.2);
                t.push(i as u32, (i + 1) as u32, v);
                t.push((i + 1) as u32, i as u32, v);
            }
            // a longer-range coupling to exercise the envelope
            if i + 7 < n && rng.gen_bool(0.3) {
                let v = rng.gen_range(-0.3..0.3);
                t.push(i as u32, (i + 7) as u32, v);
                t.push((i + 7) as u32, i as u32, v);
            }
        }
        t.to_csr()
    }

    #[test]
    fn solve_matches_dense() {
        for seed in 0..5 {
            let n = 60;
            let a = random_spd(n, seed);
            let f = SkylineFactor::factor(&a).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + 100);
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = f.solve_alloc(&b);
            let r = a.matvec_alloc(&x);
            let err: f64 = r.iter().zip(&b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
            assert!(err < 1e-10, "seed {seed}: residual {err}");
        }
    }

    #[test]
    fn inertia_counts_eigenvalues_below_shift() {
        // diag(1, 2, 3, 4) shifted by 2.5 has 2 negative pivots.
        let mut t = Triplets::new(4);
        for (i, v) in [1.0, 2.0, 3.0, 4.0].iter().enumerate() {
            t.push(i as u32, i as u32, v - 2.5);
        }
        let f = SkylineFactor::factor(&t.to_csr()).unwrap();
        assert_eq!(f.negative_pivots(), 2);
    }

    #[test]
    fn rcm_is_a_permutation() {
        let a = random_spd(40, 3);
        let p = reverse_cuthill_mckee(&a);
        let mut seen = vec![false; 40];
        for &v in &p {
            assert!(!seen[v as usize]);
            seen[v as usize] = true;
        }
    }
}
