//! Compressed sparse row storage for the symmetric operators.
//!
//! Assembly goes through [`Triplets`]; duplicate entries are merged by a
//! stable sort so the summation order (and therefore the floating-point
//! result) is independent of how the triplets were produced.

/// Coordinate-format builder.
#[derive(Clone, Debug, Default)]
pub struct Triplets {
    pub n: usize,
    entries: Vec<(u32, u32, f64)>,
}

impl Triplets {
    pub fn new(n: usize) -> Self {
        Triplets {
            n,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: u32, col: u32, val: f64) {
        debug_assert!((row as usize) < self.n && (col as usize) < self.n);
        self.entries.push((row, col, val));
    }

    pub fn extend_from(&mut self, other: Triplets) {
        debug_assert_eq!(self.n, other.n);
        self.entries.extend(other.entries);
    }

    pub fn for_each(&self, mut f: impl FnMut(u32, u32, f64)) {
        for &(r, c, v) in &self.entries {
            f(r, c, v);
        }
    }

    /// Merge duplicates and build CSR. Stable: equal keys are summed in the
    /// order they were pushed.
    pub fn to_csr(&self) -> CsrMatrix {
        let mut order: Vec<u32> = (0..self.entries.len() as u32).collect();
        order.sort_by_key(|&i| {
            let (r, c, _) = self.entries[i as usize];
            ((r as u64) << 32) | c as u64
        });

        let mut indptr = vec![0usize; self.n + 1];
        let mut indices = Vec::new();
        let mut data: Vec<f64> = Vec::new();
        let mut last: Option<(u32, u32)> = None;
        for &i in &order {
            let (r, c, v) = self.entries[i as usize];
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r as usize + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..self.n {
            indptr[i + 1] += indptr[i];
        }
        CsrMatrix {
            n: self.n,
            indptr,
            indices,
            data,
        }
    }
}

/// Square sparse matrix in CSR form with sorted column indices per row.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
    pub data: Vec<f64>,
}

impl CsrMatrix {
    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n,
            indptr: (0..=n).collect(),
            indices: (0..n as u32).collect(),
            data: vec![1.0; n],
        }
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let span = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[span.clone()], &self.data[span])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&(j as u32)) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c as usize];
            }
            y[i] = acc;
        }
    }

    pub fn matvec_alloc(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    /// x^T A y.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut row = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                row += v * y[*c as usize];
            }
            acc += x[i] * row;
        }
        acc
    }

    /// alpha*self + beta*other, merging sparsity patterns.
    pub fn add_scaled(&self, other: &CsrMatrix, alpha: f64, beta: f64) -> CsrMatrix {
        assert_eq!(self.n, other.n);
        let mut indptr = vec![0usize; self.n + 1];
        let mut indices = Vec::with_capacity(self.nnz() + other.nnz());
        let mut data = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.n {
            let (ca, va) = self.row(i);
            let (cb, vb) = other.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ca.len() || q < cb.len() {
                let next_a = ca.get(p).copied().unwrap_or(u32::MAX);
                let next_b = cb.get(q).copied().unwrap_or(u32::MAX);
                if next_a < next_b {
                    indices.push(next_a);
                    data.push(alpha * va[p]);
                    p += 1;
                } else if next_b < next_a {
                    indices.push(next_b);
                    data.push(beta * vb[q]);
                    q += 1;
                } else {
                    indices.push(next_a);
                    data.push(alpha * va[p] + beta * vb[q]);
                    p += 1;
                    q += 1;
                }
            }
            indptr[i + 1] = indices.len();
        }
        CsrMatrix {
            n: self.n,
            indptr,
            indices,
            data,
        }
    }

    /// Largest absolute asymmetry |A[i][j] - A[j][i]|.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(*c as usize, i)).abs());
            }
        }
        worst
    }

    /// Symmetric relabeling: B[p(i)][p(j)] = A[i][j] where `new_of[i] = p(i)`.
    pub fn permute_symmetric(&self, new_of: &[u32]) -> CsrMatrix {
        let mut t = Triplets::new(self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                t.push(new_of[i], new_of[*c as usize], *v);
            }
        }
        t.to_csr()
    }
}
