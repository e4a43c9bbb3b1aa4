//! Spectral calculus on the doubled surface: the eigenbasis of the discrete
//! Laplacian, states as coefficient vectors, multiplier calculus F(sqrt(Delta)),
//! Sobolev norms, and L^q norms by per-triangle quadrature.
//!
//! Frequencies are `lambda_j = sqrt(mu_j)` where `K phi = mu M phi`; the
//! functional calculus always receives the frequency (not its square) as its
//! argument. High modes of a fixed mesh are meaningless, so a basis built on
//! a nested mesh pair marks a mode trusted only when the eigenvalue shift
//! under refinement predicts a relative error below one percent.

use std::sync::Arc;

use num_complex::Complex64;

use crate::littlewood_paley::MultiplierProfile;
use crate::mesh::{assemble, parity_reduce, DiscreteOperators, DofMap, Parity, SurfaceMesh};
use crate::numerics::lanczos::{self, LanczosOptions};
use crate::numerics::quadrature::TRI_DEGREE4;
use crate::{Error, Result};

/// Which self-adjoint operator the basis diagonalizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectrumKind {
    /// The full Laplacian of the closed doubled surface.
    Closed,
    /// Odd involution parity: the Dirichlet Laplacian of the base polygon.
    Dirichlet,
    /// Even involution parity: the Neumann Laplacian of the base polygon.
    Neumann,
}

impl SpectrumKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SpectrumKind::Closed => "both",
            SpectrumKind::Dirichlet => "dirichlet",
            SpectrumKind::Neumann => "neumann",
        }
    }
}

/// Parity label of a computed mode under the mirror involution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeParity {
    Even,
    Odd,
    Mixed,
}

/// How to obtain the closed-surface spectrum.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStrategy {
    /// Solve the full generalized problem directly.
    Direct,
    /// Solve the even and odd reductions separately and merge; cheaper, and
    /// the parity labels are exact by construction.
    ParityMerge,
}

/// Eigenfrequencies and mass-orthonormal eigenvectors on the doubled mesh.
pub struct SpectralBasis {
    pub mesh: Arc<SurfaceMesh>,
    /// Unreduced operators on the double (used for inner products and norms).
    pub ops: Arc<DiscreteOperators>,
    pub kind: SpectrumKind,
    pub cone_dirichlet: bool,
    /// Frequencies lambda_j, nondecreasing.
    pub lambda: Vec<f64>,
    /// Eigenvalues lambda_j^2 of the generalized problem.
    pub lambda_sq: Vec<f64>,
    /// Richardson-extrapolated eigenvalues when built from a mesh pair.
    pub lambda_sq_extrapolated: Option<Vec<f64>>,
    /// Column-major (n x count) eigenvectors, M-orthonormal on the double.
    modes: Vec<f64>,
    pub parity: Vec<ModeParity>,
    pub trusted: Vec<bool>,
    pub max_residual: f64,
    /// Provenance token tying states to this basis.
    pub id: u64,
}

/// A function on the surface as coefficients in a spectral basis.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralState {
    pub coeffs: Vec<Complex64>,
    pub basis_id: u64,
}

impl SpectralState {
    pub fn zero(basis: &SpectralBasis) -> Self {
        SpectralState {
            coeffs: vec![Complex64::new(0.0, 0.0); basis.count()],
            basis_id: basis.id,
        }
    }

    /// A single basis mode with unit coefficient.
    pub fn pure_mode(basis: &SpectralBasis, j: usize) -> Self {
        let mut s = Self::zero(basis);
        s.coeffs[j] = Complex64::new(1.0, 0.0);
        s
    }

    /// Coefficient-space l^2 norm (the L^2 norm of the represented function).
    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }
}

impl SpectralBasis {
    pub fn count(&self) -> usize {
        self.lambda.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.mesh.n_vertices()
    }

    pub fn mode(&self, j: usize) -> &[f64] {
        let n = self.n_vertices();
        &self.modes[j * n..(j + 1) * n]
    }

    /// Compute the lowest `count` eigenpairs for the requested operator.
    pub fn compute(
        mesh: Arc<SurfaceMesh>,
        kind: SpectrumKind,
        cone_dirichlet: bool,
        count: usize,
        strategy: SolveStrategy,
    ) -> Result<Self> {
        let ops = Arc::new(assemble(&mesh, false)?);
        match (kind, strategy) {
            (SpectrumKind::Closed, SolveStrategy::ParityMerge) => {
                Self::closed_via_parity(mesh, ops, cone_dirichlet, count)
            }
            (SpectrumKind::Closed, SolveStrategy::Direct) => {
                let solve_ops = if cone_dirichlet {
                    Arc::new(assemble(&mesh, true)?)
                } else {
                    ops.clone()
                };
                let pairs = solve_lowest(&solve_ops, count)?;
                let dof_map = solve_ops.dof_map.clone();
                Self::from_pairs(mesh, ops, kind, cone_dirichlet, pairs, &dof_map, None)
            }
            (parity_kind, _) => {
                let parity = match parity_kind {
                    SpectrumKind::Dirichlet => Parity::Odd,
                    SpectrumKind::Neumann => Parity::Even,
                    SpectrumKind::Closed => unreachable!(),
                };
                let reduced = parity_reduce(&mesh, &ops, parity, cone_dirichlet)?;
                let pairs = solve_lowest(&reduced, count)?;
                let label = match parity {
                    Parity::Even => ModeParity::Even,
                    Parity::Odd => ModeParity::Odd,
                };
                Self::from_pairs(
                    mesh,
                    ops,
                    parity_kind,
                    cone_dirichlet,
                    pairs,
                    &reduced.dof_map,
                    Some(label),
                )
            }
        }
    }

    fn closed_via_parity(
        mesh: Arc<SurfaceMesh>,
        ops: Arc<DiscreteOperators>,
        cone_dirichlet: bool,
        count: usize,
    ) -> Result<Self> {
        // Solve enough of each parity that the merged lowest `count` is
        // complete: only values below the end of both partial lists count.
        let mut per = count / 2 + 12;
        loop {
            let even = parity_reduce(&mesh, &ops, Parity::Even, cone_dirichlet)?;
            let odd = parity_reduce(&mesh, &ops, Parity::Odd, cone_dirichlet)?;
            let pe = solve_lowest(&even, per.min(even.dof_map.dim()))?;
            let po = solve_lowest(&odd, per.min(odd.dof_map.dim()))?;
            let ceiling = pe
                .values
                .last()
                .copied()
                .unwrap_or(f64::INFINITY)
                .min(po.values.last().copied().unwrap_or(f64::INFINITY));
            let complete = pe.values.iter().filter(|&&v| v <= ceiling).count()
                + po.values.iter().filter(|&&v| v <= ceiling).count();
            let exhausted = per >= even.dof_map.dim().max(odd.dof_map.dim());
            if complete < count && !exhausted {
                per = per + per / 2 + 8;
                continue;
            }

            let n = mesh.n_vertices();
            let mut entries: Vec<(f64, ModeParity, usize, bool)> = Vec::new();
            for (i, &mu) in pe.values.iter().enumerate() {
                entries.push((mu, ModeParity::Even, i, true));
            }
            for (i, &mu) in po.values.iter().enumerate() {
                entries.push((mu, ModeParity::Odd, i, false));
            }
            entries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            entries.truncate(count);

            let mut lambda_sq = Vec::with_capacity(count);
            let mut parity = Vec::with_capacity(count);
            let mut modes = Vec::with_capacity(count * n);
            for (mu, p, i, is_even) in entries {
                lambda_sq.push(mu);
                parity.push(p);
                let full = if is_even {
                    even.dof_map.prolong(pe.vector(i))
                } else {
                    odd.dof_map.prolong(po.vector(i))
                };
                modes.extend_from_slice(&full);
            }
            let max_residual = pe.max_residual.max(po.max_residual);
            return Ok(Self::finish(
                mesh,
                ops,
                SpectrumKind::Closed,
                cone_dirichlet,
                lambda_sq,
                modes,
                parity,
                max_residual,
            ));
        }
    }

    fn from_pairs(
        mesh: Arc<SurfaceMesh>,
        ops: Arc<DiscreteOperators>,
        kind: SpectrumKind,
        cone_dirichlet: bool,
        pairs: lanczos::GeneralizedEigen,
        dof_map: &DofMap,
        label: Option<ModeParity>,
    ) -> Result<Self> {
        let n = mesh.n_vertices();
        let count = pairs.values.len();
        let mut modes = Vec::with_capacity(count * n);
        for j in 0..count {
            modes.extend_from_slice(&dof_map.prolong(pairs.vector(j)));
        }
        // Classify parity from the symmetry score <phi, phi o sigma>_M when
        // not known by construction; degenerate clusters may mix, which the
        // Mixed label records.
        let parity = match label {
            Some(l) => vec![l; count],
            None => {
                let mut out = Vec::with_capacity(count);
                for j in 0..count {
                    let phi = &modes[j * n..(j + 1) * n];
                    let reflected = mesh.reflect_field(phi);
                    let score = ops.mass.bilinear(phi, &reflected);
                    out.push(if score > 0.9 {
                        ModeParity::Even
                    } else if score < -0.9 {
                        ModeParity::Odd
                    } else {
                        ModeParity::Mixed
                    });
                }
                out
            }
        };
        Ok(Self::finish(
            mesh,
            ops,
            kind,
            cone_dirichlet,
            pairs.values,
            modes,
            parity,
            pairs.max_residual,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        mesh: Arc<SurfaceMesh>,
        ops: Arc<DiscreteOperators>,
        kind: SpectrumKind,
        cone_dirichlet: bool,
        mut lambda_sq: Vec<f64>,
        modes: Vec<f64>,
        parity: Vec<ModeParity>,
        max_residual: f64,
    ) -> Self {
        let top = lambda_sq.iter().cloned().fold(0.0f64, f64::max);
        for mu in lambda_sq.iter_mut() {
            // the solver returns O(1e-12) noise on the kernel of K
            if mu.abs() < 1e-9 * top.max(1.0) {
                *mu = 0.0;
            }
        }
        let lambda: Vec<f64> = lambda_sq.iter().map(|&m| m.max(0.0).sqrt()).collect();
        let count = lambda.len();
        let id = provenance_id(&mesh, kind, cone_dirichlet, &lambda_sq);
        SpectralBasis {
            mesh,
            ops,
            kind,
            cone_dirichlet,
            lambda,
            lambda_sq,
            lambda_sq_extrapolated: None,
            modes,
            parity,
            trusted: vec![true; count],
            max_residual,
            id,
        }
    }

    /// Indices of trusted modes with frequency strictly inside (lo, hi).
    pub fn trusted_in_band(&self, lo: f64, hi: f64) -> Vec<usize> {
        (0..self.count())
            .filter(|&j| self.trusted[j] && self.lambda[j] > lo && self.lambda[j] < hi)
            .collect()
    }

    /// Largest trusted frequency.
    pub fn trusted_ceiling(&self) -> f64 {
        (0..self.count())
            .filter(|&j| self.trusted[j])
            .map(|j| self.lambda[j])
            .fold(0.0, f64::max)
    }

    fn check_state(&self, state: &SpectralState) -> Result<()> {
        if state.basis_id != self.id {
            return Err(Error::BasisMismatch {
                state: state.basis_id,
                basis: self.id,
            });
        }
        if state.coeffs.len() != self.count() {
            return Err(Error::StateLength {
                got: state.coeffs.len(),
                want: self.count(),
            });
        }
        Ok(())
    }
}

impl SpectralBasis {
    /// Binary basis cache: magic `ESCSBASE`, version, the frequency arrays,
    /// the modes as a column-major f64 block, and the provenance hash of the
    /// mesh cache file this basis was computed on.
    pub fn write_cache(&self, path: &std::path::Path, mesh_hash: &[u8; 32]) -> Result<()> {
        let n = self.n_vertices() as u64;
        let count = self.count() as u64;
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(b"ESCSBASE");
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.push(match self.kind {
            SpectrumKind::Closed => 0,
            SpectrumKind::Dirichlet => 1,
            SpectrumKind::Neumann => 2,
        });
        buf.push(self.cone_dirichlet as u8);
        buf.push(self.lambda_sq_extrapolated.is_some() as u8);
        buf.push(0);
        buf.extend_from_slice(&n.to_le_bytes());
        buf.extend_from_slice(&count.to_le_bytes());
        buf.extend_from_slice(mesh_hash);
        for &v in &self.lambda {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for &v in &self.lambda_sq {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(extrap) = &self.lambda_sq_extrapolated {
            for &v in extrap {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        for &v in &self.modes {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for &p in &self.parity {
            buf.push(match p {
                ModeParity::Even => 0,
                ModeParity::Odd => 1,
                ModeParity::Mixed => 2,
            });
        }
        for &t in &self.trusted {
            buf.push(t as u8);
        }
        buf.extend_from_slice(&self.max_residual.to_le_bytes());
        std::fs::write(path, buf)?;
        Ok(())
    }

    /// Load a cached basis for `mesh`, verifying the recorded mesh hash.
    pub fn read_cache(
        path: &std::path::Path,
        mesh: Arc<SurfaceMesh>,
        mesh_hash: &[u8; 32],
    ) -> Result<Self> {
        let bad = |detail: &str| Error::CacheFormat {
            path: path.display().to_string(),
            detail: detail.to_string(),
        };
        let buf = std::fs::read(path)?;
        let mut off = 0usize;
        let take = |off: &mut usize, n: usize| -> Result<&[u8]> {
            if *off + n > buf.len() {
                return Err(bad("truncated file"));
            }
            let s = &buf[*off..*off + n];
            *off += n;
            Ok(s)
        };
        if take(&mut off, 8)? != b"ESCSBASE" {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap());
        if version != 1 {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let kind = match take(&mut off, 1)?[0] {
            0 => SpectrumKind::Closed,
            1 => SpectrumKind::Dirichlet,
            2 => SpectrumKind::Neumann,
            other => return Err(bad(&format!("unknown spectrum kind {other}"))),
        };
        let cone_dirichlet = take(&mut off, 1)?[0] != 0;
        let has_extrap = take(&mut off, 1)?[0] != 0;
        let _pad = take(&mut off, 1)?;
        let n = u64::from_le_bytes(take(&mut off, 8)?.try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(take(&mut off, 8)?.try_into().unwrap()) as usize;
        let stored_hash = take(&mut off, 32)?;
        if stored_hash != mesh_hash {
            return Err(bad("mesh provenance hash mismatch"));
        }
        if n != mesh.n_vertices() {
            return Err(bad("vertex count does not match the mesh"));
        }
        let read_f64s = |off: &mut usize, len: usize| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                out.push(f64::from_le_bytes(take(off, 8)?.try_into().unwrap()));
            }
            Ok(out)
        };
        let lambda = read_f64s(&mut off, count)?;
        let lambda_sq = read_f64s(&mut off, count)?;
        let lambda_sq_extrapolated = if has_extrap {
            Some(read_f64s(&mut off, count)?)
        } else {
            None
        };
        let modes = read_f64s(&mut off, n * count)?;
        let mut parity = Vec::with_capacity(count);
        for _ in 0..count {
            parity.push(match take(&mut off, 1)?[0] {
                0 => ModeParity::Even,
                1 => ModeParity::Odd,
                _ => ModeParity::Mixed,
            });
        }
        let mut trusted = Vec::with_capacity(count);
        for _ in 0..count {
            trusted.push(take(&mut off, 1)?[0] != 0);
        }
        let max_residual = f64::from_le_bytes(take(&mut off, 8)?.try_into().unwrap());
        if off != buf.len() {
            return Err(bad("trailing bytes"));
        }
        let ops = Arc::new(assemble(&mesh, false)?);
        let id = provenance_id(&mesh, kind, cone_dirichlet, &lambda_sq);
        Ok(SpectralBasis {
            mesh,
            ops,
            kind,
            cone_dirichlet,
            lambda,
            lambda_sq,
            lambda_sq_extrapolated,
            modes,
            parity,
            trusted,
            max_residual,
            id,
        })
    }
}

fn provenance_id(
    mesh: &SurfaceMesh,
    kind: SpectrumKind,
    cone_dirichlet: bool,
    lambda_sq: &[f64],
) -> u64 {
    // FNV-1a over the quantities that determine the basis.
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    eat(&(mesh.n_vertices() as u64).to_le_bytes());
    eat(&(mesh.n_triangles() as u64).to_le_bytes());
    eat(&[kind.as_str().as_bytes()[0], cone_dirichlet as u8]);
    for &v in lambda_sq {
        eat(&v.to_bits().to_le_bytes());
    }
    h
}

fn solve_lowest(ops: &DiscreteOperators, count: usize) -> Result<lanczos::GeneralizedEigen> {
    let dim = ops.stiffness.n;
    if count > dim {
        return Err(Error::TooManyModes {
            requested: count,
            dim,
        });
    }
    if dim <= 1200 {
        lanczos::smallest_eigenpairs_dense(&ops.stiffness, &ops.mass, count)
    } else {
        let opts = LanczosOptions::new(count);
        lanczos::smallest_eigenpairs(&ops.stiffness, &ops.mass, &opts)
    }
}

/// A basis on a mesh and its uniform refinement, with per-mode trust flags
/// from the eigenvalue shift and Richardson-extrapolated eigenvalues.
pub struct BasisPair {
    pub coarse: SpectralBasis,
    pub fine: SpectralBasis,
    /// For each fine mode, the coarse mode it was matched with (same parity
    /// class, same rank within the class).
    pub matched_coarse: Vec<Option<usize>>,
}

impl BasisPair {
    /// Fine/coarse index lists over the trusted, matched fine modes.
    pub fn matched_trusted(&self) -> (Vec<usize>, Vec<usize>) {
        let mut fine_idx = Vec::new();
        let mut coarse_idx = Vec::new();
        for j in 0..self.fine.count() {
            if let (true, Some(cj)) = (self.fine.trusted[j], self.matched_coarse[j]) {
                fine_idx.push(j);
                coarse_idx.push(cj);
            }
        }
        (fine_idx, coarse_idx)
    }
}

impl BasisPair {
    /// Solve on `coarse_mesh` and on its uniform refinement. A fine mode is
    /// trusted when `|mu_c - mu_f| / (3 mu_f)` — the Richardson estimate of
    /// its remaining discretization error — is below one percent.
    pub fn build(
        coarse_mesh: Arc<SurfaceMesh>,
        kind: SpectrumKind,
        cone_dirichlet: bool,
        count: usize,
        strategy: SolveStrategy,
    ) -> Result<Self> {
        let fine_mesh = Arc::new(coarse_mesh.uniform_refine());
        let coarse = SpectralBasis::compute(coarse_mesh, kind, cone_dirichlet, count, strategy)?;
        let mut fine = SpectralBasis::compute(fine_mesh, kind, cone_dirichlet, count, strategy)?;

        // Match modes per parity class, index by index.
        let mut extrap = fine.lambda_sq.clone();
        let mut trusted = vec![false; fine.count()];
        let mut matched_coarse = vec![None; fine.count()];
        for class in [ModeParity::Even, ModeParity::Odd, ModeParity::Mixed] {
            let fi: Vec<usize> = (0..fine.count())
                .filter(|&j| fine.parity[j] == class)
                .collect();
            let ci: Vec<usize> = (0..coarse.count())
                .filter(|&j| coarse.parity[j] == class)
                .collect();
            for (slot, &j) in fi.iter().enumerate() {
                let Some(&cj) = ci.get(slot) else { continue };
                let mu_f = fine.lambda_sq[j];
                let mu_c = coarse.lambda_sq[cj];
                extrap[j] = (4.0 * mu_f - mu_c) / 3.0;
                let err = (mu_c - mu_f).abs() / (3.0 * mu_f.abs().max(1e-12));
                trusted[j] = mu_f == 0.0 || err < 0.01;
                matched_coarse[j] = Some(cj);
            }
        }
        fine.trusted = trusted;
        fine.lambda_sq_extrapolated = Some(extrap);
        Ok(BasisPair {
            coarse,
            fine,
            matched_coarse,
        })
    }
}

/// Expand coefficients into per-vertex values: `sum_j c_j phi_j`.
///
/// Exact inverse of [`analyze`] for states in the resolved span.
pub fn evaluate_on_mesh(basis: &SpectralBasis, state: &SpectralState) -> Result<Vec<Complex64>> {
    basis.check_state(state)?;
    let n = basis.n_vertices();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (j, &c) in state.coeffs.iter().enumerate() {
        if c == Complex64::new(0.0, 0.0) {
            continue;
        }
        let phi = basis.mode(j);
        for (o, &p) in out.iter_mut().zip(phi) {
            *o += c * p;
        }
    }
    Ok(out)
}

/// Coefficients of a vertex field: `c_j = <f, phi_j>_M`.
pub fn analyze(basis: &SpectralBasis, field: &[Complex64]) -> Result<SpectralState> {
    if field.len() != basis.n_vertices() {
        return Err(Error::StateLength {
            got: field.len(),
            want: basis.n_vertices(),
        });
    }
    let n = basis.n_vertices();
    let re: Vec<f64> = field.iter().map(|c| c.re).collect();
    let im: Vec<f64> = field.iter().map(|c| c.im).collect();
    let mre = basis.ops.mass.matvec_alloc(&re);
    let mim = basis.ops.mass.matvec_alloc(&im);
    let mut coeffs = Vec::with_capacity(basis.count());
    for j in 0..basis.count() {
        let phi = basis.mode(j);
        let mut cr = 0.0;
        let mut ci = 0.0;
        for v in 0..n {
            cr += phi[v] * mre[v];
            ci += phi[v] * mim[v];
        }
        coeffs.push(Complex64::new(cr, ci));
    }
    Ok(SpectralState {
        coeffs,
        basis_id: basis.id,
    })
}

/// Apply a spectral multiplier: `c_j -> F(lambda_j) c_j`.
pub fn apply_multiplier(
    basis: &SpectralBasis,
    profile: &MultiplierProfile,
    state: &SpectralState,
) -> Result<SpectralState> {
    basis.check_state(state)?;
    let coeffs = state
        .coeffs
        .iter()
        .zip(&basis.lambda)
        .map(|(&c, &l)| c * profile.value(l))
        .collect();
    Ok(SpectralState {
        coeffs,
        basis_id: state.basis_id,
    })
}

/// The H^s norm `(sum_j (1 + lambda_j^2)^s |c_j|^2)^(1/2)`, truncated at the
/// resolved modes.
pub fn sobolev_norm(basis: &SpectralBasis, state: &SpectralState, s: f64) -> Result<f64> {
    basis.check_state(state)?;
    let mut acc = 0.0;
    for (c, &mu) in state.coeffs.iter().zip(&basis.lambda_sq) {
        acc += (1.0 + mu).powf(s) * c.norm_sqr();
    }
    Ok(acc.sqrt())
}

/// Odd or even part of a state with respect to the mirror involution:
/// `(u -/+ u o sigma) / 2`, returned in the same basis.
pub fn parity_split(
    basis: &SpectralBasis,
    state: &SpectralState,
    parity: Parity,
) -> Result<SpectralState> {
    basis.check_state(state)?;
    let field = evaluate_on_mesh(basis, state)?;
    let mesh = &basis.mesh;
    if mesh.involution.len() != mesh.n_vertices() {
        return Err(Error::MissingInvolution);
    }
    let projected: Vec<Complex64> = (0..field.len())
        .map(|v| {
            let refl = field[mesh.involution[v] as usize];
            match parity {
                Parity::Even => (field[v] + refl) * 0.5,
                Parity::Odd => (field[v] - refl) * 0.5,
            }
        })
        .collect();
    analyze(basis, &projected)
}

/// L^q norm of a vertex field by per-triangle quadrature, exact for degree-4
/// polynomials of the piecewise-linear interpolant. `q = infinity` returns
/// the max vertex magnitude.
pub fn lq_norm(mesh: &SurfaceMesh, field: &[Complex64], q: f64) -> f64 {
    assert_eq!(field.len(), mesh.n_vertices());
    if q.is_infinite() {
        return field.iter().map(|c| c.norm()).fold(0.0, f64::max);
    }
    assert!(q >= 1.0, "L^q norm needs q >= 1");
    // |v|^q from |v|^2 without transcendentals when q is an even integer
    // (the common exponents here are 2, 4 and 6).
    let half_power: Box<dyn Fn(f64) -> f64> = if q == 2.0 {
        Box::new(|s: f64| s)
    } else if q == 4.0 {
        Box::new(|s: f64| s * s)
    } else if q == 6.0 {
        Box::new(|s: f64| s * s * s)
    } else {
        Box::new(move |s: f64| s.powf(0.5 * q))
    };
    let mut acc = 0.0;
    for t in 0..mesh.n_triangles() {
        let [a, b, c] = mesh.triangles[t];
        let area = mesh.triangle_area(t);
        let (fa, fb, fc) = (field[a as usize], field[b as usize], field[c as usize]);
        let mut local = 0.0;
        for (bary, w) in TRI_DEGREE4 {
            let re = fa.re * bary[0] + fb.re * bary[1] + fc.re * bary[2];
            let im = fa.im * bary[0] + fb.im * bary[1] + fc.im * bary[2];
            local += w * half_power(re * re + im * im);
        }
        acc += local * area;
    }
    acc.powf(1.0 / q)
}

/// Same norm for a real field.
pub fn lq_norm_real(mesh: &SurfaceMesh, field: &[f64], q: f64) -> f64 {
    let complex: Vec<Complex64> = field.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    lq_norm(mesh, &complex, q)
}

/// M-weighted L^2 norm of a complex vertex field.
pub fn m_norm(ops: &DiscreteOperators, field: &[Complex64]) -> f64 {
    let re: Vec<f64> = field.iter().map(|c| c.re).collect();
    let im: Vec<f64> = field.iter().map(|c| c.im).collect();
    (ops.mass.bilinear(&re, &re) + ops.mass.bilinear(&im, &im)).sqrt()
}

/// Eigenvalue counting function N(lambda) over trusted modes.
pub fn weyl_count(basis: &SpectralBasis, lambda: f64) -> usize {
    (0..basis.count())
        .filter(|&j| basis.trusted[j] && basis.lambda[j] <= lambda)
        .count()
}

/// Leading Weyl term `Area * lambda^2 / (4 pi)` for a closed surface.
pub fn weyl_expected(area: f64, lambda: f64) -> f64 {
    area * lambda * lambda / (4.0 * std::f64::consts::PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{double, unit_square};
    use crate::littlewood_paley::{dyadic_profile, MultiplierProfile};
    use crate::mesh::{triangulate, MeshParams};
    use std::f64::consts::PI;

    fn square_basis(kind: SpectrumKind, count: usize) -> SpectralBasis {
        let mesh = triangulate(&double(unit_square()), &MeshParams::new(0.07)).unwrap();
        SpectralBasis::compute(Arc::new(mesh), kind, false, count, SolveStrategy::ParityMerge)
            .unwrap()
    }

    /// Separation-of-variables eigenvalues of the unit square.
    fn square_oracle(dirichlet: bool, count: usize) -> Vec<f64> {
        let mut vals = Vec::new();
        let lo = if dirichlet { 1 } else { 0 };
        for m in lo..40u32 {
            for n in lo..40u32 {
                vals.push(PI * PI * ((m * m + n * n) as f64));
            }
        }
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals.truncate(count);
        vals
    }

    #[test]
    fn dirichlet_square_eigenvalues_near_oracle() {
        let basis = square_basis(SpectrumKind::Dirichlet, 5);
        let oracle = square_oracle(true, 5);
        for j in 0..5 {
            let rel = (basis.lambda_sq[j] - oracle[j]).abs() / oracle[j];
            assert!(
                rel < 0.04,
                "mode {j}: {} vs {} (rel {rel})",
                basis.lambda_sq[j],
                oracle[j]
            );
        }
        assert!(basis.max_residual < 1e-8);
    }

    #[test]
    fn neumann_square_starts_at_zero() {
        let basis = square_basis(SpectrumKind::Neumann, 5);
        assert_eq!(basis.lambda_sq[0], 0.0);
        let oracle = square_oracle(false, 5);
        for j in 1..5 {
            let rel = (basis.lambda_sq[j] - oracle[j]).abs() / oracle[j];
            assert!(rel < 0.04, "mode {j}");
        }
    }

    #[test]
    fn closed_spectrum_merges_parities() {
        let basis = square_basis(SpectrumKind::Closed, 10);
        let mut oracle = square_oracle(true, 10);
        oracle.extend(square_oracle(false, 10));
        oracle.sort_by(|a, b| a.partial_cmp(b).unwrap());
        oracle.truncate(10);
        for j in 0..10 {
            let err = (basis.lambda_sq[j] - oracle[j]).abs();
            assert!(err < 0.04 * (oracle[j] + 1.0), "mode {j}");
        }
        // mass orthonormality on the double
        for a in 0..10 {
            for b in a..10 {
                let ip = basis.ops.mass.bilinear(basis.mode(a), basis.mode(b));
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-10, "({a},{b}): {ip}");
            }
        }
    }

    #[test]
    fn analyze_synthesize_round_trip() {
        let basis = square_basis(SpectrumKind::Closed, 8);
        let mut state = SpectralState::zero(&basis);
        for (j, c) in state.coeffs.iter_mut().enumerate() {
            *c = Complex64::new(0.3 + j as f64, 1.0 - 0.2 * j as f64);
        }
        let field = evaluate_on_mesh(&basis, &state).unwrap();
        let back = analyze(&basis, &field).unwrap();
        for j in 0..8 {
            assert!((back.coeffs[j] - state.coeffs[j]).norm() < 1e-10, "mode {j}");
        }
        // zero state synthesizes to the zero field
        let zero = SpectralState::zero(&basis);
        let zfield = evaluate_on_mesh(&basis, &zero).unwrap();
        assert!(zfield.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn synthesis_matches_direct_combination() {
        let basis = square_basis(SpectrumKind::Closed, 6);
        let mut state = SpectralState::zero(&basis);
        let weights = [0.5, -1.25, 2.0, 0.0, 3.5];
        for (j, &w) in weights.iter().enumerate() {
            state.coeffs[j] = Complex64::new(w, 0.0);
        }
        let field = evaluate_on_mesh(&basis, &state).unwrap();
        for v in 0..basis.n_vertices() {
            let direct: f64 = weights
                .iter()
                .enumerate()
                .map(|(j, &w)| w * basis.mode(j)[v])
                .sum();
            assert!((field[v].re - direct).abs() < 1e-12);
            assert_eq!(field[v].im, 0.0);
        }
    }

    #[test]
    fn multiplier_identities() {
        let basis = square_basis(SpectrumKind::Closed, 8);
        let mut state = SpectralState::zero(&basis);
        for (j, c) in state.coeffs.iter_mut().enumerate() {
            *c = Complex64::new(1.0 + j as f64, -0.5);
        }
        let one = MultiplierProfile::constant(1.0);
        let same = apply_multiplier(&basis, &one, &state).unwrap();
        assert_eq!(same.coeffs, state.coeffs);

        // eigenrelation through the square multiplier
        let sq = MultiplierProfile::power(2.0);
        let j = 5;
        let pure = SpectralState::pure_mode(&basis, j);
        let scaled = apply_multiplier(&basis, &sq, &pure).unwrap();
        let expect = basis.lambda[j] * basis.lambda[j];
        assert!((scaled.coeffs[j].re - expect).abs() < 1e-12 * expect.max(1.0));

        // a dyadic band annihilates coefficients outside its support
        let k = 3;
        let band = dyadic_profile(k);
        let filtered = apply_multiplier(&basis, &band, &state).unwrap();
        for j in 0..basis.count() {
            let l = basis.lambda[j];
            if l <= 2f64.powi(k as i32 - 2) || l >= 2f64.powi(k as i32 + 2) {
                assert_eq!(filtered.coeffs[j], Complex64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn multiplier_composition_is_pointwise_product() {
        let basis = square_basis(SpectrumKind::Closed, 8);
        let mut state = SpectralState::zero(&basis);
        for (j, c) in state.coeffs.iter_mut().enumerate() {
            *c = Complex64::new(0.7 - 0.1 * j as f64, 0.4);
        }
        let f = dyadic_profile(2);
        let g = dyadic_profile(3);
        let fg = f.product(&g);
        let a = apply_multiplier(&basis, &g, &state).unwrap();
        let a = apply_multiplier(&basis, &f, &a).unwrap();
        let b = apply_multiplier(&basis, &fg, &state).unwrap();
        for j in 0..basis.count() {
            assert!((a.coeffs[j] - b.coeffs[j]).norm() <= 1e-15 * (1.0 + state.coeffs[j].norm()));
        }
    }

    #[test]
    fn sobolev_norm_values() {
        let basis = square_basis(SpectrumKind::Closed, 6);
        let state = SpectralState::pure_mode(&basis, 4);
        // s = 0 reduces to the coefficient norm
        assert!((sobolev_norm(&basis, &state, 0.0).unwrap() - 1.0).abs() < 1e-14);
        // pure mode: (1 + lambda^2)^(s/2)
        let s = 0.7;
        let expect = (1.0 + basis.lambda_sq[4]).powf(s / 2.0);
        assert!((sobolev_norm(&basis, &state, s).unwrap() - expect).abs() < 1e-12);
        // two-mode state at s = 1/4, against a hand evaluation
        let mut two = SpectralState::zero(&basis);
        two.coeffs[1] = Complex64::new(2.0, 0.0);
        two.coeffs[3] = Complex64::new(0.0, -1.0);
        let by_hand = (4.0 * (1.0 + basis.lambda_sq[1]).powf(0.25)
            + 1.0 * (1.0 + basis.lambda_sq[3]).powf(0.25))
        .sqrt();
        assert!((sobolev_norm(&basis, &two, 0.25).unwrap() - by_hand).abs() < 1e-12);
    }

    #[test]
    fn lq_norm_constants() {
        let mesh = triangulate(&double(unit_square()), &MeshParams::new(0.14)).unwrap();
        let ones = vec![Complex64::new(1.0, 0.0); mesh.n_vertices()];
        for q in [1.0, 2.0, 4.0] {
            let norm = lq_norm(&mesh, &ones, q);
            let expect = 2f64.powf(1.0 / q);
            assert!((norm - expect).abs() < 1e-10, "q={q}: {norm}");
        }
        assert!((lq_norm(&mesh, &ones, f64::INFINITY) - 1.0).abs() < 1e-15);

        // q = 2 on a resolved mode agrees with mass orthonormality
        let basis = square_basis(SpectrumKind::Closed, 4);
        let state = SpectralState::pure_mode(&basis, 2);
        let field = evaluate_on_mesh(&basis, &state).unwrap();
        let l2 = lq_norm(&basis.mesh, &field, 2.0);
        assert!((l2 - 1.0).abs() < 1e-6, "{l2}");
    }

    #[test]
    fn parity_split_reconstructs_and_projects() {
        let basis = square_basis(SpectrumKind::Closed, 10);
        let mut state = SpectralState::zero(&basis);
        for (j, c) in state.coeffs.iter_mut().enumerate() {
            *c = Complex64::new(1.0 / (1.0 + j as f64), 0.2 * j as f64);
        }
        let even = parity_split(&basis, &state, Parity::Even).unwrap();
        let odd = parity_split(&basis, &state, Parity::Odd).unwrap();
        for j in 0..basis.count() {
            let sum = even.coeffs[j] + odd.coeffs[j];
            assert!((sum - state.coeffs[j]).norm() < 1e-10, "mode {j}");
        }
        // idempotence
        let even2 = parity_split(&basis, &even, Parity::Even).unwrap();
        for j in 0..basis.count() {
            assert!((even2.coeffs[j] - even.coeffs[j]).norm() < 1e-10);
        }
        // a symmetric state is fixed by the even projection and killed by odd
        let sym_mode = (0..basis.count())
            .find(|&j| basis.parity[j] == ModeParity::Even)
            .unwrap();
        let sym = SpectralState::pure_mode(&basis, sym_mode);
        let kept = parity_split(&basis, &sym, Parity::Even).unwrap();
        let killed = parity_split(&basis, &sym, Parity::Odd).unwrap();
        assert!((kept.coeffs[sym_mode] - Complex64::new(1.0, 0.0)).norm() < 1e-10);
        assert!(killed.l2_norm() < 1e-10);
        // odd part vanishes on seam vertices
        let odd_field = evaluate_on_mesh(&basis, &odd).unwrap();
        for (v, &s) in basis.mesh.sheet.iter().enumerate() {
            if s == crate::mesh::SHEET_SEAM {
                assert!(odd_field[v].norm() < 1e-9, "seam vertex {v}");
            }
        }
        // L2 orthogonality of the parities through the mass matrix
        let e_field = evaluate_on_mesh(&basis, &even).unwrap();
        let o_field = evaluate_on_mesh(&basis, &odd).unwrap();
        let re: Vec<f64> = e_field.iter().map(|c| c.re).collect();
        let ro: Vec<f64> = o_field.iter().map(|c| c.re).collect();
        let ie: Vec<f64> = e_field.iter().map(|c| c.im).collect();
        let io: Vec<f64> = o_field.iter().map(|c| c.im).collect();
        let ip = basis.ops.mass.bilinear(&re, &ro) + basis.ops.mass.bilinear(&ie, &io);
        assert!(ip.abs() < 1e-10, "parities not orthogonal: {ip}");
    }

    #[test]
    fn basis_pair_marks_trust() {
        let mesh = triangulate(&double(unit_square()), &MeshParams::new(0.22)).unwrap();
        let pair = BasisPair::build(
            Arc::new(mesh),
            SpectrumKind::Closed,
            false,
            12,
            SolveStrategy::ParityMerge,
        )
        .unwrap();
        assert!(pair.fine.trusted[0]);
        assert!(pair.fine.trusted[1]);
        let extrap = pair.fine.lambda_sq_extrapolated.as_ref().unwrap();
        // extrapolation should land closer to the oracle than the raw value
        let oracle = 2.0 * PI * PI; // lowest Dirichlet eigenvalue of the square
        let j = (0..12)
            .find(|&j| pair.fine.parity[j] == ModeParity::Odd)
            .unwrap();
        let raw_err = (pair.fine.lambda_sq[j] - oracle).abs();
        let ext_err = (extrap[j] - oracle).abs();
        assert!(ext_err < raw_err, "extrapolation {ext_err} vs raw {raw_err}");
    }
}
