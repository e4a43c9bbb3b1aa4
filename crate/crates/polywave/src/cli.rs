//! Batch experiment runner: parses inputs, caches meshes and bases keyed by
//! provenance hashes, runs named experiments, and emits CSV reports plus a
//! manifest.
//!
//! Outputs are deterministic given (configuration, seed): identical reruns
//! produce byte-identical CSVs and reuse caches whose provenance matches.
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure. The
//! cache directory comes from `POLYWAVE_CACHE` when set. Every run writes
//! `manifest.json`, with a partial-results flag when it failed midway.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::cone_heat::{cheeger_compare, cone_diagonal_heat, ConeParams, HeatQuery};
use crate::evolution::{
    dyadic_experiment, dyadic_strichartz, random_state_on, strichartz_ratio, AdmissiblePair,
    Ensemble,
};
use crate::geometry::{double, PolygonSpec, SurfaceSpec};
use crate::littlewood_paley::squarefunction;
use crate::mesh::{triangulate, MeshParams, SurfaceMesh};
use crate::spectral::{
    sobolev_norm, BasisPair, ModeParity, SolveStrategy, SpectralBasis, SpectrumKind,
};
use crate::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "polywave", about = "spectral experiments on doubled polygons", version)]
pub struct Cli {
    /// Line-oriented key=value configuration file; explicit flags override.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default `polywave-out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Cache directory (default `<out>/cache`; `POLYWAVE_CACHE` overrides).
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct SurfaceOpts {
    /// Polygon file.
    #[arg(long)]
    pub surface: Option<PathBuf>,
    /// Target edge length of the coarse mesh.
    #[arg(long)]
    pub h: Option<f64>,
    /// Grading exponent in (0, 1]; default adapts to re-entrant corners.
    #[arg(long)]
    pub grade: Option<f64>,
    /// Minimum triangle angle in degrees.
    #[arg(long)]
    pub min_angle: Option<f64>,
    /// Number of modes to resolve.
    #[arg(long)]
    pub modes: Option<usize>,
    /// Spectrum: dirichlet | neumann | both.
    #[arg(long)]
    pub bc: Option<String>,
    /// Impose the Dirichlet condition at cone vertices.
    #[arg(long)]
    pub cone_dirichlet: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Double a polygon and report its cone points.
    Double {
        #[command(flatten)]
        surface: SurfaceOpts,
    },
    /// Triangulate the double and export mesh statistics.
    Mesh {
        #[command(flatten)]
        surface: SurfaceOpts,
    },
    /// Solve the eigenproblem and export the spectrum.
    Eigs {
        #[command(flatten)]
        surface: SurfaceOpts,
    },
    /// Squarefunction ratio ensemble.
    Squarefn {
        #[command(flatten)]
        surface: SurfaceOpts,
        #[arg(long)]
        q: Option<f64>,
        /// Frequency cutoff for the random states (0 = trusted ceiling).
        #[arg(long)]
        cutoff: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Frequency-localized evolution ratios on [0, 2^-k] per band.
    Evolve {
        #[command(flatten)]
        surface: SurfaceOpts,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        kmin: Option<u32>,
        #[arg(long)]
        kmax: Option<u32>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Dyadic Strichartz ratios over [-T, T] per band, plus the full
    /// H^{1/p} ratio over mixed-band data.
    Strichartz {
        #[command(flatten)]
        surface: SurfaceOpts,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        kmin: Option<u32>,
        #[arg(long)]
        kmax: Option<u32>,
        #[arg(long = "T")]
        t_horizon: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Cone heat kernels, optionally compared against a surface spectrum.
    Heat {
        #[command(flatten)]
        surface: SurfaceOpts,
        #[arg(long)]
        rho: Option<f64>,
        /// Comma-separated radii.
        #[arg(long)]
        radii: Option<String>,
        /// Comma-separated times.
        #[arg(long)]
        times: Option<String>,
    },
    /// Summarize the CSV outputs under a directory.
    Report {
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

/// Entry point for the binary; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let config = match load_config(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error[{}]: {}", e.module(), e);
            return 2;
        }
    };
    let out_dir = cli
        .out
        .clone()
        .or_else(|| config.get("out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("polywave-out"));
    let cache_dir = std::env::var_os("POLYWAVE_CACHE")
        .map(PathBuf::from)
        .or(cli.cache.clone())
        .or_else(|| config.get("cache").map(PathBuf::from))
        .unwrap_or_else(|| out_dir.join("cache"));

    let mut ctx = RunContext {
        out_dir,
        cache_dir,
        config,
        outputs: Vec::new(),
        cache_notes: BTreeMap::new(),
    };
    if let Err(e) = std::fs::create_dir_all(&ctx.out_dir)
        .and_then(|_| std::fs::create_dir_all(&ctx.cache_dir))
    {
        eprintln!("error[cli]: {e}");
        return 2;
    }

    let result = dispatch(&cli.command, &mut ctx);
    let (partial, error_text, code) = match &result {
        Ok(()) => (false, None, 0),
        Err(e) => {
            eprintln!("error[{}]: {}", e.module(), e);
            (true, Some(format!("[{}] {}", e.module(), e)), e.exit_code())
        }
    };
    if let Err(e) = write_manifest(&ctx, command_name(&cli.command), partial, error_text) {
        eprintln!("error[cli]: failed to write manifest: {e}");
    }
    code
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Double { .. } => "double",
        Command::Mesh { .. } => "mesh",
        Command::Eigs { .. } => "eigs",
        Command::Squarefn { .. } => "squarefn",
        Command::Evolve { .. } => "evolve",
        Command::Strichartz { .. } => "strichartz",
        Command::Heat { .. } => "heat",
        Command::Report { .. } => "report",
    }
}

struct RunContext {
    out_dir: PathBuf,
    cache_dir: PathBuf,
    config: BTreeMap<String, String>,
    outputs: Vec<(String, String, usize)>,
    cache_notes: BTreeMap<String, String>,
}

impl RunContext {
    fn write_csv(&mut self, name: &str, schema: &str, header: &str, rows: &[String]) -> Result<()> {
        let mut text = String::new();
        writeln!(text, "# schema={schema}").unwrap();
        writeln!(text, "{header}").unwrap();
        for r in rows {
            writeln!(text, "{r}").unwrap();
        }
        std::fs::write(self.out_dir.join(name), text)?;
        self.outputs
            .push((name.to_string(), schema.to_string(), rows.len()));
        Ok(())
    }
}

fn load_config(path: Option<&Path>) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    let Some(path) = path else { return Ok(map) };
    let text = std::fs::read_to_string(path)?;
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("{}:{}: expected key=value", path.display(), i + 1))
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Resolved surface parameters after merging flags, config and defaults.
struct Resolved {
    surface_path: PathBuf,
    spec: SurfaceSpec,
    params: MeshParams,
    modes: usize,
    kind: SpectrumKind,
    cone_dirichlet: bool,
}

fn resolve(opts: &SurfaceOpts, config: &BTreeMap<String, String>) -> Result<Resolved> {
    let getf = |key: &str| -> Option<f64> { config.get(key).and_then(|v| v.parse().ok()) };
    let surface_path = opts
        .surface
        .clone()
        .or_else(|| config.get("surface").map(PathBuf::from))
        .ok_or_else(|| Error::Config("no surface file given (--surface)".into()))?;
    let text = std::fs::read_to_string(&surface_path)?;
    let poly = PolygonSpec::parse(&text)?;
    let spec = double(poly);

    let h = opts.h.or_else(|| getf("h")).unwrap_or(0.1);
    let mut params = MeshParams::new(h).with_default_grading(&spec);
    if let Some(g) = opts.grade.or_else(|| getf("grade")) {
        params.grade = g;
    }
    if let Some(a) = opts.min_angle.or_else(|| getf("min_angle")) {
        params.min_angle = a;
    }
    params.validate()?;

    let modes = opts
        .modes
        .or_else(|| config.get("modes").and_then(|v| v.parse().ok()))
        .unwrap_or(50);
    let bc = opts
        .bc
        .clone()
        .or_else(|| config.get("bc").cloned())
        .unwrap_or_else(|| "both".to_string());
    let kind = match bc.as_str() {
        "both" => SpectrumKind::Closed,
        "dirichlet" => SpectrumKind::Dirichlet,
        "neumann" => SpectrumKind::Neumann,
        other => return Err(Error::Config(format!("unknown bc `{other}`"))),
    };
    let cone_dirichlet = opts.cone_dirichlet
        || config
            .get("cone_dirichlet")
            .map(|v| v == "true" || v == "1")
            .unwrap_or(false);
    Ok(Resolved {
        surface_path,
        spec,
        params,
        modes,
        kind,
        cone_dirichlet,
    })
}

fn format_f(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

/// Advisory cache lock: created with O_EXCL, removed on drop, broken when
/// older than two minutes.
struct CacheLock {
    path: PathBuf,
}

impl CacheLock {
    fn acquire(dir: &Path, key: &str) -> Result<CacheLock> {
        let path = dir.join(format!("{key}.lock"));
        for _ in 0..600 {
            match std::fs::OpenOptions::new()
                .write(true)
                .create_new(true)
                .open(&path)
            {
                Ok(_) => return Ok(CacheLock { path }),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    if let Ok(meta) = std::fs::metadata(&path) {
                        if let Ok(age) = meta.modified().map(|m| {
                            std::time::SystemTime::now()
                                .duration_since(m)
                                .unwrap_or_default()
                        }) {
                            if age.as_secs() > 120 {
                                let _ = std::fs::remove_file(&path);
                                continue;
                            }
                        }
                    }
                    std::thread::sleep(std::time::Duration::from_millis(100));
                }
                Err(e) => return Err(e.into()),
            }
        }
        Err(Error::Config(format!(
            "could not acquire cache lock {}",
            path.display()
        )))
    }
}

impl Drop for CacheLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex_of(&h.finalize())
}

fn hex_of(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Mesh cache keyed by polygon bytes and mesh parameters; returns the mesh
/// and the sha256 of the cache file (the provenance hash for bases).
fn cached_mesh(ctx: &mut RunContext, r: &Resolved) -> Result<(Arc<SurfaceMesh>, [u8; 32])> {
    let poly_bytes = std::fs::read(&r.surface_path)?;
    let key_src = format!(
        "{}:h={};grade={};min_angle={}",
        sha256_hex(&poly_bytes),
        r.params.h,
        r.params.grade,
        r.params.min_angle
    );
    let key = sha256_hex(key_src.as_bytes())[..24].to_string();
    let path = ctx.cache_dir.join(format!("{key}.mesh"));
    let _lock = CacheLock::acquire(&ctx.cache_dir, &key)?;
    let mesh = if path.exists() {
        ctx.cache_notes.insert("mesh".into(), "hit".into());
        SurfaceMesh::read_cache(&path)?
    } else {
        ctx.cache_notes.insert("mesh".into(), "miss".into());
        let mesh = triangulate(&r.spec, &r.params)?;
        mesh.write_cache(&path)?;
        mesh
    };
    let mut hash = [0u8; 32];
    let mut hasher = Sha256::new();
    hasher.update(std::fs::read(&path)?);
    hash.copy_from_slice(&hasher.finalize());
    Ok((Arc::new(mesh), hash))
}

/// Basis pair cache (fine and coarse files) on top of the mesh cache.
fn cached_pair(ctx: &mut RunContext, r: &Resolved) -> Result<BasisPair> {
    let (coarse_mesh, mesh_hash) = cached_mesh(ctx, r)?;
    let key_src = format!(
        "{}:{}:{}:{}",
        hex_of(&mesh_hash),
        r.kind.as_str(),
        r.cone_dirichlet,
        r.modes
    );
    let key = sha256_hex(key_src.as_bytes())[..24].to_string();
    let fine_path = ctx.cache_dir.join(format!("{key}.fine.basis"));
    let coarse_path = ctx.cache_dir.join(format!("{key}.coarse.basis"));
    let _lock = CacheLock::acquire(&ctx.cache_dir, &key)?;
    if fine_path.exists() && coarse_path.exists() {
        let fine_mesh = Arc::new(coarse_mesh.uniform_refine());
        let coarse = SpectralBasis::read_cache(&coarse_path, coarse_mesh, &mesh_hash)?;
        let fine = SpectralBasis::read_cache(&fine_path, fine_mesh, &mesh_hash)?;
        ctx.cache_notes.insert("basis".into(), "hit".into());
        return Ok(rebuild_pair(coarse, fine));
    }
    ctx.cache_notes.insert("basis".into(), "miss".into());
    let pair = BasisPair::build(
        coarse_mesh,
        r.kind,
        r.cone_dirichlet,
        r.modes,
        SolveStrategy::ParityMerge,
    )?;
    pair.coarse.write_cache(&coarse_path, &mesh_hash)?;
    pair.fine.write_cache(&fine_path, &mesh_hash)?;
    Ok(pair)
}

/// Recompute the per-parity index matching for a pair loaded from cache.
fn rebuild_pair(coarse: SpectralBasis, fine: SpectralBasis) -> BasisPair {
    let mut matched_coarse = vec![None; fine.count()];
    for class in [ModeParity::Even, ModeParity::Odd, ModeParity::Mixed] {
        let fi: Vec<usize> = (0..fine.count())
            .filter(|&j| fine.parity[j] == class)
            .collect();
        let ci: Vec<usize> = (0..coarse.count())
            .filter(|&j| coarse.parity[j] == class)
            .collect();
        for (slot, &j) in fi.iter().enumerate() {
            matched_coarse[j] = ci.get(slot).copied();
        }
    }
    BasisPair {
        coarse,
        fine,
        matched_coarse,
    }
}

fn surface_label(r: &Resolved) -> String {
    r.spec.base.name.clone()
}

fn dispatch(command: &Command, ctx: &mut RunContext) -> Result<()> {
    match command {
        Command::Double { surface } => {
            let r = resolve(surface, &ctx.config.clone())?;
            let mut rows = Vec::new();
            for (i, c) in r.spec.cone_points.iter().enumerate() {
                rows.push(format!(
                    "{},{},{},{},{}",
                    i,
                    format_f(c.location.x),
                    format_f(c.location.y),
                    format_f(c.alpha),
                    format_f(c.rho)
                ));
            }
            ctx.write_csv(
                "cones.csv",
                "polywave.double.v1",
                "cone_id,x,y,alpha,rho",
                &rows,
            )?;
            println!(
                "surface {}: area {} (doubled {}), chi = {}, gauss-bonnet defect {:.3e}",
                surface_label(&r),
                r.spec.total_area / 2.0,
                r.spec.total_area,
                r.spec.euler_characteristic(),
                r.spec.gauss_bonnet_defect()
            );
            Ok(())
        }
        Command::Mesh { surface } => {
            let r = resolve(surface, &ctx.config.clone())?;
            let (mesh, _) = cached_mesh(ctx, &r)?;
            let s = mesh.statistics();
            let rows = vec![format!(
                "{},{},{},{},{},{},{}",
                s.n_vertices,
                s.n_triangles,
                s.n_cone_vertices,
                format_f(s.total_area),
                format_f(s.min_angle_deg),
                format_f(s.min_edge),
                format_f(s.max_edge)
            )];
            ctx.write_csv(
                "mesh_stats.csv",
                "polywave.mesh.v1",
                "n_vertices,n_triangles,n_cone_vertices,total_area,min_angle_deg,min_edge,max_edge",
                &rows,
            )
        }
        Command::Eigs { surface } => {
            let r = resolve(surface, &ctx.config.clone())?;
            let pair = cached_pair(ctx, &r)?;
            let b = &pair.fine;
            let extrap = b.lambda_sq_extrapolated.clone().unwrap_or_default();
            let mut rows = Vec::new();
            for j in 0..b.count() {
                rows.push(format!(
                    "{},{},{},{},{},{}",
                    j,
                    format_f(b.lambda[j]),
                    format_f(b.lambda_sq[j]),
                    extrap.get(j).map(|&v| format_f(v)).unwrap_or_default(),
                    match b.parity[j] {
                        ModeParity::Even => "even",
                        ModeParity::Odd => "odd",
                        ModeParity::Mixed => "mixed",
                    },
                    b.trusted[j] as u8
                ));
            }
            ctx.write_csv(
                "eigs.csv",
                "polywave.eigs.v1",
                "j,lambda,lambda_sq,lambda_sq_extrapolated,parity,trusted",
                &rows,
            )
        }
        Command::Squarefn {
            surface,
            q,
            cutoff,
            samples,
            seed,
        } => {
            let config = ctx.config.clone();
            let r = resolve(surface, &config)?;
            let getf = |key: &str| -> Option<f64> { config.get(key).and_then(|v| v.parse().ok()) };
            let q = q.or_else(|| getf("q")).unwrap_or(4.0);
            let samples = samples
                .or_else(|| config.get("samples").and_then(|v| v.parse().ok()))
                .unwrap_or(64);
            let seed = seed
                .or_else(|| config.get("seed").and_then(|v| v.parse().ok()))
                .unwrap_or(1);
            let pair = cached_pair(ctx, &r)?;
            let basis = &pair.fine;
            let ceiling = basis.trusted_ceiling();
            let cutoff = match cutoff.or_else(|| getf("cutoff")) {
                Some(c) if c > 0.0 => c.min(ceiling),
                _ => ceiling,
            };
            let modes: Vec<usize> = (0..basis.count())
                .filter(|&j| basis.trusted[j] && basis.lambda[j] <= cutoff)
                .collect();
            if modes.is_empty() {
                return Err(Error::ZeroState);
            }
            let mut rng = rand::SeedableRng::seed_from_u64(seed);
            let mut rows = Vec::new();
            for s in 0..samples {
                let state = random_state_on(basis, &modes, &mut rng);
                let (_, ratio) = squarefunction(basis, &state, q)?;
                rows.push(format!(
                    "{},{},{},{},{}",
                    surface_label(&r),
                    format_f(q),
                    format_f(cutoff),
                    s,
                    format_f(ratio)
                ));
            }
            ctx.write_csv(
                "squarefn.csv",
                "polywave.squarefn.v1",
                "surface,q,cutoff,sample_id,ratio",
                &rows,
            )
        }
        Command::Evolve {
            surface,
            p,
            q,
            kmin,
            kmax,
            samples,
            seed,
        } => {
            let config = ctx.config.clone();
            let r = resolve(surface, &config)?;
            let (pair_pq, kmin, kmax, ens) =
                exponent_args(&config, *p, *q, *kmin, *kmax, *samples, *seed)?;
            let basis_pair = cached_pair(ctx, &r)?;
            let basis = &basis_pair.fine;
            let mut rows = Vec::new();
            for k in kmin..=kmax {
                let ratios = dyadic_experiment(basis, k, pair_pq, ens)?;
                let horizon = 2f64.powi(-(k as i32));
                for (s, ratio) in ratios.iter().enumerate() {
                    rows.push(format!(
                        "{},{},{},{},{},{},{},{},{},,",
                        surface_label(&r),
                        basis.kind.as_str(),
                        format_f(pair_pq.p),
                        format_f(pair_pq.q),
                        k,
                        format_f(horizon),
                        s,
                        ens.seed,
                        format_f(*ratio)
                    ));
                }
            }
            ctx.write_csv(
                "evolve.csv",
                "polywave.evolution.v1",
                "surface,bc,p,q,k,T,sample_id,seed,ratio,norm_lplq,norm_h_s",
                &rows,
            )
        }
        Command::Strichartz {
            surface,
            p,
            q,
            kmin,
            kmax,
            t_horizon,
            samples,
            seed,
        } => {
            let config = ctx.config.clone();
            let r = resolve(surface, &config)?;
            let (pair_pq, kmin, kmax, ens) =
                exponent_args(&config, *p, *q, *kmin, *kmax, *samples, *seed)?;
            let t_horizon = t_horizon
                .or_else(|| config.get("T").and_then(|v| v.parse().ok()))
                .unwrap_or(1.0);
            let basis_pair = cached_pair(ctx, &r)?;
            let basis = &basis_pair.fine;
            let mut rows = Vec::new();
            for k in kmin..=kmax {
                let ratios = dyadic_strichartz(basis, k, pair_pq, t_horizon, ens)?;
                for (s, ratio) in ratios.iter().enumerate() {
                    rows.push(format!(
                        "{},{},{},{},{},{},{},{},{},,",
                        surface_label(&r),
                        basis.kind.as_str(),
                        format_f(pair_pq.p),
                        format_f(pair_pq.q),
                        k,
                        format_f(t_horizon),
                        s,
                        ens.seed,
                        format_f(*ratio)
                    ));
                }
            }
            // Full-ratio rows over mixed-band data, tagged k = -1.
            let mut rng = rand::SeedableRng::seed_from_u64(ens.seed.wrapping_add(0x5742));
            let all: Vec<usize> = (0..basis.count()).filter(|&j| basis.trusted[j]).collect();
            for s in 0..ens.samples.min(16) {
                let f = random_state_on(basis, &all, &mut rng);
                let ratio = strichartz_ratio(basis, &f, pair_pq, t_horizon)?;
                let h_s = sobolev_norm(basis, &f, 1.0 / pair_pq.p)?;
                rows.push(format!(
                    "{},{},{},{},-1,{},{},{},{},{},{}",
                    surface_label(&r),
                    basis.kind.as_str(),
                    format_f(pair_pq.p),
                    format_f(pair_pq.q),
                    format_f(t_horizon),
                    s,
                    ens.seed,
                    format_f(ratio),
                    format_f(ratio * h_s),
                    format_f(h_s)
                ));
            }
            ctx.write_csv(
                "strichartz.csv",
                "polywave.evolution.v1",
                "surface,bc,p,q,k,T,sample_id,seed,ratio,norm_lplq,norm_h_s",
                &rows,
            )
        }
        Command::Heat {
            surface,
            rho,
            radii,
            times,
        } => {
            let config = ctx.config.clone();
            let radii = parse_list(radii.as_deref().or(config.get("radii").map(|s| s.as_str())))
                .unwrap_or_else(|| vec![0.1]);
            let times = parse_list(times.as_deref().or(config.get("times").map(|s| s.as_str())))
                .unwrap_or_else(|| vec![0.05, 0.02, 0.01]);
            let mut rows = Vec::new();
            if surface.surface.is_some() || config.contains_key("surface") {
                let r = resolve(surface, &config)?;
                let pair = cached_pair(ctx, &r)?;
                // compare at the first cone point of the surface
                let cone_vertex = pair.coarse.mesh.cone_vertex_ids[0] as usize;
                let rho = rho
                    .or_else(|| config.get("rho").and_then(|v| v.parse().ok()))
                    .unwrap_or_else(|| r.spec.cone_points[0].rho);
                let table = cheeger_compare(&pair, cone_vertex, rho, &radii, &times)?;
                for row in table {
                    rows.push(format!(
                        "{},{},{},{},{},{},{}",
                        format_f(row.rho),
                        format_f(row.r),
                        format_f(row.t),
                        format_f(row.cone_value),
                        format_f(row.spectral_value),
                        format_f(row.abs_dev),
                        format_f(row.rel_dev)
                    ));
                }
            } else {
                let rho = rho
                    .or_else(|| config.get("rho").and_then(|v| v.parse().ok()))
                    .unwrap_or(0.5);
                let cone = ConeParams::new(rho)?;
                for &radius in &radii {
                    for &t in &times {
                        let v = cone_diagonal_heat(cone, HeatQuery::new(radius, t)?)?;
                        rows.push(format!(
                            "{},{},{},{},,,",
                            format_f(rho),
                            format_f(radius),
                            format_f(t),
                            format_f(v)
                        ));
                    }
                }
            }
            ctx.write_csv(
                "heat.csv",
                "polywave.heat.v1",
                "rho,r,t,cone_value,spectral_value,abs_dev,rel_dev",
                &rows,
            )
        }
        Command::Report { dir } => {
            let dir = dir.clone().unwrap_or_else(|| ctx.out_dir.clone());
            let mut rows = Vec::new();
            let mut entries: Vec<PathBuf> = std::fs::read_dir(&dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().map(|e| e == "csv").unwrap_or(false))
                .collect();
            entries.sort();
            for path in entries {
                if path.file_name().map(|n| n == "report.csv").unwrap_or(false) {
                    continue;
                }
                let text = std::fs::read_to_string(&path)?;
                let summary = summarize_csv(&text);
                rows.push(format!(
                    "{},{},{},{},{}",
                    path.file_name().unwrap().to_string_lossy(),
                    summary.rows,
                    format_f(summary.ratio_min),
                    format_f(summary.ratio_max),
                    format_f(summary.slope)
                ));
            }
            ctx.write_csv(
                "report.csv",
                "polywave.report.v1",
                "file,rows,ratio_min,ratio_max,log_ratio_slope_vs_k",
                &rows,
            )
        }
    }
}

#[allow(clippy::type_complexity)]
fn exponent_args(
    config: &BTreeMap<String, String>,
    p: Option<f64>,
    q: Option<f64>,
    kmin: Option<u32>,
    kmax: Option<u32>,
    samples: Option<usize>,
    seed: Option<u64>,
) -> Result<(AdmissiblePair, u32, u32, Ensemble)> {
    let getf = |key: &str| -> Option<f64> { config.get(key).and_then(|v| v.parse().ok()) };
    let p = p.or_else(|| getf("p")).unwrap_or(4.0);
    let q = q.or_else(|| getf("q")).unwrap_or_else(|| 2.0 * p / (p - 2.0));
    let pair = AdmissiblePair::new(p, q)?;
    let kmin = kmin
        .or_else(|| config.get("kmin").and_then(|v| v.parse().ok()))
        .unwrap_or(2);
    let kmax = kmax
        .or_else(|| config.get("kmax").and_then(|v| v.parse().ok()))
        .unwrap_or(4);
    let samples = samples
        .or_else(|| config.get("samples").and_then(|v| v.parse().ok()))
        .unwrap_or(16);
    let seed = seed
        .or_else(|| config.get("seed").and_then(|v| v.parse().ok()))
        .unwrap_or(1);
    Ok((pair, kmin, kmax, Ensemble { samples, seed }))
}

fn parse_list(text: Option<&str>) -> Option<Vec<f64>> {
    text.map(|t| {
        t.split(',')
            .filter_map(|x| x.trim().parse::<f64>().ok())
            .collect()
    })
}

struct CsvSummary {
    rows: usize,
    ratio_min: f64,
    ratio_max: f64,
    slope: f64,
}

/// Aggregate a CSV: range of a `ratio` column and, when a `k` column exists,
/// the least-squares slope of log(max ratio per k) against k.
fn summarize_csv(text: &str) -> CsvSummary {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let ratio_col = header.iter().position(|&h| h == "ratio");
    let k_col = header.iter().position(|&h| h == "k");
    let mut rows = 0usize;
    let mut ratio_min = f64::INFINITY;
    let mut ratio_max = f64::NEG_INFINITY;
    let mut per_k: BTreeMap<i64, f64> = BTreeMap::new();
    for line in lines {
        rows += 1;
        let fields: Vec<&str> = line.split(',').collect();
        if let Some(rc) = ratio_col {
            if let Some(v) = fields.get(rc).and_then(|s| s.parse::<f64>().ok()) {
                ratio_min = ratio_min.min(v);
                ratio_max = ratio_max.max(v);
                if let Some(kc) = k_col {
                    if let Some(k) = fields.get(kc).and_then(|s| s.parse::<i64>().ok()) {
                        if k >= 0 {
                            let e = per_k.entry(k).or_insert(f64::NEG_INFINITY);
                            *e = e.max(v);
                        }
                    }
                }
            }
        }
    }
    let slope = slope_of_log_max(&per_k);
    CsvSummary {
        rows,
        ratio_min: if ratio_min.is_finite() { ratio_min } else { f64::NAN },
        ratio_max: if ratio_max.is_finite() { ratio_max } else { f64::NAN },
        slope,
    }
}

/// Least-squares slope of log(value) against k.
pub fn slope_of_log_max(per_k: &BTreeMap<i64, f64>) -> f64 {
    let pts: Vec<(f64, f64)> = per_k
        .iter()
        .filter(|(_, &v)| v > 0.0 && v.is_finite())
        .map(|(&k, &v)| (k as f64, v.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

fn write_manifest(
    ctx: &RunContext,
    command: &str,
    partial: bool,
    error: Option<String>,
) -> std::io::Result<()> {
    #[derive(serde::Serialize)]
    struct Output {
        path: String,
        schema: String,
        rows: usize,
    }
    #[derive(serde::Serialize)]
    struct Manifest<'a> {
        schema: &'static str,
        command: &'a str,
        partial: bool,
        #[serde(skip_serializing_if = "Option::is_none")]
        error: Option<String>,
        outputs: Vec<Output>,
        cache: &'a BTreeMap<String, String>,
        config: &'a BTreeMap<String, String>,
    }
    let manifest = Manifest {
        schema: "polywave.manifest.v1",
        command,
        partial,
        error,
        outputs: ctx
            .outputs
            .iter()
            .map(|(path, schema, rows)| Output {
                path: path.clone(),
                schema: schema.clone(),
                rows: *rows,
            })
            .collect(),
        cache: &ctx.cache_notes,
        config: &ctx.config,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialization");
    std::fs::write(ctx.out_dir.join("manifest.json"), text)
}
