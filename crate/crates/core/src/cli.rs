//! Command-line driver: configuration, subcommands and file wiring.
//!
//! Configuration is a flat `key = value` file (`#` starts a comment, `bump`
//! may repeat); flags given on the command line override the file.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::field::{
    make_cutoff, sample_tensor, standard_phantom, Bump, BumpPhantom, Grid, PhantomKind, ScalarVolume, SymMat3,
    TensorField, COMPONENT_NAMES,
};
use crate::geometry::{project_transverse, standard_views, Direction, RayCoord, Vec3, ViewSet};
use crate::io;
use crate::norms::{hat_c_sigma, hat_c_sigma_tensor, hat_linf_sigma, lambda_norm};
use crate::radon::{invert_slice, radial_bump_image, radial_bump_sinogram, FilterOptions, RadialBump};
use crate::reconstruct::{run, ForwardSolver, ReconConfig};
use crate::tensor_inversion::{assemble, invert_lambda_with, invert_views, transverse_transform, InversionOptions};
use crate::transport::{forward_map, propagate, solve_ray_stepping, Mat2, Stepping};

/// Environment variable overriding the worker count.
pub const THREADS_ENV: &str = "PTOMO_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhantomPreset {
    Standard,
    Zero,
}

/// Every knob of every subcommand, with defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub n: usize,
    pub half_width: f64,
    pub r0: f64,
    pub r1: f64,
    /// Angles per view, `K`. Detector and slice counts follow the grid size.
    pub angles: usize,
    pub step: f64,
    pub forward: ForwardSolver,
    pub max_iters: usize,
    pub stop_tol: f64,
    pub sigma: f64,
    pub order: u8,
    pub apodize: bool,
    pub phantom: PhantomPreset,
    pub kind: PhantomKind,
    pub scale: f64,
    /// Custom bumps; when present they replace the preset.
    pub bumps: Vec<Bump>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub history: Option<PathBuf>,
    pub heatmaps: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: u64,
    pub quick: bool,
    pub inject_fault: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n: 64,
            half_width: 1.0,
            r0: 0.8,
            r1: 0.95,
            angles: 180,
            step: 1.0 / 64.0,
            forward: ForwardSolver::Rk4,
            max_iters: 10,
            stop_tol: 1e-4,
            sigma: 4.0,
            order: 0,
            apodize: false,
            phantom: PhantomPreset::Standard,
            kind: PhantomKind::Real,
            scale: 0.05,
            bumps: Vec::new(),
            input: None,
            output: None,
            truth: None,
            history: None,
            heatmaps: None,
            threads: None,
            seed: 1,
            quick: false,
            inject_fault: false,
        }
    }
}

fn parse_num<T: std::str::FromStr>(value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("cannot parse '{value}' as a number"))
}

fn parse_bool(value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(format!("expected true or false, got '{value}'")),
    }
}

/// `cx cy cz radius a11 a22 a33 a12 a13 a23`
fn parse_bump(value: &str) -> std::result::Result<Bump, String> {
    let nums: Vec<f64> = value.split_whitespace().map(parse_num).collect::<std::result::Result<_, _>>()?;
    if nums.len() != 10 {
        return Err(format!("bump needs 10 numbers (centre, radius, 6 amplitudes), got {}", nums.len()));
    }
    Ok(Bump {
        center: Vec3::new(nums[0], nums[1], nums[2]),
        radius: nums[3],
        amplitude: SymMat3::from_real(nums[4..10].try_into().expect("six amplitudes")),
    })
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let path = || Some(PathBuf::from(value));
        match key {
            "n" => self.n = parse_num(value)?,
            "half_width" => self.half_width = parse_num(value)?,
            "r0" => self.r0 = parse_num(value)?,
            "r1" => self.r1 = parse_num(value)?,
            "angles" => self.angles = parse_num(value)?,
            "step" => self.step = parse_num(value)?,
            "forward" => {
                let terms = match self.forward {
                    ForwardSolver::Neumann { terms } => terms,
                    ForwardSolver::Rk4 => 12,
                };
                self.forward = match value {
                    "rk4" => ForwardSolver::Rk4,
                    "neumann" => ForwardSolver::Neumann { terms },
                    _ => return Err(format!("forward must be rk4 or neumann, got '{value}'")),
                }
            }
            "terms" => {
                let terms = parse_num(value)?;
                if let ForwardSolver::Neumann { terms: t } = &mut self.forward {
                    *t = terms;
                } else {
                    self.forward = ForwardSolver::Neumann { terms };
                }
            }
            "max_iters" => self.max_iters = parse_num(value)?,
            "stop_tol" => self.stop_tol = parse_num(value)?,
            "sigma" => self.sigma = parse_num(value)?,
            "order" => self.order = parse_num(value)?,
            "apodize" => self.apodize = parse_bool(value)?,
            "phantom" => {
                self.phantom = match value {
                    "standard" => PhantomPreset::Standard,
                    "zero" => PhantomPreset::Zero,
                    _ => return Err(format!("phantom must be standard or zero, got '{value}'")),
                }
            }
            "kind" => {
                self.kind = match value {
                    "real" => PhantomKind::Real,
                    "imaginary" => PhantomKind::Imaginary,
                    _ => return Err(format!("kind must be real or imaginary, got '{value}'")),
                }
            }
            "scale" => self.scale = parse_num(value)?,
            "bump" => self.bumps.push(parse_bump(value)?),
            "input" => self.input = path(),
            "output" => self.output = path(),
            "truth" => self.truth = path(),
            "history" => self.history = path(),
            "heatmaps" => self.heatmaps = path(),
            "threads" => self.threads = Some(parse_num(value)?),
            "seed" => self.seed = parse_num(value)?,
            "quick" => self.quick = parse_bool(value)?,
            "inject_fault" => self.inject_fault = parse_bool(value)?,
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// Parses configuration text on top of the defaults.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.merge_str(text)?;
        Ok(cfg)
    }

    pub fn merge_str(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config { line: i + 1, message: format!("expected 'key = value', got '{line}'") });
            };
            self.set(key.trim(), value.trim()).map_err(|message| Error::Config { line: i + 1, message })?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        RunConfig::parse_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 8 {
            return Err(invalid(format!("n must be at least 8, got {}", self.n)));
        }
        if !(self.half_width > 0.0) {
            return Err(invalid("half_width must be positive"));
        }
        if !(self.r0 > 0.0 && self.r0 < self.r1 && self.r1 <= self.half_width) {
            return Err(invalid(format!(
                "need 0 < r0 < r1 <= half_width, got r0 = {}, r1 = {}, half_width = {}",
                self.r0, self.r1, self.half_width
            )));
        }
        if self.angles < 8 || self.angles % 2 != 0 {
            return Err(invalid(format!("angles must be even and at least 8, got {}", self.angles)));
        }
        if self.threads == Some(0) {
            return Err(invalid("threads must be positive"));
        }
        if self.order > 1 {
            return Err(invalid("order must be 0 or 1"));
        }
        if !self.scale.is_finite() {
            return Err(invalid("scale must be finite"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.n, self.half_width)
    }

    pub fn views(&self) -> Result<ViewSet> {
        standard_views(self.angles, self.n, self.half_width)
    }

    pub fn phantom(&self) -> Result<BumpPhantom> {
        let bumps = if !self.bumps.is_empty() {
            self.bumps.clone()
        } else {
            match self.phantom {
                PhantomPreset::Standard => standard_phantom(1.0, PhantomKind::Real).bumps,
                PhantomPreset::Zero => Vec::new(),
            }
        };
        let s = match self.kind {
            PhantomKind::Real => Complex64::new(self.scale, 0.0),
            PhantomKind::Imaginary => Complex64::new(0.0, self.scale),
        };
        Ok(BumpPhantom::new(bumps, self.r0)?.scaled(s))
    }

    pub fn inversion(&self) -> InversionOptions {
        InversionOptions {
            filter: FilterOptions { apodize: self.apodize },
            gain: if self.inject_fault { 1.01 } else { 1.0 },
        }
    }

    pub fn recon(&self) -> ReconConfig {
        ReconConfig {
            max_iters: self.max_iters,
            stop_tol: self.stop_tol,
            step: self.step,
            sigma: self.sigma,
            forward: self.forward,
            inversion: self.inversion(),
        }
    }

    /// `PTOMO_THREADS` wins over the configured value.
    pub fn worker_count(&self) -> Result<Option<usize>> {
        match std::env::var(THREADS_ENV) {
            Ok(v) if !v.trim().is_empty() => match v.trim().parse::<usize>() {
                Ok(n) if n > 0 => Ok(Some(n)),
                _ => Err(invalid(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
            },
            _ => Ok(self.threads),
        }
    }

    fn input(&self) -> Result<&Path> {
        self.input.as_deref().ok_or_else(|| invalid("missing input path"))
    }

    fn output(&self) -> Result<&Path> {
        self.output.as_deref().ok_or_else(|| invalid("missing output path"))
    }
}

pub fn cmd_phantom(cfg: &RunConfig, out: &mut dyn Write) -> Result<TensorField> {
    let phantom = cfg.phantom()?;
    let field = phantom.rasterize(cfg.grid()?);
    io::write_tensor(cfg.output()?, &field)?;
    for (name, peak) in COMPONENT_NAMES.iter().zip(field.peak_magnitudes()) {
        writeln!(out, "peak {name} = {peak:e}")?;
    }
    // nothing may be seen by the interpolant beyond r0 plus one voxel diagonal
    let reach = cfg.r0 + field.grid().diagonal();
    let leak = field
        .grid()
        .points()
        .filter(|(_, x)| x.norm() >= reach)
        .map(|(_, x)| sample_tensor(&field, x).max_abs())
        .fold(0.0, f64::max);
    writeln!(out, "support check (|x| >= {reach:.4}): {}", if leak == 0.0 { "ok" } else { "FAILED" })?;
    if leak != 0.0 {
        return Err(invalid("phantom leaks outside its support"));
    }
    Ok(field)
}

pub fn cmd_forward(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let field = io::read_tensor(cfg.input()?)?;
    let views = standard_views(cfg.angles, field.grid().n, field.grid().half_width)?;
    let s11 = cfg.forward.run(&field, &views, cfg.step)?;
    io::write_sinogram(cfg.output()?, &s11)?;
    writeln!(out, "sup |S11 - 1| = {:e}", s11.sup_distance_to(Complex64::new(1.0, 0.0)))?;
    Ok(())
}

pub fn cmd_transverse(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let field = io::read_tensor(cfg.input()?)?;
    let views = standard_views(cfg.angles, field.grid().n, field.grid().half_width)?;
    let data = transverse_transform(&field, &views)?;
    io::write_lambda(cfg.output()?, &data)?;
    writeln!(out, "sup |Jf| = {:e}", data.sup_norm())?;
    Ok(())
}

pub fn cmd_invert_j(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let data = io::read_lambda(cfg.input()?)?;
    let field = invert_lambda_with(&data, cfg.inversion())?;
    io::write_tensor(cfg.output()?, &field)?;
    for (name, peak) in COMPONENT_NAMES.iter().zip(field.peak_magnitudes()) {
        writeln!(out, "peak {name} = {peak:e}")?;
    }
    Ok(())
}

fn write_heatmaps(dir: &Path, recon: &TensorField, truth: Option<&TensorField>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let n = recon.grid().n;
    for (k, name) in COMPONENT_NAMES.iter().enumerate() {
        let r = &recon.components[k];
        io::write_heatmap(&dir.join(format!("recon_{name}.ppm")), n, n, &io::mid_plane(r))?;
        if let Some(t) = truth {
            let t = &t.components[k];
            io::write_heatmap(&dir.join(format!("truth_{name}.ppm")), n, n, &io::mid_plane(t))?;
            let diff = t.zip_with(r, |a, b| a - b);
            io::write_heatmap(&dir.join(format!("diff_{name}.ppm")), n, n, &io::mid_plane(&diff))?;
        }
    }
    Ok(())
}

pub fn cmd_reconstruct(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let s11 = io::read_sinogram(cfg.input()?)?;
    let truth = cfg.truth.as_deref().map(io::read_tensor).transpose()?;
    let chi = make_cutoff(cfg.r0, cfg.r1)?;
    let result = run(&s11, &chi, &cfg.recon(), truth.as_ref());
    let state = match &result {
        Ok(state) => state,
        Err(Error::Diverged { state }) => state,
        Err(_) => return result.map(|_| ()),
    };
    for r in &state.history {
        write!(out, "n = {}  residual = {:.4e}  update = {:.4e}", r.n, r.residual_sup, r.update_sup)?;
        if let (Some(e), Some(ef)) = (r.err_sup, r.err_fourier) {
            write!(out, "  err_sup = {e:.4e}  err_fourier = {ef:.4e}")?;
        }
        writeln!(out)?;
    }
    if let Some(h) = &cfg.history {
        io::write_history(h, &state.history)?;
    }
    if result.is_err() {
        writeln!(out, "diverged after {} iterates", state.history.len())?;
        return result.map(|_| ());
    }
    io::write_tensor(cfg.output()?, &state.iterate)?;
    if let Some(dir) = &cfg.heatmaps {
        write_heatmaps(dir, &state.iterate, truth.as_ref())?;
    }
    Ok(())
}

pub fn cmd_norms(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let path = cfg.input()?;
    let (sigma, order) = (cfg.sigma, cfg.order);
    if sigma < 0.0 {
        return Err(invalid("sigma must be non-negative"));
    }
    match io::sniff(path)?.as_str() {
        io::LAMBDA_MAGIC => {
            let data = io::read_lambda(path)?;
            writeln!(out, "sup = {:e}", data.sup_norm())?;
            writeln!(out, "lambda sigma={sigma} = {:e}", lambda_norm(&data, sigma))?;
        }
        io::VOLUME_MAGIC => match io::read_volume(path)? {
            io::VolumeFile::Tensor(f) => {
                writeln!(out, "sup = {:e}", f.sup_norm())?;
                writeln!(out, "hat sigma={sigma} order={order} = {:e}", hat_c_sigma_tensor(&f, sigma, order))?;
            }
            io::VolumeFile::Scalar(v) => {
                writeln!(out, "sup = {:e}", v.sup_norm())?;
                writeln!(out, "hat sigma={sigma} order={order} = {:e}", hat_c_sigma(&v, sigma, order))?;
            }
        },
        m => return Err(Error::Format { path: path.to_path_buf(), message: format!("no norm for file type '{m}'") }),
    }
    Ok(())
}

/// One selftest check.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub measured: f64,
    pub threshold: f64,
    pub passed: bool,
}

fn suite(name: &'static str, measured: f64, threshold: f64) -> SuiteResult {
    SuiteResult { name, measured, threshold, passed: measured <= threshold }
}

fn random_direction(rng: &mut ChaCha8Rng) -> Direction {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if v.norm() > 0.1 && v.norm() < 1.0 {
            return Direction::new(v).expect("nonzero");
        }
    }
}

fn check_projector(rng: &mut ChaCha8Rng) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let t = random_direction(rng);
        let z: [Complex64; 3] =
            std::array::from_fn(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let p = project_transverse(t, z);
        let pp = project_transverse(t, p);
        let tv = t.vec().0;
        let dot = p[0] * tv[0] + p[1] * tv[1] + p[2] * tv[2];
        worst = worst.max(dot.norm());
        for i in 0..3 {
            worst = worst.max((pp[i] - p[i]).norm());
        }
    }
    worst
}

fn check_unitarity(views: &ViewSet, grid: Grid, step: f64) -> Result<f64> {
    let f = standard_phantom(0.05, PhantomKind::Imaginary).rasterize(grid);
    let dev = forward_map(&f, views, step, |_, s| (s * s.adjoint() - Mat2::IDENTITY).max_abs())?;
    Ok(dev.into_iter().fold(0.0, f64::max))
}

fn check_multiplicativity(views: &ViewSet, grid: Grid, rng: &mut ChaCha8Rng) -> Result<f64> {
    let f = standard_phantom(0.5, PhantomKind::Real).rasterize(grid);
    let stepping = Stepping::PerPiece(4);
    let mut worst: f64 = 0.0;
    for _ in 0..8 {
        let view = rng.gen_range(0..views.view_count());
        let frame = views.frame(view, rng.gen_range(0..views.angles_per_view));
        let ray = RayCoord { frame, xi1: rng.gen_range(-0.5..0.5), xi2: rng.gen_range(-0.5..0.5) };
        let cut = rng.gen_range(-0.4..0.4);
        let full = solve_ray_stepping(&f, &ray, stepping)?;
        let first = propagate(&f, &ray, f64::NEG_INFINITY, cut, stepping)?;
        let second = propagate(&f, &ray, cut, f64::INFINITY, stepping)?;
        worst = worst.max((second * first - full).max_abs());
    }
    Ok(worst)
}

/// Round-trip error and assembly consistency of the six-view inversion.
fn check_j_roundtrip(views: &ViewSet, grid: Grid, opts: InversionOptions) -> Result<(f64, f64)> {
    let f = standard_phantom(1.0, PhantomKind::Real).rasterize(grid);
    let data = transverse_transform(&f, views)?;
    let rec = invert_lambda_with(&data, opts)?;
    let err = rec.relative_l2_per_component(&f).into_iter().fold(0.0, f64::max);
    let u = invert_views(&data, opts.filter)?;
    let reference = assemble(u.clone(), 1.0)?;
    let scale = u.iter().map(ScalarVolume::sup_norm).fold(0.0, f64::max);
    Ok((err, rec.sup_distance(&reference) / scale))
}

fn check_fbp(angles: usize, m: usize) -> Result<f64> {
    let bump = RadialBump { centre: (0.1, -0.05), radius: 0.6, amplitude: Complex64::new(1.0, 0.0) };
    let tau = 2.0 / m as f64;
    let img = invert_slice(&radial_bump_sinogram(&[bump], angles, m, tau)?)?;
    let truth = radial_bump_image(&[bump], m, tau);
    let num: f64 = img.data.iter().zip(&truth.data).map(|(a, b)| (a - b).norm_sqr()).sum();
    let den: f64 = truth.data.iter().map(|b| b.norm_sqr()).sum();
    Ok((num / den).sqrt())
}

fn check_norms(grid: Grid, rng: &mut ChaCha8Rng) -> f64 {
    let random_volume = |rng: &mut ChaCha8Rng| {
        let c = Vec3::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2));
        let a = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        ScalarVolume::from_fn(grid, move |x| a * crate::field::bump_profile((x - c).norm() / 0.5))
    };
    let mut worst: f64 = 0.0;
    for _ in 0..4 {
        let (u, v) = (random_volume(rng), random_volume(rng));
        let nu = hat_linf_sigma(&u, 4.0);
        let n2 = hat_linf_sigma(&u.scaled(Complex64::new(-2.5, 0.0)), 4.0);
        worst = worst.max((n2 - 2.5 * nu).abs() / nu);
        let sum = u.zip_with(&v, |a, b| a + b);
        let excess = hat_linf_sigma(&sum, 4.0) - nu - hat_linf_sigma(&v, 4.0);
        worst = worst.max(excess / nu);
    }
    worst
}

/// Runs the invariant suites; `quick` keeps only the cheap ones at small size.
pub fn selftest(cfg: &RunConfig) -> Result<Vec<SuiteResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (n, angles) = if cfg.quick { (16, 32) } else { (32, 90) };
    let grid = Grid::new(n, 1.0)?;
    let views = standard_views(angles, n, 1.0)?;
    let mut out = vec![
        suite("projector idempotence", check_projector(&mut rng), 1e-12),
        suite("unitarity", check_unitarity(&views, grid, cfg.step)?, 1e-7),
        suite("multiplicativity", check_multiplicativity(&views, grid, &mut rng)?, 1e-9),
    ];
    let (err, consistency) = check_j_roundtrip(&views, grid, cfg.inversion())?;
    out.push(suite("J round-trip consistency", consistency, 1e-10));
    if !cfg.quick {
        out.push(suite("J round-trip L2 error", err, 0.08));
        out.push(suite("FBP round-trip L2 error", check_fbp(180, 64)?, 0.02));
    }
    out.push(suite("norm homogeneity/triangle", check_norms(Grid::new(16, 1.0)?, &mut rng), 1e-9));
    Ok(out)
}

pub fn cmd_selftest(cfg: &RunConfig, out: &mut dyn Write) -> Result<bool> {
    let start = Instant::now();
    let results = selftest(cfg)?;
    for r in &results {
        writeln!(
            out,
            "{} {:<28} measured {:.3e} (limit {:.1e})",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.measured,
            r.threshold
        )?;
    }
    let ok = results.iter().all(|r| r.passed);
    writeln!(
        out,
        "{} in {:.1} s",
        if ok { "all suites passed" } else { "selftest FAILED" },
        start.elapsed().as_secs_f64()
    )?;
    Ok(ok)
}

#[derive(Parser, Debug)]
#[command(name = "ptomo", version, about = "Polarization tomography of tensor fields from S11 data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Rasterize a bump phantom to a volume file.
    Phantom(Flags),
    /// S11 data of a tensor volume on the six standard views.
    Forward(Flags),
    /// Transverse ray transform of a tensor volume.
    Transverse(Flags),
    /// Closed-form inversion of six-view line-integral data.
    InvertJ(Flags),
    /// Iterative reconstruction from S11 data.
    Reconstruct(Flags),
    /// Weighted Fourier norms of a volume or six-view data file.
    Norms(Flags),
    /// Invariant suites at reduced resolution.
    Selftest(Flags),
}

#[derive(Args, Debug, Default)]
pub struct Flags {
    /// Key-value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Extra `key=value` settings, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long)]
    pub heatmaps: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub angles: Option<usize>,
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long)]
    pub phantom: Option<String>,
    #[arg(long)]
    pub kind: Option<String>,
    /// rk4 or neumann.
    #[arg(long)]
    pub forward: Option<String>,
    #[arg(long)]
    pub terms: Option<usize>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub stop_tol: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub order: Option<u8>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub quick: bool,
    /// Perturb the inversion by 1% to check that the suites notice.
    #[arg(long)]
    pub inject_fault: bool,
    #[arg(long)]
    pub apodize: bool,
}

impl Flags {
    fn overrides(&self) -> Vec<(String, String)> {
        let mut kv: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                kv.push((k.to_owned(), v));
            }
        };
        let p = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        put("input", p(&self.input));
        put("output", p(&self.output));
        put("truth", p(&self.truth));
        put("history", p(&self.history));
        put("heatmaps", p(&self.heatmaps));
        put("n", self.n.map(|v| v.to_string()));
        put("angles", self.angles.map(|v| v.to_string()));
        put("scale", self.scale.map(|v| v.to_string()));
        put("phantom", self.phantom.clone());
        put("kind", self.kind.clone());
        put("forward", self.forward.clone());
        put("terms", self.terms.map(|v| v.to_string()));
        put("step", self.step.map(|v| v.to_string()));
        put("max_iters", self.max_iters.map(|v| v.to_string()));
        put("stop_tol", self.stop_tol.map(|v| v.to_string()));
        put("sigma", self.sigma.map(|v| v.to_string()));
        put("order", self.order.map(|v| v.to_string()));
        put("threads", self.threads.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("quick", self.quick.then(|| "true".into()));
        put("inject_fault", self.inject_fault.then(|| "true".into()));
        put("apodize", self.apodize.then(|| "true".into()));
        kv
    }

    /// File settings first, then `--set`, then the dedicated flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::Config { line: 0, message: format!("--set expects key=value, got '{s}'") })?;
            cfg.set(k.trim(), v.trim()).map_err(|message| Error::Config { line: 0, message })?;
        }
        for (k, v) in self.overrides() {
            cfg.set(&k, &v).map_err(|message| Error::Config { line: 0, message })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn dispatch(cmd: &Command, cfg: &RunConfig, out: &mut dyn Write) -> Result<bool> {
    match cmd {
        Command::Phantom(_) => cmd_phantom(cfg, out).map(|_| true),
        Command::Forward(_) => cmd_forward(cfg, out).map(|_| true),
        Command::Transverse(_) => cmd_transverse(cfg, out).map(|_| true),
        Command::InvertJ(_) => cmd_invert_j(cfg, out).map(|_| true),
        Command::Reconstruct(_) => cmd_reconstruct(cfg, out).map(|_| true),
        Command::Norms(_) => cmd_norms(cfg, out).map(|_| true),
        Command::Selftest(_) => cmd_selftest(cfg, out),
    }
}

/// Runs one invocation and returns the process exit code:
/// 0 on success, 1 on errors or failed suites, 2 on divergence, 64 on usage errors.
pub fn main_with_args<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { 64 } else { 0 };
        }
    };
    let flags = match &cli.command {
        Command::Phantom(f)
        | Command::Forward(f)
        | Command::Transverse(f)
        | Command::InvertJ(f)
        | Command::Reconstruct(f)
        | Command::Norms(f)
        | Command::Selftest(f) => f,
    };
    let result = flags.resolve().and_then(|cfg| {
        let threads = cfg.worker_count()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.unwrap_or(0))
            .build()
            .map_err(|e| invalid(format!("cannot start worker pool: {e}")))?;
        pool.install(|| dispatch(&cli.command, &cfg, &mut *out))
    });
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e @ Error::Diverged { .. }) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing_reports_lines() {
        let cfg = RunConfig::parse_str(
            "# comment\nn = 32\n\nforward = neumann\nterms = 3 # trailing\nbump = 0 0 0 0.5 1 1 1 0 0 0\n",
        )
        .unwrap();
        assert_eq!(cfg.n, 32);
        assert_eq!(cfg.forward, ForwardSolver::Neumann { terms: 3 });
        assert_eq!(cfg.bumps.len(), 1);
        match RunConfig::parse_str("n = 32\nbogus = 1\n") {
            Err(Error::Config { line: 2, message }) => assert!(message.contains("bogus")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(RunConfig::parse_str("n 32"), Err(Error::Config { line: 1, .. })));
        assert!(matches!(RunConfig::parse_str("\n\nscale = abc"), Err(Error::Config { line: 3, .. })));
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.cfg");
        std::fs::write(&p, "n = 24\nangles = 16\nscale = 0.1\n").unwrap();
        let flags = Flags { config: Some(p), n: Some(16), set: vec!["sigma=5".into()], ..Default::default() };
        let cfg = flags.resolve().unwrap();
        assert_eq!((cfg.n, cfg.angles, cfg.scale, cfg.sigma), (16, 16, 0.1, 5.0));
    }

    #[test]
    fn validation_rejects_bad_radii() {
        let mut cfg = RunConfig::default();
        cfg.r1 = 1.5;
        assert!(cfg.validate().is_err());
        cfg.r1 = 0.7;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn outside_bump_rejected() {
        let cfg = RunConfig::parse_str("bump = 0.5 0 0 0.5 1 0 0 0 0 0").unwrap();
        assert!(cfg.phantom().is_err());
    }

    #[test]
    fn quick_selftest_passes_and_fault_is_caught() {
        let cfg = RunConfig { quick: true, ..Default::default() };
        let res = selftest(&cfg).unwrap();
        assert!(res.iter().all(|r| r.passed), "{res:?}");
        let bad = selftest(&RunConfig { inject_fault: true, ..cfg }).unwrap();
        let j = bad.iter().find(|r| r.name == "J round-trip consistency").unwrap();
        assert!(!j.passed);
    }
}
