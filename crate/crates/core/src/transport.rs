//! Forward model: transport of the 2x2 polarization system along rays.
//!
//! For a view `omega` and ray direction `theta` the amplitude matrix obeys
//! `d mu / ds = F(x + s theta) mu` with
//!
//! ```text
//! F = [ w f w    w f p ]
//!     [ p f w    p f p ]     w = omega, p = theta_perp
//! ```
//!
//! and `mu = Id` before the ray meets the support of `f`. The scattering
//! matrix `S` is the value of `mu` after the ray has left the support.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::field::{ScalarVolume, SymMat3, TensorField, TensorSampler};
use crate::geometry::{RayCoord, ViewFrame, ViewSet};
use crate::quadrature;
use crate::raymarch::{self, Cell, ChannelVolume};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Number of collocation nodes per piece in the Neumann solver.
const NEUMANN_NODES: usize = 7;

/// Complex 2x2 matrix (`mu`, `S`, `F`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2(pub [[Complex64; 2]; 2]);

impl Mat2 {
    pub const ZERO: Mat2 = Mat2([[ZERO; 2]; 2]);
    pub const IDENTITY: Mat2 = Mat2([[ONE, ZERO], [ZERO, ONE]]);

    pub fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Self {
        Mat2([[a, b], [c, d]])
    }

    fn symmetric(ch: [Complex64; 3]) -> Self {
        Mat2([[ch[0], ch[1]], [ch[1], ch[2]]])
    }

    pub fn transpose(&self) -> Mat2 {
        let m = &self.0;
        Mat2([[m[0][0], m[1][0]], [m[0][1], m[1][1]]])
    }

    pub fn adjoint(&self) -> Mat2 {
        let m = &self.0;
        Mat2([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    pub fn det(&self) -> Complex64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn inverse(&self) -> Option<Mat2> {
        let d = self.det();
        if d == ZERO {
            return None;
        }
        let m = &self.0;
        Some(Mat2([[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]]))
    }

    /// Entrywise max modulus.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        let (a, b) = (&self.0, &o.0);
        Mat2([
            [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
            [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
        ])
    }
}

impl Mul<f64> for Mat2 {
    type Output = Mat2;
    fn mul(self, s: f64) -> Mat2 {
        Mat2(self.0.map(|r| r.map(|z| z * s)))
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        Mat2(std::array::from_fn(|i| std::array::from_fn(|j| self.0[i][j] + o.0[i][j])))
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        Mat2(std::array::from_fn(|i| std::array::from_fn(|j| self.0[i][j] - o.0[i][j])))
    }
}

/// The generator `F(x, theta, omega)` for a tensor value `f` at one point.
pub fn local_generator(f: &SymMat3, frame: &ViewFrame) -> Mat2 {
    let w = frame.omega.vec();
    let p = frame.theta_perp.vec();
    Mat2::new(f.bilinear(w, w), f.bilinear(w, p), f.bilinear(p, w), f.bilinear(p, p))
}

/// Substep rule inside each kink-free piece of a ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Stepping {
    /// Substeps no longer than the given length.
    MaxStep(f64),
    /// A fixed number of equal substeps per piece.
    PerPiece(usize),
}

impl Stepping {
    fn validate(self) -> Result<Self> {
        match self {
            Stepping::MaxStep(h) if !(h > 0.0 && h.is_finite()) => {
                Err(invalid(format!("step must be positive, got {h}")))
            }
            Stepping::PerPiece(0) => Err(invalid("substep count must be positive")),
            s => Ok(s),
        }
    }

    fn count(self, len: f64) -> usize {
        match self {
            Stepping::MaxStep(h) => ((len / h).ceil() as usize).max(1),
            Stepping::PerPiece(n) => n,
        }
    }
}

#[inline]
fn rk4_step(mu: Mat2, f0: Mat2, fm: Mat2, f1: Mat2, h: f64) -> Mat2 {
    let k1 = f0 * mu;
    let k2 = fm * (mu + k1 * (0.5 * h));
    let k3 = fm * (mu + k2 * (0.5 * h));
    let k4 = f1 * (mu + k3 * h);
    mu + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0)
}

fn rk4_piece(mu: Mat2, sa: f64, sb: f64, n: usize, gen: impl Fn(f64) -> Mat2) -> Mat2 {
    let h = (sb - sa) / n as f64;
    let mut mu = mu;
    let mut f0 = gen(sa);
    for i in 0..n {
        let s = sa + i as f64 * h;
        let s1 = if i + 1 == n { sb } else { s + h };
        let fm = gen(s + 0.5 * h);
        let f1 = gen(s1);
        mu = rk4_step(mu, f0, fm, f1, h);
        f0 = f1;
    }
    mu
}

/// Propagator over `[s0, s1]` through a precontracted generator volume.
fn march_rk4(
    vol: &ChannelVolume<3>,
    ray: &RayCoord,
    s0: f64,
    s1: f64,
    stepping: Stepping,
    scratch: &mut Vec<f64>,
) -> Mat2 {
    let base = ray.base_point();
    let dir = ray.frame.theta.vec();
    let mut mu = Mat2::IDENTITY;
    raymarch::for_each_segment(vol, base, dir, s0, s1, scratch, |sa, sb, cell: Option<&Cell<3>>| {
        if let Some(cell) = cell {
            let gen = |s: f64| Mat2::symmetric(cell.eval(base + dir * s));
            mu = rk4_piece(mu, sa, sb, stepping.count(sb - sa), gen);
        }
    });
    mu
}

fn ray_interval(field: &TensorField, ray: &RayCoord) -> Option<(f64, f64)> {
    let r = field.support_radius + field.grid().diagonal();
    if ray.impact() >= r {
        return None;
    }
    raymarch::clip(&field.grid(), ray.base_point(), ray.frame.theta.vec(), r)
}

/// Scattering matrix of one ray through the trilinear interpolant of `field`.
///
/// Rays missing the support return the identity without integration.
pub fn solve_ray(field: &TensorField, ray: &RayCoord, step: f64) -> Result<Mat2> {
    solve_ray_stepping(field, ray, Stepping::MaxStep(step))
}

pub fn solve_ray_stepping(field: &TensorField, ray: &RayCoord, stepping: Stepping) -> Result<Mat2> {
    propagate(field, ray, f64::NEG_INFINITY, f64::INFINITY, stepping)
}

/// Propagator from arc parameter `s_from` to `s_to` along the ray
/// (`mu(s_from) = Id`), restricted to the part of the ray where `f` lives.
pub fn propagate(field: &TensorField, ray: &RayCoord, s_from: f64, s_to: f64, stepping: Stepping) -> Result<Mat2> {
    let stepping = stepping.validate()?;
    let Some((s0, s1)) = ray_interval(field, ray) else {
        return Ok(Mat2::IDENTITY);
    };
    let (a, b) = (s0.max(s_from), s1.min(s_to));
    if b <= a {
        return Ok(Mat2::IDENTITY);
    }
    let vol = raymarch::generator_channels(field, &ray.frame);
    Ok(march_rk4(&vol, ray, a, b, stepping, &mut Vec::new()))
}

/// RK4 with uniform steps over the chord of the sampler's support ball,
/// evaluating the sampler directly (no grid).
pub fn solve_ray_direct(sampler: &dyn TensorSampler, ray: &RayCoord, steps: usize) -> Result<Mat2> {
    if steps == 0 {
        return Err(invalid("step count must be positive"));
    }
    let r = sampler.support_radius();
    let rho = ray.impact();
    if rho >= r {
        return Ok(Mat2::IDENTITY);
    }
    let half = (r * r - rho * rho).sqrt();
    let base = ray.base_point();
    let dir = ray.frame.theta.vec();
    let gen = |s: f64| local_generator(&sampler.sample(base + dir * s), &ray.frame);
    Ok(rk4_piece(Mat2::IDENTITY, -half, half, steps, gen))
}

/// What a sinogram holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SinogramKind {
    /// Measured `S11`.
    S11,
    /// Data residuals, treated as scalar line-integral data.
    Residual,
    /// Line integrals of a scalar volume.
    Classical,
}

impl SinogramKind {
    pub fn name(self) -> &'static str {
        match self {
            SinogramKind::S11 => "S11",
            SinogramKind::Residual => "residual",
            SinogramKind::Classical => "classical",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "S11" => Some(SinogramKind::S11),
            "residual" => Some(SinogramKind::Residual),
            "classical" => Some(SinogramKind::Classical),
            _ => None,
        }
    }
}

impl std::fmt::Display for SinogramKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Complex samples on the data manifold, view-major then angle, slice, detector.
#[derive(Clone, Debug, PartialEq)]
pub struct Sinogram {
    pub views: ViewSet,
    pub kind: SinogramKind,
    pub data: Vec<Complex64>,
}

impl Sinogram {
    pub fn zeros(views: ViewSet, kind: SinogramKind) -> Self {
        let len = views.len();
        Sinogram { views, kind, data: vec![ZERO; len] }
    }

    pub fn filled(views: ViewSet, kind: SinogramKind, value: Complex64) -> Self {
        let len = views.len();
        Sinogram { views, kind, data: vec![value; len] }
    }

    pub fn from_data(views: ViewSet, kind: SinogramKind, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != views.len() {
            return Err(Error::ShapeMismatch(format!("sinogram needs {} samples, got {}", views.len(), data.len())));
        }
        Ok(Sinogram { views, kind, data })
    }

    pub fn get(&self, view: usize, k: usize, slice: usize, det: usize) -> Complex64 {
        self.data[self.views.index(view, k, slice, det)]
    }

    pub fn block(&self, view: usize) -> &[Complex64] {
        let n = self.views.block_len();
        &self.data[view * n..(view + 1) * n]
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest `|value - c|`.
    pub fn sup_distance_to(&self, c: Complex64) -> f64 {
        self.data.iter().map(|z| (z - c).norm()).fold(0.0, f64::max)
    }

    pub fn sup_distance(&self, other: &Sinogram) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Elementwise `self - other`, tagged as residual data.
    pub fn residual(&self, other: &Sinogram) -> Result<Sinogram> {
        if self.views != other.views {
            return Err(Error::ShapeMismatch("sinograms on different view sets".into()));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Sinogram { views: self.views.clone(), kind: SinogramKind::Residual, data })
    }
}

fn check_compatible(field_half_width: f64, views: &ViewSet) -> Result<()> {
    if (field_half_width - views.half_width).abs() > 1e-12 * views.half_width {
        return Err(Error::ShapeMismatch(format!(
            "field half width {field_half_width} differs from view half width {}",
            views.half_width
        )));
    }
    Ok(())
}

/// Applies `per_ray` to the RK4 scattering matrix of every sampled ray.
///
/// Work is split by `(view, angle)`; results come back in sinogram order.
pub fn forward_map<T, F>(field: &TensorField, views: &ViewSet, step: f64, per_ray: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&RayCoord, Mat2) -> T + Sync,
{
    let stepping = Stepping::MaxStep(step).validate()?;
    check_compatible(field.grid().half_width, views)?;
    let blocks: Vec<Vec<T>> = (0..views.view_count() * views.angles_per_view)
        .into_par_iter()
        .map(|vk| {
            let (view, k) = (vk / views.angles_per_view, vk % views.angles_per_view);
            let frame = views.frame(view, k);
            let vol = raymarch::generator_channels(field, &frame);
            let mut scratch = Vec::new();
            let mut out = Vec::with_capacity(views.slice_count * views.detector_count);
            for j2 in 0..views.slice_count {
                for j1 in 0..views.detector_count {
                    let ray = views.ray(view, k, j2, j1);
                    let s = match ray_interval(field, &ray) {
                        Some((s0, s1)) => march_rk4(&vol, &ray, s0, s1, stepping, &mut scratch),
                        None => Mat2::IDENTITY,
                    };
                    out.push(per_ray(&ray, s));
                }
            }
            out
        })
        .collect();
    Ok(blocks.into_iter().flatten().collect())
}

/// `S11` on every sampled ray.
pub fn forward_s11(field: &TensorField, views: &ViewSet, step: f64) -> Result<Sinogram> {
    let data = forward_map(field, views, step, |_, s| s.0[0][0])?;
    Sinogram::from_data(views.clone(), SinogramKind::S11, data)
}

struct NeumannRule {
    nodes: Vec<f64>,
    cumulative: Vec<Vec<f64>>,
}

impl NeumannRule {
    fn new() -> Self {
        let nodes = quadrature::chebyshev_lobatto(NEUMANN_NODES);
        let cumulative = quadrature::cumulative_matrix(&nodes);
        NeumannRule { nodes, cumulative }
    }
}

/// Truncated Neumann series `Id + sum_j v_j` with `w_1 = F`,
/// `v_j(s) = int_{-inf}^s w_j`, `w_{j+1} = F v_j`.
///
/// The running integrals are done by spectral collocation on each kink-free
/// piece of the ray.
#[allow(clippy::too_many_arguments)]
fn neumann_ray(
    vol: &ChannelVolume<3>,
    ray: &RayCoord,
    s0: f64,
    s1: f64,
    terms: usize,
    step: f64,
    rule: &NeumannRule,
    scratch: &mut Vec<f64>,
) -> Mat2 {
    let base = ray.base_point();
    let dir = ray.frame.theta.vec();
    let p = rule.nodes.len();
    let mut offsets = vec![Mat2::ZERO; terms];
    let mut gens = vec![Mat2::ZERO; p];
    let mut w = vec![Mat2::ZERO; p];
    let mut v = vec![Mat2::ZERO; p];
    raymarch::for_each_segment(vol, base, dir, s0, s1, scratch, |sa, sb, cell: Option<&Cell<3>>| {
        let Some(cell) = cell else { return };
        let pieces = ((sb - sa) / step).ceil().max(1.0) as usize;
        let len = (sb - sa) / pieces as f64;
        for piece in 0..pieces {
            let a = sa + piece as f64 * len;
            let half = 0.5 * len;
            for (g, y) in gens.iter_mut().zip(&rule.nodes) {
                *g = Mat2::symmetric(cell.eval(base + dir * (a + half * (y + 1.0))));
            }
            w.copy_from_slice(&gens);
            for (j, off) in offsets.iter_mut().enumerate() {
                if j > 0 {
                    for i in 0..p {
                        w[i] = gens[i] * v[i];
                    }
                }
                for i in 0..p {
                    let mut acc = *off;
                    for (q, wk) in rule.cumulative[i].iter().zip(&w) {
                        acc = acc + *wk * (q * half);
                    }
                    v[i] = acc;
                }
                *off = v[p - 1];
            }
        }
    });
    offsets.into_iter().fold(Mat2::IDENTITY, |acc, m| acc + m)
}

/// `S11` from the truncated Neumann series with `terms` terms.
pub fn forward_s11_neumann(field: &TensorField, views: &ViewSet, terms: usize, step: f64) -> Result<Sinogram> {
    if terms < 1 {
        return Err(invalid("Neumann series needs at least one term"));
    }
    Stepping::MaxStep(step).validate()?;
    check_compatible(field.grid().half_width, views)?;
    let rule = NeumannRule::new();
    let blocks: Vec<Vec<Complex64>> = (0..views.view_count() * views.angles_per_view)
        .into_par_iter()
        .map(|vk| {
            let (view, k) = (vk / views.angles_per_view, vk % views.angles_per_view);
            let frame = views.frame(view, k);
            let vol = raymarch::generator_channels(field, &frame);
            let mut scratch = Vec::new();
            let mut out = Vec::with_capacity(views.slice_count * views.detector_count);
            for j2 in 0..views.slice_count {
                for j1 in 0..views.detector_count {
                    let ray = views.ray(view, k, j2, j1);
                    let s = match ray_interval(field, &ray) {
                        Some((s0, s1)) => neumann_ray(&vol, &ray, s0, s1, terms, step, &rule, &mut scratch),
                        None => Mat2::IDENTITY,
                    };
                    out.push(s.0[0][0]);
                }
            }
            out
        })
        .collect();
    Sinogram::from_data(views.clone(), SinogramKind::S11, blocks.into_iter().flatten().collect())
}

/// Exact line integral of the trilinear interpolant (Simpson per cubic piece).
fn line_integral(vol: &ChannelVolume<1>, ray: &RayCoord, r: f64, scratch: &mut Vec<f64>) -> Complex64 {
    let base = ray.base_point();
    let dir = ray.frame.theta.vec();
    if ray.impact() >= r {
        return ZERO;
    }
    let Some((s0, s1)) = raymarch::clip(&vol.grid, base, dir, r) else {
        return ZERO;
    };
    let mut acc = ZERO;
    raymarch::for_each_segment(vol, base, dir, s0, s1, scratch, |sa, sb, cell: Option<&Cell<1>>| {
        if let Some(cell) = cell {
            let fa = cell.eval(base + dir * sa)[0];
            let fm = cell.eval(base + dir * (0.5 * (sa + sb)))[0];
            let fb = cell.eval(base + dir * sb)[0];
            acc += (fa + fm * 4.0 + fb) * ((sb - sa) / 6.0);
        }
    });
    acc
}

/// Line integrals of `volume` over the rays of one view.
pub fn line_integrals_view(volume: &ScalarVolume, views: &ViewSet, view: usize) -> Result<Vec<Complex64>> {
    check_compatible(volume.grid.half_width, views)?;
    if view >= views.view_count() {
        return Err(Error::IndexOutOfRange { index: view, len: views.view_count() });
    }
    let vol = raymarch::scalar_channels(volume);
    let r = volume_support_radius(volume);
    let blocks: Vec<Vec<Complex64>> = (0..views.angles_per_view)
        .into_par_iter()
        .map(|k| {
            let mut scratch = Vec::new();
            let mut out = Vec::with_capacity(views.slice_count * views.detector_count);
            for j2 in 0..views.slice_count {
                for j1 in 0..views.detector_count {
                    let ray = views.ray(view, k, j2, j1);
                    out.push(line_integral(&vol, &ray, r, &mut scratch));
                }
            }
            out
        })
        .collect();
    Ok(blocks.into_iter().flatten().collect())
}

/// Radius beyond which the interpolant of `volume` vanishes.
fn volume_support_radius(volume: &ScalarVolume) -> f64 {
    let g = volume.grid;
    let r = g.points().filter(|(i, _)| volume.data[*i] != ZERO).map(|(_, x)| x.norm()).fold(0.0, f64::max);
    r + g.diagonal() + 1e-12
}

/// Classical ray transform of a scalar volume on every view.
pub fn classical_ray_transform(volume: &ScalarVolume, views: &ViewSet) -> Result<Sinogram> {
    let mut data = Vec::with_capacity(views.len());
    for view in 0..views.view_count() {
        data.extend(line_integrals_view(volume, views, view)?);
    }
    Sinogram::from_data(views.clone(), SinogramKind::Classical, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{standard_phantom, Bump, BumpPhantom, Grid, PhantomKind};
    use crate::geometry::{standard_views, Direction, Vec3};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn generator_examples() {
        let views = standard_views(8, 8, 1.0).unwrap();
        let frame = views.frame(3, 1);
        assert_eq!(local_generator(&SymMat3::ZERO, &frame), Mat2::ZERO);
        let cc = c(0.3, -1.2);
        let g = local_generator(&(SymMat3::identity() * cc), &frame);
        assert!((g.0[0][0] - cc).norm() < 1e-15 && (g.0[1][1] - cc).norm() < 1e-15);
        assert!(g.0[0][1].norm() < 1e-15 && g.0[1][0].norm() < 1e-15);
        let f = SymMat3([c(1.0, 0.2), c(-0.5, 0.0), c(0.1, 0.3), c(0.7, 0.0), c(0.0, -0.4), c(0.2, 0.2)]);
        let g = local_generator(&f, &frame);
        assert!((g.0[0][1] - g.0[1][0]).norm() < 1e-15);
    }

    #[test]
    fn zero_field_gives_identity() {
        let grid = Grid::new(12, 1.0).unwrap();
        let f = TensorField::zeros(grid);
        let views = standard_views(8, 12, 1.0).unwrap();
        let ray = views.ray(4, 3, 5, 6);
        assert_eq!(solve_ray(&f, &ray, 0.05).unwrap(), Mat2::IDENTITY);
        assert!(solve_ray(&f, &ray, 0.0).is_err());
        assert!(solve_ray(&f, &ray, -1.0).is_err());
        let s = forward_s11(&f, &views, 0.1).unwrap();
        assert!(s.data.iter().all(|z| *z == ONE));
    }

    #[test]
    fn missing_ray_is_exact_identity() {
        let grid = Grid::new(16, 1.0).unwrap();
        let f = standard_phantom(0.5, PhantomKind::Real).rasterize(grid);
        let views = standard_views(8, 16, 1.0).unwrap();
        let ray = views.ray(0, 0, 0, 0); // corner of the detector, far outside the ball
        assert_eq!(solve_ray(&f, &ray, 0.05).unwrap(), Mat2::IDENTITY);
    }

    #[test]
    fn multiplicativity() {
        let grid = Grid::new(16, 1.0).unwrap();
        let f = standard_phantom(0.3, PhantomKind::Real).rasterize(grid);
        let views = standard_views(8, 16, 1.0).unwrap();
        for &(v, k, j2, j1, split) in &[(0, 1, 8, 7, 0.1), (3, 5, 6, 9, -0.2), (5, 2, 9, 8, 0.33)] {
            let ray = views.ray(v, k, j2, j1);
            let st = Stepping::MaxStep(grid.spacing() / 2.0);
            let s = propagate(&f, &ray, f64::NEG_INFINITY, f64::INFINITY, st).unwrap();
            let m1 = propagate(&f, &ray, f64::NEG_INFINITY, split, st).unwrap();
            let m2 = propagate(&f, &ray, split, f64::INFINITY, st).unwrap();
            assert!((m2 * m1 - s).max_abs() < 1e-9, "{}", (m2 * m1 - s).max_abs());
        }
    }

    #[test]
    fn reversal_relation() {
        // S(x, -theta) = D S(x, theta)^T D with D = diag(1, -1)
        let grid = Grid::new(16, 1.0).unwrap();
        let f = standard_phantom(0.4, PhantomKind::Real).rasterize(grid);
        let views = standard_views(8, 16, 1.0).unwrap();
        let d = Mat2::new(ONE, ZERO, ZERO, -ONE);
        for &(v, k, j2, j1) in &[(0, 1, 8, 7), (4, 2, 6, 9), (5, 7, 9, 5)] {
            let ray = views.ray(v, k, j2, j1);
            let rev = RayCoord::through(ray.frame.reversed(), ray.base_point());
            let s = solve_ray(&f, &ray, grid.spacing() / 2.0).unwrap();
            let sr = solve_ray(&f, &rev, grid.spacing() / 2.0).unwrap();
            assert!((sr - d * s.transpose() * d).max_abs() < 1e-7);
        }
    }

    #[test]
    fn isotropic_field_is_scalar_exponential() {
        let b = Bump { center: Vec3::new(0.1, 0.0, -0.1), radius: 0.5, amplitude: SymMat3::identity() * c(0.2, 0.1) };
        let phantom = BumpPhantom::new(vec![b], 0.8).unwrap();
        let grid = Grid::new(24, 1.0).unwrap();
        let f = phantom.rasterize(grid);
        let views = standard_views(8, 24, 1.0).unwrap();
        let phi = f.components[0].clone();
        let integrals = line_integrals_view(&phi, &views, 4).unwrap();
        for k in 0..8 {
            for &(j2, j1) in &[(12, 11), (10, 14), (13, 12)] {
                let ray = views.ray(4, k, j2, j1);
                let s = solve_ray(&f, &ray, grid.spacing() / 2.0).unwrap();
                let want = integrals[(k * 24 + j2) * 24 + j1].exp();
                assert!((s.0[0][0] - want).norm() < 1e-9 * want.norm());
                assert!((s.0[1][1] - want).norm() < 1e-9 * want.norm());
                assert!(s.0[0][1].norm() < 1e-12);
            }
        }
    }

    #[test]
    fn classical_transform_of_zero_and_isotropy() {
        let grid = Grid::new(16, 1.0).unwrap();
        let views = standard_views(8, 16, 1.0).unwrap();
        let z = classical_ray_transform(&ScalarVolume::zeros(grid), &views).unwrap();
        assert_eq!(z.sup_norm(), 0.0);

        let b = Bump { center: Vec3::ZERO, radius: 0.6, amplitude: SymMat3::identity() * c(0.0, 0.7) };
        let f = BumpPhantom::new(vec![b], 0.8).unwrap().rasterize(grid);
        let scalar = f.components[0].clone();
        let base = classical_ray_transform(&scalar, &views).unwrap();
        for (i, w) in views.omegas.iter().enumerate() {
            let contracted = f.contract(w.vec(), w.vec());
            let block = line_integrals_view(&contracted, &views, i).unwrap();
            for (a, b) in block.iter().zip(base.block(i)) {
                assert!((a - b).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn direct_solver_handles_constant_generator() {
        struct Ball(SymMat3);
        impl TensorSampler for Ball {
            fn sample(&self, x: Vec3) -> SymMat3 {
                if x.norm() < 0.5 {
                    self.0
                } else {
                    SymMat3::ZERO
                }
            }
            fn support_radius(&self) -> f64 {
                0.5
            }
        }
        let frame = ViewFrame::new(Direction::e3(), Direction::e1()).unwrap();
        let ray = RayCoord { frame, xi1: 0.0, xi2: 0.0 };
        let s = solve_ray_direct(&Ball(SymMat3::ZERO), &ray, 10).unwrap();
        assert_eq!(s, Mat2::IDENTITY);
        assert!(solve_ray_direct(&Ball(SymMat3::ZERO), &ray, 0).is_err());
    }

    #[test]
    fn neumann_first_term_is_line_integral() {
        let grid = Grid::new(16, 1.0).unwrap();
        let f = standard_phantom(0.05, PhantomKind::Real).rasterize(grid);
        let views = standard_views(8, 16, 1.0).unwrap();
        let s = forward_s11_neumann(&f, &views, 1, grid.spacing() / 2.0).unwrap();
        for (i, w) in views.omegas.iter().enumerate() {
            let j = line_integrals_view(&f.contract(w.vec(), w.vec()), &views, i).unwrap();
            for (a, b) in s.block(i).iter().zip(&j) {
                assert!((a - ONE - b).norm() < 1e-12);
            }
        }
        assert!(forward_s11_neumann(&f, &views, 0, 0.1).is_err());
    }

    #[test]
    fn neumann_zero_field() {
        let grid = Grid::new(12, 1.0).unwrap();
        let views = standard_views(8, 12, 1.0).unwrap();
        let s = forward_s11_neumann(&TensorField::zeros(grid), &views, 5, 0.1).unwrap();
        assert!(s.data.iter().all(|z| *z == ONE));
    }

    #[test]
    fn mismatched_half_width_rejected() {
        let grid = Grid::new(12, 1.0).unwrap();
        let views = standard_views(8, 12, 2.0).unwrap();
        assert!(forward_s11(&TensorField::zeros(grid), &views, 0.1).is_err());
    }
}
