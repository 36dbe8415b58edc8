//! Inversion of the classical ray transform: filtered backprojection on
//! planar slices, the slice-by-slice volume assembly, and a direct Fourier
//! (projection-slice) reconstruction used as a cross-check.
//!
//! Slice coordinates: `(u, v)` along the chart `(a, b)` of the view. The ray
//! at angle `phi` runs along `theta = (cos phi, sin phi)` and its detector
//! coordinate is `s = x . theta_perp` with `theta_perp = (-sin phi, cos phi)`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Error, Result};
use crate::field::{Grid, ScalarVolume};
use crate::geometry::{frame_basis, Vec3, ViewSet};
use crate::transport::{Sinogram, SinogramKind};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Detector padding factor applied before ramp filtering.
pub const PAD_FACTOR: usize = 4;

/// Data of one planar slice, `K` angles by `M` detectors, angle-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceSinogram {
    /// Angles in radians; must be `2 pi k / K`.
    pub angles: Vec<f64>,
    pub detectors: usize,
    pub spacing: f64,
    pub data: Vec<Complex64>,
}

impl SliceSinogram {
    /// Uniform full-circle angles and centred detectors.
    pub fn uniform(angles: usize, detectors: usize, spacing: f64, data: Vec<Complex64>) -> Result<Self> {
        let list = (0..angles).map(|k| 2.0 * PI * k as f64 / angles as f64).collect();
        let g = SliceSinogram { angles: list, detectors, spacing, data };
        g.validate()?;
        Ok(g)
    }

    pub fn from_fn(angles: usize, detectors: usize, spacing: f64, f: impl Fn(f64, f64) -> Complex64) -> Result<Self> {
        let mut data = Vec::with_capacity(angles * detectors);
        for k in 0..angles {
            let phi = 2.0 * PI * k as f64 / angles as f64;
            for j in 0..detectors {
                data.push(f(phi, detector_position(j, detectors, spacing)));
            }
        }
        SliceSinogram::uniform(angles, detectors, spacing, data)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.angles.len();
        if k < 8 || k % 2 != 0 {
            return Err(invalid(format!("slice needs an even angle count >= 8, got {k}")));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(invalid(format!("detector spacing must be positive, got {}", self.spacing)));
        }
        if self.detectors < 2 {
            return Err(invalid("slice needs at least two detectors"));
        }
        for (i, a) in self.angles.iter().enumerate() {
            let want = 2.0 * PI * i as f64 / k as f64;
            if (a - want).abs() > 1e-9 {
                return Err(invalid(format!("angle grid is not uniform on the circle at index {i}")));
            }
        }
        if self.data.len() != k * self.detectors {
            return Err(Error::ShapeMismatch(format!(
                "slice data has {} values, expected {}",
                self.data.len(),
                k * self.detectors
            )));
        }
        Ok(())
    }

    fn row(&self, k: usize) -> &[Complex64] {
        &self.data[k * self.detectors..(k + 1) * self.detectors]
    }

    /// Average of each ray with its reversed copy: angle `k + K/2`, mirrored detectors.
    pub fn symmetrized(&self) -> SliceSinogram {
        let (k_count, m) = (self.angles.len(), self.detectors);
        let mut data = vec![ZERO; self.data.len()];
        for k in 0..k_count {
            let opp = self.row((k + k_count / 2) % k_count);
            for (j, out) in data[k * m..(k + 1) * m].iter_mut().enumerate() {
                *out = (self.data[k * m + j] + opp[m - 1 - j]) * 0.5;
            }
        }
        SliceSinogram { data, ..self.clone() }
    }
}

fn detector_position(j: usize, m: usize, spacing: f64) -> f64 {
    (j as f64 - 0.5 * (m as f64 - 1.0)) * spacing
}

/// Square image with pixel centres at the detector positions; `u` fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceImage {
    pub size: usize,
    pub spacing: f64,
    pub data: Vec<Complex64>,
}

impl SliceImage {
    pub fn position(&self, i: usize) -> f64 {
        detector_position(i, self.size, self.spacing)
    }

    pub fn get(&self, p: usize, q: usize) -> Complex64 {
        self.data[q * self.size + p]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FilterOptions {
    /// Raised-cosine roll-off over the top 20% of the band.
    pub apodize: bool,
}

/// Frequency response of the band-limited ramp filter on the padded grid,
/// including the detector spacing quadrature weight.
fn ramp_response(len: usize, spacing: f64, fft: &Arc<dyn Fft<f64>>, opts: FilterOptions) -> Vec<Complex64> {
    // h(n tau) = 2 pi * (1/(4 tau^2), 0 for even n, -1/(pi^2 n^2 tau^2) for odd n)
    let mut kernel = vec![ZERO; len];
    for (i, h) in kernel.iter_mut().enumerate() {
        let n = if i <= len / 2 { i as i64 } else { i as i64 - len as i64 };
        let v = if n == 0 {
            PI / (2.0 * spacing * spacing)
        } else if n % 2 != 0 {
            -2.0 / (PI * (n * n) as f64 * spacing * spacing)
        } else {
            0.0
        };
        *h = Complex64::new(v * spacing, 0.0);
    }
    fft.process(&mut kernel);
    if opts.apodize {
        for (i, h) in kernel.iter_mut().enumerate() {
            let m = if i <= len / 2 { i } else { len - i };
            let nu = m as f64 / (len as f64 / 2.0);
            if nu > 0.8 {
                *h *= 0.5 * (1.0 + (PI * (nu - 0.8) / 0.2).cos());
            }
        }
    }
    kernel
}

struct RampFilter {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    response: Vec<Complex64>,
}

/// Filtered projections are resampled band-limited onto a grid this much
/// finer than the detectors before linear interpolation in backprojection.
pub const UPSAMPLE: usize = 4;

impl RampFilter {
    fn new(detectors: usize, spacing: f64, opts: FilterOptions) -> Self {
        let len = PAD_FACTOR * detectors;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len * UPSAMPLE);
        let response = ramp_response(len, spacing, &forward, opts);
        RampFilter { len, forward, inverse, response }
    }

    /// Filtered projection on the padded, upsampled (circular) grid;
    /// index `UPSAMPLE * j` is detector `j`.
    fn apply(&self, row: &[Complex64]) -> Vec<Complex64> {
        let mut buf = vec![ZERO; self.len];
        buf[..row.len()].copy_from_slice(row);
        self.forward.process(&mut buf);
        let fine = self.len * UPSAMPLE;
        let scale = 1.0 / self.len as f64;
        let mut out = vec![ZERO; fine];
        let half = self.len / 2;
        for (i, (b, h)) in buf.iter().zip(&self.response).enumerate() {
            let v = b * h * scale;
            if i < half {
                out[i] = v;
            } else if i > half {
                out[fine - (self.len - i)] = v;
            } else {
                // split the Nyquist bin so real rows stay real
                out[i] = v * 0.5;
                out[fine - half] = v * 0.5;
            }
        }
        self.inverse.process(&mut out);
        out
    }
}

/// Filtered backprojection of one slice.
pub fn invert_slice(g: &SliceSinogram) -> Result<SliceImage> {
    invert_slice_with(g, FilterOptions::default())
}

pub fn invert_slice_with(g: &SliceSinogram, opts: FilterOptions) -> Result<SliceImage> {
    g.validate()?;
    let filter = RampFilter::new(g.detectors, g.spacing, opts);
    Ok(backproject(&g.symmetrized(), &filter))
}

fn backproject(sym: &SliceSinogram, filter: &RampFilter) -> SliceImage {
    let m = sym.detectors;
    let k_count = sym.angles.len();
    let tau = sym.spacing;
    let len = (filter.len * UPSAMPLE) as isize;
    let up = UPSAMPLE as f64;
    let mut image = vec![ZERO; m * m];
    let centre = 0.5 * (m as f64 - 1.0);
    // the symmetrized data makes angle k and k + K/2 contribute equally
    for k in 0..k_count / 2 {
        let q = filter.apply(sym.row(k));
        let (sin, cos) = sym.angles[k].sin_cos();
        for iv in 0..m {
            let v = detector_position(iv, m, tau);
            let t0 = ((-detector_position(0, m, tau) * sin + v * cos) / tau + centre) * up;
            let dt = -sin * up;
            let row = &mut image[iv * m..(iv + 1) * m];
            for (iu, px) in row.iter_mut().enumerate() {
                let t = t0 + dt * iu as f64;
                let i0 = t.floor();
                let w = t - i0;
                let i0 = i0 as isize;
                let a = q[i0.rem_euclid(len) as usize];
                let b = q[(i0 + 1).rem_euclid(len) as usize];
                *px += a * (1.0 - w) + b * w;
            }
        }
    }
    // quadrature weight (2 pi / K) / (4 pi), doubled for the folded half circle
    let w = 1.0 / k_count as f64;
    for px in &mut image {
        *px *= w;
    }
    SliceImage { size: m, spacing: tau, data: image }
}

/// `int g(s) e^{-i rho s} ds` on the padded frequency grid `rho_m = 2 pi m / (L tau)`,
/// `m = 0..L`, for detectors centred on the origin.
pub fn projection_spectrum(row: &[Complex64], spacing: f64, fft: &Arc<dyn Fft<f64>>) -> Vec<Complex64> {
    let len = fft.len();
    let mut buf = vec![ZERO; len];
    buf[..row.len()].copy_from_slice(row);
    fft.process(&mut buf);
    let s0 = detector_position(0, row.len(), spacing);
    for (m, b) in buf.iter_mut().enumerate() {
        let rho = 2.0 * PI * m as f64 / (len as f64 * spacing);
        *b *= Complex64::from_polar(spacing, -rho * s0);
    }
    buf
}

/// Direct Fourier reconstruction: polar spectrum from the projections,
/// nearest-angle and linear-radius gridding, inverse 2D transform.
pub fn invert_slice_fourier(g: &SliceSinogram) -> Result<SliceImage> {
    g.validate()?;
    let sym = g.symmetrized();
    let (m, k_count, tau) = (g.detectors, g.angles.len(), g.spacing);
    let len = PAD_FACTOR * m;
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(len);
    let spectra: Vec<Vec<Complex64>> = (0..k_count).map(|k| projection_spectrum(sym.row(k), tau, &fwd)).collect();
    let drho = 2.0 * PI / (len as f64 * tau);
    let nyquist = PI / tau;

    let p = 2 * m;
    let dk = 2.0 * PI / (p as f64 * tau);
    let x0 = detector_position(0, m, tau);
    let signed = |i: usize| if i < p / 2 { i as f64 } else { i as f64 - p as f64 };
    let mut grid = vec![ZERO; p * p];
    for iy in 0..p {
        let ky = signed(iy) * dk;
        for ix in 0..p {
            let kx = signed(ix) * dk;
            let rho = kx.hypot(ky);
            if rho > nyquist {
                continue;
            }
            // theta_perp = (-sin phi, cos phi) points along k  =>  phi = atan2(ky, kx) - pi/2
            let phi = (ky.atan2(kx) - 0.5 * PI).rem_euclid(2.0 * PI);
            let k = (phi / (2.0 * PI / k_count as f64)).round() as usize % k_count;
            let t = rho / drho;
            let i0 = t.floor() as usize;
            let w = t - i0 as f64;
            let fourier = &spectra[k];
            let val = fourier[i0] * (1.0 - w) + fourier[(i0 + 1).min(len / 2)] * w;
            let phase = Complex64::from_polar(1.0, kx * x0 + ky * x0);
            grid[iy * p + ix] = val * phase;
        }
    }
    let inv = planner.plan_fft_inverse(p);
    for row in grid.chunks_mut(p) {
        inv.process(row);
    }
    let mut col = vec![ZERO; p];
    for ix in 0..p {
        for iy in 0..p {
            col[iy] = grid[iy * p + ix];
        }
        inv.process(&mut col);
        for iy in 0..p {
            grid[iy * p + ix] = col[iy];
        }
    }
    let scale = dk * dk / (4.0 * PI * PI);
    let mut data = Vec::with_capacity(m * m);
    for iy in 0..m {
        for ix in 0..m {
            data.push(grid[iy * p + ix] * scale);
        }
    }
    Ok(SliceImage { size: m, spacing: tau, data })
}

/// Slice-by-slice inversion of one view of a scalar sinogram onto the canonical grid.
pub fn invert_volume(sino: &Sinogram, view: usize) -> Result<ScalarVolume> {
    invert_volume_with(sino, view, FilterOptions::default())
}

pub fn invert_volume_with(sino: &Sinogram, view: usize, opts: FilterOptions) -> Result<ScalarVolume> {
    if sino.kind == SinogramKind::S11 {
        return Err(Error::WrongKind { expected: "classical or residual".into(), found: sino.kind.to_string() });
    }
    let views = &sino.views;
    if view >= views.view_count() {
        return Err(Error::IndexOutOfRange { index: view, len: views.view_count() });
    }
    if views.slice_count != views.detector_count {
        return Err(invalid("slice and detector counts must agree for volume inversion"));
    }
    let m = views.detector_count;
    let (k_count, tau) = (views.angles_per_view, views.spacing());
    let filter = RampFilter::new(m, tau, opts);
    let block = sino.block(view);
    let grid = Grid::new(m, views.half_width)?;
    let omega = views.omegas[view];
    let (a, b) = frame_basis(omega);
    let Some(perm) = axis_permutation([a.vec(), b.vec(), omega.vec()]) else {
        return Ok(backproject_volume(block, views, view, grid, &filter));
    };
    let slabs: Vec<SliceImage> = (0..views.slice_count)
        .into_par_iter()
        .map(|j2| {
            let mut data = Vec::with_capacity(k_count * m);
            for k in 0..k_count {
                let start = (k * views.slice_count + j2) * m;
                data.extend_from_slice(&block[start..start + m]);
            }
            let g = SliceSinogram::uniform(k_count, m, tau, data).expect("view set sampling is valid");
            backproject(&g.symmetrized(), &filter)
        })
        .collect();
    Ok(permute_slabs(&slabs, grid, perm))
}

/// For a chart made of signed coordinate axes, the axis index and sign of each.
fn axis_permutation(axes: [Vec3; 3]) -> Option<[(usize, bool); 3]> {
    let mut out = [(0, false); 3];
    for (o, ax) in out.iter_mut().zip(&axes) {
        let hits: Vec<usize> = (0..3).filter(|&i| ax.0[i] != 0.0).collect();
        if hits.len() != 1 || ax.0[hits[0]].abs() != 1.0 {
            return None;
        }
        *o = (hits[0], ax.0[hits[0]] < 0.0);
    }
    Some(out)
}

/// Maps the slab stack (`u`, `v` along the chart, slices along `omega`) onto
/// the canonical grid when the chart is axis-aligned: a pure index permutation.
fn permute_slabs(slabs: &[SliceImage], grid: Grid, perm: [(usize, bool); 3]) -> ScalarVolume {
    let n = grid.n;
    let mut data = vec![ZERO; grid.len()];
    for iz in 0..n {
        for iy in 0..n {
            for ix in 0..n {
                let idx = [ix, iy, iz];
                let coord = |(axis, flip): (usize, bool)| if flip { n - 1 - idx[axis] } else { idx[axis] };
                data[grid.index(ix, iy, iz)] = slabs[coord(perm[2])].data[coord(perm[1]) * n + coord(perm[0])];
            }
        }
    }
    ScalarVolume { grid, data }
}

/// 4-point Lagrange weights at fractional offset `t` in `[0, 1)` for nodes `-1, 0, 1, 2`.
fn cubic_weights(t: f64) -> [f64; 4] {
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

/// Backprojection straight onto the canonical voxels for charts that are not
/// axis-aligned. Between slices the filtered data is interpolated with cubic
/// Lagrange weights, along the detector on the upsampled grid.
fn backproject_volume(
    block: &[Complex64],
    views: &ViewSet,
    view: usize,
    grid: Grid,
    filter: &RampFilter,
) -> ScalarVolume {
    let (m, k_count, tau) = (views.detector_count, views.angles_per_view, views.spacing());
    let slices = views.slice_count;
    let len = (filter.len * UPSAMPLE) as isize;
    let up = UPSAMPLE as f64;
    let det0 = views.detector_position(0);
    let slice0 = views.slice_position(0);
    let n = grid.n;
    let mut data = vec![ZERO; grid.len()];
    let mut rows: Vec<Vec<Complex64>> = vec![Vec::new(); slices];
    let mut sym = vec![ZERO; m];
    for k in 0..k_count / 2 {
        let opp = k + k_count / 2;
        for (j2, row) in rows.iter_mut().enumerate() {
            let at = |kk: usize| (kk * slices + j2) * m;
            let (r0, r1) = (at(k), at(opp));
            for (j, out) in sym.iter_mut().enumerate() {
                *out = (block[r0 + j] + block[r1 + m - 1 - j]) * 0.5;
            }
            *row = filter.apply(&sym);
        }
        let frame = views.frame(view, k);
        let (perp, omega) = (frame.theta_perp.vec(), frame.omega.vec());
        data.par_chunks_mut(n * n).enumerate().for_each(|(iz, plane)| {
            for iy in 0..n {
                for ix in 0..n {
                    let x = grid.point(ix, iy, iz);
                    let t = (x.dot(perp) - det0) / tau * up;
                    let r = (x.dot(omega) - slice0) / tau;
                    let (t_lo, r_lo) = (t.floor(), r.floor());
                    let (tw, rw) = (t - t_lo, r - r_lo);
                    let (t_lo, r_lo) = (t_lo as isize, r_lo as isize);
                    let i0 = t_lo.rem_euclid(len) as usize;
                    let i1 = (t_lo + 1).rem_euclid(len) as usize;
                    let mut acc = ZERO;
                    for (d, w) in cubic_weights(rw).iter().enumerate() {
                        let j = r_lo - 1 + d as isize;
                        if j < 0 || j >= slices as isize {
                            continue;
                        }
                        let q = &rows[j as usize];
                        acc += (q[i0] * (1.0 - tw) + q[i1] * tw) * *w;
                    }
                    plane[iy * n + ix] += acc;
                }
            }
        });
    }
    let w = 1.0 / k_count as f64;
    for v in &mut data {
        *v *= w;
    }
    ScalarVolume { grid, data }
}

/// A radially symmetric planar bump `amplitude * bump_profile(|x - centre| / radius)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialBump {
    pub centre: (f64, f64),
    pub radius: f64,
    pub amplitude: Complex64,
}

impl RadialBump {
    pub fn eval(&self, u: f64, v: f64) -> Complex64 {
        let t = (u - self.centre.0).hypot(v - self.centre.1) / self.radius;
        self.amplitude * crate::field::bump_profile(t)
    }

    /// Line integral over the line with normal `(-sin phi, cos phi)` at signed
    /// distance `s`, by 64-point Gauss-Legendre on the chord.
    pub fn line_integral(&self, phi: f64, s: f64) -> Complex64 {
        let (c, r) = (self.centre, self.radius);
        let d = -c.0 * phi.sin() + c.1 * phi.cos();
        let rho = (s - d).abs();
        if rho >= r {
            return ZERO;
        }
        let half = (r * r - rho * rho).sqrt();
        let (x, w) = crate::quadrature::gauss_legendre(64);
        let sum: f64 = x
            .iter()
            .zip(&w)
            .map(|(x, w)| w * crate::field::bump_profile((rho * rho + (x * half).powi(2)).sqrt() / r))
            .sum();
        self.amplitude * (sum * half)
    }
}

/// Quadrature sinogram of a sum of radial bumps, `K` angles, `M` centred detectors.
pub fn radial_bump_sinogram(
    bumps: &[RadialBump],
    angles: usize,
    detectors: usize,
    spacing: f64,
) -> Result<SliceSinogram> {
    SliceSinogram::from_fn(angles, detectors, spacing, |phi, s| bumps.iter().map(|b| b.line_integral(phi, s)).sum())
}

/// The bumps sampled at the pixel centres of an `M x M` slice image.
pub fn radial_bump_image(bumps: &[RadialBump], size: usize, spacing: f64) -> SliceImage {
    let mut data = Vec::with_capacity(size * size);
    for q in 0..size {
        for p in 0..size {
            let (u, v) = (detector_position(p, size, spacing), detector_position(q, size, spacing));
            data.push(bumps.iter().map(|b| b.eval(u, v)).sum());
        }
    }
    SliceImage { size, spacing, data }
}
