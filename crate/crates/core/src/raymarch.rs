//! Ray traversal through the trilinear interpolant of a voxel grid.
//!
//! Along a straight line the trilinear interpolant is a cubic polynomial in
//! the arc parameter inside each interpolation cell and only continuous
//! across the planes through voxel centres. Rays are therefore cut at those
//! planes so that quadrature and time stepping never straddle a kink.

use num_complex::Complex64;

use crate::field::{Grid, TensorField};
use crate::geometry::{Vec3, ViewFrame};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `C` complex channels per voxel.
pub(crate) struct ChannelVolume<const C: usize> {
    pub grid: Grid,
    pub data: Vec<[Complex64; C]>,
}

impl<const C: usize> ChannelVolume<C> {
    fn get(&self, ix: isize, iy: isize, iz: isize) -> [Complex64; C] {
        let n = self.grid.n as isize;
        if ix < 0 || iy < 0 || iz < 0 || ix >= n || iy >= n || iz >= n {
            return [ZERO; C];
        }
        self.data[self.grid.index(ix as usize, iy as usize, iz as usize)]
    }

    fn cell(&self, x: Vec3) -> Cell<C> {
        let lo: [isize; 3] = std::array::from_fn(|a| self.grid.locate(x.0[a]).0);
        let mut corners = [[ZERO; C]; 8];
        for (c, corner) in corners.iter_mut().enumerate() {
            let (dx, dy, dz) = ((c & 1) as isize, ((c >> 1) & 1) as isize, ((c >> 2) & 1) as isize);
            *corner = self.get(lo[0] + dx, lo[1] + dy, lo[2] + dz);
        }
        let origin = Vec3(std::array::from_fn(|a| self.grid.center(0) + lo[a] as f64 * self.grid.spacing()));
        Cell { corners, origin, inv_spacing: 1.0 / self.grid.spacing() }
    }
}

/// The eight nodes of one interpolation cell.
pub(crate) struct Cell<const C: usize> {
    corners: [[Complex64; C]; 8],
    origin: Vec3,
    inv_spacing: f64,
}

impl<const C: usize> Cell<C> {
    pub fn eval(&self, x: Vec3) -> [Complex64; C] {
        let t: [f64; 3] = std::array::from_fn(|a| (x.0[a] - self.origin.0[a]) * self.inv_spacing);
        let c = &self.corners;
        std::array::from_fn(|ch| {
            let lerp = |a: Complex64, b: Complex64, w: f64| a + (b - a) * w;
            let x00 = lerp(c[0][ch], c[1][ch], t[0]);
            let x10 = lerp(c[2][ch], c[3][ch], t[0]);
            let x01 = lerp(c[4][ch], c[5][ch], t[0]);
            let x11 = lerp(c[6][ch], c[7][ch], t[0]);
            lerp(lerp(x00, x10, t[1]), lerp(x01, x11, t[1]), t[2])
        })
    }

    pub fn is_zero(&self) -> bool {
        self.corners.iter().all(|c| c.iter().all(|z| *z == ZERO))
    }
}

/// The frame-dependent generator entries `(w f w, w f t_perp, t_perp f t_perp)`
/// evaluated at every voxel.
pub(crate) fn generator_channels(field: &TensorField, frame: &ViewFrame) -> ChannelVolume<3> {
    let w = frame.omega.vec();
    let p = frame.theta_perp.vec();
    let weights = [
        crate::field::SymMat3::bilinear_weights(w, w),
        crate::field::SymMat3::bilinear_weights(w, p),
        crate::field::SymMat3::bilinear_weights(p, p),
    ];
    let grid = field.grid();
    let mut data = vec![[ZERO; 3]; grid.len()];
    for (k, comp) in field.components.iter().enumerate() {
        for (ch, wt) in weights.iter().enumerate() {
            let wk = wt[k];
            if wk == 0.0 {
                continue;
            }
            for (d, v) in data.iter_mut().zip(&comp.data) {
                d[ch] += v * wk;
            }
        }
    }
    ChannelVolume { grid, data }
}

pub(crate) fn scalar_channels(vol: &crate::field::ScalarVolume) -> ChannelVolume<1> {
    ChannelVolume { grid: vol.grid, data: vol.data.iter().map(|z| [*z]).collect() }
}

/// Parameter interval of the line `base + s dir` inside the ball of radius `r`
/// and the box enclosing the nonzero interpolant.
pub(crate) fn clip(grid: &Grid, base: Vec3, dir: Vec3, r: f64) -> Option<(f64, f64)> {
    let bd = base.dot(dir);
    let disc = bd * bd - (base.dot(base) - r * r);
    if disc <= 0.0 {
        return None;
    }
    let h = disc.sqrt();
    let (mut s0, mut s1) = (-bd - h, -bd + h);
    let lim = grid.half_width + 0.5 * grid.spacing();
    for a in 0..3 {
        let (p, d) = (base.0[a], dir.0[a]);
        if d == 0.0 {
            if p.abs() >= lim {
                return None;
            }
        } else {
            let (t0, t1) = ((-lim - p) / d, (lim - p) / d);
            s0 = s0.max(t0.min(t1));
            s1 = s1.min(t0.max(t1));
        }
    }
    (s1 > s0).then_some((s0, s1))
}

/// Breakpoints of `[s0, s1]` at every crossing of a voxel-centre plane, sorted,
/// endpoints included.
pub(crate) fn breakpoints(grid: &Grid, base: Vec3, dir: Vec3, s0: f64, s1: f64, out: &mut Vec<f64>) {
    out.clear();
    out.push(s0);
    for a in 0..3 {
        let d = dir.0[a];
        if d.abs() < 1e-14 {
            continue;
        }
        let p = base.0[a];
        let (xa, xb) = (p + s0 * d, p + s1 * d);
        let (lo, hi) = (xa.min(xb), xa.max(xb));
        let h = grid.spacing();
        let first = ((lo + grid.half_width) / h - 0.5).ceil().max(0.0) as usize;
        let last = ((hi + grid.half_width) / h - 0.5).floor();
        if last < 0.0 {
            continue;
        }
        let last = (last as usize).min(grid.n - 1);
        for i in first..=last {
            let s = (grid.center(i) - p) / d;
            if s > s0 && s < s1 {
                out.push(s);
            }
        }
    }
    out.push(s1);
    out.sort_unstable_by(f64::total_cmp);
    out.dedup_by(|b, a| *b - *a < 1e-13);
    if let Some(last) = out.last_mut() {
        *last = s1;
    }
}

/// Calls `f(sa, sb, cell)` for each kink-free piece of the ray, in order.
/// Pieces whose cell is identically zero are reported with `None`.
pub(crate) fn for_each_segment<const C: usize>(
    vol: &ChannelVolume<C>,
    base: Vec3,
    dir: Vec3,
    s0: f64,
    s1: f64,
    scratch: &mut Vec<f64>,
    mut f: impl FnMut(f64, f64, Option<&Cell<C>>),
) {
    breakpoints(&vol.grid, base, dir, s0, s1, scratch);
    for w in scratch.windows(2) {
        let (sa, sb) = (w[0], w[1]);
        if sb <= sa {
            continue;
        }
        let mid = base + dir * (0.5 * (sa + sb));
        let cell = vol.cell(mid);
        if cell.is_zero() {
            f(sa, sb, None);
        } else {
            f(sa, sb, Some(&cell));
        }
    }
}
