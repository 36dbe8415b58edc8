//! Gridded scalar and symmetric tensor fields, bump phantoms and the radial cutoff.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::geometry::Vec3;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Cell-centred grid on the cube `[-H, H]^3` with `n` voxels per axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub n: usize,
    pub half_width: f64,
}

impl Grid {
    pub fn new(n: usize, half_width: f64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("grid size must be positive"));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(invalid(format!("half width must be positive, got {half_width}")));
        }
        Ok(Grid { n, half_width })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.spacing()
    }

    pub fn point(&self, ix: usize, iy: usize, iz: usize) -> Vec3 {
        Vec3::new(self.center(ix), self.center(iy), self.center(iz))
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Flat index with x fastest.
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        ix + self.n * (iy + self.n * iz)
    }

    /// Length of a voxel diagonal.
    pub fn diagonal(&self) -> f64 {
        self.spacing() * 3f64.sqrt()
    }

    /// Lower interpolation node and fractional offset of coordinate `c`.
    ///
    /// The node is in `-1..n` (nodes outside `0..n` are zero padding).
    pub fn locate(&self, c: f64) -> (isize, f64) {
        let mut t = (c + self.half_width) / self.spacing() - 0.5;
        let r = t.round();
        if (t - r).abs() < 1e-12 {
            t = r;
        }
        let i = t.floor();
        (i as isize, t - i)
    }

    /// Iterates over all voxel centres together with their flat index.
    pub fn points(&self) -> impl Iterator<Item = (usize, Vec3)> + '_ {
        let n = self.n;
        (0..n).flat_map(move |iz| {
            (0..n).flat_map(move |iy| (0..n).map(move |ix| (self.index(ix, iy, iz), self.point(ix, iy, iz))))
        })
    }
}

/// Complex scalar field sampled at voxel centres.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarVolume {
    pub grid: Grid,
    pub data: Vec<Complex64>,
}

impl ScalarVolume {
    pub fn zeros(grid: Grid) -> Self {
        ScalarVolume { grid, data: vec![ZERO; grid.len()] }
    }

    pub fn from_data(grid: Grid, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "volume of size {} needs {} values, got {}",
                grid.n,
                grid.len(),
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(invalid("volume contains non-finite values"));
        }
        Ok(ScalarVolume { grid, data })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(Vec3) -> Complex64) -> Self {
        let mut data = vec![ZERO; grid.len()];
        for (i, x) in grid.points() {
            data[i] = f(x);
        }
        ScalarVolume { grid, data }
    }

    pub fn get(&self, ix: isize, iy: isize, iz: isize) -> Complex64 {
        let n = self.grid.n as isize;
        if ix < 0 || iy < 0 || iz < 0 || ix >= n || iy >= n || iz >= n {
            return ZERO;
        }
        self.data[self.grid.index(ix as usize, iy as usize, iz as usize)]
    }

    /// Trilinear interpolation with zero padding outside the grid.
    pub fn sample(&self, x: Vec3) -> Complex64 {
        let (ix, fx) = self.grid.locate(x.x());
        let (iy, fy) = self.grid.locate(x.y());
        let (iz, fz) = self.grid.locate(x.z());
        let mut acc = ZERO;
        for (dz, wz) in [(0, 1.0 - fz), (1, fz)] {
            for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
                for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
                    let w = wx * wy * wz;
                    if w != 0.0 {
                        acc += self.get(ix + dx, iy + dy, iz + dz) * w;
                    }
                }
            }
        }
        acc
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, s: Complex64) -> ScalarVolume {
        ScalarVolume { grid: self.grid, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn zip_with(&self, other: &ScalarVolume, f: impl Fn(Complex64, Complex64) -> Complex64) -> ScalarVolume {
        assert_eq!(self.grid, other.grid, "volumes on different grids");
        ScalarVolume { grid: self.grid, data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect() }
    }
}

/// Relative L2 distance `|a - b| / |b|`.
pub fn relative_l2(a: &ScalarVolume, b: &ScalarVolume) -> f64 {
    let num: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.data.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

/// Symmetric complex 3x3 matrix stored as `[m11, m22, m33, m12, m13, m23]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SymMat3(pub [Complex64; 6]);

/// `(row, col)` of each stored component.
pub const COMPONENT_INDICES: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];
pub const COMPONENT_NAMES: [&str; 6] = ["f11", "f22", "f33", "f12", "f13", "f23"];

impl SymMat3 {
    pub const ZERO: SymMat3 = SymMat3([ZERO; 6]);

    pub fn identity() -> Self {
        let one = Complex64::new(1.0, 0.0);
        SymMat3([one, one, one, ZERO, ZERO, ZERO])
    }

    /// Builds from real upper-triangle entries in the stored order.
    pub fn from_real(v: [f64; 6]) -> Self {
        SymMat3(v.map(|x| Complex64::new(x, 0.0)))
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        let m = &self.0;
        match (i.min(j), i.max(j)) {
            (0, 0) => m[0],
            (1, 1) => m[1],
            (2, 2) => m[2],
            (0, 1) => m[3],
            (0, 2) => m[4],
            (1, 2) => m[5],
            _ => panic!("index ({i}, {j}) out of range"),
        }
    }

    pub fn to_matrix(&self) -> [[Complex64; 3]; 3] {
        std::array::from_fn(|i| std::array::from_fn(|j| self.get(i, j)))
    }

    /// `sum_ij m_ij a_i b_j`, no conjugation.
    pub fn bilinear(&self, a: Vec3, b: Vec3) -> Complex64 {
        let (a, b) = (a.0, b.0);
        let m = &self.0;
        m[0] * (a[0] * b[0])
            + m[1] * (a[1] * b[1])
            + m[2] * (a[2] * b[2])
            + m[3] * (a[0] * b[1] + a[1] * b[0])
            + m[4] * (a[0] * b[2] + a[2] * b[0])
            + m[5] * (a[1] * b[2] + a[2] * b[1])
    }

    /// Weights `c` such that `bilinear(a, b) = sum_k c[k] * m[k]`.
    pub fn bilinear_weights(a: Vec3, b: Vec3) -> [f64; 6] {
        let (a, b) = (a.0, b.0);
        [
            a[0] * b[0],
            a[1] * b[1],
            a[2] * b[2],
            a[0] * b[1] + a[1] * b[0],
            a[0] * b[2] + a[2] * b[0],
            a[1] * b[2] + a[2] * b[1],
        ]
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

impl Add for SymMat3 {
    type Output = SymMat3;
    fn add(self, o: SymMat3) -> SymMat3 {
        SymMat3(std::array::from_fn(|k| self.0[k] + o.0[k]))
    }
}

impl Sub for SymMat3 {
    type Output = SymMat3;
    fn sub(self, o: SymMat3) -> SymMat3 {
        SymMat3(std::array::from_fn(|k| self.0[k] - o.0[k]))
    }
}

impl Mul<Complex64> for SymMat3 {
    type Output = SymMat3;
    fn mul(self, s: Complex64) -> SymMat3 {
        SymMat3(self.0.map(|z| z * s))
    }
}

impl Mul<f64> for SymMat3 {
    type Output = SymMat3;
    fn mul(self, s: f64) -> SymMat3 {
        SymMat3(self.0.map(|z| z * s))
    }
}

/// Anything that can be evaluated as a symmetric tensor field in space.
pub trait TensorSampler: Sync {
    fn sample(&self, x: Vec3) -> SymMat3;

    /// The sampler vanishes identically for `|x| >= support_radius()`.
    fn support_radius(&self) -> f64;
}

/// Symmetric tensor field: the six upper-triangle components on one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorField {
    /// In the order f11, f22, f33, f12, f13, f23.
    pub components: [ScalarVolume; 6],
    /// The stored values vanish at every voxel with `|x| >= support_radius`.
    pub support_radius: f64,
}

impl TensorField {
    pub fn zeros(grid: Grid) -> Self {
        TensorField { components: std::array::from_fn(|_| ScalarVolume::zeros(grid)), support_radius: 0.0 }
    }

    pub fn new(components: [ScalarVolume; 6], support_radius: f64) -> Result<Self> {
        let grid = components[0].grid;
        if components.iter().any(|c| c.grid != grid) {
            return Err(Error::ShapeMismatch("tensor components on different grids".into()));
        }
        for (i, x) in grid.points() {
            if x.norm() >= support_radius && components.iter().any(|c| c.data[i] != ZERO) {
                return Err(invalid(format!(
                    "field is nonzero at |x| = {:.4} beyond support radius {support_radius}",
                    x.norm()
                )));
            }
        }
        Ok(TensorField { components, support_radius })
    }

    /// A field without a support guarantee inside the cube.
    pub fn unsupported(components: [ScalarVolume; 6]) -> Result<Self> {
        let grid = components[0].grid;
        if components.iter().any(|c| c.grid != grid) {
            return Err(Error::ShapeMismatch("tensor components on different grids".into()));
        }
        let r = grid.half_width * 3f64.sqrt() + grid.spacing();
        Ok(TensorField { components, support_radius: r })
    }

    pub fn grid(&self) -> Grid {
        self.components[0].grid
    }

    pub fn at_index(&self, i: usize) -> SymMat3 {
        SymMat3(std::array::from_fn(|k| self.components[k].data[i]))
    }

    /// Per-voxel scalar `sum_ij f_ij a_i b_j`.
    pub fn contract(&self, a: Vec3, b: Vec3) -> ScalarVolume {
        let w = SymMat3::bilinear_weights(a, b);
        let grid = self.grid();
        let mut data = vec![ZERO; grid.len()];
        for (k, c) in self.components.iter().enumerate() {
            if w[k] == 0.0 {
                continue;
            }
            for (d, v) in data.iter_mut().zip(&c.data) {
                *d += v * w[k];
            }
        }
        ScalarVolume { grid, data }
    }

    /// Largest magnitude of each component.
    pub fn peak_magnitudes(&self) -> [f64; 6] {
        std::array::from_fn(|k| self.components[k].sup_norm())
    }

    /// Entrywise max norm over all voxels.
    pub fn sup_norm(&self) -> f64 {
        self.peak_magnitudes().into_iter().fold(0.0, f64::max)
    }

    pub fn scaled(&self, s: Complex64) -> TensorField {
        TensorField {
            components: std::array::from_fn(|k| self.components[k].scaled(s)),
            support_radius: self.support_radius,
        }
    }

    fn zip_with(&self, other: &TensorField, f: impl Fn(Complex64, Complex64) -> Complex64 + Copy) -> TensorField {
        TensorField {
            components: std::array::from_fn(|k| self.components[k].zip_with(&other.components[k], f)),
            support_radius: self.support_radius.max(other.support_radius),
        }
    }

    pub fn add(&self, other: &TensorField) -> TensorField {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &TensorField) -> TensorField {
        self.zip_with(other, |a, b| a - b)
    }

    /// Entrywise max of `|self - other|`.
    pub fn sup_distance(&self, other: &TensorField) -> f64 {
        self.components
            .iter()
            .zip(&other.components)
            .flat_map(|(a, b)| a.data.iter().zip(&b.data).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max)
    }

    /// Relative L2 error of each component against `truth`.
    pub fn relative_l2_per_component(&self, truth: &TensorField) -> [f64; 6] {
        std::array::from_fn(|k| relative_l2(&self.components[k], &truth.components[k]))
    }
}

/// Trilinear sample of every component; exactly zero outside the interpolant support.
pub fn sample_tensor(field: &TensorField, x: Vec3) -> SymMat3 {
    if x.norm() >= field.support_radius + field.grid().diagonal() {
        return SymMat3::ZERO;
    }
    SymMat3(std::array::from_fn(|k| field.components[k].sample(x)))
}

impl TensorSampler for TensorField {
    fn sample(&self, x: Vec3) -> SymMat3 {
        sample_tensor(self, x)
    }

    fn support_radius(&self) -> f64 {
        self.support_radius + self.grid().diagonal()
    }
}

fn smooth_step_phi(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

/// `1` for `t <= 0`, `0` for `t >= 1`, C-infinity and decreasing in between.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        let a = smooth_step_phi(1.0 - t);
        a / (smooth_step_phi(t) + a)
    }
}

/// Radial cutoff: one on `|x| <= r0`, zero on `|x| >= r1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cutoff {
    pub r0: f64,
    pub r1: f64,
}

pub fn make_cutoff(r0: f64, r1: f64) -> Result<Cutoff> {
    if !(r0 > 0.0 && r0 < r1 && r1.is_finite()) {
        return Err(invalid(format!("cutoff needs 0 < r0 < r1, got r0 = {r0}, r1 = {r1}")));
    }
    Ok(Cutoff { r0, r1 })
}

impl Cutoff {
    pub fn eval_radius(&self, r: f64) -> f64 {
        smooth_step((r - self.r0) / (self.r1 - self.r0))
    }

    pub fn eval(&self, x: Vec3) -> f64 {
        self.eval_radius(x.norm())
    }
}

/// Pointwise multiplication of every component by the cutoff.
pub fn apply_cutoff(chi: &Cutoff, field: &TensorField) -> TensorField {
    let grid = field.grid();
    let weights: Vec<f64> = grid.points().map(|(_, x)| chi.eval(x)).collect();
    let components = std::array::from_fn(|k| {
        let data = field.components[k].data.iter().zip(&weights).map(|(v, w)| v * *w).collect();
        ScalarVolume { grid, data }
    });
    TensorField { components, support_radius: field.support_radius.min(chi.r1) }
}

/// Smooth compact bump `exp(1 - 1/(1 - t^2))` on `t < 1`.
pub fn bump_profile(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - t * t)).exp()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bump {
    pub center: Vec3,
    pub radius: f64,
    pub amplitude: SymMat3,
}

/// Analytic sum of bumps, usable both for rasterization and direct evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct BumpPhantom {
    pub bumps: Vec<Bump>,
    pub r0: f64,
}

impl BumpPhantom {
    pub fn new(bumps: Vec<Bump>, r0: f64) -> Result<Self> {
        if !(r0 > 0.0) {
            return Err(invalid(format!("support radius must be positive, got {r0}")));
        }
        for (i, b) in bumps.iter().enumerate() {
            if !(b.radius > 0.0) {
                return Err(invalid(format!("bump {i}: radius must be positive")));
            }
            let reach = b.center.norm() + b.radius;
            if reach > r0 {
                return Err(invalid(format!("bump {i} reaches |x| = {reach:.4}, outside the support ball r0 = {r0}")));
            }
        }
        Ok(BumpPhantom { bumps, r0 })
    }

    pub fn scaled(&self, s: Complex64) -> BumpPhantom {
        BumpPhantom {
            bumps: self.bumps.iter().map(|b| Bump { amplitude: b.amplitude * s, ..*b }).collect(),
            r0: self.r0,
        }
    }

    pub fn eval(&self, x: Vec3) -> SymMat3 {
        let mut acc = SymMat3::ZERO;
        for b in &self.bumps {
            let t = (x - b.center).norm() / b.radius;
            if t < 1.0 {
                acc = acc + b.amplitude * bump_profile(t);
            }
        }
        acc
    }

    pub fn rasterize(&self, grid: Grid) -> TensorField {
        let mut comps: [Vec<Complex64>; 6] = std::array::from_fn(|_| vec![ZERO; grid.len()]);
        for (i, x) in grid.points() {
            if x.norm() >= self.r0 {
                continue;
            }
            let m = self.eval(x);
            for k in 0..6 {
                comps[k][i] = m.0[k];
            }
        }
        TensorField { components: comps.map(|data| ScalarVolume { grid, data }), support_radius: self.r0 }
    }
}

impl TensorSampler for BumpPhantom {
    fn sample(&self, x: Vec3) -> SymMat3 {
        self.eval(x)
    }

    fn support_radius(&self) -> f64 {
        self.r0
    }
}

pub fn bump_phantom(n: usize, half_width: f64, r0: f64, bumps: Vec<Bump>) -> Result<TensorField> {
    let grid = Grid::new(n, half_width)?;
    Ok(BumpPhantom::new(bumps, r0)?.rasterize(grid))
}

/// Amplitude convention of the preset phantoms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhantomKind {
    /// Real symmetric amplitudes.
    Real,
    /// Purely imaginary symmetric amplitudes (skew-Hermitian fields).
    Imaginary,
}

/// The two-bump reference phantom, scaled so its largest amplitude entry is `eps`.
///
/// Both bumps fit in the ball of radius 0.8.
pub fn standard_phantom(eps: f64, kind: PhantomKind) -> BumpPhantom {
    let a = SymMat3::from_real([1.0, 0.8, 0.6, 0.3, 0.2, -0.25]);
    let b = SymMat3::from_real([0.5, 0.9, -0.7, -0.4, 0.3, 0.2]);
    let bumps = vec![
        Bump { center: Vec3::new(0.15, 0.1, -0.1), radius: 0.55, amplitude: a },
        Bump { center: Vec3::new(-0.2, -0.1, 0.15), radius: 0.5, amplitude: b },
    ];
    let phase = match kind {
        PhantomKind::Real => Complex64::new(eps, 0.0),
        PhantomKind::Imaginary => Complex64::new(0.0, eps),
    };
    BumpPhantom::new(bumps, 0.8).expect("reference bumps lie inside r0").scaled(phase)
}
