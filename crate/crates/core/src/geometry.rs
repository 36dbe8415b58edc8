//! Frames, ray families and the discrete sampling of the data manifold.
//!
//! A view is fixed by a unit direction `omega`. Rays of the view run along
//! `theta` in the plane orthogonal to `omega` and are parametrized by
//! `(xi1, xi2)`, with base point `xi1 * theta_perp + xi2 * omega` where
//! `theta_perp = omega x theta`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{invalid, Result};

const UNIT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec3(pub [f64; 3]);

impl Vec3 {
    pub const ZERO: Vec3 = Vec3([0.0; 3]);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3([x, y, z])
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        let [a0, a1, a2] = self.0;
        let [b0, b1, b2] = o.0;
        Vec3([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0])
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn x(self) -> f64 {
        self.0[0]
    }
    pub fn y(self) -> f64 {
        self.0[1]
    }
    pub fn z(self) -> f64 {
        self.0[2]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        self * -1.0
    }
}

/// A unit vector in R^3.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Direction(Vec3);

impl Direction {
    /// Normalizes `v`. Fails on the zero vector or non-finite input.
    pub fn new(v: Vec3) -> Result<Self> {
        let n = v.norm();
        if !n.is_finite() || n == 0.0 {
            return Err(invalid(format!("cannot normalize {v:?}")));
        }
        Ok(Direction(v * (1.0 / n)))
    }

    /// Accepts `v` as is, provided it is already unit length.
    pub fn from_unit(v: Vec3) -> Result<Self> {
        if (v.norm() - 1.0).abs() > UNIT_TOL {
            return Err(invalid(format!("{v:?} is not a unit vector")));
        }
        Ok(Direction(v))
    }

    pub fn e1() -> Self {
        Direction(Vec3::new(1.0, 0.0, 0.0))
    }
    pub fn e2() -> Self {
        Direction(Vec3::new(0.0, 1.0, 0.0))
    }
    pub fn e3() -> Self {
        Direction(Vec3::new(0.0, 0.0, 1.0))
    }

    pub fn vec(self) -> Vec3 {
        self.0
    }
}

impl Neg for Direction {
    type Output = Direction;
    fn neg(self) -> Direction {
        Direction(-self.0)
    }
}

/// Orthonormal triple `(theta, theta_perp, omega)` with `theta_perp = omega x theta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ViewFrame {
    pub omega: Direction,
    pub theta: Direction,
    pub theta_perp: Direction,
}

impl ViewFrame {
    pub fn new(omega: Direction, theta: Direction) -> Result<Self> {
        let c = omega.vec().dot(theta.vec());
        if c.abs() > UNIT_TOL {
            return Err(invalid(format!("theta not orthogonal to omega (dot = {c:e})")));
        }
        // cross of two orthonormal vectors is unit up to rounding
        let theta_perp = Direction(omega.vec().cross(theta.vec()));
        Ok(ViewFrame { omega, theta, theta_perp })
    }

    /// Same view, opposite ray orientation.
    pub fn reversed(&self) -> ViewFrame {
        ViewFrame { omega: self.omega, theta: -self.theta, theta_perp: -self.theta_perp }
    }
}

/// A ray of a view in `(xi1, xi2)` coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayCoord {
    pub frame: ViewFrame,
    pub xi1: f64,
    pub xi2: f64,
}

impl RayCoord {
    pub fn base_point(&self) -> Vec3 {
        self.frame.theta_perp.vec() * self.xi1 + self.frame.omega.vec() * self.xi2
    }

    /// Coordinates of the ray through `x` along `frame.theta`.
    pub fn through(frame: ViewFrame, x: Vec3) -> Self {
        RayCoord { frame, xi1: x.dot(frame.theta_perp.vec()), xi2: x.dot(frame.omega.vec()) }
    }

    /// Distance from the ray to the origin.
    pub fn impact(&self) -> f64 {
        self.xi1.hypot(self.xi2)
    }
}

/// Deterministic chart `(a, b)` of the plane orthogonal to `omega`, with
/// `(a, b, omega)` right-handed.
pub fn frame_basis(omega: Direction) -> (Direction, Direction) {
    let w = omega.vec();
    let e1 = Vec3::new(1.0, 0.0, 0.0);
    let e3 = Vec3::new(0.0, 0.0, 1.0);
    let a = if w.dot(e3).abs() < 0.9 { e3.cross(w) } else { e1 - w * w.dot(e1) };
    let a = Direction::new(a).expect("frame_basis: degenerate chart");
    let b = Direction(w.cross(a.vec()));
    (a, b)
}

/// Projector onto `{z : z . theta = 0}` with the bilinear (non-conjugating) dot.
pub fn project_transverse(theta: Direction, z: [Complex64; 3]) -> [Complex64; 3] {
    let t = theta.vec().0;
    let d = z[0] * t[0] + z[1] * t[1] + z[2] * t[2];
    [z[0] - d * t[0], z[1] - d * t[1], z[2] - d * t[2]]
}

/// The view directions and sampling of the data manifold.
///
/// Angles are `theta_k = cos(2 pi k / K) a + sin(2 pi k / K) b`; detectors and
/// slices sit at `-H + (j + 1/2) 2H / M`.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewSet {
    pub omegas: Vec<Direction>,
    pub angles_per_view: usize,
    pub detector_count: usize,
    pub slice_count: usize,
    pub half_width: f64,
}

/// The six fixed directions used by the tensor inversion.
pub fn standard_directions() -> [Direction; 6] {
    let s = FRAC_1_SQRT_2;
    [
        Direction::e1(),
        Direction::e2(),
        Direction::e3(),
        Direction(Vec3::new(s, s, 0.0)),
        Direction(Vec3::new(s, 0.0, s)),
        Direction(Vec3::new(0.0, s, s)),
    ]
}

pub fn standard_views(angles: usize, m: usize, half_width: f64) -> Result<ViewSet> {
    ViewSet::new(standard_directions().to_vec(), angles, m, half_width)
}

impl ViewSet {
    pub fn new(omegas: Vec<Direction>, angles: usize, m: usize, half_width: f64) -> Result<Self> {
        if angles < 8 || angles % 2 != 0 {
            return Err(invalid(format!("angle count must be even and >= 8, got {angles}")));
        }
        if m < 8 {
            return Err(invalid(format!("detector count must be >= 8, got {m}")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(invalid(format!("half width must be positive, got {half_width}")));
        }
        if omegas.is_empty() {
            return Err(invalid("empty view list"));
        }
        Ok(ViewSet { omegas, angles_per_view: angles, detector_count: m, slice_count: m, half_width })
    }

    pub fn view_count(&self) -> usize {
        self.omegas.len()
    }

    /// True when the directions are exactly the six standard ones, in order.
    pub fn is_standard(&self) -> bool {
        self.omegas.len() == 6 && self.omegas.iter().zip(standard_directions()).all(|(a, b)| *a == b)
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.detector_count as f64
    }

    pub fn slice_spacing(&self) -> f64 {
        2.0 * self.half_width / self.slice_count as f64
    }

    pub fn detector_position(&self, j: usize) -> f64 {
        -self.half_width + (j as f64 + 0.5) * self.spacing()
    }

    pub fn slice_position(&self, j: usize) -> f64 {
        -self.half_width + (j as f64 + 0.5) * self.slice_spacing()
    }

    pub fn angle(&self, k: usize) -> f64 {
        2.0 * PI * k as f64 / self.angles_per_view as f64
    }

    pub fn frame(&self, view: usize, k: usize) -> ViewFrame {
        let omega = self.omegas[view];
        let (a, b) = frame_basis(omega);
        let phi = self.angle(k);
        let (s, c) = phi.sin_cos();
        let theta = Direction(a.vec() * c + b.vec() * s);
        ViewFrame::new(omega, theta).expect("angle grid stays in the plane")
    }

    pub fn ray(&self, view: usize, k: usize, slice: usize, det: usize) -> RayCoord {
        RayCoord { frame: self.frame(view, k), xi1: self.detector_position(det), xi2: self.slice_position(slice) }
    }

    /// Samples per view block.
    pub fn block_len(&self) -> usize {
        self.angles_per_view * self.slice_count * self.detector_count
    }

    pub fn len(&self) -> usize {
        self.view_count() * self.block_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index, view-major then angle, slice, detector.
    pub fn index(&self, view: usize, k: usize, slice: usize, det: usize) -> usize {
        ((view * self.angles_per_view + k) * self.slice_count + slice) * self.detector_count + det
    }
}
