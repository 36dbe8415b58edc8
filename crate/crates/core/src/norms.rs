//! Weighted Fourier sup-norms used as convergence diagnostics.
//!
//! Transform convention: `u^(p) = (2 pi)^-3 int e^{i p.x} u(x) dx`, evaluated by
//! the grid sum with cell volume weight at the grid frequencies
//! `p = 2 pi m / (n h)`, `m` in `-n/2 .. n/2`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{invalid, Result};
use crate::field::{Grid, ScalarVolume, TensorField};
use crate::geometry::Vec3;
use crate::tensor_inversion::LambdaData;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Which norm and its parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightedNorm {
    pub sigma: f64,
    /// Highest derivative order of the spectrum retained: 0 or 1.
    pub order: u8,
}

impl WeightedNorm {
    pub fn new(sigma: f64, order: u8) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(invalid(format!("sigma must be a finite value >= 0, got {sigma}")));
        }
        if order > 1 {
            return Err(invalid(format!("derivative order must be 0 or 1, got {order}")));
        }
        Ok(WeightedNorm { sigma, order })
    }

    pub fn of_volume(&self, vol: &ScalarVolume) -> f64 {
        hat_c_sigma(vol, self.sigma, self.order)
    }
}

pub fn weight(p: f64, sigma: f64) -> f64 {
    (1.0 + p).powf(sigma)
}

/// Signed frequency index for FFT bin `i` of an `n`-point transform.
fn signed(i: usize, n: usize) -> f64 {
    if i < n.div_ceil(2) {
        i as f64
    } else {
        i as f64 - n as f64
    }
}

/// Unnormalized `sum_j a_j e^{+2 pi i m j / n}` along every axis of an `n^d` array,
/// axis 0 fastest.
fn inverse_fft_nd(data: &mut [Complex64], n: usize, dims: usize) {
    let fft = FftPlanner::new().plan_fft_inverse(n);
    data.par_chunks_mut(n).for_each(|row| fft.process(row));
    let mut stride = n;
    for _ in 1..dims {
        let block = stride * n;
        data.par_chunks_mut(block).for_each(|chunk| {
            let mut line = vec![ZERO; n];
            for off in 0..stride {
                for (k, v) in line.iter_mut().enumerate() {
                    *v = chunk[off + k * stride];
                }
                fft.process(&mut line);
                for (k, v) in line.iter().enumerate() {
                    chunk[off + k * stride] = *v;
                }
            }
        });
        stride = block;
    }
}

/// The transform of a volume sampled at all grid frequencies.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub grid: Grid,
    /// FFT order, `m_x` fastest.
    pub data: Vec<Complex64>,
}

impl Spectrum {
    pub fn frequency_step(&self) -> f64 {
        2.0 * PI / (self.grid.n as f64 * self.grid.spacing())
    }

    pub fn frequency(&self, i: usize) -> Vec3 {
        let n = self.grid.n;
        let dp = self.frequency_step();
        Vec3::new(signed(i % n, n) * dp, signed((i / n) % n, n) * dp, signed(i / (n * n), n) * dp)
    }

    /// `sup_p (1 + |p|)^sigma |u^(p)|` over the grid frequencies.
    pub fn weighted_sup(&self, sigma: f64) -> f64 {
        self.data
            .iter()
            .enumerate()
            .map(|(i, z)| weight(self.frequency(i).norm(), sigma) * z.norm())
            .fold(0.0, f64::max)
    }
}

pub fn spectrum(vol: &ScalarVolume) -> Spectrum {
    let grid = vol.grid;
    let mut data = vol.data.clone();
    inverse_fft_nd(&mut data, grid.n, 3);
    let h = grid.spacing();
    let scale = (h / (2.0 * PI)).powi(3);
    let x0 = grid.center(0);
    let mut fourier = Spectrum { grid, data };
    let shift: Vec<Complex64> = (0..fourier.data.len())
        .map(|i| {
            let p = fourier.frequency(i);
            Complex64::from_polar(scale, x0 * (p.x() + p.y() + p.z()))
        })
        .collect();
    for (z, s) in fourier.data.iter_mut().zip(shift) {
        *z *= s;
    }
    fourier
}

/// Slow direct evaluation of the transform at an arbitrary frequency.
pub fn direct_transform(vol: &ScalarVolume, p: Vec3) -> Complex64 {
    let h3 = vol.grid.spacing().powi(3);
    let sum: Complex64 = vol.grid.points().map(|(i, x)| vol.data[i] * Complex64::from_polar(1.0, p.dot(x))).sum();
    sum * (h3 / (2.0 * PI).powi(3))
}

pub fn hat_linf_sigma(vol: &ScalarVolume, sigma: f64) -> f64 {
    spectrum(vol).weighted_sup(sigma)
}

/// Entrywise max over the six independent components.
pub fn hat_linf_sigma_tensor(field: &TensorField, sigma: f64) -> f64 {
    field.components.iter().map(|c| hat_linf_sigma(c, sigma)).fold(0.0, f64::max)
}

/// Order 0 equals [`hat_linf_sigma`]. Order 1 also takes the sup of the
/// weighted frequency derivatives `d u^ / d p_j`, computed exactly as the
/// transform of `i x_j u`.
pub fn hat_c_sigma(vol: &ScalarVolume, sigma: f64, order: u8) -> f64 {
    let base = hat_linf_sigma(vol, sigma);
    if order == 0 {
        return base;
    }
    (0..3)
        .map(|axis| {
            let moment = ScalarVolume {
                grid: vol.grid,
                data: vol.grid.points().map(|(i, x)| vol.data[i] * Complex64::new(0.0, x.0[axis])).collect(),
            };
            hat_linf_sigma(&moment, sigma)
        })
        .fold(base, f64::max)
}

pub fn hat_c_sigma_tensor(field: &TensorField, sigma: f64, order: u8) -> f64 {
    field.components.iter().map(|c| hat_c_sigma(c, sigma, order)).fold(0.0, f64::max)
}

/// Max over views and angles of the weighted 2D transform over `(xi1, xi2)`,
/// with the `(2 pi)^-2` convention.
pub fn lambda_norm(data: &LambdaData, sigma: f64) -> f64 {
    let views = data.views();
    let m = views.detector_count;
    assert_eq!(m, views.slice_count, "square detector planes");
    let tau = views.spacing();
    let dp = 2.0 * PI / (m as f64 * tau);
    let scale = (tau / (2.0 * PI)).powi(2);
    let factors: Vec<f64> = (0..m * m)
        .map(|i| {
            let (p1, p2) = (signed(i % m, m) * dp, signed(i / m, m) * dp);
            weight(p1.hypot(p2), sigma) * scale
        })
        .collect();
    let planes: Vec<(usize, usize)> =
        (0..views.view_count()).flat_map(|v| (0..views.angles_per_view).map(move |k| (v, k))).collect();
    let maxima: Vec<f64> = planes
        .par_iter()
        .map(|&(v, k)| {
            let start = k * m * m;
            let mut buf = data.block(v)[start..start + m * m].to_vec();
            inverse_fft_nd(&mut buf, m, 2);
            // the phase from centring the detector coordinates drops out of the modulus
            buf.iter().zip(&factors).map(|(z, w)| z.norm() * w).fold(0.0, f64::max)
        })
        .collect();
    maxima.into_iter().fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Bump, BumpPhantom, SymMat3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bump_volume(n: usize, centre: Vec3, radius: f64, amp: Complex64) -> ScalarVolume {
        let grid = Grid::new(n, 1.0).unwrap();
        ScalarVolume::from_fn(grid, |x| amp * crate::field::bump_profile((x - centre).norm() / radius))
    }

    #[test]
    fn zero_volume() {
        let v = ScalarVolume::zeros(Grid::new(8, 1.0).unwrap());
        assert_eq!(hat_linf_sigma(&v, 4.0), 0.0);
        assert_eq!(hat_c_sigma(&v, 4.0, 1), 0.0);
    }

    #[test]
    fn fft_matches_direct_sum() {
        let v = bump_volume(16, Vec3::new(0.1, -0.2, 0.05), 0.5, Complex64::new(1.0, 0.5));
        let fourier = spectrum(&v);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let i = rng.gen_range(0..fourier.data.len());
            let direct = direct_transform(&v, fourier.frequency(i));
            assert!((direct - fourier.data[i]).norm() <= 1e-10 * direct.norm().max(1e-300));
        }
    }

    #[test]
    fn sigma_zero_is_plain_max() {
        let v = bump_volume(12, Vec3::ZERO, 0.6, Complex64::new(0.0, 2.0));
        let fourier = spectrum(&v);
        let max = fourier.data.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert_eq!(hat_linf_sigma(&v, 0.0), max);
        // the zero frequency carries the integral
        let integral: Complex64 = v.data.iter().sum::<Complex64>() * v.grid.spacing().powi(3) / (2.0 * PI).powi(3);
        assert!((fourier.data[0] - integral).norm() < 1e-14);
    }

    #[test]
    fn homogeneous_and_monotone_in_sigma() {
        let v = bump_volume(12, Vec3::new(0.2, 0.0, 0.0), 0.5, Complex64::new(1.0, -1.0));
        let n = hat_linf_sigma(&v, 4.0);
        let n2 = hat_linf_sigma(&v.scaled(Complex64::new(2.0, 0.0)), 4.0);
        assert!((n2 - 2.0 * n).abs() <= 1e-12 * n);
        let mut last = 0.0;
        for s in [0.0, 1.0, 2.5, 4.0, 6.0] {
            let ns = hat_linf_sigma(&v, s);
            assert!(ns >= last);
            last = ns;
        }
    }

    #[test]
    fn order_zero_coincides() {
        let v = bump_volume(12, Vec3::new(0.0, 0.1, 0.0), 0.5, Complex64::new(1.0, 0.0));
        assert_eq!(hat_c_sigma(&v, 4.0, 0), hat_linf_sigma(&v, 4.0));
        assert!(hat_c_sigma(&v, 4.0, 1) >= hat_c_sigma(&v, 4.0, 0));
    }

    #[test]
    fn translation_bounds_derivative_growth() {
        // a shift by t multiplies the spectrum by e^{i p.t}, so the derivative
        // picks up at most |t| times the undifferentiated spectrum; sigma = 1
        // keeps the sup inside the resolved band
        let t = Vec3::new(0.2, 0.0, 0.0);
        let u = bump_volume(32, Vec3::ZERO, 0.5, Complex64::new(1.0, 0.0));
        let ut = bump_volume(32, t, 0.5, Complex64::new(1.0, 0.0));
        let (c0, c1) = (hat_c_sigma(&u, 1.0, 0), hat_c_sigma(&u, 1.0, 1));
        let c1t = hat_c_sigma(&ut, 1.0, 1);
        assert!(c1t <= c1 + t.norm() * c0 + 1e-6 * c1, "{c1t} vs {c1} + {}", t.norm() * c0);
        assert!(c1t <= (1.0 + t.norm()) * c1);
        assert!((hat_c_sigma(&ut, 1.0, 0) - c0).abs() < 1e-4 * c0);
    }

    #[test]
    fn tensor_norm_is_componentwise_max() {
        let grid = Grid::new(12, 1.0).unwrap();
        let bump =
            Bump { center: Vec3::ZERO, radius: 0.5, amplitude: SymMat3::from_real([1.0, 0.0, 0.0, 3.0, 0.0, 0.0]) };
        let f = BumpPhantom::new(vec![bump], 0.8).unwrap().rasterize(grid);
        let want = hat_linf_sigma(&f.components[3], 4.0);
        assert_eq!(hat_linf_sigma_tensor(&f, 4.0), want);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(WeightedNorm::new(-1.0, 0).is_err());
        assert!(WeightedNorm::new(4.0, 2).is_err());
        assert!(WeightedNorm::new(4.0, 1).is_ok());
    }
}
