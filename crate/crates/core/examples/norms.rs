//! Weighted Fourier norms of a Gaussian, against its closed-form transform
//! `(2 pi)^-3 * integral of u(x) exp(-i p.x) dx`.
use num_complex::Complex64;
use ptomo::field::{Grid, ScalarVolume};
use ptomo::geometry::Vec3;
use ptomo::norms::{direct_transform, hat_c_sigma, spectrum};

fn main() -> ptomo::Result<()> {
    let grid = Grid::new(32, 1.0)?;
    let s = 0.15_f64;
    let g = ScalarVolume::from_fn(grid, |x| Complex64::new((-x.dot(x) / (2.0 * s * s)).exp(), 0.0));
    let exact = |p: Vec3| (2.0 * std::f64::consts::PI).powf(-1.5) * s.powi(3) * (-s * s * p.dot(p) / 2.0).exp();
    let fourier = spectrum(&g);
    for m in [0usize, 1, 3, 6] {
        let p = fourier.frequency(grid.index(m, 0, 0));
        println!(
            "|p| = {:6.2}: grid FFT {:.6e}, direct sum {:.6e}, exact {:.6e}",
            p.norm(),
            fourier.data[grid.index(m, 0, 0)].re,
            direct_transform(&g, p).re,
            exact(p)
        );
    }
    for sigma in [0.0, 2.0, 4.0] {
        println!(
            "sigma = {sigma}: order 0 {:.4e}, order 1 {:.4e}",
            hat_c_sigma(&g, sigma, 0),
            hat_c_sigma(&g, sigma, 1)
        );
    }
    Ok(())
}
