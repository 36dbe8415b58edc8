//! Filtered backprojection of an analytic 2D sinogram, compared with the
//! Fourier-slice reconstruction.
use num_complex::Complex64;
use ptomo::radon::{invert_slice, invert_slice_fourier, radial_bump_image, radial_bump_sinogram, RadialBump};

fn rel(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

fn main() -> ptomo::Result<()> {
    let bumps = [
        RadialBump { centre: (0.2, -0.1), radius: 0.5, amplitude: Complex64::new(1.0, 0.0) },
        RadialBump { centre: (-0.35, 0.3), radius: 0.3, amplitude: Complex64::new(-0.5, 0.25) },
    ];
    let m = 64;
    let tau = 2.0 / m as f64;
    let truth = radial_bump_image(&bumps, m, tau);
    for angles in [30, 60, 120, 180] {
        let g = radial_bump_sinogram(&bumps, angles, m, tau)?;
        let fbp = invert_slice(&g)?;
        let fourier = invert_slice_fourier(&g)?;
        println!(
            "K = {angles:>3}: FBP L2 error {:.3e}, Fourier-slice L2 error {:.3e}",
            rel(&fbp.data, &truth.data),
            rel(&fourier.data, &truth.data)
        );
    }
    Ok(())
}
