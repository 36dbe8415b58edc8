//! S11 data of a weak phantom against its linearization `1 + J f`; the
//! remainder should shrink quadratically with the amplitude.
use num_complex::Complex64;
use ptomo::field::{standard_phantom, Grid, PhantomKind};
use ptomo::geometry::standard_views;
use ptomo::tensor_inversion::transverse_transform;
use ptomo::transport::{forward_s11, forward_s11_neumann};

fn main() -> ptomo::Result<()> {
    let (n, angles) = (24, 48);
    let grid = Grid::new(n, 1.0)?;
    let views = standard_views(angles, n, 1.0)?;
    for eps in [0.1, 0.05, 0.025] {
        let f = standard_phantom(eps, PhantomKind::Real).rasterize(grid);
        let s11 = forward_s11(&f, &views, 1.0 / 64.0)?;
        let jf = transverse_transform(&f, &views)?;
        let one = Complex64::new(1.0, 0.0);
        let lin: f64 = s11.data.iter().zip(&jf.sinogram().data).map(|(s, j)| (s - one - j).norm()).fold(0.0, f64::max);
        println!("eps = {eps:<6} sup|S11 - 1| = {:.3e}  sup|S11 - 1 - Jf| = {lin:.3e}", s11.sup_distance_to(one));
    }
    let f = standard_phantom(0.05, PhantomKind::Real).rasterize(grid);
    let rk4 = forward_s11(&f, &views, 1.0 / 64.0)?;
    let neumann = forward_s11_neumann(&f, &views, 12, 1.0 / 64.0)?;
    println!("RK4 vs 12-term Neumann series: {:.3e}", rk4.sup_distance(&neumann));
    Ok(())
}
