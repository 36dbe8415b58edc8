//! Transverse ray transform over the six views and its closed-form inverse.
use ptomo::field::{standard_phantom, Grid, PhantomKind, COMPONENT_NAMES};
use ptomo::geometry::standard_views;
use ptomo::tensor_inversion::{invert_lambda, transverse_transform};

fn main() -> ptomo::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(32);
    let angles = if n >= 64 { 180 } else { 90 };
    let f = standard_phantom(1.0, PhantomKind::Real).rasterize(Grid::new(n, 1.0)?);
    let views = standard_views(angles, n, 1.0)?;
    let t = std::time::Instant::now();
    let rec = invert_lambda(&transverse_transform(&f, &views)?)?;
    println!("n = {n}, K = {angles}, {:.1} s", t.elapsed().as_secs_f64());
    for (name, e) in COMPONENT_NAMES.iter().zip(rec.relative_l2_per_component(&f)) {
        println!("  {name}: relative L2 error {:.2}%", 100.0 * e);
    }
    Ok(())
}
