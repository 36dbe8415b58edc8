//! Iterative reconstruction from simulated S11 data, with the error history
//! against the known truth.
use ptomo::field::{make_cutoff, standard_phantom, Grid, PhantomKind};
use ptomo::geometry::standard_views;
use ptomo::reconstruct::{run, ReconConfig};
use ptomo::transport::forward_s11;

fn main() -> ptomo::Result<()> {
    let eps: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let (n, angles) = (24, 48);
    let truth = standard_phantom(eps, PhantomKind::Real).rasterize(Grid::new(n, 1.0)?);
    let views = standard_views(angles, n, 1.0)?;
    let cfg = ReconConfig { max_iters: 6, ..Default::default() };
    let s11 = forward_s11(&truth, &views, cfg.step)?;
    let state = run(&s11, &make_cutoff(0.8, 0.95)?, &cfg, Some(&truth))?;
    println!("eps = {eps}");
    for r in &state.history {
        println!(
            "n = {}  residual {:.3e}  update {:.3e}  sup error {:.3e}",
            r.n,
            r.residual_sup,
            r.update_sup,
            r.err_sup.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
