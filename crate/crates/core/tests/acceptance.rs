//! Acceptance criteria A1–A9 at desk-scale resolution.
//!
//! Each test reports exactly one `A<k> PASS|FAIL` line with the measured
//! quantities. The line is written straight to stderr so it shows up even
//! when the harness captures output.

use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ptomo::field::{
    make_cutoff, standard_phantom, Grid, PhantomKind, ScalarVolume, SymMat3, TensorField, TensorSampler,
};
use ptomo::geometry::{standard_views, RayCoord, Vec3};
use ptomo::norms::{direct_transform, hat_linf_sigma, spectrum, weight};
use ptomo::radon::{invert_slice, invert_slice_fourier, radial_bump_image, radial_bump_sinogram, RadialBump};
use ptomo::reconstruct::{run, ReconConfig};
use ptomo::tensor_inversion::{invert_lambda, transverse_transform, LambdaData};
use ptomo::transport::{
    forward_map, forward_s11, forward_s11_neumann, local_generator, solve_ray_direct, solve_ray_stepping, Mat2,
    Sinogram, Stepping,
};

const ONE: Complex64 = Complex64::new(1.0, 0.0);

fn report(id: &str, pass: bool, detail: String) -> bool {
    let line = format!("{id} {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    pass
}

/// Closed-form exponential of a complex 2x2 matrix.
fn expm2(a: Mat2) -> Mat2 {
    let m = a.0;
    let half_tr = (m[0][0] + m[1][1]) * 0.5;
    let d = ((m[0][0] - m[1][1]) * 0.5).powi(2) + m[0][1] * m[1][0];
    let delta = d.sqrt();
    let (c, s) =
        if delta.norm() < 1e-8 { (ONE + d * 0.5, ONE + d / 6.0) } else { (delta.cosh(), delta.sinh() / delta) };
    let out = Mat2::new(c + s * (m[0][0] - half_tr), s * m[0][1], s * m[1][0], c + s * (m[1][1] - half_tr));
    let e = half_tr.exp();
    Mat2(out.0.map(|r| r.map(|z| z * e)))
}

struct ConstantBall {
    value: SymMat3,
    radius: f64,
}

impl TensorSampler for ConstantBall {
    fn sample(&self, x: Vec3) -> SymMat3 {
        // closed ball: the chord endpoints sit exactly on the sphere
        if x.norm() <= self.radius * (1.0 + 1e-12) {
            self.value
        } else {
            SymMat3::ZERO
        }
    }

    fn support_radius(&self) -> f64 {
        self.radius
    }
}

fn relative_l2(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

fn s11_minus_one_minus_j(s11: &Sinogram, jf: &LambdaData) -> f64 {
    s11.data.iter().zip(&jf.sinogram().data).map(|(s, j)| (s - ONE - j).norm()).fold(0.0, f64::max)
}

#[test]
fn a1_forward_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let views = standard_views(16, 16, 1.0).unwrap();
    let mut exp_err: f64 = 0.0;
    for _ in 0..20 {
        let value =
            SymMat3(std::array::from_fn(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))));
        let ball = ConstantBall { value, radius: 0.9 };
        let frame = views.frame(rng.gen_range(0..6), rng.gen_range(0..16));
        let ray = RayCoord { frame, xi1: rng.gen_range(-0.5..0.5), xi2: rng.gen_range(-0.5..0.5) };
        let chord = 2.0 * (0.81 - ray.impact().powi(2)).sqrt();
        let want = expm2(local_generator(&value, &frame) * chord);
        let got = solve_ray_direct(&ball, &ray, 400).unwrap();
        exp_err = exp_err.max((got - want).max_abs());
    }

    // step-halving on the grid path; the interpolant is polynomial inside each piece
    let f = standard_phantom(3.0, PhantomKind::Real).rasterize(Grid::new(16, 1.0).unwrap());
    let mut orders = Vec::new();
    for _ in 0..10 {
        let frame = views.frame(rng.gen_range(0..6), rng.gen_range(0..16));
        let ray = RayCoord { frame, xi1: rng.gen_range(-0.3..0.3), xi2: rng.gen_range(-0.3..0.3) };
        let s: Vec<Mat2> =
            [1, 2, 4, 8].iter().map(|&k| solve_ray_stepping(&f, &ray, Stepping::PerPiece(k)).unwrap()).collect();
        let d1 = (s[1] - s[2]).max_abs();
        let d2 = (s[2] - s[3]).max_abs();
        if d2 > 1e-13 {
            orders.push((d1 / d2).log2());
        }
    }
    let min_order = orders.iter().copied().fold(f64::INFINITY, f64::min);
    let pass = exp_err <= 1e-8 && orders.len() >= 5 && min_order >= 3.5;
    assert!(report(
        "A1",
        pass,
        format!("max |RK4 - exp(L F)| = {exp_err:.2e} (<= 1e-8); step-halving order min {min_order:.2} over {} rays (>= 3.5)", orders.len())
    ));
}

#[test]
fn a2_transverse_roundtrip() {
    let mut worst = Vec::new();
    let mut zero_ok = true;
    for (n, angles, tol) in [(32, 90, 0.08), (64, 180, 0.05)] {
        let grid = Grid::new(n, 1.0).unwrap();
        let views = standard_views(angles, n, 1.0).unwrap();
        let f = standard_phantom(1.0, PhantomKind::Real).rasterize(grid);
        let rec = invert_lambda(&transverse_transform(&f, &views).unwrap()).unwrap();
        let errs = rec.relative_l2_per_component(&f);
        worst.push((n, angles, errs.iter().copied().fold(0.0, f64::max), tol));
        let z = invert_lambda(&transverse_transform(&TensorField::zeros(grid), &views).unwrap()).unwrap();
        zero_ok &= z.sup_norm() == 0.0;
    }
    let pass = zero_ok && worst.iter().all(|&(_, _, e, tol)| e <= tol);
    let detail: Vec<String> = worst
        .iter()
        .map(|(n, k, e, tol)| format!("n={n},K={k}: max component error {:.2}% (<= {:.0}%)", 100.0 * e, 100.0 * tol))
        .collect();
    assert!(report("A2", pass, format!("{}; zero maps to zero: {zero_ok}", detail.join("; "))));
}

#[test]
fn a3_linearization_order() {
    let (n, angles) = (32, 90);
    let grid = Grid::new(n, 1.0).unwrap();
    let views = standard_views(angles, n, 1.0).unwrap();
    let start = std::time::Instant::now();
    let rem: Vec<f64> = [0.025, 0.05, 0.1]
        .iter()
        .map(|&eps| {
            let f = standard_phantom(eps, PhantomKind::Real).rasterize(grid);
            let s11 = forward_s11(&f, &views, 1.0 / 64.0).unwrap();
            s11_minus_one_minus_j(&s11, &transverse_transform(&f, &views).unwrap())
        })
        .collect();
    let secs = start.elapsed().as_secs_f64();
    let ratios = [rem[1] / rem[0], rem[2] / rem[1]];
    let slope = (rem[2] / rem[0]).log2() / 2.0;
    let pass = ratios.iter().all(|r| (3.2..=4.8).contains(r)) && secs <= 600.0;
    assert!(report(
        "A3",
        pass,
        format!(
            "sup|S11 - 1 - Jf| = {:.3e}, {:.3e}, {:.3e}; ratios {:.3}, {:.3} (in [3.2, 4.8]); slope {slope:.3}; {secs:.0} s",
            rem[0], rem[1], rem[2], ratios[0], ratios[1]
        )
    ));
}

#[test]
fn a4_contraction() {
    let (n, angles) = (32, 90);
    let grid = Grid::new(n, 1.0).unwrap();
    let views = standard_views(angles, n, 1.0).unwrap();
    let chi = make_cutoff(0.8, 0.95).unwrap();
    let errors = |eps: f64, iters: usize| -> Vec<f64> {
        let truth = standard_phantom(eps, PhantomKind::Real).rasterize(grid);
        let cfg = ReconConfig { max_iters: iters, stop_tol: 1e-12, ..Default::default() };
        let s11 = forward_s11(&truth, &views, cfg.step).unwrap();
        let state = run(&s11, &chi, &cfg, Some(&truth)).unwrap();
        state.history.iter().map(|r| r.err_sup.unwrap()).collect()
    };
    let e05 = errors(0.05, 4);
    let e10 = errors(0.1, 2);
    let decreasing = e05.len() == 4 && e05.windows(2).all(|w| w[1] < w[0]);
    let (r05, r10) = (e05[1] / e05[0], e10[1] / e10[0]);
    let factor = r10 / r05;
    let scaling = (2.0 * 0.65..=2.0 * 1.35).contains(&factor);
    let pass = decreasing && scaling;
    let fmt = |v: &[f64]| v.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(", ");
    assert!(report(
        "A4",
        pass,
        format!(
            "err_sup at eps=0.05: [{}] strictly decreasing: {decreasing}; step ratio eps=0.05 {r05:.3}, eps=0.1 {r10:.3}, factor {factor:.3} (need 2 +- 35%)",
            fmt(&e05)
        )
    ));
}

#[test]
fn a5_unitarity() {
    let (n, angles) = (32, 90);
    let grid = Grid::new(n, 1.0).unwrap();
    let views = standard_views(angles, n, 1.0).unwrap();
    let mut worst: f64 = 0.0;
    for eps in [0.05, 1.0] {
        let f = standard_phantom(eps, PhantomKind::Imaginary).rasterize(grid);
        let dev = forward_map(&f, &views, 1.0 / 64.0, |_, s| (s * s.adjoint() - Mat2::IDENTITY).max_abs()).unwrap();
        worst = worst.max(dev.into_iter().fold(0.0, f64::max));
    }
    assert!(report(
        "A5",
        worst <= 1e-7,
        format!("max over rays of |S S^* - I| = {worst:.2e} at eps 0.05 and 1 (<= 1e-7)")
    ));
}

#[test]
fn a6_solver_equivalence() {
    let (n, angles) = (32, 30);
    let grid = Grid::new(n, 1.0).unwrap();
    let views = standard_views(angles, n, 1.0).unwrap();
    let f = standard_phantom(0.05, PhantomKind::Real).rasterize(grid);
    let rk4 = forward_s11(&f, &views, 1.0 / 64.0).unwrap();
    let neumann = forward_s11_neumann(&f, &views, 12, 1.0 / 64.0).unwrap();
    let diff = rk4.sup_distance(&neumann);
    let born = forward_s11_neumann(&f, &views, 1, 1.0 / 64.0).unwrap();
    let jf = transverse_transform(&f, &views).unwrap();
    let born_err = s11_minus_one_minus_j(&born, &jf);
    let pass = diff <= 1e-8 && born_err <= 1e-6;
    assert!(report(
        "A6",
        pass,
        format!("sup|RK4 - Neumann(12)| = {diff:.2e} (<= 1e-8); sup|Neumann(1) - (1 + Jf)| = {born_err:.2e} (<= 1e-6)")
    ));
}

#[test]
fn a7_fbp_oracle() {
    let bumps = [
        RadialBump { centre: (0.2, -0.1), radius: 0.5, amplitude: Complex64::new(1.0, 0.0) },
        RadialBump { centre: (-0.35, 0.3), radius: 0.3, amplitude: Complex64::new(-0.5, 0.25) },
    ];
    let (angles, m) = (180, 64);
    let tau = 2.0 / m as f64;
    let g = radial_bump_sinogram(&bumps, angles, m, tau).unwrap();
    let truth = radial_bump_image(&bumps, m, tau);
    let fbp = invert_slice(&g).unwrap();
    let fourier = invert_slice_fourier(&g).unwrap();
    let e_fbp = relative_l2(&fbp.data, &truth.data);
    let agree = relative_l2(&fourier.data, &fbp.data);
    let pass = e_fbp <= 0.02 && agree <= 0.03;
    assert!(report(
        "A7",
        pass,
        format!("FBP error {:.3}% (<= 2%); Fourier-slice vs FBP {:.3}% (<= 3%)", 100.0 * e_fbp, 100.0 * agree)
    ));
}

#[test]
fn a8_norm_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let grid = Grid::new(16, 1.0).unwrap();
    let random_volume = |rng: &mut ChaCha8Rng| {
        let c = Vec3::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2));
        let a = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let s = rng.gen_range(0.1..0.3);
        ScalarVolume::from_fn(grid, move |x| a * (-(x - c).dot(x - c) / (2.0 * s * s)).exp())
    };
    let u = random_volume(&mut rng);
    let fourier = spectrum(&u);
    let sigma = 4.0;
    let mut oracle: f64 = 0.0;
    for _ in 0..10 {
        let i = rng.gen_range(0..grid.len());
        let p = fourier.frequency(i);
        let want = direct_transform(&u, p);
        let scale = want.norm().max(1e-300);
        let weighted = |z: Complex64| weight(p.norm(), sigma) * z.norm();
        oracle = oracle.max((fourier.data[i] - want).norm() / scale);
        oracle = oracle.max((weighted(fourier.data[i]) - weighted(want)).abs() / weighted(want).max(1e-300));
    }
    let mut algebra: f64 = 0.0;
    for _ in 0..10 {
        let (a, b) = (random_volume(&mut rng), random_volume(&mut rng));
        let na = hat_linf_sigma(&a, sigma);
        let lambda = Complex64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        algebra = algebra.max((hat_linf_sigma(&a.scaled(lambda), sigma) - lambda.norm() * na).abs() / na);
        let excess = hat_linf_sigma(&a.zip_with(&b, |x, y| x + y), sigma) - na - hat_linf_sigma(&b, sigma);
        algebra = algebra.max(excess / na);
    }
    let pass = oracle <= 1e-6 && algebra <= 1e-9;
    assert!(report(
        "A8",
        pass,
        format!("FFT vs direct sum at 10 frequencies: {oracle:.2e} (<= 1e-6); homogeneity/triangle defect {algebra:.2e} (<= 1e-9)")
    ));
}

#[test]
fn a9_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).display().to_string();
    let cli = |args: &[&str]| {
        let argv = std::iter::once("ptomo").chain(args.iter().copied());
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = ptomo::cli::main_with_args(argv, &mut out, &mut err);
        assert_eq!(code, 0, "{}", String::from_utf8_lossy(&err));
    };
    cli(&["phantom", "--n", "16", "-o", &p("truth.vol")]);
    cli(&["forward", "--angles", "32", "-i", &p("truth.vol"), "-o", &p("s11.sin")]);
    for (threads, out) in [("1", "a.vol"), ("3", "b.vol")] {
        cli(&[
            "reconstruct",
            "--angles",
            "32",
            "--max-iters",
            "3",
            "--threads",
            threads,
            "-i",
            &p("s11.sin"),
            "-o",
            &p(out),
        ]);
    }
    let a = std::fs::read(p("a.vol")).unwrap();
    let b = std::fs::read(p("b.vol")).unwrap();
    let pass = !a.is_empty() && a == b;
    assert!(report(
        "A9",
        pass,
        format!("reconstructions with 1 and 3 workers: {} bytes, identical: {}", a.len(), a == b)
    ));
}
