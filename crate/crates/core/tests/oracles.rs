//! Oracle checks that cut across modules: slab inversion, the classical
//! transform of radial bumps, unitarity bounds, and the six-view norm.

use num_complex::Complex64;

use ptomo::field::{
    apply_cutoff, make_cutoff, relative_l2, standard_phantom, Bump, BumpPhantom, Grid, PhantomKind, ScalarVolume,
    TensorField,
};
use ptomo::geometry::{standard_views, Vec3};
use ptomo::norms::lambda_norm;
use ptomo::radon::invert_volume;
use ptomo::reconstruct::initial_estimate;
use ptomo::tensor_inversion::{invert_lambda, transverse_transform, LambdaData};
use ptomo::transport::{classical_ray_transform, forward_s11, Sinogram, SinogramKind};

const ONE: Complex64 = Complex64::new(1.0, 0.0);

fn scalar_bump(grid: Grid, centre: Vec3, radius: f64) -> ScalarVolume {
    ScalarVolume::from_fn(grid, move |x| Complex64::new(ptomo::field::bump_profile((x - centre).norm() / radius), 0.0))
}

fn delta0(s11: &Sinogram) -> LambdaData {
    let one = Sinogram::filled(s11.views.clone(), SinogramKind::S11, ONE);
    LambdaData::new(s11.residual(&one).unwrap()).unwrap()
}

#[test]
fn slab_inversion_roundtrip_axis_and_mixed_views() {
    let (n, angles) = (32, 90);
    let grid = Grid::new(n, 1.0).unwrap();
    let views = standard_views(angles, n, 1.0).unwrap();
    let u = scalar_bump(grid, Vec3::new(0.1, -0.15, 0.05), 0.55);
    let sino = classical_ray_transform(&u, &views).unwrap();
    let e1 = relative_l2(&invert_volume(&sino, 0).unwrap(), &u);
    let e4 = relative_l2(&invert_volume(&sino, 3).unwrap(), &u);
    assert!(e1 <= 0.03, "view 1: {e1}");
    assert!(e4 <= 0.05, "view 4: {e4}");
}

#[test]
fn radial_bump_transform_is_angle_independent() {
    // a bump centred on the axis of view 3 looks the same from every angle of that view
    let (n, angles) = (32, 16);
    let grid = Grid::new(n, 1.0).unwrap();
    let views = standard_views(angles, n, 1.0).unwrap();
    let u = scalar_bump(grid, Vec3::ZERO, 0.6);
    let sino = classical_ray_transform(&u, &views).unwrap();
    let peak = sino.sup_norm();
    let mut aniso: f64 = 0.0;
    for j2 in 0..views.slice_count {
        for j1 in 0..views.detector_count {
            let first = sino.get(2, 0, j2, j1);
            for k in 1..angles {
                let d = (sino.get(2, k, j2, j1) - first).norm();
                aniso = aniso.max(d);
            }
        }
    }
    // the grid interpolant is not exactly radial, so compare against the reflection-symmetric angles only
    let mut sym: f64 = 0.0;
    for k in [angles / 4, angles / 2, 3 * angles / 4] {
        for j2 in 0..views.slice_count {
            for j1 in 0..views.detector_count {
                sym = sym.max((sino.get(2, k, j2, j1) - sino.get(2, 0, j2, j1)).norm());
            }
        }
    }
    assert!(sym <= 1e-6 * peak, "quarter-turn anisotropy {sym}");
    assert!(aniso <= 0.02 * peak, "anisotropy {aniso} of peak {peak}");
}

#[test]
fn imaginary_phantom_has_bounded_s11() {
    let grid = Grid::new(24, 1.0).unwrap();
    let views = standard_views(32, 24, 1.0).unwrap();
    let f = standard_phantom(0.5, PhantomKind::Imaginary).rasterize(grid);
    let s11 = forward_s11(&f, &views, 1.0 / 64.0).unwrap();
    let top = s11.data.iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(top <= 1.0 + 1e-9, "{top}");
    assert!(s11.sup_distance_to(ONE) > 1e-3);
}

#[test]
fn lambda_norm_examples() {
    let grid = Grid::new(24, 1.0).unwrap();
    let views = standard_views(48, 24, 1.0).unwrap();
    assert_eq!(lambda_norm(&LambdaData::zeros(views.clone()).unwrap(), 4.0), 0.0);

    let sigma = 4.0;
    let mut jn = Vec::new();
    let mut rem = Vec::new();
    for eps in [0.025, 0.05, 0.1] {
        let f = standard_phantom(eps, PhantomKind::Real).rasterize(grid);
        let jf = transverse_transform(&f, &views).unwrap();
        jn.push(lambda_norm(&jf, sigma));
        let d0 = delta0(&forward_s11(&f, &views, 1.0 / 64.0).unwrap());
        let diff = d0.sinogram().residual(jf.sinogram()).unwrap();
        rem.push(lambda_norm(&LambdaData::new(diff).unwrap(), sigma));
    }
    let slope = (jn[2] / jn[0]).log2() / 2.0;
    assert!((slope - 1.0).abs() <= 1e-6, "slope {slope}");
    for w in rem.windows(2) {
        let r = w[1] / w[0];
        assert!((3.2..=4.8).contains(&r), "remainder ratio {r} ({rem:?})");
    }
}

#[test]
fn linearized_estimate_error_is_quadratic_beyond_the_inversion_floor() {
    // f - f1 = (f - chi J^-1 J f) + chi J^-1 (Delta0 - J f): the first term is the
    // linear discretization floor, the second carries the quadratic remainder.
    let grid = Grid::new(24, 1.0).unwrap();
    let views = standard_views(48, 24, 1.0).unwrap();
    let chi = make_cutoff(0.8, 0.95).unwrap();
    let gap = |eps: f64| {
        let f = standard_phantom(eps, PhantomKind::Real).rasterize(grid);
        let f1 = initial_estimate(&forward_s11(&f, &views, 1.0 / 64.0).unwrap(), &chi).unwrap();
        let lin: TensorField = apply_cutoff(&chi, &invert_lambda(&transverse_transform(&f, &views).unwrap()).unwrap());
        f1.sup_distance(&lin)
    };
    let (a, b, c) = (gap(0.025), gap(0.05), gap(0.1));
    for r in [b / a, c / b] {
        assert!((3.2..=4.8).contains(&r), "ratio {r}: {a:e} {b:e} {c:e}");
    }
}

#[test]
fn s11_deviation_is_linear_in_amplitude() {
    let grid = Grid::new(24, 1.0).unwrap();
    let views = standard_views(32, 24, 1.0).unwrap();
    let dev: Vec<f64> = [0.025, 0.05, 0.1]
        .iter()
        .map(|&eps| {
            forward_s11(&standard_phantom(eps, PhantomKind::Real).rasterize(grid), &views, 1.0 / 64.0)
                .unwrap()
                .sup_distance_to(ONE)
        })
        .collect();
    let slope = (dev[2] / dev[0]).log2() / 2.0;
    assert!((slope - 1.0).abs() <= 0.05, "slope {slope} from {dev:?}");
}

#[test]
fn inversion_gain_is_stable_across_shifted_and_rescaled_phantoms() {
    // lambda_hat = sup|J^-1 g| / sup|g| for translates and complex rescalings of one phantom
    let grid = Grid::new(24, 1.0).unwrap();
    let views = standard_views(48, 24, 1.0).unwrap();
    let base = standard_phantom(1.0, PhantomKind::Real);
    let shifts = [(0.0, 0.0, 0.0), (0.08, -0.05, 0.02), (-0.1, 0.1, -0.06), (0.03, 0.09, 0.1)];
    let scales =
        [Complex64::new(1.0, 0.0), Complex64::new(0.0, 2.5), Complex64::new(-0.2, 0.3), Complex64::new(1.5, -1.0)];
    let gains: Vec<f64> = shifts
        .iter()
        .zip(scales)
        .map(|(&(x, y, z), s)| {
            let bumps = base.bumps.iter().map(|b| Bump { center: b.center + Vec3::new(x, y, z), ..*b }).collect();
            let f = BumpPhantom::new(bumps, 0.95).unwrap().scaled(s).rasterize(grid);
            let g = transverse_transform(&f, &views).unwrap();
            invert_lambda(&g).unwrap().sup_norm() / g.sup_norm()
        })
        .collect();
    let mean = gains.iter().sum::<f64>() / gains.len() as f64;
    for g in &gains {
        assert!((g / mean - 1.0).abs() <= 0.1, "{gains:?}");
    }
}
