//! Small quadrature helpers: Gauss-Legendre rules and cumulative
//! (indefinite) integration on Chebyshev-Lobatto nodes.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// `P_n(x)` and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Chebyshev-Lobatto nodes on `[-1, 1]`, ascending, endpoints included.
pub fn chebyshev_lobatto(p: usize) -> Vec<f64> {
    assert!(p >= 2);
    (0..p).map(|i| -(PI * i as f64 / (p - 1) as f64).cos()).collect()
}

/// Matrix `Q` with `Q[i][k] = int_{-1}^{y_i} l_k(t) dt`, where `l_k` is the
/// Lagrange basis on `nodes`. Applied to node values it gives the running
/// integral from the left end, exact for polynomials of degree < nodes.len().
pub fn cumulative_matrix(nodes: &[f64]) -> Vec<Vec<f64>> {
    let p = nodes.len();
    let (gx, gw) = gauss_legendre(p);
    let basis = |k: usize, t: f64| -> f64 {
        nodes.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, &yj)| (t - yj) / (nodes[k] - yj)).product()
    };
    nodes
        .iter()
        .map(|&yi| {
            let half = 0.5 * (yi + 1.0);
            (0..p)
                .map(|k| gx.iter().zip(&gw).map(|(&x, &w)| w * basis(k, -1.0 + half * (x + 1.0))).sum::<f64>() * half)
                .collect()
        })
        .collect()
}
