//! Iterative reconstruction from `S11` data.
//!
//! `f^1 = chi J^-1 (S11 - 1)`, then `f^{n+1} = chi (f^n + J^-1 (S11 - S11[f^n]))`.

use std::time::Instant;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::field::{apply_cutoff, Cutoff, TensorField};
use crate::norms::hat_linf_sigma_tensor;
use crate::tensor_inversion::{invert_lambda_with, InversionOptions, LambdaData};
use crate::transport::{forward_s11, forward_s11_neumann, Sinogram, SinogramKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForwardSolver {
    Rk4,
    Neumann { terms: usize },
}

impl ForwardSolver {
    pub fn run(self, field: &TensorField, views: &crate::geometry::ViewSet, step: f64) -> Result<Sinogram> {
        match self {
            ForwardSolver::Rk4 => forward_s11(field, views, step),
            ForwardSolver::Neumann { terms } => forward_s11_neumann(field, views, terms, step),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconConfig {
    /// Total number of iterates, counting `f^1`.
    pub max_iters: usize,
    /// Halt once `|f^{n+1} - f^n|_sup / |f^1|_sup` drops below this.
    pub stop_tol: f64,
    pub step: f64,
    /// Weight exponent of the Fourier error diagnostic.
    pub sigma: f64,
    pub forward: ForwardSolver,
    pub inversion: InversionOptions,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig {
            max_iters: 10,
            stop_tol: 1e-4,
            step: 1.0 / 64.0,
            sigma: 4.0,
            forward: ForwardSolver::Rk4,
            inversion: InversionOptions::default(),
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(invalid("max_iters must be at least 1"));
        }
        if !(self.stop_tol > 0.0) {
            return Err(invalid(format!("stop_tol must be positive, got {}", self.stop_tol)));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(invalid(format!("step must be positive, got {}", self.step)));
        }
        if !(self.sigma > 3.0 && self.sigma.is_finite()) {
            return Err(invalid(format!("sigma must exceed 3, got {}", self.sigma)));
        }
        if let ForwardSolver::Neumann { terms: 0 } = self.forward {
            return Err(invalid("Neumann forward solver needs at least one term"));
        }
        Ok(())
    }
}

/// One line of the iteration log.
#[derive(Clone, Debug, PartialEq)]
pub struct IterRecord {
    /// Index of the iterate this record describes (`1` is the linearized estimate).
    pub n: usize,
    /// `|S11 - S11[f^{n-1}]|_sup`, with `S11[0] = 1`.
    pub residual_sup: f64,
    /// `|f^n - f^{n-1}|_sup`, with `f^0 = 0`.
    pub update_sup: f64,
    pub err_sup: Option<f64>,
    pub err_fourier: Option<f64>,
    /// Wall time since the start of the run.
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconState {
    pub iterate: TensorField,
    pub history: Vec<IterRecord>,
}

impl ReconState {
    pub fn iterations(&self) -> usize {
        self.history.len()
    }
}

fn check_s11(s11: &Sinogram) -> Result<()> {
    if s11.kind != SinogramKind::S11 {
        return Err(Error::WrongKind { expected: SinogramKind::S11.to_string(), found: s11.kind.to_string() });
    }
    if !s11.views.is_standard() {
        return Err(invalid("reconstruction requires data on the standard six views"));
    }
    Ok(())
}

fn back(residual: Sinogram, chi: &Cutoff, opts: InversionOptions) -> Result<TensorField> {
    let lambda = LambdaData::new(residual)?;
    Ok(apply_cutoff(chi, &invert_lambda_with(&lambda, opts)?))
}

pub fn initial_estimate(s11: &Sinogram, chi: &Cutoff) -> Result<TensorField> {
    initial_estimate_with(s11, chi, InversionOptions::default())
}

pub fn initial_estimate_with(s11: &Sinogram, chi: &Cutoff, opts: InversionOptions) -> Result<TensorField> {
    check_s11(s11)?;
    let one = Sinogram::filled(s11.views.clone(), SinogramKind::S11, Complex64::new(1.0, 0.0));
    back(s11.residual(&one)?, chi, opts)
}

struct Truth<'a> {
    field: &'a TensorField,
    sigma: f64,
}

impl Truth<'_> {
    fn errors(&self, iterate: &TensorField) -> (f64, f64) {
        let diff = self.field.sub(iterate);
        (diff.sup_norm(), hat_linf_sigma_tensor(&diff, self.sigma))
    }
}

fn record(
    n: usize,
    residual_sup: f64,
    update_sup: f64,
    iterate: &TensorField,
    truth: Option<&Truth>,
    start: Instant,
) -> IterRecord {
    let (err_sup, err_fourier) = match truth.map(|t| t.errors(iterate)) {
        Some((a, b)) => (Some(a), Some(b)),
        None => (None, None),
    };
    IterRecord { n, residual_sup, update_sup, err_sup, err_fourier, seconds: start.elapsed().as_secs_f64() }
}

/// One fixed-point step: appends the record for `f^{n+1}` to the history.
pub fn refine(s11: &Sinogram, state: ReconState, chi: &Cutoff, cfg: &ReconConfig) -> Result<ReconState> {
    refine_inner(s11, state, chi, cfg, None, Instant::now())
}

fn refine_inner(
    s11: &Sinogram,
    mut state: ReconState,
    chi: &Cutoff,
    cfg: &ReconConfig,
    truth: Option<&Truth>,
    start: Instant,
) -> Result<ReconState> {
    check_s11(s11)?;
    let predicted = cfg.forward.run(&state.iterate, &s11.views, cfg.step)?;
    let residual = s11.residual(&predicted)?;
    let residual_sup = residual.sup_norm();
    let correction = back(residual, chi, cfg.inversion)?;
    let next = apply_cutoff(chi, &state.iterate.add(&correction));
    let update_sup = next.sup_distance(&state.iterate);
    let n = state.history.last().map_or(1, |r| r.n + 1);
    state.history.push(record(n, residual_sup, update_sup, &next, truth, start));
    state.iterate = next;
    Ok(state)
}

/// Runs the iteration from the linearized estimate until the relative update
/// drops below `stop_tol`, `max_iters` iterates exist, or divergence is detected
/// (non-finite values, or the update growing twice in a row).
pub fn run(s11: &Sinogram, chi: &Cutoff, cfg: &ReconConfig, truth: Option<&TensorField>) -> Result<ReconState> {
    cfg.validate()?;
    check_s11(s11)?;
    if let Some(t) = truth {
        if t.grid() != crate::field::Grid::new(s11.views.detector_count, s11.views.half_width)? {
            return Err(Error::ShapeMismatch("ground truth is not on the reconstruction grid".into()));
        }
    }
    let truth = truth.map(|field| Truth { field, sigma: cfg.sigma });
    let start = Instant::now();
    let one = Sinogram::filled(s11.views.clone(), SinogramKind::S11, Complex64::new(1.0, 0.0));
    let residual = s11.residual(&one)?;
    let residual_sup = residual.sup_norm();
    let first = back(residual, chi, cfg.inversion)?;
    let scale = first.sup_norm();
    let mut state =
        ReconState { history: vec![record(1, residual_sup, scale, &first, truth.as_ref(), start)], iterate: first };
    if !scale.is_finite() {
        return Err(Error::Diverged { state: Box::new(state) });
    }
    if scale == 0.0 {
        return Ok(state);
    }
    while state.history.len() < cfg.max_iters {
        state = refine_inner(s11, state, chi, cfg, truth.as_ref(), start)?;
        let h = &state.history;
        let last = &h[h.len() - 1];
        let growing = h.len() >= 3
            && last.update_sup > h[h.len() - 2].update_sup
            && h[h.len() - 2].update_sup > h[h.len() - 3].update_sup;
        if !last.update_sup.is_finite() || !last.residual_sup.is_finite() || growing {
            return Err(Error::Diverged { state: Box::new(state) });
        }
        if last.update_sup / scale < cfg.stop_tol {
            break;
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_cutoff, standard_phantom, Grid, PhantomKind};
    use crate::geometry::standard_views;

    fn setup() -> (crate::geometry::ViewSet, Grid, Cutoff) {
        (standard_views(16, 12, 1.0).unwrap(), Grid::new(12, 1.0).unwrap(), make_cutoff(0.8, 0.95).unwrap())
    }

    #[test]
    fn config_validation() {
        assert!(ReconConfig::default().validate().is_ok());
        assert!(ReconConfig { sigma: 3.0, ..Default::default() }.validate().is_err());
        assert!(ReconConfig { max_iters: 0, ..Default::default() }.validate().is_err());
        assert!(ReconConfig { stop_tol: 0.0, ..Default::default() }.validate().is_err());
        assert!(ReconConfig { forward: ForwardSolver::Neumann { terms: 0 }, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn zero_data_converges_immediately() {
        let (views, grid, chi) = setup();
        let s11 = Sinogram::filled(views, SinogramKind::S11, Complex64::new(1.0, 0.0));
        assert_eq!(initial_estimate(&s11, &chi).unwrap().sup_norm(), 0.0);
        let state = run(&s11, &chi, &ReconConfig::default(), Some(&TensorField::zeros(grid))).unwrap();
        assert_eq!(state.iterations(), 1);
        assert_eq!(state.iterate.sup_norm(), 0.0);
        assert_eq!(state.history[0].err_sup, Some(0.0));
    }

    #[test]
    fn rejects_wrong_kind() {
        let (views, _, chi) = setup();
        let s = Sinogram::zeros(views, SinogramKind::Residual);
        assert!(matches!(initial_estimate(&s, &chi), Err(Error::WrongKind { .. })));
    }

    #[test]
    fn truth_is_a_fixed_point() {
        let (views, grid, chi) = setup();
        let f = standard_phantom(0.05, PhantomKind::Real).rasterize(grid);
        let cfg = ReconConfig { step: 1.0 / 16.0, ..Default::default() };
        let s11 = forward_s11(&f, &views, cfg.step).unwrap();
        let state = ReconState { iterate: f.clone(), history: vec![] };
        let next = refine(&s11, state, &chi, &cfg).unwrap();
        assert!(next.iterate.sup_distance(&f) <= 1e-8 * f.sup_norm());
        assert_eq!(next.history[0].residual_sup, 0.0);
    }

    #[test]
    fn iterates_vanish_outside_r1() {
        let (views, grid, chi) = setup();
        let f = standard_phantom(0.05, PhantomKind::Real).rasterize(grid);
        let cfg = ReconConfig { step: 1.0 / 16.0, max_iters: 2, ..Default::default() };
        let s11 = forward_s11(&f, &views, cfg.step).unwrap();
        let state = run(&s11, &chi, &cfg, None).unwrap();
        assert_eq!(state.iterations(), 2);
        for (i, x) in grid.points() {
            if x.norm() >= chi.r1 {
                assert!(state.iterate.at_index(i).max_abs() == 0.0);
            }
        }
    }

    #[test]
    fn max_iters_one_is_linearized_estimate() {
        let (views, grid, chi) = setup();
        let f = standard_phantom(0.05, PhantomKind::Real).rasterize(grid);
        let cfg = ReconConfig { step: 1.0 / 16.0, max_iters: 1, ..Default::default() };
        let s11 = forward_s11(&f, &views, cfg.step).unwrap();
        let state = run(&s11, &chi, &cfg, None).unwrap();
        assert_eq!(state.iterate, initial_estimate(&s11, &chi).unwrap());
    }

    #[test]
    fn large_amplitude_flags_divergence() {
        let (views, grid, chi) = setup();
        let f = standard_phantom(2.0, PhantomKind::Real).rasterize(grid);
        let cfg = ReconConfig { step: 1.0 / 16.0, max_iters: 30, ..Default::default() };
        let s11 = forward_s11(&f, &views, cfg.step).unwrap();
        match run(&s11, &chi, &cfg, Some(&f)) {
            Err(Error::Diverged { state }) => assert!(state.iterations() >= 2),
            other => panic!("expected divergence, got {:?}", other.map(|s| s.history)),
        }
    }
}
