//! The transverse ray transform `J f = I(w f w)` over the six standard views
//! and its closed-form inversion.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::field::{Grid, ScalarVolume, TensorField};
use crate::geometry::ViewSet;
use crate::radon::{invert_volume_with, FilterOptions};
use crate::transport::{line_integrals_view, Sinogram, SinogramKind};

/// Scalar data on the six-view manifold, one block per view direction.
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaData {
    sino: Sinogram,
}

impl LambdaData {
    pub fn new(sino: Sinogram) -> Result<Self> {
        if sino.kind == SinogramKind::S11 {
            return Err(Error::WrongKind { expected: "classical or residual".into(), found: sino.kind.to_string() });
        }
        if !sino.views.is_standard() {
            return Err(invalid("six-view data requires the standard view directions"));
        }
        Ok(LambdaData { sino })
    }

    pub fn zeros(views: ViewSet) -> Result<Self> {
        LambdaData::new(Sinogram::zeros(views, SinogramKind::Classical))
    }

    pub fn views(&self) -> &ViewSet {
        &self.sino.views
    }

    pub fn block(&self, view: usize) -> &[Complex64] {
        self.sino.block(view)
    }

    pub fn sinogram(&self) -> &Sinogram {
        &self.sino
    }

    pub fn into_sinogram(self) -> Sinogram {
        self.sino
    }

    pub fn sup_norm(&self) -> f64 {
        self.sino.sup_norm()
    }
}

/// `I(w f w)` for each of the six views.
pub fn transverse_transform(field: &TensorField, views: &ViewSet) -> Result<LambdaData> {
    if !views.is_standard() {
        return Err(invalid("transverse transform requires the standard view directions"));
    }
    let blocks: Vec<Vec<Complex64>> = (0..views.view_count())
        .into_par_iter()
        .map(|v| {
            let w = views.omegas[v].vec();
            line_integrals_view(&field.contract(w, w), views, v)
        })
        .collect::<Result<_>>()?;
    let data = blocks.concat();
    LambdaData::new(Sinogram::from_data(views.clone(), SinogramKind::Classical, data)?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InversionOptions {
    pub filter: FilterOptions,
    /// Multiplier on the diagonal correction in the off-diagonal assembly.
    /// Exactly 1 for the true inverse; other values exist for fault-injection checks.
    pub gain: f64,
}

impl Default for InversionOptions {
    fn default() -> Self {
        InversionOptions { filter: FilterOptions::default(), gain: 1.0 }
    }
}

pub fn invert_lambda(data: &LambdaData) -> Result<TensorField> {
    invert_lambda_with(data, InversionOptions::default())
}

pub fn invert_lambda_with(data: &LambdaData, opts: InversionOptions) -> Result<TensorField> {
    let u = invert_views(data, opts.filter)?;
    assemble(u, opts.gain)
}

/// The six scalar reconstructions `u_i = I^{-1} g_i`.
pub fn invert_views(data: &LambdaData, filter: FilterOptions) -> Result<[ScalarVolume; 6]> {
    let u: Vec<ScalarVolume> =
        (0..6).into_par_iter().map(|v| invert_volume_with(&data.sino, v, filter)).collect::<Result<_>>()?;
    Ok(u.try_into().expect("six views"))
}

/// Diagonal entries first, then the off-diagonals from the mixed views:
/// `f12 = u4 - (f11 + f22)/2`, `f13 = u5 - (f11 + f33)/2`, `f23 = u6 - (f22 + f33)/2`.
pub fn assemble(u: [ScalarVolume; 6], gain: f64) -> Result<TensorField> {
    let grid: Grid = u[0].grid;
    if u.iter().any(|v| v.grid != grid) {
        return Err(Error::ShapeMismatch("view reconstructions live on different grids".into()));
    }
    let [f11, f22, f33, u4, u5, u6] = u;
    let off = |mixed: &ScalarVolume, a: &ScalarVolume, b: &ScalarVolume| {
        let mut out = mixed.clone();
        for ((o, x), y) in out.data.iter_mut().zip(&a.data).zip(&b.data) {
            *o -= (x + y) * (0.5 * gain);
        }
        out
    };
    let f12 = off(&u4, &f11, &f22);
    let f13 = off(&u5, &f11, &f33);
    let f23 = off(&u6, &f22, &f33);
    TensorField::unsupported([f11, f22, f33, f12, f13, f23])
}
