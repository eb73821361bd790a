//! Lower bounds for planar sets from their rows.
//!
//! After translating `A` into the positive quadrant, every row `A_i` with
//! fixed coordinate `n_i` contributes a row-sign test function. Products of
//! these functions have spectra on lines `{u : u_fixed = Σ ± n}`, so the
//! label arithmetic of the selection controls orthogonality exactly as for
//! exponentials. The fixed axis grid is large enough for the spectra of all
//! rounds to be resolved; the free axis grid controls the pairing error.

use serde::{Deserialize, Serialize};

use super::engine::{cdp_iterate, CdpCertificate, CdpConfig};
use super::pichorides::choose_t;
use crate::error::{Error, Result};
use crate::grid::{self, pow2_above, GridFunction};
use crate::lattice::{self, LatticeSet};
use crate::testfns::{row_sign_basis, DEFAULT_EPS};

pub const DEFAULT_MIN_GRID: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bound2dConfig {
    /// Free axis of the rows.
    pub axis: usize,
    pub eps: f64,
    /// Profile grid along the free axis; defaults to `max(min_grid, 2^k > span)`.
    pub free_grid: Option<usize>,
    pub min_grid: usize,
    pub engine: CdpConfig,
}

impl Default for Bound2dConfig {
    fn default() -> Self {
        Bound2dConfig {
            axis: 0,
            eps: DEFAULT_EPS,
            free_grid: None,
            min_grid: DEFAULT_MIN_GRID,
            engine: CdpConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bound2dReport {
    /// Translation applied to the input; the certificate refers to `A + shift`.
    pub shift: Vec<i64>,
    pub axis: usize,
    pub eps: f64,
    pub r: usize,
    pub s: usize,
    pub grid: Vec<usize>,
    pub certificate: CdpCertificate,
}

impl Bound2dReport {
    /// Samples of the certified target `F_{A + shift}` on `dims`.
    pub fn target(&self, a: &LatticeSet, dims: &[usize], limits: &crate::Limits) -> Result<GridFunction> {
        grid::evaluate_fft_with(&a.translate(&self.shift)?, dims, limits)
    }
}

/// Grid for a planar set: the fixed axis resolves every round's spectrum,
/// both axes are at least `min_grid`.
pub fn grid_for(a: &LatticeSet, axis: usize, rounds: usize, free_grid: Option<usize>, min_grid: usize) -> Vec<usize> {
    let fixed = 1 - axis;
    let label_span = (a.hi()[fixed] - a.lo()[fixed]) as u64;
    let free_span = (a.hi()[axis] - a.lo()[axis]) as u64;
    let mut dims = vec![0; 2];
    dims[fixed] = pow2_above((2 * rounds as u64 + 1) * label_span).max(min_grid);
    dims[axis] = free_grid.unwrap_or_else(|| pow2_above(free_span).max(min_grid));
    dims
}

pub fn bound_2d(a: &LatticeSet, cfg: &Bound2dConfig) -> Result<Bound2dReport> {
    if a.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: a.dim(),
        });
    }
    if cfg.axis > 1 {
        return Err(Error::InvalidParameter(format!("axis {} out of range", cfg.axis)));
    }
    let (b, shift) = lattice::translate_to_positive(a);
    let rows = lattice::rows(&b, cfg.axis)?;
    let t = cfg.engine.t_override.unwrap_or_else(|| choose_t(rows.r as u64));
    let rounds = if t == 1 { 0 } else { cfg.engine.max_rounds.unwrap_or(t) };
    let dims = grid_for(&b, cfg.axis, rounds, cfg.free_grid, cfg.min_grid);
    let f = grid::evaluate_fft_with(&b, &dims, &cfg.engine.limits)?;
    let bases = row_sign_basis(&b, cfg.axis, cfg.eps, dims[cfg.axis])?;
    let k = bases.iter().map(|x| x.floor).fold(f64::INFINITY, f64::min);
    let certificate = cdp_iterate(&f, &bases, k, &cfg.engine)?;
    Ok(Bound2dReport {
        shift,
        axis: cfg.axis,
        eps: cfg.eps,
        r: rows.r,
        s: rows.s,
        grid: dims,
        certificate,
    })
}
