//! Base test functions `Φ_n` combined by the CDP engine.
//!
//! * `Exponential`: `Φ(x) = e(a·x)`, floor 1 against any sum containing `a`.
//! * `RowSign`: for a row `A_i` of a planar set with fixed coordinate `n`,
//!   `Φ(x) = e(n x_fixed) φ(x_free)` where `φ = f/max(|f|, ε)` is sampled on
//!   a 1-D grid of `G` nodes (constant on the cell around each node) and
//!   `f = F_{A_i}`. Its spectrum lies on the line `{u : u_fixed = n}` and
//!   `⟨Φ, F_{A_i}⟩_grid ≥ l1_grid(f) − ε`.
//! * `Nested`: the test function produced by an earlier CDP run.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cdp::tree::{Chain, ChainEval};
use crate::config::Limits;
use crate::error::{Error, Result};
use crate::grid::{self, e_frac, Band, Bands, GridFunction};
use crate::lattice::{self, LatticeSet};
use crate::norms;

pub const DEFAULT_EPS: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Exponential {
        freq: Vec<i64>,
    },
    RowSign {
        /// Free axis of the row in the plane.
        axis: usize,
        /// Fixed coordinate of the row.
        row_label: i64,
        eps: f64,
        /// Size of the 1-D profile grid.
        grid: usize,
        /// Free coordinates of the row's points.
        row: Vec<i64>,
    },
    Nested {
        chain: Box<Chain>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseTestFn {
    pub label: i64,
    pub payload: Payload,
    pub sup_bound: f64,
    /// Guaranteed lower value `K_n` of `Re⟨Φ_n, F⟩` against the designated sum.
    pub floor: f64,
    pub floor_error: f64,
}

impl BaseTestFn {
    pub fn dim(&self) -> usize {
        match &self.payload {
            Payload::Exponential { freq } => freq.len(),
            Payload::RowSign { .. } => 2,
            Payload::Nested { chain } => chain.dim(),
        }
    }

    /// Whether `|Φ| ≤ 1` holds everywhere, not only at sampled nodes.
    pub fn analytic_sup(&self) -> bool {
        match &self.payload {
            Payload::Exponential { .. } | Payload::RowSign { .. } => true,
            Payload::Nested { chain } => chain.analytic_sup(),
        }
    }

    pub fn band(&self) -> Bands {
        match &self.payload {
            Payload::Exponential { freq } => freq.iter().map(|&k| Some(Band::point(k))).collect(),
            Payload::RowSign { axis, row_label, .. } => {
                let mut b = vec![None; 2];
                b[1 - axis] = Some(Band::point(*row_label));
                b
            }
            Payload::Nested { chain } => chain.band(),
        }
    }

    pub fn sample(&self, dims: &[usize], limits: &Limits) -> Result<GridFunction> {
        if dims.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: dims.len(),
            });
        }
        match &self.payload {
            Payload::Exponential { freq } => GridFunction::exponential(dims.to_vec(), freq, limits),
            Payload::RowSign {
                axis,
                row_label,
                eps,
                grid,
                row,
            } => {
                let n = grid::checked_samples(dims, limits.sample_budget)?;
                let profile = row_profile(row, *grid, *eps)?;
                let free: Vec<Complex64> = (0..dims[*axis])
                    .map(|j| profile[cell_of_node(j, dims[*axis], *grid)])
                    .collect();
                let fixed_axis = 1 - axis;
                let g = dims[fixed_axis];
                let fixed: Vec<Complex64> = (0..g)
                    .map(|j| e_frac(*row_label as i128 * j as i128, g as u64))
                    .collect();
                let samples: Vec<Complex64> = (0..n)
                    .into_par_iter()
                    .map(|idx| {
                        let j = grid::unflatten(idx, dims);
                        free[j[*axis]] * fixed[j[fixed_axis]]
                    })
                    .collect();
                Ok(GridFunction::from_samples(dims.to_vec(), samples)?.with_band(self.band()))
            }
            Payload::Nested { chain } => chain.sample(dims, limits),
        }
    }

    pub fn evaluator(&self) -> Result<BaseEval> {
        Ok(match &self.payload {
            Payload::Exponential { freq } => BaseEval::Exponential(freq.clone()),
            Payload::RowSign {
                axis,
                row_label,
                eps,
                grid,
                row,
            } => BaseEval::RowSign {
                axis: *axis,
                row_label: *row_label,
                profile: row_profile(row, *grid, *eps)?,
            },
            Payload::Nested { chain } => BaseEval::Nested(Box::new(chain.evaluator()?)),
        })
    }
}

/// Pointwise evaluator with precomputed profiles.
#[derive(Clone, Debug)]
pub enum BaseEval {
    Exponential(Vec<i64>),
    RowSign {
        axis: usize,
        row_label: i64,
        profile: Vec<Complex64>,
    },
    Nested(Box<ChainEval>),
}

impl BaseEval {
    pub fn eval(&self, x: &[f64]) -> Complex64 {
        match self {
            BaseEval::Exponential(freq) => {
                let t: f64 = freq
                    .iter()
                    .zip(x)
                    .map(|(&k, &xi)| (k as f64 * xi).rem_euclid(1.0))
                    .sum();
                grid::e(t)
            }
            BaseEval::RowSign {
                axis,
                row_label,
                profile,
            } => {
                let g = profile.len();
                let k = ((x[*axis].rem_euclid(1.0) * g as f64 + 0.5).floor() as usize) % g;
                profile[k] * grid::e((*row_label as f64 * x[1 - axis]).rem_euclid(1.0))
            }
            BaseEval::Nested(chain) => chain.eval(x),
        }
    }
}

/// Index of the profile cell containing node `j / fine`, for a profile on `coarse` nodes.
pub fn cell_of_node(j: usize, fine: usize, coarse: usize) -> usize {
    let num = 2 * j as u128 * coarse as u128 + fine as u128;
    ((num / (2 * fine as u128)) % coarse as u128) as usize
}

/// `φ_j = f_j / max(|f_j|, ε)` on `g` nodes, renormalised so `|φ_j| ≤ 1` exactly.
pub fn row_profile(row: &[i64], g: usize, eps: f64) -> Result<Vec<Complex64>> {
    let set = LatticeSet::from_values(row.iter().copied())?;
    let f = grid::evaluate_fft_with(&set, &[g], &Limits::default().with_sample_budget(usize::MAX))?;
    Ok(f.samples().iter().map(|&z| clamp_sign(z, eps)).collect())
}

fn clamp_sign(z: Complex64, eps: f64) -> Complex64 {
    let p = z / z.norm().max(eps);
    let m = p.norm();
    if m > 1.0 {
        p / m
    } else {
        p
    }
}

/// One exponential per element of `E`, with label the element and floor 1.
pub fn exponential_basis(e: &LatticeSet) -> Result<Vec<BaseTestFn>> {
    if e.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: e.dim(),
        });
    }
    Ok(e.values()
        .into_iter()
        .map(|a| BaseTestFn {
            label: a,
            payload: Payload::Exponential { freq: vec![a] },
            sup_bound: 1.0,
            floor: 1.0,
            floor_error: 0.0,
        })
        .collect())
}

/// Row-sign test functions for the rows of a planar set along the free `axis`.
pub fn row_sign_basis(a: &LatticeSet, axis: usize, eps: f64, g: usize) -> Result<Vec<BaseTestFn>> {
    if a.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: a.dim(),
        });
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("eps must lie in (0, 1), got {eps}")));
    }
    if g == 0 {
        return Err(Error::InvalidParameter("profile grid must be positive".into()));
    }
    let decomposition = lattice::rows(a, axis)?;
    decomposition
        .rows
        .par_iter()
        .map(|row| {
            let f = grid::evaluate_fft_with(&row.content, &[g], &Limits::default().with_sample_budget(usize::MAX))?;
            let l1 = norms::l1_grid(&f);
            Ok(BaseTestFn {
                label: row.label[0],
                payload: Payload::RowSign {
                    axis,
                    row_label: row.label[0],
                    eps,
                    grid: g,
                    row: row.content.values(),
                },
                sup_bound: 1.0,
                floor: l1 - eps,
                floor_error: grid::exp_sum_modulus_lipschitz(&row.content) * grid::half_cell_sum(&[g]),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FloorReport {
    pub label: i64,
    pub measured: f64,
    pub required: f64,
    pub quadrature_error: f64,
}

/// `Re⟨Φ, F⟩` on `F`'s grid, failing when it is below
/// `K − floor_error − quadrature error`.
pub fn floor_check(phi: &BaseTestFn, f: &GridFunction, limits: &Limits) -> Result<FloorReport> {
    let samples = phi.sample(f.dims(), limits)?;
    floor_check_sampled(phi, &samples, f)
}

pub fn floor_check_sampled(phi: &BaseTestFn, samples: &GridFunction, f: &GridFunction) -> Result<FloorReport> {
    let ip = grid::inner_product(samples, f)?;
    let required = phi.floor - phi.floor_error - ip.error_bound;
    let report = FloorReport {
        label: phi.label,
        measured: ip.value.re,
        required,
        quadrature_error: ip.error_bound,
    };
    if report.measured < required - 1e-9 * phi.floor.abs().max(1.0) {
        return Err(Error::FloorViolation {
            label: phi.label,
            measured: report.measured,
            required,
        });
    }
    Ok(report)
}
