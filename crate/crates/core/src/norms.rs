//! L¹, L² and L∞ norms of exponential sums.
//!
//! `‖F_A‖₂ = |A|^{1/2}` and `‖F_A‖∞ = |A|` are exact. The L¹ norm is
//! estimated by the midpoint rule on doubled grids; the bound
//! `|grid mean − ∫|F_A|| ≤ Lip · Σ_i 1/(2G_i)` uses the Lipschitz constant
//! `2π |A| max_i max_a |a_i|` of the translate of `A` nearest the origin.
//! Grids larger than the in-memory block are evaluated one coset at a time.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::accum::{self, Neumaier};
use crate::config::DEFAULT_CHUNK;
use crate::error::Result;
use crate::grid::{self, evaluate_coset, half_cell_sum, pow2_above, GridFunction};
use crate::lattice::LatticeSet;

pub fn l2_exact(a: &LatticeSet) -> f64 {
    (a.len() as f64).sqrt()
}

pub fn linf_exact(a: &LatticeSet) -> f64 {
    a.len() as f64
}

/// Grid mean of `|f|`.
pub fn l1_grid(f: &GridFunction) -> f64 {
    let s = f.samples();
    accum::sum_real(s.len(), DEFAULT_CHUNK, |i| s[i].norm()) / s.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub grid: Vec<usize>,
    pub value: f64,
    pub error_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub value: f64,
    pub error_bound: f64,
    pub grid: Vec<usize>,
    pub trace: Vec<TraceEntry>,
    /// False when the sample budget ran out before the target was met.
    pub target_met: bool,
}

impl NormEstimate {
    /// Writes the refinement trace as CSV with columns `grid_size,value,error_bound`.
    pub fn write_trace_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["grid_size", "value", "error_bound"])?;
        for t in &self.trace {
            out.write_record([
                format_grid(&t.grid),
                t.value.to_string(),
                t.error_bound.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn format_grid(dims: &[usize]) -> String {
    dims.iter().map(|g| g.to_string()).collect::<Vec<_>>().join("x")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct L1Options {
    pub target_rel_err: f64,
    /// Largest total grid size the refinement may reach.
    pub max_samples: usize,
    /// Largest grid evaluated in one FFT; bigger grids stream by cosets.
    pub block: usize,
    pub chunk: usize,
}

impl Default for L1Options {
    fn default() -> Self {
        L1Options {
            target_rel_err: 1e-4,
            max_samples: 1 << 27,
            block: 1 << 20,
            chunk: DEFAULT_CHUNK,
        }
    }
}

impl L1Options {
    pub fn with_target(mut self, target_rel_err: f64) -> Self {
        self.target_rel_err = target_rel_err;
        self
    }

    pub fn with_max_samples(mut self, max_samples: usize) -> Self {
        self.max_samples = max_samples;
        self
    }
}

/// Grid mean of `|F_A|` on `dims`, streaming cosets of at most `block` samples.
pub fn l1_grid_streaming(a: &LatticeSet, dims: &[usize], block: usize, chunk: usize) -> Result<f64> {
    let total = grid::checked_samples(dims, usize::MAX)?;
    if total <= block {
        let f = grid::evaluate_fft_with(
            a,
            dims,
            &crate::Limits::default().with_sample_budget(block),
        )?;
        return Ok(l1_grid(&f));
    }
    // Coarse grid: halve the largest even axis until it fits the block.
    let mut coarse = dims.to_vec();
    while coarse.iter().product::<usize>() > block {
        let (axis, _) = coarse
            .iter()
            .enumerate()
            .filter(|(k, &h)| h % 2 == 0 && dims[*k] % (h / 2) == 0 && h > 1)
            .max_by_key(|(_, &h)| h)
            .ok_or_else(|| crate::Error::InvalidParameter(format!("cannot split grid {dims:?}")))?;
        coarse[axis] /= 2;
    }
    let factors: Vec<usize> = dims.iter().zip(&coarse).map(|(g, h)| g / h).collect();
    let cosets: usize = factors.iter().product();
    let mut acc = Neumaier::default();
    let mut offset = vec![0usize; dims.len()];
    for c in 0..cosets {
        let mut rest = c;
        for k in (0..dims.len()).rev() {
            offset[k] = rest % factors[k];
            rest /= factors[k];
        }
        let values = evaluate_coset(a, dims, &coarse, &offset);
        acc.add(accum::sum_real(values.len(), chunk, |i| values[i].norm()));
    }
    Ok(acc.total() / total as f64)
}

/// Midpoint-rule estimate of `‖F_A‖₁` on doubling grids until the
/// rigorous bound reaches `target_rel_err · value` or the budget runs out.
pub fn l1_estimate(a: &LatticeSet, opts: &L1Options) -> Result<NormEstimate> {
    if !(opts.target_rel_err > 0.0) {
        return Err(crate::Error::InvalidParameter(
            "target relative error must be positive".into(),
        ));
    }
    let shift = a.centering_shift();
    let neg: Vec<i64> = shift.iter().map(|v| -v).collect();
    let centered = a.translate(&neg)?;
    let lip = grid::exp_sum_lipschitz(&centered);
    let mut dims: Vec<usize> = centered
        .max_abs()
        .iter()
        .map(|&m| pow2_above(2 * m).max(2))
        .collect();
    let mut trace = Vec::new();
    loop {
        let value = l1_grid_streaming(&centered, &dims, opts.block, opts.chunk)?;
        let error_bound = lip * half_cell_sum(&dims);
        trace.push(TraceEntry {
            grid: dims.clone(),
            value,
            error_bound,
        });
        let met = error_bound <= opts.target_rel_err * value;
        let next: u128 = dims.iter().map(|&g| 2 * g as u128).product();
        if met || next > opts.max_samples as u128 {
            return Ok(NormEstimate {
                value,
                error_bound,
                grid: dims,
                trace,
                target_met: met,
            });
        }
        for g in &mut dims {
            *g *= 2;
        }
    }
}
