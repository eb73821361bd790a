//! The CDP iteration with a replayable certificate.
//!
//! Every quantity is measured on the working grid of the target `F`. For
//! any samples `g` with `M = max|g| ≥ 1` at the nodes, reading `g` as
//! constant on each grid cell gives a function bounded by `M` whose pairing
//! with `F = F_A` differs from the grid sum by at most `M · pairing_error`.
//! Hence `‖F‖₁ ≥ Re⟨g, F⟩_grid / M − pairing_error`, which is the bound a
//! certificate claims, with the difference to `certified_bound` reported as
//! its `budget`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pichorides::{self, choose_t};
use super::selection::{advisory_q, davenport_select, feasibility_gauge, FeasibilityGauge, Selection, SelectionState};
use super::tree::{step_band, step_samples, Chain, Degree};
use crate::accum;
use crate::config::Limits;
use crate::error::{Error, Result};
use crate::grid::{self, Band, Bands, GridFunction};
use crate::testfns::{floor_check_sampled, BaseTestFn};

pub const SUP_TOL: f64 = 1e-9;
pub const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CdpConfig {
    pub t_override: Option<usize>,
    /// Round cap; defaults to `t`.
    pub max_rounds: Option<usize>,
    /// Fail with [`Error::Aliased`] when an inner product is not exact on the grid.
    pub require_exact: bool,
    /// Number of nodes of the 4× refined grid used by the spot sup audit.
    pub spot_points: usize,
    pub seed: u64,
    pub limits: Limits,
}

impl Default for CdpConfig {
    fn default() -> Self {
        CdpConfig {
            t_override: None,
            max_rounds: None,
            require_exact: false,
            spot_points: 2048,
            seed: 0,
            limits: Limits::default(),
        }
    }
}

impl CdpConfig {
    pub fn with_t(mut self, t: usize) -> Self {
        self.t_override = Some(t);
        self
    }

    pub fn with_max_rounds(mut self, rounds: usize) -> Self {
        self.max_rounds = Some(rounds);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TSource {
    Override,
    Formula,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    SelectionFailure,
    PreconditionViolation,
    SupViolation,
    ResidualViolation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Witness {
    Base,
    Iterate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub picks: Vec<i64>,
    pub s_size: usize,
    pub u_size: usize,
    pub gauge: FeasibilityGauge,
    pub advisory_q_holds: bool,
    /// `|⟨g_i z, F⟩|` and `|⟨g_i z², F⟩|` on the grid.
    pub residual_z: f64,
    pub residual_z2: f64,
    /// `|⟨g_i (z/t² − z²/t⁴), F⟩|` on the grid.
    pub middle_residual: f64,
    pub residual_exact: bool,
    pub residual_tolerance: f64,
    /// Smallest `t + 2P` and largest `(P² + Q²)/(t⁴/4)` over the grid.
    pub min_t_plus_2p: f64,
    pub max_pq_ratio: f64,
    /// Largest Pichorides expression over the grid.
    pub max_lhs: f64,
    pub sampled_max: f64,
    pub measured_before: f64,
    pub measured_after: f64,
    pub ledger_rhs: f64,
    pub ledger_holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FloorRecord {
    pub label: i64,
    pub floor: f64,
    pub floor_error: f64,
    pub measured: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupAudit {
    pub analytic: bool,
    pub sampled_max: f64,
    pub spot_max: f64,
    pub spot_points: usize,
    pub spot_grid: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdpCertificate {
    /// Labels in descending order.
    pub labels: Vec<i64>,
    pub t: usize,
    pub t_source: TSource,
    /// Number of functions `g_1, …, g_i` built (rounds + 1).
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub floor: f64,
    /// `min(K, Re⟨Φ_{n_1}, F⟩)`, the value certified by `g_1` alone.
    pub base_floor: f64,
    pub floors: Vec<FloorRecord>,
    pub rounds: Vec<RoundRecord>,
    pub bound_formula_value: f64,
    pub accumulated_error: f64,
    pub certified_bound: f64,
    pub witness: Witness,
    /// `Re⟨witness, F⟩` on the grid.
    pub measured: f64,
    /// `Re⟨g_final, F⟩` on the grid.
    pub measured_final: f64,
    pub quadrature_exact: bool,
    pub pairing_error: f64,
    /// `‖F‖₁ ≥ certified_bound − budget`.
    pub budget: f64,
    pub sup_audit: SupAudit,
    pub degree: Degree,
    pub grid: Vec<usize>,
    pub band: Bands,
    pub tree: Chain,
}

impl CdpCertificate {
    /// The test function achieving `certified_bound`.
    pub fn witness_chain(&self) -> Chain {
        match self.witness {
            Witness::Base => self.tree.truncated(0),
            Witness::Iterate => self.tree.clone(),
        }
    }

    /// Lower bound on `‖F‖₁` implied by the certificate.
    pub fn lower_bound(&self) -> f64 {
        self.certified_bound - self.budget
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// `(K / (4√t)) Σ_{n=0}^{i−1} (1 − 1/t)^n`.
pub fn bound_formula(k: f64, t: usize, iterations: usize) -> f64 {
    let tf = t as f64;
    let q = 1.0 - 1.0 / tf;
    let sum: f64 = (0..iterations).map(|n| q.powi(n as i32)).sum();
    k / (4.0 * tf.sqrt()) * sum
}

/// `max(base_floor, formula − accumulated_error)` and the witness achieving it.
pub fn certified_from(base_floor: f64, formula: f64, accumulated: f64, rounds: usize) -> (f64, Witness) {
    let iterate = formula - accumulated;
    if rounds > 0 && iterate > base_floor {
        (iterate, Witness::Iterate)
    } else {
        (base_floor, Witness::Base)
    }
}

/// Runs the iteration against `F` with floor `K`, sampling the bases on `F`'s grid.
pub fn cdp_iterate(f: &GridFunction, bases: &[BaseTestFn], k: f64, cfg: &CdpConfig) -> Result<CdpCertificate> {
    let samples: Vec<GridFunction> = bases
        .iter()
        .map(|b| b.sample(f.dims(), &cfg.limits))
        .collect::<Result<_>>()?;
    cdp_iterate_sampled(f, bases, samples, k, cfg)
}

fn re_inner(a: &[Complex64], f: &GridFunction, chunk: usize) -> Complex64 {
    let s = f.samples();
    accum::sum_complex(s.len(), chunk, |i| a[i] * s[i].conj()) / s.len() as f64
}

fn exact_against(band: &[Option<Band>], f: &GridFunction) -> bool {
    band.iter()
        .zip(f.band())
        .zip(f.dims())
        .all(|((a, b), &g)| match (a, b) {
            (Some(a), Some(b)) => a.sum(b.neg()).is_some_and(|p| p.max_abs() < g as u64),
            _ => false,
        })
}

/// [`cdp_iterate`] with the bases already sampled on `F`'s grid.
pub fn cdp_iterate_sampled(
    f: &GridFunction,
    bases: &[BaseTestFn],
    samples: Vec<GridFunction>,
    k: f64,
    cfg: &CdpConfig,
) -> Result<CdpCertificate> {
    if bases.is_empty() {
        return Err(Error::InvalidParameter("at least one base function is required".into()));
    }
    if samples.len() != bases.len() {
        return Err(Error::InvalidParameter("one sample set per base is required".into()));
    }
    if !(k > 0.0) {
        return Err(Error::InvalidParameter(format!("floor K must be positive, got {k}")));
    }
    let chunk = cfg.limits.chunk;
    let labels: Vec<i64> = bases.iter().map(|b| b.label).collect();
    let (t, t_source) = match cfg.t_override {
        Some(0) => return Err(Error::InvalidParameter("t must be positive".into())),
        Some(t) => (t, TSource::Override),
        None => (choose_t(bases.len() as u64), TSource::Formula),
    };
    let mut state = SelectionState::new(&labels, t)?;
    let index: std::collections::HashMap<i64, usize> =
        labels.iter().enumerate().map(|(i, &l)| (l, i)).collect();

    // Conditions (A) and (B) on the grid.
    let mut floors = Vec::with_capacity(bases.len());
    let mut base_values = Vec::with_capacity(bases.len());
    for (b, s) in bases.iter().zip(&samples) {
        if s.dims() != f.dims() {
            return Err(Error::GridMismatch {
                left: s.dims().to_vec(),
                right: f.dims().to_vec(),
            });
        }
        let m = s.max_modulus();
        if m > b.sup_bound.min(1.0) + SUP_TOL {
            return Err(Error::SupViolation {
                label: b.label,
                max_modulus: m,
            });
        }
        let report = floor_check_sampled(b, s, f)?;
        floors.push(FloorRecord {
            label: b.label,
            floor: b.floor,
            floor_error: b.floor_error,
            measured: report.measured,
        });
        base_values.push(report.measured);
    }

    let start = index[&state.n1()];
    let mut g = samples[start].samples().to_vec();
    let mut g_band: Bands = samples[start].band().to_vec();
    let mut measured = base_values[start];
    let base_floor = k.min(measured);
    let mut rounds: Vec<RoundRecord> = Vec::new();
    let mut picks_idx: Vec<Vec<usize>> = Vec::new();
    let mut accumulated = 0.0;
    let mut stop_reason = StopReason::Completed;
    let tf = t as f64;
    // With t = 1 a round replaces g by Φ/4, which never improves on K.
    let cap = if t == 1 { 0 } else { cfg.max_rounds.unwrap_or(t) };

    while rounds.len() < cap {
        let picks = match davenport_select(&state) {
            Selection::Picked(p) => p,
            Selection::Failure { .. } => {
                stop_reason = StopReason::SelectionFailure;
                break;
            }
        };
        let idx: Vec<usize> = picks.iter().map(|m| index[m]).collect();
        let pick_samples: Vec<&[Complex64]> = idx.iter().map(|&i| samples[i].samples()).collect();
        let step = step_samples(&g, &pick_samples, t, chunk);
        let n = g.len();

        let min_t_plus_2p = step
            .z
            .par_iter()
            .map(|z| tf + 2.0 * z.re)
            .reduce(|| f64::INFINITY, f64::min);
        let max_pq_ratio = accum::max_real(n, chunk, |i| step.z[i].norm_sqr() / (tf.powi(4) / 4.0));
        let max_lhs = accum::max_real(n, chunk, |i| pichorides::pichorides_expr(tf, step.z[i].re, step.z[i].im));
        if min_t_plus_2p < -SUP_TOL * tf || max_pq_ratio > 1.0 + 1e-12 {
            stop_reason = StopReason::PreconditionViolation;
            break;
        }
        let sampled_max = accum::max_real(n, chunk, |i| step.next[i].norm());
        if sampled_max > 1.0 + SUP_TOL {
            stop_reason = StopReason::SupViolation;
            break;
        }

        // Middle part: g (z/t² − z²/t⁴).
        let fs = f.samples();
        let nf = n as f64;
        let r_z = accum::sum_complex(n, chunk, |i| g[i] * step.z[i] * fs[i].conj()) / nf;
        let r_z2 = accum::sum_complex(n, chunk, |i| g[i] * step.z[i] * step.z[i] * fs[i].conj()) / nf;
        let middle = (r_z / (tf * tf) - r_z2 / tf.powi(4)).norm();
        let pick_bands: Vec<Bands> = idx.iter().map(|&i| samples[i].band().to_vec()).collect();
        let next_band = step_band(&g_band, &pick_bands);
        let residual_exact = exact_against(&next_band, f);
        if cfg.require_exact && !residual_exact {
            return Err(Error::Aliased(format!(
                "round {} product band {:?} does not fit grid {:?}",
                rounds.len() + 1,
                next_band,
                f.dims()
            )));
        }
        let residual_tolerance = if residual_exact {
            RESIDUAL_TOL
        } else {
            // First-order bound for the middle part paired with a smooth F.
            let zmax = tf * (tf - 1.0) / 2.0;
            let m = zmax / (tf * tf) + zmax * zmax / tf.powi(4);
            let lip = f.lipschitz().unwrap_or(f64::INFINITY);
            RESIDUAL_TOL.max(m * lip * grid::half_cell_sum(f.dims()))
        };
        if middle > residual_tolerance {
            stop_reason = StopReason::ResidualViolation;
            break;
        }

        let after = re_inner(&step.next, f, chunk).re;
        let floor_sum: f64 = idx.iter().map(|&i| base_values[i].min(k)).sum();
        let lin = 1.0 / (4.0 * tf.powf(1.5));
        let ledger_rhs = (1.0 - 1.0 / tf) * measured + lin * floor_sum;
        let ledger_holds = after >= ledger_rhs - middle - 1e-9;
        // Deficits of picked floors below K and the middle residual.
        let deficit: f64 = idx.iter().map(|&i| (k - base_values[i]).max(0.0)).sum::<f64>() * lin;
        accumulated += middle + deficit;

        let s_size = state.s().len();
        let gauge = feasibility_gauge(&state);
        let advisory = advisory_q(&state, &picks);
        let u = state.apply(&picks);
        rounds.push(RoundRecord {
            picks: picks.clone(),
            s_size,
            u_size: u.len(),
            gauge,
            advisory_q_holds: advisory.holds,
            residual_z: r_z.norm(),
            residual_z2: r_z2.norm(),
            middle_residual: middle,
            residual_exact,
            residual_tolerance,
            min_t_plus_2p,
            max_pq_ratio,
            max_lhs,
            sampled_max,
            measured_before: measured,
            measured_after: after,
            ledger_rhs,
            ledger_holds,
        });
        picks_idx.push(idx);
        g = step.next;
        g_band = next_band;
        measured = after;
    }

    let iterations = rounds.len() + 1;
    let formula = bound_formula(k, t, iterations);
    let (certified_bound, witness) = certified_from(base_floor, formula, accumulated, rounds.len());
    let tree = Chain {
        t,
        bases: bases.to_vec(),
        start,
        rounds: picks_idx,
    };
    let (witness_samples, witness_measured) = match witness {
        Witness::Base => (samples[start].samples(), base_values[start]),
        Witness::Iterate => (&g[..], measured),
    };
    let sampled_max = accum::max_real(witness_samples.len(), chunk, |i| witness_samples[i].norm());
    let witness_chain = match witness {
        Witness::Base => tree.truncated(0),
        Witness::Iterate => tree.clone(),
    };
    let (spot_max, spot_points, spot_grid) = spot_audit(&witness_chain, f.dims(), cfg)?;
    let m = sampled_max.max(1.0);
    let pairing_error = f.pairing_error().unwrap_or(f64::INFINITY);
    let budget = pairing_error
        + certified_bound * (1.0 - 1.0 / m)
        + (certified_bound - witness_measured).max(0.0);
    let band = witness_chain.band();
    let quadrature_exact = exact_against(&band, f);
    Ok(CdpCertificate {
        labels: state.labels().to_vec(),
        t,
        t_source,
        iterations,
        stop_reason,
        floor: k,
        base_floor,
        floors,
        rounds,
        bound_formula_value: formula,
        accumulated_error: accumulated,
        certified_bound,
        witness,
        measured: witness_measured,
        measured_final: measured,
        quadrature_exact,
        pairing_error,
        budget,
        sup_audit: SupAudit {
            analytic: witness_chain.analytic_sup(),
            sampled_max,
            spot_max,
            spot_points,
            spot_grid: spot_grid.clone(),
        },
        degree: tree.degree(),
        grid: f.dims().to_vec(),
        band: tree.band(),
        tree,
    })
}

/// Evaluates `chain` at seeded random nodes of the 4× refined grid.
pub fn spot_audit(chain: &Chain, dims: &[usize], cfg: &CdpConfig) -> Result<(f64, usize, Vec<usize>)> {
    let fine: Vec<usize> = dims.iter().map(|&g| 4 * g).collect();
    let total: u128 = fine.iter().map(|&g| g as u128).product();
    let count = (cfg.spot_points as u128).min(total) as usize;
    let ev = chain.evaluator()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut max = 0.0f64;
    for _ in 0..count {
        let x: Vec<f64> = fine
            .iter()
            .map(|&g| rng.gen_range(0..g) as f64 / g as f64)
            .collect();
        max = max.max(ev.eval(&x).norm());
    }
    Ok((max, count, fine))
}
