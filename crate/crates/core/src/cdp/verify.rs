//! Independent replay of a certificate against a target on any grid.

use std::collections::{BTreeSet, HashSet};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::engine::{bound_formula, certified_from, spot_audit, CdpCertificate, CdpConfig, RESIDUAL_TOL, SUP_TOL};
use super::selection::{exclusion_violation, u_set};
use super::tree::step_samples;
use crate::accum;
use crate::grid::{self, GridFunction};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub limit: f64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub grid: Vec<usize>,
    pub checks: Vec<CheckEntry>,
    pub pass: bool,
}

impl VerifyReport {
    pub fn failed(&self) -> Vec<&CheckEntry> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

struct Checks(Vec<CheckEntry>);

impl Checks {
    fn flag(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.0.push(CheckEntry {
            name: name.into(),
            pass,
            value: f64::NAN,
            limit: f64::NAN,
            detail: detail.into(),
        });
    }

    /// Passes when `value ≤ limit`.
    fn at_most(&mut self, name: impl Into<String>, value: f64, limit: f64) {
        self.0.push(CheckEntry {
            name: name.into(),
            pass: value <= limit,
            value,
            limit,
            detail: String::new(),
        });
    }
}

fn re_inner(a: &[Complex64], f: &GridFunction, chunk: usize) -> f64 {
    let s = f.samples();
    (accum::sum_complex(s.len(), chunk, |i| a[i] * s[i].conj()) / s.len() as f64).re
}

/// Replays `cert` against `f`, which may live on a different grid than the
/// one the certificate was built on.
pub fn verify_certificate(cert: &CdpCertificate, f: &GridFunction, cfg: &CdpConfig) -> VerifyReport {
    let mut c = Checks(Vec::new());
    let tree = &cert.tree;
    let chunk = cfg.limits.chunk;

    // Labels and picks recorded twice must agree.
    let mut labels = tree.labels();
    labels.sort_unstable_by(|a, b| b.cmp(a));
    let start_ok = tree.start < tree.bases.len() && Some(&tree.bases[tree.start].label) == labels.first();
    c.flag(
        "labels",
        labels == cert.labels && start_ok && tree.t == cert.t,
        format!("{} labels, t = {}", labels.len(), cert.t),
    );
    let recorded: Vec<Vec<i64>> = cert.rounds.iter().map(|r| r.picks.clone()).collect();
    let indices_ok = tree.rounds.iter().flatten().all(|&i| i < tree.bases.len());
    c.flag(
        "picks_match_tree",
        indices_ok && recorded.len() == tree.rounds.len() && recorded == tree.round_labels(),
        format!("{} rounds", recorded.len()),
    );

    // Exclusion sets replayed from S_1 = {n_1}.
    let e: HashSet<i64> = cert.labels.iter().copied().collect();
    let mut s: BTreeSet<i64> = cert.labels.first().into_iter().copied().collect();
    for (i, picks) in recorded.iter().enumerate() {
        let distinct: HashSet<i64> = picks.iter().copied().collect();
        let members = picks.iter().all(|p| e.contains(p)) && distinct.len() == picks.len();
        let violation = exclusion_violation(&e, &s, picks);
        let pass = members && picks.len() == cert.t && violation.is_none();
        let detail = match &violation {
            Some(v) => format!(
                "p = {} with (α, β, γ, δ) = ({}, {}, {}, {}) gives {} ∈ E",
                v.p, v.alpha, v.beta, v.gamma, v.delta, v.value
            ),
            None if !members => "picks are not distinct labels".into(),
            None => format!("|S| = {}", s.len()),
        };
        c.flag(format!("exclusion_round_{}", i + 1), pass, detail);
        let u = u_set(&s, picks);
        s.extend(picks.iter().copied());
        s.extend(u);
    }

    // Arithmetic of the bound.
    let formula = bound_formula(cert.floor, cert.t, cert.iterations);
    let (certified, witness) = certified_from(cert.base_floor, formula, cert.accumulated_error, cert.rounds.len());
    c.flag(
        "bound_arithmetic",
        cert.iterations == cert.rounds.len() + 1
            && (formula - cert.bound_formula_value).abs() <= 1e-12 * formula.abs().max(1.0)
            && (certified - cert.certified_bound).abs() <= 1e-12 * certified.abs().max(1.0)
            && witness == cert.witness
            && cert.base_floor <= cert.floor,
        format!("formula {formula}, certified {certified}"),
    );
    c.flag("degree", tree.degree() == cert.degree, format!("{:?}", tree.degree()));

    // Resample the bases and replay every round on the new grid.
    let dims = f.dims().to_vec();
    let samples: Vec<GridFunction> = match tree
        .bases
        .iter()
        .map(|b| b.sample(&dims, &cfg.limits))
        .collect::<crate::Result<_>>()
    {
        Ok(s) => s,
        Err(err) => {
            c.flag("sampling", false, err.to_string());
            return finish(dims, c);
        }
    };
    if !indices_ok || tree.start >= samples.len() {
        return finish(dims, c);
    }
    let pairing_new = f.pairing_error().unwrap_or(f64::INFINITY);
    let tol_change = cert.pairing_error + pairing_new;

    for (b, s) in tree.bases.iter().zip(&samples) {
        let measured = re_inner(s.samples(), f, chunk);
        let limit = b.floor - b.floor_error - tol_change - 1e-9;
        c.0.push(CheckEntry {
            name: format!("floor_{}", b.label),
            pass: measured >= limit,
            value: measured,
            limit,
            detail: String::new(),
        });
        c.at_most(format!("sup_base_{}", b.label), s.max_modulus(), 1.0 + SUP_TOL);
    }

    let tf = tree.t as f64;
    let mut g = samples[tree.start].samples().to_vec();
    let mut band = samples[tree.start].band().to_vec();
    for (i, r) in tree.rounds.iter().enumerate() {
        let picks: Vec<&[Complex64]> = r.iter().map(|&k| samples[k].samples()).collect();
        let step = step_samples(&g, &picks, tree.t, chunk);
        let fs = f.samples();
        let n = fs.len() as f64;
        let r_z = accum::sum_complex(fs.len(), chunk, |k| g[k] * step.z[k] * fs[k].conj()) / n;
        let r_z2 = accum::sum_complex(fs.len(), chunk, |k| g[k] * step.z[k] * step.z[k] * fs[k].conj()) / n;
        let middle = (r_z / (tf * tf) - r_z2 / tf.powi(4)).norm();
        let pick_bands: Vec<_> = r.iter().map(|&k| samples[k].band().to_vec()).collect();
        band = super::tree::step_band(&band, &pick_bands);
        let exact = band
            .iter()
            .zip(f.band())
            .zip(f.dims())
            .all(|((a, b), &gsz)| match (a, b) {
                (Some(a), Some(b)) => a.sum(b.neg()).is_some_and(|p| p.max_abs() < gsz as u64),
                _ => false,
            });
        let limit = if exact {
            RESIDUAL_TOL
        } else {
            let zmax = tf * (tf - 1.0) / 2.0;
            let m = zmax / (tf * tf) + zmax * zmax / tf.powi(4);
            RESIDUAL_TOL.max(m * f.lipschitz().unwrap_or(f64::INFINITY) * grid::half_cell_sum(f.dims()))
        };
        c.at_most(format!("residual_round_{}", i + 1), middle, limit);
        g = step.next;
        let max = accum::max_real(g.len(), chunk, |k| g[k].norm());
        c.at_most(format!("sup_round_{}", i + 1), max, 1.0 + SUP_TOL);
    }

    let witness_chain = cert.witness_chain();
    let witness_samples: &[Complex64] = match cert.witness {
        super::engine::Witness::Base => samples[tree.start].samples(),
        super::engine::Witness::Iterate => &g,
    };
    let measured = re_inner(witness_samples, f, chunk);
    let scale = measured.abs().max(1.0);
    c.at_most(
        "measured_agreement",
        (measured - cert.measured).abs(),
        tol_change + 1e-9 * scale,
    );
    c.0.push(CheckEntry {
        name: "bound_supported".into(),
        pass: measured >= cert.certified_bound - tol_change - 1e-9 * scale,
        value: measured,
        limit: cert.certified_bound - tol_change,
        detail: String::new(),
    });
    match spot_audit(&witness_chain, &dims, cfg) {
        Ok((max, _, _)) => c.at_most("sup_spot", max, 1.0 + SUP_TOL),
        Err(err) => c.flag("sup_spot", false, err.to_string()),
    }
    finish(dims, c)
}

fn finish(grid: Vec<usize>, c: Checks) -> VerifyReport {
    let pass = c.0.iter().all(|e| e.pass);
    VerifyReport {
        grid,
        checks: c.0,
        pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cdp::engine::cdp_iterate;
    use crate::lattice::LatticeSet;
    use crate::testfns::exponential_basis;

    fn run() -> (CdpCertificate, LatticeSet) {
        let e = LatticeSet::from_values((1..=10).map(|j| 1i64 << j)).unwrap();
        let g = grid::pow2_above(5 * 1022);
        let f = grid::evaluate_fft(&e, &[g]).unwrap();
        let cfg = CdpConfig::default().with_t(2);
        (cdp_iterate(&f, &exponential_basis(&e).unwrap(), 1.0, &cfg).unwrap(), e)
    }

    #[test]
    fn replay_passes() {
        let (cert, e) = run();
        let f = grid::evaluate_fft(&e, &cert.grid).unwrap();
        let report = verify_certificate(&cert, &f, &CdpConfig::default());
        assert!(report.pass, "{:?}", report.failed());
    }

    #[test]
    fn replay_on_finer_grid_agrees() {
        let (cert, e) = run();
        let f = grid::evaluate_fft(&e, &[4 * cert.grid[0]]).unwrap();
        let report = verify_certificate(&cert, &f, &CdpConfig::default());
        assert!(report.pass, "{:?}", report.failed());
    }

    #[test]
    fn tampered_picks_fail() {
        let (mut cert, e) = run();
        cert.rounds[1].picks[1] = cert.labels[1];
        let f = grid::evaluate_fft(&e, &cert.grid).unwrap();
        let report = verify_certificate(&cert, &f, &CdpConfig::default());
        assert!(!report.pass);
        assert!(report.failed().iter().any(|c| c.name == "exclusion_round_2"));
    }
}
