//! Symbolic form of a CDP test function.
//!
//! `g_1 = Φ_{n_1}` and each round applies
//! `g ← g (1 − 1/t) − g (z/t² − z²/t⁴) + (1/(4 t^{3/2})) Σ_a Φ_{m_a}`
//! with `z = Σ_{a<b} Φ_{m_a} conj(Φ_{m_b})`. A [`Chain`] stores the base
//! functions, the start index and the picks of every round, which is enough
//! to rebuild `g` on any grid or at any point.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Limits;
use crate::error::{Error, Result};
use crate::grid::{self, Band, Bands, GridFunction};
use crate::testfns::{BaseEval, BaseTestFn};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub t: usize,
    pub bases: Vec<BaseTestFn>,
    pub start: usize,
    /// Indices into `bases` picked in each round, in selection order.
    pub rounds: Vec<Vec<usize>>,
}

/// Factor counts of the products making up `g`: every term has at most
/// `unconjugated` plain factors and `conjugated` conjugated ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Degree {
    pub unconjugated: u64,
    pub conjugated: u64,
}

/// Per-sample data of one round.
pub struct RoundSamples {
    pub next: Vec<Complex64>,
    pub z: Vec<Complex64>,
}

/// Applies one round to sample vectors.
pub fn step_samples(g: &[Complex64], picks: &[&[Complex64]], t: usize, chunk: usize) -> RoundSamples {
    let tf = t as f64;
    let lin = 1.0 / (4.0 * tf.powf(1.5));
    let n = g.len();
    let mut next = vec![Complex64::new(0.0, 0.0); n];
    let mut z = vec![Complex64::new(0.0, 0.0); n];
    next.par_chunks_mut(chunk)
        .zip(z.par_chunks_mut(chunk))
        .enumerate()
        .for_each(|(c, (nx, zz))| {
            let base = c * chunk;
            for k in 0..nx.len() {
                let i = base + k;
                let mut zi = Complex64::new(0.0, 0.0);
                let mut s = Complex64::new(0.0, 0.0);
                for a in 0..picks.len() {
                    s += picks[a][i];
                    for b in a + 1..picks.len() {
                        zi += picks[a][i] * picks[b][i].conj();
                    }
                }
                zz[k] = zi;
                nx[k] = g[i] * super::pichorides::round_factor(tf, zi) + s * lin;
            }
        });
    RoundSamples { next, z }
}

/// Frequency band of `g` after one round, from the bands of `g` and the picks.
pub fn step_band(g: &[Option<Band>], picks: &[Bands]) -> Bands {
    let d = g.len();
    let mut out: Bands = g.to_vec();
    let mut s_band: Option<Bands> = None;
    let mut z_band: Option<Bands> = None;
    for a in 0..picks.len() {
        s_band = Some(match s_band {
            None => picks[a].clone(),
            Some(b) => grid::bands_hull(&b, &picks[a]),
        });
        for b in a + 1..picks.len() {
            let prod = grid::bands_sum(&picks[a], &grid::bands_neg(&picks[b]));
            z_band = Some(match z_band {
                None => prod,
                Some(zb) => grid::bands_hull(&zb, &prod),
            });
        }
    }
    if let Some(zb) = z_band {
        let gz = grid::bands_sum(g, &zb);
        let gz2 = grid::bands_sum(&gz, &zb);
        out = grid::bands_hull(&out, &gz);
        out = grid::bands_hull(&out, &gz2);
    }
    if let Some(sb) = s_band {
        out = grid::bands_hull(&out, &sb);
    }
    debug_assert_eq!(out.len(), d);
    out
}

impl Chain {
    pub fn dim(&self) -> usize {
        self.bases[self.start].dim()
    }

    pub fn labels(&self) -> Vec<i64> {
        self.bases.iter().map(|b| b.label).collect()
    }

    /// The chain stopped after `rounds` rounds.
    pub fn truncated(&self, rounds: usize) -> Chain {
        Chain {
            rounds: self.rounds[..rounds.min(self.rounds.len())].to_vec(),
            ..self.clone()
        }
    }

    pub fn round_labels(&self) -> Vec<Vec<i64>> {
        self.rounds
            .iter()
            .map(|r| r.iter().map(|&i| self.bases[i].label).collect())
            .collect()
    }

    /// A round with `t ≥ 2` multiplies by `z²`, adding two plain and two
    /// conjugated factors; with `t = 1` it only adds a base function.
    pub fn degree(&self) -> Degree {
        let k = if self.t >= 2 { 2 * self.rounds.len() as u64 } else { 0 };
        Degree {
            unconjugated: 1 + k,
            conjugated: k,
        }
    }

    /// `|g| ≤ 1` everywhere follows analytically: all bases are bounded by 1
    /// and either no round ran, `t = 1`, or `t ≥ 100` (Pichorides).
    pub fn analytic_sup(&self) -> bool {
        self.bases.iter().all(BaseTestFn::analytic_sup)
            && (self.rounds.is_empty() || self.t == 1 || self.t >= 100)
    }

    pub fn band(&self) -> Bands {
        let bands: Vec<Bands> = self.bases.iter().map(BaseTestFn::band).collect();
        let mut g = bands[self.start].clone();
        for r in &self.rounds {
            let picks: Vec<Bands> = r.iter().map(|&i| bands[i].clone()).collect();
            g = step_band(&g, &picks);
        }
        g
    }

    /// `g` on the grid `dims`, given the samples of every base on that grid.
    pub fn sample_with(&self, base_samples: &[GridFunction], chunk: usize) -> Result<GridFunction> {
        if base_samples.len() != self.bases.len() {
            return Err(Error::InvalidParameter("one sample set per base is required".into()));
        }
        let dims = base_samples[self.start].dims().to_vec();
        let mut g = base_samples[self.start].samples().to_vec();
        for r in &self.rounds {
            let picks: Vec<&[Complex64]> = r.iter().map(|&i| base_samples[i].samples()).collect();
            g = step_samples(&g, &picks, self.t, chunk).next;
        }
        Ok(GridFunction::from_samples(dims, g)?.with_band(self.band()))
    }

    pub fn sample(&self, dims: &[usize], limits: &Limits) -> Result<GridFunction> {
        let used: Vec<bool> = (0..self.bases.len())
            .map(|i| i == self.start || self.rounds.iter().any(|r| r.contains(&i)))
            .collect();
        let n = grid::checked_samples(dims, limits.sample_budget)?;
        let samples: Vec<GridFunction> = self
            .bases
            .iter()
            .zip(&used)
            .map(|(b, &u)| {
                if u {
                    b.sample(dims, limits)
                } else {
                    GridFunction::from_samples(dims.to_vec(), vec![Complex64::new(0.0, 0.0); n])
                }
            })
            .collect::<Result<_>>()?;
        self.sample_with(&samples, limits.chunk)
    }

    pub fn evaluator(&self) -> Result<ChainEval> {
        Ok(ChainEval {
            t: self.t,
            start: self.start,
            rounds: self.rounds.clone(),
            bases: self
                .bases
                .iter()
                .map(BaseTestFn::evaluator)
                .collect::<Result<_>>()?,
        })
    }
}

/// Pointwise evaluator of a [`Chain`].
#[derive(Clone, Debug)]
pub struct ChainEval {
    t: usize,
    start: usize,
    rounds: Vec<Vec<usize>>,
    bases: Vec<BaseEval>,
}

impl ChainEval {
    pub fn eval(&self, x: &[f64]) -> Complex64 {
        let tf = self.t as f64;
        let mut g = self.bases[self.start].eval(x);
        for r in &self.rounds {
            let v: Vec<Complex64> = r.iter().map(|&i| self.bases[i].eval(x)).collect();
            let mut z = Complex64::new(0.0, 0.0);
            for a in 0..v.len() {
                for b in a + 1..v.len() {
                    z += v[a] * v[b].conj();
                }
            }
            let s: Complex64 = v.iter().sum();
            g = g * super::pichorides::round_factor(tf, z) + s / (4.0 * tf.powf(1.5));
        }
        g
    }
}
