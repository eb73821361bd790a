//! Freiman isomorphisms and the nested three-level pipeline.
//!
//! A map `θ : A → Z` is a Freiman isomorphism of degree `k` when
//! `a_1 + … + a_k = a'_1 + … + a'_k` holds exactly when the images satisfy
//! the same equation. The canonical map of a box `[0, N_1) × [0, N_2) × [0, N_3)`
//! is `θ(x, y, z) = x + B y + B² z`; with `B ≥ k (N − 1) + 1` no k-fold digit
//! sum carries, so it is an isomorphism of degree `k`.
//!
//! [`bound_3d_via_embedding`] runs the CDP engine three times on `θ(A)`:
//! per row with exponentials, per planar slice with the row functions, and
//! once over the slices. Each level's final iterate becomes a base function
//! of the next level with its measured pairing as floor.

use std::collections::HashMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cdp::engine::{cdp_iterate, CdpCertificate, CdpConfig};
use crate::cdp::pichorides::choose_t;
use crate::cdp::selection::{davenport_select, Selection, SelectionState};
use crate::cdp::tree::Chain;
use crate::error::{Error, Result};
use crate::grid::{self, pow2_above};
use crate::lattice::{self, LatticeSet, Point};
use crate::testfns::{exponential_basis, BaseTestFn, Payload};

pub const DEFAULT_BRUTE_BUDGET: u128 = 100_000_000;

/// Largest box the canonical map materializes.
pub const MAX_BOX_POINTS: u128 = 1 << 24;

/// Largest sumset built by the spectrum audits.
pub const MAX_AUDIT_SUMSET: usize = 1 << 20;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapKind {
    Canonical {
        #[serde(rename = "B")]
        base: i64,
        extents: Vec<i64>,
    },
    Explicit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verification {
    Analytic,
    BruteForced(u32),
    Unverified,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FreimanMap {
    pub domain: LatticeSet,
    pub image: LatticeSet,
    /// Domain point and its image, in domain order.
    pub pairs: Vec<(Point, i64)>,
    pub k: u32,
    pub kind: MapKind,
    pub verified: Verification,
}

/// Serialized form of a map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapFile {
    Canonical {
        #[serde(rename = "B")]
        base: i64,
        k: u32,
        extents: Vec<i64>,
    },
    Explicit {
        k: u32,
        dim: usize,
        pairs: Vec<(Vec<i64>, i64)>,
    },
}

impl FreimanMap {
    /// Builds an explicit map from a table; fails unless it is a bijection.
    pub fn explicit(dim: usize, pairs: Vec<(Vec<i64>, i64)>, k: u32) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("degree k must be positive".into()));
        }
        let mut table: Vec<(Point, i64)> = Vec::with_capacity(pairs.len());
        for (p, v) in pairs {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
            let mut q = [0i64; 3];
            q[..dim].copy_from_slice(&p);
            table.push((q, v));
        }
        table.sort_unstable();
        let domain = LatticeSet::new(dim, table.iter().map(|&(p, _)| p).collect())?;
        let image = LatticeSet::new(1, table.iter().map(|&(_, v)| [v, 0, 0]).collect())
            .map_err(|e| match e {
                Error::DuplicatePoint(v) => Error::InvalidParameter(format!("image value {} is hit twice", v[0])),
                other => other,
            })?;
        Ok(FreimanMap {
            domain,
            image,
            pairs: table,
            k,
            kind: MapKind::Explicit,
            verified: Verification::Unverified,
        })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn base(&self) -> Option<i64> {
        match self.kind {
            MapKind::Canonical { base, .. } => Some(base),
            MapKind::Explicit => None,
        }
    }

    /// Degree up to which the map is known to be an isomorphism.
    pub fn verified_degree(&self) -> Option<u32> {
        match self.verified {
            Verification::Analytic => Some(self.k),
            Verification::BruteForced(j) => Some(j),
            Verification::Unverified => None,
        }
    }

    pub fn apply(&self, p: &Point) -> Option<i64> {
        match &self.kind {
            MapKind::Canonical { base, extents } => {
                let inside = (0..3).all(|i| p[i] >= 0 && p[i] < extents[i]);
                inside.then(|| p[0] + base * p[1] + base * base * p[2])
            }
            MapKind::Explicit => self
                .pairs
                .binary_search_by(|(q, _)| q.cmp(p))
                .ok()
                .map(|i| self.pairs[i].1),
        }
    }

    pub fn inverse(&self, v: i64) -> Option<Vec<i64>> {
        self.pairs
            .iter()
            .find(|&&(_, w)| w == v)
            .map(|(p, _)| p[..self.dim()].to_vec())
    }

    pub fn to_file(&self) -> MapFile {
        match &self.kind {
            MapKind::Canonical { base, extents } => MapFile::Canonical {
                base: *base,
                k: self.k,
                extents: extents.clone(),
            },
            MapKind::Explicit => MapFile::Explicit {
                k: self.k,
                dim: self.dim(),
                pairs: self
                    .pairs
                    .iter()
                    .map(|(p, v)| (p[..self.dim()].to_vec(), *v))
                    .collect(),
            },
        }
    }

    /// Rebuilds a map; canonical maps regain their analytic status when the base allows it.
    pub fn from_file(file: &MapFile) -> Result<Self> {
        match file {
            MapFile::Canonical { base, k, extents } => canonical_with_base(extents, *k, *base),
            MapFile::Explicit { k, dim, pairs } => FreimanMap::explicit(*dim, pairs.clone(), *k),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(text)?)
    }
}

/// `B = k (max N − 1) + 1`.
pub fn canonical_base(extents: &[i64], k: u32) -> i64 {
    let n = extents.iter().copied().max().unwrap_or(1);
    k as i64 * (n - 1) + 1
}

pub fn canonical_embedding(extents: &[i64], k: u32) -> Result<FreimanMap> {
    if extents.len() == 3 && extents.iter().all(|&n| n >= 1) {
        canonical_with_base(extents, k, canonical_base(extents, k))
    } else {
        Err(Error::InvalidParameter(format!("extents must be three positive integers, got {extents:?}")))
    }
}

/// Canonical map with an arbitrary base, marked analytic when the base is large enough.
pub fn canonical_with_base(extents: &[i64], k: u32, base: i64) -> Result<FreimanMap> {
    if extents.len() != 3 || extents.iter().any(|&n| n < 1) {
        return Err(Error::InvalidParameter(format!("extents must be three positive integers, got {extents:?}")));
    }
    if k == 0 || base < 1 {
        return Err(Error::InvalidParameter(format!("need k ≥ 1 and B ≥ 1, got k = {k}, B = {base}")));
    }
    let count: u128 = extents.iter().map(|&n| n as u128).product();
    if count > MAX_BOX_POINTS {
        return Err(Error::InvalidParameter(format!("box of {count} points is too large to tabulate")));
    }
    let b = base as i128;
    let top = (extents[0] - 1) as i128 + b * (extents[1] - 1) as i128 + b * b * (extents[2] - 1) as i128;
    let bound = crate::config::DEFAULT_COORD_BOUND as i128;
    if top * k as i128 > bound {
        return Err(Error::CoordinateBound { value: top * k as i128, bound: bound as i64 });
    }
    let mut pairs = Vec::with_capacity(count as usize);
    for z in 0..extents[2] {
        for y in 0..extents[1] {
            for x in 0..extents[0] {
                pairs.push(([x, y, z], x + base * y + base * base * z));
            }
        }
    }
    pairs.sort_unstable();
    let domain = LatticeSet::new(3, pairs.iter().map(|&(p, _)| p).collect())?;
    let image = LatticeSet::collapsed(1, pairs.iter().map(|&(_, v)| [v, 0, 0]).collect())?;
    let verified = if no_carry(extents, k, base) {
        Verification::Analytic
    } else {
        Verification::Unverified
    };
    Ok(FreimanMap {
        domain,
        image,
        pairs,
        k,
        kind: MapKind::Canonical {
            base,
            extents: extents.to_vec(),
        },
        verified,
    })
}

/// k-fold digit sums of the two lower digits stay in `[0, B − 1]`.
fn no_carry(extents: &[i64], k: u32, base: i64) -> bool {
    extents[..2].iter().all(|&n| k as i128 * (n - 1) as i128 <= base as i128 - 1)
}

/// Two k-tuples whose sums agree on one side of the map but not the other.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreimanWitness {
    pub left: Vec<Vec<i64>>,
    pub right: Vec<Vec<i64>>,
    pub domain_sums_equal: bool,
    pub image_sums_equal: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyMethod {
    Analytic,
    BruteForce,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum FreimanCheck {
    Pass { method: VerifyMethod },
    Fail { witness: FreimanWitness },
}

impl FreimanCheck {
    pub fn passed(&self) -> bool {
        matches!(self, FreimanCheck::Pass { .. })
    }
}

pub fn verify_freiman(map: &FreimanMap, k: u32) -> Result<FreimanCheck> {
    verify_freiman_with_budget(map, k, DEFAULT_BRUTE_BUDGET)
}

/// Checks degree `k`: analytically for canonical maps with a carry-free base,
/// otherwise over all pairs of k-tuples when `|A|^{2k}` fits the budget.
pub fn verify_freiman_with_budget(map: &FreimanMap, k: u32, budget: u128) -> Result<FreimanCheck> {
    if k == 0 {
        return Err(Error::InvalidParameter("degree k must be positive".into()));
    }
    if let MapKind::Canonical { base, extents } = &map.kind {
        if no_carry(extents, k, *base) {
            return Ok(FreimanCheck::Pass {
                method: VerifyMethod::Analytic,
            });
        }
    }
    let n = map.pairs.len() as u128;
    let work = n.checked_pow(2 * k).unwrap_or(u128::MAX);
    if work > budget {
        return Err(Error::FreimanBudget { work, budget });
    }
    Ok(brute_force(map, k as usize))
}

/// Compares k-fold sums over all multisets; equal k-tuple sums are equal multiset sums.
fn brute_force(map: &FreimanMap, k: usize) -> FreimanCheck {
    let d = map.dim();
    let n = map.pairs.len();
    let mut by_domain: HashMap<[i128; 3], (i128, Vec<usize>)> = HashMap::new();
    let mut by_image: HashMap<i128, ([i128; 3], Vec<usize>)> = HashMap::new();
    let mut idx = vec![0usize; k];
    let tuple = |idx: &[usize]| -> Vec<Vec<i64>> { idx.iter().map(|&i| map.pairs[i].0[..d].to_vec()).collect() };
    loop {
        let mut ds = [0i128; 3];
        let mut is = 0i128;
        for &i in &idx {
            let (p, v) = &map.pairs[i];
            for a in 0..3 {
                ds[a] += p[a] as i128;
            }
            is += *v as i128;
        }
        if let Some((other_is, other)) = by_domain.get(&ds) {
            if *other_is != is {
                return FreimanCheck::Fail {
                    witness: FreimanWitness {
                        left: tuple(other),
                        right: tuple(&idx),
                        domain_sums_equal: true,
                        image_sums_equal: false,
                    },
                };
            }
        } else {
            by_domain.insert(ds, (is, idx.clone()));
        }
        if let Some((other_ds, other)) = by_image.get(&is) {
            if *other_ds != ds {
                return FreimanCheck::Fail {
                    witness: FreimanWitness {
                        left: tuple(other),
                        right: tuple(&idx),
                        domain_sums_equal: false,
                        image_sums_equal: true,
                    },
                };
            }
        } else {
            by_image.insert(is, (ds, idx.clone()));
        }
        // Next non-decreasing index tuple.
        let mut pos = k;
        while pos > 0 && idx[pos - 1] == n - 1 {
            pos -= 1;
        }
        if pos == 0 {
            break;
        }
        idx[pos - 1] += 1;
        let v = idx[pos - 1];
        for slot in idx.iter_mut().skip(pos) {
            *slot = v;
        }
    }
    FreimanCheck::Pass {
        method: VerifyMethod::BruteForce,
    }
}

/// Brute-force verification that records the degree on success.
pub fn verify_and_mark(map: &mut FreimanMap, k: u32) -> Result<FreimanCheck> {
    let check = verify_freiman(map, k)?;
    if let FreimanCheck::Pass { method } = check {
        map.verified = match method {
            VerifyMethod::Analytic if k == map.k => Verification::Analytic,
            _ => Verification::BruteForced(k),
        };
    }
    Ok(check)
}

pub fn image_set(map: &FreimanMap, a: &LatticeSet) -> Result<LatticeSet> {
    if a.dim() != map.dim() {
        return Err(Error::DimensionMismatch {
            expected: map.dim(),
            found: a.dim(),
        });
    }
    let values = a
        .points()
        .iter()
        .map(|p| map.apply(p).ok_or_else(|| Error::PointOutsideDomain(p[..a.dim()].to_vec())))
        .collect::<Result<Vec<i64>>>()?;
    LatticeSet::from_values(values)
}

/// `⌈62 ln r ln s ln p⌉`.
pub fn choose_k_reference(p: u64, r: u64, s: u64) -> Result<u64> {
    if p < 2 || r < 2 || s < 2 {
        return Err(Error::InvalidParameter(format!("need p, r, s ≥ 2, got ({p}, {r}, {s})")));
    }
    let v = 62.0 * (p as f64).ln() * (r as f64).ln() * (s as f64).ln();
    Ok(v.ceil() as u64)
}

/// Conjugated factor counts of the three levels and the degree they require.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeLedger {
    pub alpha: u64,
    pub beta: u64,
    pub gamma: u64,
    pub l: u64,
    pub delta: u64,
}

impl DegreeLedger {
    pub fn new(alpha: u64, beta: u64, l: u64) -> Self {
        let gamma = 2 * alpha * beta + alpha + beta;
        DegreeLedger {
            alpha,
            beta,
            gamma,
            l,
            delta: 2 * l * gamma + l + gamma,
        }
    }

    pub fn consistent(&self) -> bool {
        self.gamma == 2 * self.alpha * self.beta + self.alpha + self.beta
            && self.delta == 2 * self.l * self.gamma + self.l + self.gamma
    }
}

/// Rounds the engine will complete on `labels`, from the label arithmetic alone.
pub fn planned_rounds(labels: &[i64], cfg: &CdpConfig) -> Result<usize> {
    let t = cfg.t_override.unwrap_or_else(|| choose_t(labels.len() as u64));
    if t == 1 {
        return Ok(0);
    }
    let cap = cfg.max_rounds.unwrap_or(t);
    let mut state = SelectionState::new(labels, t)?;
    let mut done = 0;
    while done < cap {
        match davenport_select(&state) {
            Selection::Picked(p) => {
                state.apply(&p);
                done += 1;
            }
            Selection::Failure { .. } => break,
        }
    }
    Ok(done)
}

fn conj_of_rounds(t: usize, rounds: usize) -> u64 {
    if t >= 2 {
        2 * rounds as u64
    } else {
        0
    }
}

/// `plus·X − minus·X` as a sorted set, or `None` past [`MAX_AUDIT_SUMSET`].
pub fn sumset(x: &[i64], plus: u64, minus: u64) -> Option<Vec<i64>> {
    let mut s: Vec<i64> = vec![0];
    let steps = std::iter::repeat(1i64)
        .take(plus as usize)
        .chain(std::iter::repeat(-1i64).take(minus as usize));
    for sign in steps {
        let mut next: Vec<i64> = s.iter().flat_map(|&u| x.iter().map(move |&v| u + sign * v)).collect();
        next.sort_unstable();
        next.dedup();
        if next.len() > MAX_AUDIT_SUMSET {
            return None;
        }
        s = next;
    }
    Some(s)
}

/// Largest spectral coefficient of `chain` on `[g]` outside `allowed`.
fn off_support(chain: &Chain, g: usize, allowed: &[i64], cfg: &CdpConfig) -> Result<f64> {
    let f = chain.sample(&[g], &cfg.limits)?;
    let spec = grid::spectrum(&f);
    let gi = g as i64;
    let residues: std::collections::HashSet<i64> = allowed.iter().map(|v| v.rem_euclid(gi)).collect();
    let coeffs: Vec<Complex64> = (0..gi).map(|r| spec.coefficient(&[r])).collect();
    Ok(coeffs
        .par_iter()
        .enumerate()
        .filter(|(r, _)| !residues.contains(&(*r as i64)))
        .map(|(_, c)| c.norm())
        .reduce(|| 0.0, f64::max))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelRun {
    /// Row label `b_j`, slice label `a_i`, or 0 for the top level.
    pub label: i64,
    /// Slice label for rows.
    pub parent: Option<i64>,
    pub size: usize,
    pub t: usize,
    pub rounds: usize,
    pub floor: f64,
    pub certified_bound: f64,
    /// `Re⟨g, F⟩` for the level's final iterate against its own target.
    pub measured_final: f64,
    pub conjugated: u64,
    pub max_middle_residual: f64,
    /// Largest spectral coefficient off the predicted sumset, when audited.
    pub off_support: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: usize,
    pub runs: Vec<LevelRun>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bound3dReport {
    pub k: u32,
    #[serde(rename = "B")]
    pub base: Option<i64>,
    pub p: usize,
    pub r: usize,
    pub s: usize,
    pub grid: usize,
    /// Whether the grid resolves every product spectrum against `θ(A)`.
    pub grid_exact: bool,
    /// Ledger from the label arithmetic, checked before any numerics.
    pub planned: DegreeLedger,
    /// Ledger from the rounds the engine completed.
    pub degree: DegreeLedger,
    pub delta: u64,
    pub levels: Vec<LevelReport>,
    pub certificate: CdpCertificate,
}

impl Bound3dReport {
    pub fn lower_bound(&self) -> f64 {
        self.certificate.lower_bound()
    }
}

struct Level {
    chain: Chain,
    floor: f64,
    run: LevelRun,
    cert: CdpCertificate,
}

fn run_level(
    target: &LatticeSet,
    bases: Vec<BaseTestFn>,
    k: f64,
    g: usize,
    cfg: &CdpConfig,
    label: i64,
    parent: Option<i64>,
) -> Result<Level> {
    let f = grid::evaluate_fft_with(target, &[g], &cfg.limits)?;
    let size = bases.len();
    let cert = cdp_iterate(&f, &bases, k, cfg)?;
    let chain = cert.tree.clone();
    let conjugated = chain.degree().conjugated;
    let max_middle_residual = cert.rounds.iter().map(|r| r.middle_residual).fold(0.0, f64::max);
    let floor = cert.measured_final;
    Ok(Level {
        floor,
        run: LevelRun {
            label,
            parent,
            size,
            t: cert.t,
            rounds: cert.rounds.len(),
            floor: k,
            certified_bound: cert.certified_bound,
            measured_final: cert.measured_final,
            conjugated,
            max_middle_residual,
            off_support: None,
        },
        chain,
        cert,
    })
}

fn nested(label: i64, level: &Level) -> BaseTestFn {
    BaseTestFn {
        label,
        payload: Payload::Nested {
            chain: Box::new(level.chain.clone()),
        },
        sup_bound: 1.0,
        floor: level.floor,
        floor_error: 1e-9 * level.floor.abs().max(1.0),
    }
}

/// Three nested CDP runs on `θ(A)`: rows along axis 0, planar slices along
/// axis 2. Row labels are the axis-1 coordinates and slice labels the axis-2
/// coordinates of the positive translate of `A`.
pub fn bound_3d_via_embedding(a: &LatticeSet, map: &FreimanMap, cfg: &CdpConfig) -> Result<Bound3dReport> {
    if a.dim() != 3 || map.dim() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            found: if a.dim() != 3 { a.dim() } else { map.dim() },
        });
    }
    let verified = map
        .verified_degree()
        .ok_or_else(|| Error::InvalidParameter("the map is not verified".into()))?;
    let image = image_set(map, a)?;
    let (positive, shift) = lattice::translate_to_positive(a);
    let theta_of = |pos: &Point| -> i64 {
        let orig = [pos[0] - shift[0], pos[1] - shift[1], pos[2] - shift[2]];
        map.apply(&orig).expect("point checked by image_set")
    };

    // Rows grouped by slice: (slice label, [(row label, θ values)]).
    let slices = lattice::planar_slices(&positive, 2)?;
    let mut structure: Vec<(i64, Vec<(i64, Vec<i64>)>)> = Vec::with_capacity(slices.p);
    for sl in &slices.slices {
        let rows = lattice::rows(&sl.content, 0)?;
        let entries = rows
            .rows
            .iter()
            .map(|row| {
                let y = row.label[0];
                let values = row.content.values().into_iter().map(|x| theta_of(&[x, y, sl.label])).collect();
                (y, values)
            })
            .collect();
        structure.push((sl.label, entries));
    }
    let r = structure.iter().map(|(_, rows)| rows.len()).min().unwrap_or(0);
    let s = structure
        .iter()
        .flat_map(|(_, rows)| rows.iter().map(|(_, v)| v.len()))
        .min()
        .unwrap_or(0);

    // Required degree from the label arithmetic of every run.
    let mut alpha = 0;
    let mut beta = 0;
    for (_, rows) in &structure {
        for (_, values) in rows {
            let t = cfg.t_override.unwrap_or_else(|| choose_t(values.len() as u64));
            alpha = alpha.max(conj_of_rounds(t, planned_rounds(values, cfg)?));
        }
        if rows.len() > 1 {
            let labels: Vec<i64> = rows.iter().map(|(y, _)| *y).collect();
            let t = cfg.t_override.unwrap_or_else(|| choose_t(labels.len() as u64));
            beta = beta.max(conj_of_rounds(t, planned_rounds(&labels, cfg)?));
        }
    }
    let l = if structure.len() > 1 {
        let labels: Vec<i64> = structure.iter().map(|(z, _)| *z).collect();
        let t = cfg.t_override.unwrap_or_else(|| choose_t(labels.len() as u64));
        conj_of_rounds(t, planned_rounds(&labels, cfg)?)
    } else {
        0
    };
    let planned = DegreeLedger::new(alpha, beta, l);
    if planned.delta > verified as u64 {
        return Err(Error::DegreeInsufficient {
            delta: planned.delta,
            degree: verified as u64,
        });
    }

    // One grid resolving every product against θ(A).
    let span = (image.hi()[0] - image.lo()[0]) as u64;
    let needed = pow2_above((planned.delta + 1).saturating_mul(span));
    let budget_pow2 = 1usize << (usize::BITS - 1 - cfg.limits.sample_budget.leading_zeros());
    let (g, grid_exact) = if needed <= cfg.limits.sample_budget {
        (needed.max(2), true)
    } else {
        (budget_pow2, false)
    };

    // Level 1: rows, in parallel.
    let row_jobs: Vec<(i64, i64, &Vec<i64>)> = structure
        .iter()
        .flat_map(|(z, rows)| rows.iter().map(move |(y, v)| (*z, *y, v)))
        .collect();
    let level1: Vec<Level> = row_jobs
        .par_iter()
        .map(|&(z, y, values)| {
            let set = LatticeSet::from_values(values.iter().copied())?;
            let mut lv = run_level(&set, exponential_basis(&set)?, 1.0, g, cfg, y, Some(z))?;
            if grid_exact {
                let alpha = lv.run.conjugated;
                if let Some(allowed) = sumset(values, alpha + 1, alpha) {
                    lv.run.off_support = Some(off_support(&lv.chain, g, &allowed, cfg)?);
                }
            }
            Ok(lv)
        })
        .collect::<Result<_>>()?;

    let mut reports = vec![LevelReport {
        level: 1,
        runs: level1.iter().map(|lv| lv.run.clone()).collect(),
    }];
    if structure.len() == 1 && structure[0].1.len() == 1 {
        let top = level1.into_iter().next().expect("one row");
        let degree = DegreeLedger::new(top.run.conjugated, 0, 0);
        return Ok(finish(map, slices.p, r, s, g, grid_exact, planned, degree, reports, top.cert));
    }

    // Level 2: slices.
    let mut level2: Vec<Level> = Vec::with_capacity(structure.len());
    let mut next = level1.iter();
    for (z, rows) in &structure {
        let members: Vec<&Level> = next.by_ref().take(rows.len()).collect();
        let lv = if rows.len() == 1 {
            let only = members[0];
            Level {
                chain: only.chain.clone(),
                floor: only.floor,
                run: LevelRun {
                    label: *z,
                    parent: None,
                    ..only.run.clone()
                },
                cert: only.cert.clone(),
            }
        } else {
            let bases: Vec<BaseTestFn> = members.iter().zip(rows).map(|(lv, (y, _))| nested(*y, lv)).collect();
            let k = members.iter().map(|lv| lv.floor).fold(f64::INFINITY, f64::min);
            let values: Vec<i64> = rows.iter().flat_map(|(_, v)| v.iter().copied()).collect();
            let set = LatticeSet::from_values(values.iter().copied())?;
            let mut lv = run_level(&set, bases, k, g, cfg, *z, None)?;
            if grid_exact {
                let a1 = members.iter().map(|m| m.run.conjugated).max().unwrap_or(0);
                let b = lv.run.conjugated;
                let gamma = 2 * a1 * b + a1 + b;
                if let Some(allowed) = sumset(&values, gamma + 1, gamma) {
                    lv.run.off_support = Some(off_support(&lv.chain, g, &allowed, cfg)?);
                }
            }
            lv
        };
        level2.push(lv);
    }
    reports.push(LevelReport {
        level: 2,
        runs: level2.iter().map(|lv| lv.run.clone()).collect(),
    });
    let alpha = level1.iter().map(|lv| lv.run.conjugated).max().unwrap_or(0);
    let beta = level2
        .iter()
        .zip(&structure)
        .filter(|(_, (_, rows))| rows.len() > 1)
        .map(|(lv, _)| lv.run.conjugated)
        .max()
        .unwrap_or(0);
    if level2.len() == 1 {
        let top = level2.into_iter().next().expect("one slice");
        let degree = DegreeLedger::new(alpha, beta, 0);
        return Ok(finish(map, slices.p, r, s, g, grid_exact, planned, degree, reports, top.cert));
    }

    // Level 3: the whole set.
    let bases: Vec<BaseTestFn> = level2.iter().zip(&structure).map(|(lv, (z, _))| nested(*z, lv)).collect();
    let k = level2.iter().map(|lv| lv.floor).fold(f64::INFINITY, f64::min);
    let top = run_level(&image, bases, k, g, cfg, 0, None)?;
    reports.push(LevelReport {
        level: 3,
        runs: vec![top.run.clone()],
    });
    let degree = DegreeLedger::new(alpha, beta, top.run.conjugated);
    Ok(finish(map, slices.p, r, s, g, grid_exact, planned, degree, reports, top.cert))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    map: &FreimanMap,
    p: usize,
    r: usize,
    s: usize,
    g: usize,
    grid_exact: bool,
    planned: DegreeLedger,
    degree: DegreeLedger,
    levels: Vec<LevelReport>,
    certificate: CdpCertificate,
) -> Bound3dReport {
    debug_assert!(degree.delta <= planned.delta);
    Bound3dReport {
        k: map.k,
        base: map.base(),
        p,
        r,
        s,
        grid: g,
        grid_exact,
        planned,
        delta: degree.delta,
        degree,
        levels,
        certificate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn canonical_base_and_values() {
        let m = canonical_embedding(&[3, 3, 3], 2).unwrap();
        assert_eq!(m.base(), Some(5));
        assert_eq!(m.apply(&[1, 2, 0]), Some(11));
        assert_eq!(m.apply(&[0, 0, 0]), Some(0));
        assert_eq!(m.verified, Verification::Analytic);
        assert_eq!(m.image.len(), 27);
        let m1 = canonical_embedding(&[4, 2, 3], 1).unwrap();
        assert_eq!(m1.base(), Some(4));
    }

    #[test]
    fn canonical_passes_brute_force() {
        let m = canonical_embedding(&[3, 3, 3], 2).unwrap();
        assert_eq!(brute_force(&m, 2), FreimanCheck::Pass { method: VerifyMethod::BruteForce });
        assert!(verify_freiman(&m, 2).unwrap().passed());
    }

    #[test]
    fn small_base_fails_with_carry() {
        let m = canonical_with_base(&[2, 2, 1], 2, 2).unwrap();
        assert_eq!(m.verified, Verification::Unverified);
        match verify_freiman(&m, 2).unwrap() {
            FreimanCheck::Fail { witness } => {
                let sum = |t: &[Vec<i64>]| -> Vec<i64> { (0..3).map(|i| t.iter().map(|p| p[i]).sum()).collect() };
                let img = |t: &[Vec<i64>]| -> i64 { t.iter().map(|p| p[0] + 2 * p[1] + 4 * p[2]).sum() };
                assert_eq!(sum(&witness.left) == sum(&witness.right), witness.domain_sums_equal);
                assert_eq!(img(&witness.left) == img(&witness.right), witness.image_sums_equal);
                assert_ne!(witness.domain_sums_equal, witness.image_sums_equal);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn explicit_linear_maps_pass() {
        let id = FreimanMap::explicit(1, vec![(vec![0], 0), (vec![1], 1), (vec![3], 3)], 2).unwrap();
        assert!(verify_freiman(&id, 2).unwrap().passed());
        let twice = FreimanMap::explicit(1, (0..6).map(|x| (vec![x * x], 2 * x * x)).collect(), 3).unwrap();
        assert!(verify_freiman(&twice, 3).unwrap().passed());
        assert!(FreimanMap::explicit(1, vec![(vec![0], 1), (vec![1], 1)], 1).is_err());
    }

    #[test]
    fn brute_budget_is_enforced() {
        let m = canonical_with_base(&[5, 5, 5], 4, 3).unwrap();
        assert!(matches!(verify_freiman(&m, 4), Err(Error::FreimanBudget { .. })));
    }

    #[test]
    fn image_and_inverse() {
        let m = canonical_embedding(&[2, 3, 2], 2).unwrap();
        let img = image_set(&m, &m.domain).unwrap();
        assert_eq!(img.len(), 12);
        for &(p, v) in &m.pairs {
            assert_eq!(m.inverse(v).unwrap(), p.to_vec());
        }
        let outside = LatticeSet::from_coords(3, &[vec![2, 0, 0]]).unwrap();
        assert!(matches!(image_set(&m, &outside), Err(Error::PointOutsideDomain(_))));
    }

    #[test]
    fn map_file_roundtrip() {
        let m = canonical_embedding(&[3, 2, 2], 5).unwrap();
        assert_eq!(FreimanMap::from_json(&m.to_json().unwrap()).unwrap(), m);
        let e = FreimanMap::explicit(2, vec![(vec![0, 0], 0), (vec![1, 0], 7)], 2).unwrap();
        assert_eq!(FreimanMap::from_json(&e.to_json().unwrap()).unwrap(), e);
        let json: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        assert_eq!(json["kind"], "canonical");
        assert_eq!(json["B"], 11);
    }

    #[test]
    fn reference_degree() {
        assert_eq!(choose_k_reference(3, 3, 3).unwrap(), 83);
        assert_eq!(choose_k_reference(2, 2, 2).unwrap(), 21);
        assert!(choose_k_reference(1, 3, 3).is_err());
    }

    #[test]
    fn ledger_arithmetic() {
        let d = DegreeLedger::new(2, 2, 2);
        assert_eq!((d.gamma, d.delta), (12, 62));
        assert_eq!(DegreeLedger::new(4, 4, 4).delta, 364);
        assert_eq!(DegreeLedger::new(0, 0, 0).delta, 0);
    }

    #[test]
    fn sumset_small() {
        assert_eq!(sumset(&[0, 1], 2, 1).unwrap(), vec![-1, 0, 1, 2]);
        assert_eq!(sumset(&[5], 0, 0).unwrap(), vec![0]);
    }

    #[test]
    fn planned_rounds_for_three_labels() {
        let cfg = CdpConfig::default().with_t(2);
        assert_eq!(planned_rounds(&[1, 2, 3], &cfg).unwrap(), 2);
        assert_eq!(planned_rounds(&[1, 2, 3], &cfg.with_max_rounds(1)).unwrap(), 1);
        assert_eq!(planned_rounds(&[1, 2, 3], &CdpConfig::default()).unwrap(), 0);
    }

    #[test]
    fn single_row_degenerates() {
        let map = canonical_embedding(&[4, 1, 1], 8).unwrap();
        let a = LatticeSet::from_coords(3, &(0..4).map(|x| vec![x, 0, 0]).collect::<Vec<_>>()).unwrap();
        let rep = bound_3d_via_embedding(&a, &map, &CdpConfig::default().with_t(2)).unwrap();
        assert_eq!(rep.levels.len(), 1);
        assert!(rep
            .certificate
            .tree
            .bases
            .iter()
            .all(|b| matches!(b.payload, Payload::Exponential { .. })));
        assert_eq!(rep.degree.delta, rep.degree.alpha);
    }

    proptest! {
        #[test]
        fn canonical_preserves_sums(
            ext in proptest::collection::vec(1i64..5, 3),
            k in 1u32..4,
            seed in proptest::collection::vec(0usize..1000, 8),
        ) {
            let m = canonical_embedding(&ext, k).unwrap();
            let n = m.pairs.len();
            let kk = k as usize;
            let pick = |off: usize| -> Vec<(Point, i64)> { (0..kk).map(|i| m.pairs[seed[(off + i) % seed.len()] % n]).collect() };
            let left = pick(0);
            let right = pick(kk);
            let ds = |t: &[(Point, i64)]| -> [i64; 3] { [0, 1, 2].map(|a| t.iter().map(|(p, _)| p[a]).sum()) };
            let is = |t: &[(Point, i64)]| -> i64 { t.iter().map(|(_, v)| v).sum() };
            prop_assert_eq!(ds(&left) == ds(&right), is(&left) == is(&right));
        }

        #[test]
        fn ledger_matches_formula(a in 0u64..20, b in 0u64..20, l in 0u64..20) {
            let d = DegreeLedger::new(a, b, l);
            prop_assert!(d.consistent());
            prop_assert_eq!(d.delta + 1, (l + 1) * (d.gamma + 1) + l * d.gamma);
        }
    }
}
