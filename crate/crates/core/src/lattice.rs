//! Finite subsets of Z^d for d in {1, 2, 3}.
//!
//! A [`LatticeSet`] keeps its points sorted lexicographically and
//! duplicate-free, with cached per-axis bounds. Rows fix every coordinate
//! except one; planar slices fix a single coordinate of a 3-D set.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::DEFAULT_COORD_BOUND;
use crate::error::{Error, Result};

/// A lattice point; coordinates past the set's dimension are zero.
pub type Point = [i64; 3];

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LatticeSet {
    dim: usize,
    points: Vec<Point>,
    lo: Point,
    hi: Point,
}

impl LatticeSet {
    /// Builds a set, rejecting duplicates and coordinates beyond the default bound.
    pub fn new(dim: usize, points: Vec<Point>) -> Result<Self> {
        Self::with_bound(dim, points, DEFAULT_COORD_BOUND)
    }

    pub fn with_bound(dim: usize, mut points: Vec<Point>, bound: i64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        if points.is_empty() {
            return Err(Error::EmptySet);
        }
        for p in &points {
            for (axis, &c) in p.iter().enumerate() {
                if axis >= dim && c != 0 {
                    return Err(Error::InvalidParameter(format!(
                        "point {p:?} has a nonzero coordinate beyond dimension {dim}"
                    )));
                }
                if c.unsigned_abs() > bound as u64 {
                    return Err(Error::CoordinateBound {
                        value: c as i128,
                        bound,
                    });
                }
            }
        }
        points.sort_unstable();
        if let Some(w) = points.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicatePoint(w[0][..dim].to_vec()));
        }
        Ok(Self::from_sorted_unchecked(dim, points))
    }

    /// Like [`LatticeSet::new`] but collapses repeated points.
    pub fn collapsed(dim: usize, mut points: Vec<Point>) -> Result<Self> {
        points.sort_unstable();
        points.dedup();
        Self::new(dim, points)
    }

    pub fn from_coords(dim: usize, coords: &[Vec<i64>]) -> Result<Self> {
        let mut points = Vec::with_capacity(coords.len());
        for c in coords {
            if c.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: c.len(),
                });
            }
            let mut p = [0i64; 3];
            p[..dim].copy_from_slice(c);
            points.push(p);
        }
        Self::new(dim, points)
    }

    /// One-dimensional set from integer values; repeated values collapse.
    pub fn from_values(values: impl IntoIterator<Item = i64>) -> Result<Self> {
        Self::collapsed(1, values.into_iter().map(|v| [v, 0, 0]).collect())
    }

    fn from_sorted_unchecked(dim: usize, points: Vec<Point>) -> Self {
        let mut lo = [0i64; 3];
        let mut hi = [0i64; 3];
        for axis in 0..dim {
            lo[axis] = points.iter().map(|p| p[axis]).min().unwrap_or(0);
            hi[axis] = points.iter().map(|p| p[axis]).max().unwrap_or(0);
        }
        LatticeSet {
            dim,
            points,
            lo,
            hi,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn coords(&self) -> impl Iterator<Item = &[i64]> + '_ {
        self.points.iter().map(move |p| &p[..self.dim])
    }

    /// Values of a one-dimensional set, ascending.
    pub fn values(&self) -> Vec<i64> {
        self.points.iter().map(|p| p[0]).collect()
    }

    pub fn lo(&self) -> &[i64] {
        &self.lo[..self.dim]
    }

    pub fn hi(&self) -> &[i64] {
        &self.hi[..self.dim]
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.points.binary_search(p).is_ok()
    }

    /// Largest |coordinate| along each axis.
    pub fn max_abs(&self) -> Vec<u64> {
        (0..self.dim)
            .map(|a| self.lo[a].unsigned_abs().max(self.hi[a].unsigned_abs()))
            .collect()
    }

    /// Integer shift per axis that minimises the largest |coordinate| of `A - v`.
    pub fn centering_shift(&self) -> Vec<i64> {
        (0..self.dim)
            .map(|a| self.lo[a] + (self.hi[a] - self.lo[a]) / 2)
            .collect()
    }

    pub fn translate(&self, v: &[i64]) -> Result<LatticeSet> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: v.len(),
            });
        }
        let mut points = self.points.clone();
        for p in &mut points {
            for a in 0..self.dim {
                p[a] = p[a].checked_add(v[a]).ok_or(Error::CoordinateBound {
                    value: p[a] as i128 + v[a] as i128,
                    bound: DEFAULT_COORD_BOUND,
                })?;
            }
        }
        // Translation preserves lexicographic order.
        LatticeSet::with_bound(self.dim, points, DEFAULT_COORD_BOUND)
    }

    /// Every element multiplied by `lambda` (one-dimensional sets).
    pub fn dilate(&self, lambda: i64) -> Result<LatticeSet> {
        if lambda == 0 {
            return Err(Error::InvalidParameter("dilation factor must be nonzero".into()));
        }
        let mut points = self.points.clone();
        for p in &mut points {
            for a in 0..self.dim {
                p[a] = p[a].checked_mul(lambda).ok_or(Error::CoordinateBound {
                    value: p[a] as i128 * lambda as i128,
                    bound: DEFAULT_COORD_BOUND,
                })?;
            }
        }
        LatticeSet::new(self.dim, points)
    }

    /// Points of `self` not in `other`; `None` when nothing remains.
    pub fn difference(&self, other: &LatticeSet) -> Option<LatticeSet> {
        let kept: Vec<Point> = self
            .points
            .iter()
            .filter(|p| !other.contains(p))
            .copied()
            .collect();
        if kept.is_empty() {
            None
        } else {
            Some(Self::from_sorted_unchecked(self.dim, kept))
        }
    }
}

/// Row of a set: the points sharing every coordinate except the free axis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Row {
    /// Fixed coordinates, in axis order with the free axis omitted.
    pub label: Vec<i64>,
    /// Free coordinates of the row's points.
    pub content: LatticeSet,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowDecomposition {
    pub axis: usize,
    pub rows: Vec<Row>,
    /// Number of kept (nonempty, above-threshold) rows.
    pub r: usize,
    /// Minimum kept row size.
    pub s: usize,
    pub threshold: usize,
    /// Rows removed by the size threshold and the points they held.
    pub dropped_rows: usize,
    pub dropped_points: usize,
}

impl RowDecomposition {
    pub fn kept_points(&self) -> usize {
        self.rows.iter().map(|r| r.content.len()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Slice {
    pub label: i64,
    /// Remaining two coordinates, in axis order.
    pub content: LatticeSet,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SliceDecomposition {
    pub axis: usize,
    pub slices: Vec<Slice>,
    pub p: usize,
}

/// Rows of `a` along the free `axis`, keeping all nonempty rows.
pub fn rows(a: &LatticeSet, axis: usize) -> Result<RowDecomposition> {
    rows_with_threshold(a, axis, 1)
}

/// Rows of `a` along `axis`, dropping rows with fewer than `threshold` points.
pub fn rows_with_threshold(a: &LatticeSet, axis: usize, threshold: usize) -> Result<RowDecomposition> {
    if a.dim() < 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: a.dim(),
        });
    }
    if axis >= a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: axis + 1,
        });
    }
    let mut groups: BTreeMap<Vec<i64>, Vec<Point>> = BTreeMap::new();
    for p in a.points() {
        let label: Vec<i64> = (0..a.dim()).filter(|&k| k != axis).map(|k| p[k]).collect();
        groups.entry(label).or_default().push([p[axis], 0, 0]);
    }
    let mut rows = Vec::with_capacity(groups.len());
    let (mut dropped_rows, mut dropped_points) = (0, 0);
    for (label, mut pts) in groups {
        if pts.len() < threshold {
            dropped_rows += 1;
            dropped_points += pts.len();
            continue;
        }
        pts.sort_unstable();
        rows.push(Row {
            label,
            content: LatticeSet::from_sorted_unchecked(1, pts),
        });
    }
    let s = rows.iter().map(|r| r.content.len()).min().unwrap_or(0);
    Ok(RowDecomposition {
        axis,
        r: rows.len(),
        s,
        rows,
        threshold,
        dropped_rows,
        dropped_points,
    })
}

/// Planar slices of a 3-D set by the coordinate on `axis`.
pub fn planar_slices(a: &LatticeSet, axis: usize) -> Result<SliceDecomposition> {
    if a.dim() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            found: a.dim(),
        });
    }
    if axis >= 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            found: axis + 1,
        });
    }
    let mut groups: BTreeMap<i64, Vec<Point>> = BTreeMap::new();
    for p in a.points() {
        let rest: Vec<i64> = (0..3).filter(|&k| k != axis).map(|k| p[k]).collect();
        groups.entry(p[axis]).or_default().push([rest[0], rest[1], 0]);
    }
    let slices: Vec<Slice> = groups
        .into_iter()
        .map(|(label, mut pts)| {
            pts.sort_unstable();
            Slice {
                label,
                content: LatticeSet::from_sorted_unchecked(2, pts),
            }
        })
        .collect();
    Ok(SliceDecomposition {
        axis,
        p: slices.len(),
        slices,
    })
}

/// Row-size histogram and threshold table for one free axis.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AxisProfile {
    pub axis: usize,
    /// row size -> number of rows with exactly that size
    pub histogram: BTreeMap<usize, usize>,
    /// (threshold s, number of rows of size >= s), one entry per distinct size
    pub at_least: Vec<(usize, usize)>,
    /// For 3-D sets: slice size -> number of slices with that size (slices fixing this axis).
    pub slice_histogram: Option<BTreeMap<usize, usize>>,
}

pub fn structure_profile(a: &LatticeSet) -> Vec<AxisProfile> {
    if a.dim() == 1 {
        let mut histogram = BTreeMap::new();
        histogram.insert(a.len(), 1);
        return vec![AxisProfile {
            axis: 0,
            at_least: vec![(a.len(), 1)],
            histogram,
            slice_histogram: None,
        }];
    }
    (0..a.dim())
        .map(|axis| {
            let dec = rows(a, axis).expect("axis in range");
            let mut histogram = BTreeMap::new();
            for row in &dec.rows {
                *histogram.entry(row.content.len()).or_insert(0) += 1;
            }
            let mut at_least = Vec::with_capacity(histogram.len());
            let mut running = 0;
            for (&size, &count) in histogram.iter().rev() {
                running += count;
                at_least.push((size, running));
            }
            at_least.reverse();
            let slice_histogram = (a.dim() == 3).then(|| {
                let mut h = BTreeMap::new();
                for s in planar_slices(a, axis).expect("3-D").slices {
                    *h.entry(s.content.len()).or_insert(0) += 1;
                }
                h
            });
            AxisProfile {
                axis,
                histogram,
                at_least,
                slice_histogram,
            }
        })
        .collect()
}

/// Shifts `a` so every coordinate is at least 1; returns the shifted set and the shift.
pub fn translate_to_positive(a: &LatticeSet) -> (LatticeSet, Vec<i64>) {
    let v: Vec<i64> = a.lo().iter().map(|&m| if m < 1 { 1 - m } else { 0 }).collect();
    if v.iter().all(|&x| x == 0) {
        return (a.clone(), v);
    }
    let shifted = a.translate(&v).expect("shift keeps coordinates in range");
    (shifted, v)
}

fn check_bound(value: i128, bound: i64) -> Result<i64> {
    if value.unsigned_abs() > bound as u128 {
        Err(Error::CoordinateBound { value, bound })
    } else {
        Ok(value as i64)
    }
}

/// The cube {1..n}^d.
pub fn gen_cube(n: i64, d: usize) -> Result<LatticeSet> {
    if n < 1 {
        return Err(Error::InvalidParameter("cube side must be >= 1".into()));
    }
    if !(1..=3).contains(&d) {
        return Err(Error::UnsupportedDimension(d));
    }
    check_bound(n as i128, DEFAULT_COORD_BOUND)?;
    let total = (n as u128).pow(d as u32);
    if total > (1u128 << 32) {
        return Err(Error::SampleBudget {
            requested: total,
            budget: 1 << 32,
        });
    }
    let mut points = Vec::with_capacity(total as usize);
    let span = |axis: usize| if axis < d { 1..=n } else { 0..=0 };
    for x in span(0) {
        for y in span(1) {
            for z in span(2) {
                points.push([x, y, z]);
            }
        }
    }
    LatticeSet::new(d, points)
}

/// The progression {c + x q : 0 <= x < n}.
pub fn gen_ap(c: i64, q: i64, n: i64) -> Result<LatticeSet> {
    if q == 0 {
        return Err(Error::InvalidParameter("progression step must be nonzero".into()));
    }
    if n < 1 {
        return Err(Error::InvalidParameter("progression length must be >= 1".into()));
    }
    let values = (0..n)
        .map(|x| check_bound(c as i128 + x as i128 * q as i128, DEFAULT_COORD_BOUND))
        .collect::<Result<Vec<_>>>()?;
    LatticeSet::from_values(values)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoxProgression {
    pub set: LatticeSet,
    /// True when all x-combinations give distinct integers.
    pub proper: bool,
}

/// The d-dimensional progression {c + x_1 q_1 + ... + x_d q_d : 0 <= x_i < n_i}.
pub fn gen_box_progression(c: i64, steps: &[i64], extents: &[i64]) -> Result<BoxProgression> {
    if steps.len() != extents.len() || steps.is_empty() {
        return Err(Error::InvalidParameter(
            "steps and extents must be nonempty and of equal length".into(),
        ));
    }
    if extents.iter().any(|&n| n < 1) {
        return Err(Error::InvalidParameter("extents must be >= 1".into()));
    }
    let cells: u128 = extents.iter().map(|&n| n as u128).product();
    if cells > (1u128 << 32) {
        return Err(Error::SampleBudget {
            requested: cells,
            budget: 1 << 32,
        });
    }
    let mut values: Vec<i64> = vec![check_bound(c as i128, DEFAULT_COORD_BOUND)?];
    for (&q, &n) in steps.iter().zip(extents) {
        let mut next = Vec::with_capacity(values.len() * n as usize);
        for &v in &values {
            for x in 0..n {
                next.push(check_bound(
                    v as i128 + x as i128 * q as i128,
                    DEFAULT_COORD_BOUND,
                )?);
            }
        }
        values = next;
    }
    let total = values.len();
    let set = LatticeSet::from_values(values)?;
    Ok(BoxProgression {
        proper: set.len() == total,
        set,
    })
}

/// The lacunary set {2, 4, ..., 2^n}; refuses elements beyond the coordinate bound.
pub fn gen_lacunary(n: u32) -> Result<LatticeSet> {
    gen_lacunary_bounded(n, DEFAULT_COORD_BOUND)
}

pub fn gen_lacunary_bounded(n: u32, bound: i64) -> Result<LatticeSet> {
    if n < 1 {
        return Err(Error::InvalidParameter("lacunary length must be >= 1".into()));
    }
    let top = 1i128.checked_shl(n).filter(|_| n < 127).unwrap_or(i128::MAX);
    check_bound(top, bound)?;
    let xs: Vec<i64> = (1..=n).map(|i| 1i64 << i).collect();
    for i in 1..xs.len().saturating_sub(1) {
        assert_eq!(
            xs[i + 1],
            xs[i] + 2 * (xs[i] - xs[i - 1]),
            "lacunary three-term recurrence"
        );
    }
    LatticeSet::from_values(xs)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PrimeResidueReport {
    pub primes: Vec<u64>,
    pub modulus: u64,
    pub size: usize,
}

/// Default bound on the modulus N for which the prime-residue set is materialised.
pub const PRIME_RESIDUE_MATERIALIZE_BOUND: u64 = 1 << 26;

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// Minimal window of primes starting at `l` whose reciprocal sum reaches 1/2,
/// together with the product of the window.
pub fn prime_window(l: u64) -> Result<(Vec<u64>, u128)> {
    if l < 2 {
        return Err(Error::InvalidParameter("prime window start must be >= 2".into()));
    }
    let mut primes = Vec::new();
    // Exact comparison of sum 1/p >= 1/2 via the rational num/den.
    let (mut num, mut den) = (0u128, 1u128);
    let mut candidate = l;
    let mut modulus: u128 = 1;
    loop {
        if is_prime(candidate) {
            primes.push(candidate);
            num = num * candidate as u128 + den;
            den *= candidate as u128;
            modulus = modulus.saturating_mul(candidate as u128);
            if 2 * num >= den {
                return Ok((primes, modulus));
            }
            if den > u128::MAX / (1 << 40) {
                return Err(Error::InvalidParameter(format!(
                    "prime window from {l} does not fit exact arithmetic"
                )));
            }
        }
        candidate += 1;
    }
}

/// Union over the prime window P of the residue classes 1 mod p inside [1, N], N = prod P.
pub fn gen_prime_residue(l: u64) -> Result<(LatticeSet, PrimeResidueReport)> {
    gen_prime_residue_bounded(l, PRIME_RESIDUE_MATERIALIZE_BOUND)
}

pub fn gen_prime_residue_bounded(l: u64, bound: u64) -> Result<(LatticeSet, PrimeResidueReport)> {
    let (primes, modulus) = prime_window(l)?;
    if modulus > bound as u128 {
        return Err(Error::PrimeResidueTooLarge {
            primes,
            modulus,
            bound,
        });
    }
    let n = modulus as u64;
    let mut member = vec![false; n as usize + 1];
    for &p in &primes {
        let mut x = 1;
        while x <= n {
            member[x as usize] = true;
            x += p;
        }
    }
    let values: Vec<i64> = (1..=n).filter(|&x| member[x as usize]).map(|x| x as i64).collect();
    let set = LatticeSet::from_values(values)?;
    let report = PrimeResidueReport {
        primes,
        modulus: n,
        size: set.len(),
    };
    Ok((set, report))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RandomSubset {
    pub set: LatticeSet,
    /// Number of redraws caused by an empty result.
    pub retries: u32,
}

/// Each x in {1..n} kept independently with probability `density`.
pub fn gen_random_subset(n: i64, density: f64, seed: u64) -> Result<RandomSubset> {
    if n < 1 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::InvalidParameter("density must lie in (0, 1]".into()));
    }
    check_bound(n as i128, DEFAULT_COORD_BOUND)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut retries = 0;
    loop {
        let values: Vec<i64> = (1..=n).filter(|_| rng.gen_bool(density)).collect();
        if !values.is_empty() {
            return Ok(RandomSubset {
                set: LatticeSet::from_values(values)?,
                retries,
            });
        }
        retries += 1;
    }
}

#[derive(Serialize, Deserialize)]
struct SetFile {
    dim: usize,
    points: Vec<Vec<i64>>,
}

impl LatticeSet {
    pub fn to_json(&self) -> String {
        let file = SetFile {
            dim: self.dim,
            points: self.coords().map(|c| c.to_vec()).collect(),
        };
        serde_json::to_string(&file).expect("set serialization")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SetFile = serde_json::from_str(text)?;
        Self::from_coords(file.dim, &file.points)
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_json().as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_json<R: Read>(mut r: R) -> Result<Self> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        Self::from_json(&text)
    }
}
