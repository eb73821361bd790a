//! Sampled functions on uniform grids of the torus T^d.
//!
//! A [`GridFunction`] stores samples at the nodes `x_j = (j_1/G_1, ..., j_d/G_d)`
//! in row-major order (last axis contiguous), together with metadata about
//! the underlying function:
//!
//! * a per-axis frequency interval `[lo, hi]` when the function is a
//!   trigonometric polynomial in that variable, and
//! * Lipschitz and sup-norm bounds when the function is smooth.
//!
//! A function without a Lipschitz bound is interpreted as constant on the
//! grid cell around each node. Inner products use the frequency intervals to
//! decide when the grid sum is the exact integral and the Lipschitz data to
//! bound the error otherwise.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::accum;
use crate::config::Limits;
use crate::error::{Error, Result};
use crate::lattice::LatticeSet;

/// `e(t) = exp(2 pi i t)`.
pub fn e(t: f64) -> Complex64 {
    let (s, c) = (2.0 * PI * t).sin_cos();
    Complex64::new(c, s)
}

/// `e(num / den)` with the numerator reduced exactly first.
pub fn e_frac(num: i128, den: u64) -> Complex64 {
    let r = num.rem_euclid(den as i128) as f64;
    e(r / den as f64)
}

/// Closed frequency interval of a trigonometric polynomial in one variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Band {
    pub lo: i64,
    pub hi: i64,
}

impl Band {
    pub fn point(k: i64) -> Band {
        Band { lo: k, hi: k }
    }

    pub fn sum(self, other: Band) -> Option<Band> {
        Some(Band {
            lo: self.lo.checked_add(other.lo)?,
            hi: self.hi.checked_add(other.hi)?,
        })
    }

    pub fn neg(self) -> Band {
        Band {
            lo: -self.hi,
            hi: -self.lo,
        }
    }

    pub fn hull(self, other: Band) -> Band {
        Band {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    /// Number of integer frequencies in the interval.
    pub fn width(self) -> u64 {
        (self.hi - self.lo) as u64 + 1
    }

    pub fn max_abs(self) -> u64 {
        self.lo.unsigned_abs().max(self.hi.unsigned_abs())
    }
}

pub type Bands = Vec<Option<Band>>;

pub fn bands_sum(a: &[Option<Band>], b: &[Option<Band>]) -> Bands {
    a.iter()
        .zip(b)
        .map(|(x, y)| match (x, y) {
            (Some(x), Some(y)) => x.sum(*y),
            _ => None,
        })
        .collect()
}

pub fn bands_hull(a: &[Option<Band>], b: &[Option<Band>]) -> Bands {
    a.iter()
        .zip(b)
        .map(|(x, y)| match (x, y) {
            (Some(x), Some(y)) => Some(x.hull(*y)),
            _ => None,
        })
        .collect()
}

pub fn bands_neg(a: &[Option<Band>]) -> Bands {
    a.iter().map(|b| b.map(Band::neg)).collect()
}

/// Total number of samples of a grid, refusing grids above `budget`.
pub fn checked_samples(dims: &[usize], budget: usize) -> Result<usize> {
    if dims.is_empty() || dims.len() > 3 {
        return Err(Error::UnsupportedDimension(dims.len()));
    }
    if dims.contains(&0) {
        return Err(Error::InvalidParameter("grid sizes must be positive".into()));
    }
    let total: u128 = dims.iter().map(|&g| g as u128).product();
    if total > budget as u128 {
        return Err(Error::SampleBudget {
            requested: total,
            budget,
        });
    }
    Ok(total as usize)
}

/// Smallest power of two strictly greater than `n`.
pub fn pow2_above(n: u64) -> usize {
    (n + 1).next_power_of_two() as usize
}

/// Per-axis index of flat sample `idx`.
pub fn unflatten(idx: usize, dims: &[usize]) -> [usize; 3] {
    let mut out = [0usize; 3];
    let mut rest = idx;
    for a in (0..dims.len()).rev() {
        out[a] = rest % dims[a];
        rest /= dims[a];
    }
    out
}

/// Sum over axes of `1 / (2 G_i)`: the largest per-axis distance from a point to its cell's node.
pub fn half_cell_sum(dims: &[usize]) -> f64 {
    dims.iter().map(|&g| 0.5 / g as f64).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    dims: Vec<usize>,
    samples: Vec<Complex64>,
    band: Bands,
    lipschitz: Option<f64>,
    modulus_lipschitz: Option<f64>,
    sup_bound: Option<f64>,
    moments: Option<Vec<f64>>,
}

impl GridFunction {
    /// Wraps raw samples; the function is treated as cellwise constant with no band.
    pub fn from_samples(dims: Vec<usize>, samples: Vec<Complex64>) -> Result<Self> {
        let n = checked_samples(&dims, usize::MAX)?;
        if samples.len() != n {
            return Err(Error::InvalidParameter(format!(
                "expected {n} samples for grid {dims:?}, got {}",
                samples.len()
            )));
        }
        let d = dims.len();
        Ok(GridFunction {
            dims,
            samples,
            band: vec![None; d],
            lipschitz: None,
            modulus_lipschitz: None,
            sup_bound: None,
            moments: None,
        })
    }

    pub fn with_band(mut self, band: Bands) -> Self {
        assert_eq!(band.len(), self.dims.len());
        self.band = band;
        self
    }

    /// Declares smoothness: Lipschitz bound of the function (sum over axes of
    /// per-axis displacements), of its modulus, and an analytic sup bound.
    pub fn with_regularity(mut self, lipschitz: f64, modulus_lipschitz: f64, sup: f64) -> Self {
        self.lipschitz = Some(lipschitz);
        self.modulus_lipschitz = Some(modulus_lipschitz.min(lipschitz));
        self.sup_bound = Some(sup);
        self
    }

    /// Declares an exponential sum with unit coefficients whose frequencies
    /// have per-axis centred second moments `sum_a (a_i - mean_i)^2`.
    pub fn with_moments(mut self, moments: Vec<f64>) -> Self {
        assert_eq!(moments.len(), self.dims.len());
        self.moments = Some(moments);
        self
    }

    pub fn constant(dims: Vec<usize>, value: Complex64, limits: &Limits) -> Result<Self> {
        let n = checked_samples(&dims, limits.sample_budget)?;
        let d = dims.len();
        Ok(GridFunction::from_samples(dims, vec![value; n])?
            .with_band(vec![Some(Band::point(0)); d])
            .with_regularity(0.0, 0.0, value.norm()))
    }

    /// Samples of `e(k . x)`.
    pub fn exponential(dims: Vec<usize>, freq: &[i64], limits: &Limits) -> Result<Self> {
        if freq.len() != dims.len() {
            return Err(Error::DimensionMismatch {
                expected: dims.len(),
                found: freq.len(),
            });
        }
        let n = checked_samples(&dims, limits.sample_budget)?;
        let factors: Vec<Vec<Complex64>> = dims
            .iter()
            .zip(freq)
            .map(|(&g, &k)| (0..g).map(|j| e_frac(k as i128 * j as i128, g as u64)).collect())
            .collect();
        let samples = separable_product(&dims, &factors, n);
        let lip = 2.0 * PI * freq.iter().map(|k| k.unsigned_abs()).max().unwrap_or(0) as f64;
        Ok(GridFunction::from_samples(dims, samples)?
            .with_band(freq.iter().map(|&k| Some(Band::point(k))).collect())
            .with_regularity(lip, 0.0, 1.0))
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn band(&self) -> &[Option<Band>] {
        &self.band
    }

    /// Symmetric per-axis bound `M_i` with frequencies in `[-M_i, M_i]`, when banded.
    pub fn freq_bound(&self) -> Vec<Option<u64>> {
        self.band.iter().map(|b| b.map(Band::max_abs)).collect()
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn modulus_lipschitz(&self) -> Option<f64> {
        self.modulus_lipschitz
    }

    pub fn sup_bound(&self) -> Option<f64> {
        self.sup_bound
    }

    pub fn moments(&self) -> Option<&[f64]> {
        self.moments.as_deref()
    }

    /// Bound on `|<g, F>_grid - integral of g~ conj(F)|` for `|g| <= 1` at the
    /// nodes, where `g~` is constant on the cell around each node. Available
    /// for exponential sums; it is the midpoint-rule remainder
    /// `(pi^2/6) sum_i sum_a (a_i - mean_i)^2 / G_i^2`.
    pub fn pairing_error(&self) -> Option<f64> {
        let m = self.moments.as_ref()?;
        Some(
            PI * PI / 6.0
                * m.iter()
                    .zip(&self.dims)
                    .map(|(v, &g)| v / (g as f64 * g as f64))
                    .sum::<f64>(),
        )
    }

    /// True when some axis has a declared band wider than the grid, so the
    /// samples no longer determine the spectrum.
    pub fn is_aliased(&self) -> bool {
        self.band
            .iter()
            .zip(&self.dims)
            .any(|(b, &g)| b.is_some_and(|b| b.width() > g as u64))
    }

    pub fn is_banded(&self) -> bool {
        self.band.iter().all(Option::is_some)
    }

    pub fn node(&self, idx: usize) -> Vec<f64> {
        let j = unflatten(idx, &self.dims);
        (0..self.dim())
            .map(|a| j[a] as f64 / self.dims[a] as f64)
            .collect()
    }

    /// Largest sampled modulus.
    pub fn max_modulus(&self) -> f64 {
        accum::max_real(self.samples.len(), 1 << 14, |i| self.samples[i].norm())
    }

    /// Debug dump: little-endian complex64 (f32 re, f32 im) in sample order.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        for z in &self.samples {
            w.write_all(&(z.re as f32).to_le_bytes())?;
            w.write_all(&(z.im as f32).to_le_bytes())?;
        }
        Ok(())
    }

    fn check_same_grid(&self, other: &GridFunction) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::GridMismatch {
                left: self.dims.clone(),
                right: other.dims.clone(),
            });
        }
        Ok(())
    }
}

fn separable_product(dims: &[usize], factors: &[Vec<Complex64>], n: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(1.0, 0.0); n];
    for (idx, v) in out.iter_mut().enumerate() {
        let j = unflatten(idx, dims);
        for a in 0..dims.len() {
            *v *= factors[a][j[a]];
        }
    }
    out
}

pub fn multiply(f: &GridFunction, g: &GridFunction) -> Result<GridFunction> {
    f.check_same_grid(g)?;
    let samples = f.samples.iter().zip(&g.samples).map(|(a, b)| a * b).collect();
    let lipschitz = match (f.lipschitz, g.lipschitz, f.sup_bound, g.sup_bound) {
        (Some(lf), Some(lg), Some(sf), Some(sg)) => Some(lf * sg + lg * sf),
        _ => None,
    };
    Ok(GridFunction {
        dims: f.dims.clone(),
        samples,
        band: bands_sum(&f.band, &g.band),
        lipschitz,
        modulus_lipschitz: lipschitz,
        sup_bound: f.sup_bound.zip(g.sup_bound).map(|(a, b)| a * b),
        moments: None,
    })
}

pub fn conjugate(f: &GridFunction) -> GridFunction {
    GridFunction {
        dims: f.dims.clone(),
        samples: f.samples.iter().map(|z| z.conj()).collect(),
        band: bands_neg(&f.band),
        ..f.clone()
    }
}

pub fn scale(f: &GridFunction, lambda: Complex64) -> GridFunction {
    let m = lambda.norm();
    GridFunction {
        dims: f.dims.clone(),
        samples: f.samples.iter().map(|z| z * lambda).collect(),
        band: if m == 0.0 {
            vec![Some(Band::point(0)); f.dim()]
        } else {
            f.band.clone()
        },
        lipschitz: f.lipschitz.map(|l| l * m),
        modulus_lipschitz: f.modulus_lipschitz.map(|l| l * m),
        sup_bound: f.sup_bound.map(|s| s * m),
        moments: None,
    }
}

pub fn add(f: &GridFunction, g: &GridFunction) -> Result<GridFunction> {
    f.check_same_grid(g)?;
    let lipschitz = f.lipschitz.zip(g.lipschitz).map(|(a, b)| a + b);
    Ok(GridFunction {
        dims: f.dims.clone(),
        samples: f.samples.iter().zip(&g.samples).map(|(a, b)| a + b).collect(),
        band: bands_hull(&f.band, &g.band),
        lipschitz,
        modulus_lipschitz: lipschitz,
        sup_bound: f.sup_bound.zip(g.sup_bound).map(|(a, b)| a + b),
        moments: None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerProductResult {
    pub value: Complex64,
    pub exact: bool,
    pub error_bound: f64,
}

/// True when the grid sum of `f conj(g)` is the exact integral: every axis is
/// banded and the product's frequency interval avoids all nonzero multiples of G.
pub fn quadrature_exact(f: &GridFunction, g: &GridFunction) -> bool {
    f.band
        .iter()
        .zip(&g.band)
        .zip(&f.dims)
        .all(|((bf, bg), &n)| match (bf, bg) {
            (Some(bf), Some(bg)) => bf
                .sum(bg.neg())
                .is_some_and(|p| p.max_abs() < n as u64),
            _ => false,
        })
}

/// `<f, g> = integral of f conj(g)` by the grid rule.
pub fn inner_product(f: &GridFunction, g: &GridFunction) -> Result<InnerProductResult> {
    inner_product_chunked(f, g, crate::config::DEFAULT_CHUNK)
}

pub fn inner_product_chunked(f: &GridFunction, g: &GridFunction, chunk: usize) -> Result<InnerProductResult> {
    f.check_same_grid(g)?;
    let n = f.samples.len();
    let value = accum::sum_complex(n, chunk, |i| f.samples[i] * g.samples[i].conj()) / n as f64;
    if quadrature_exact(f, g) {
        return Ok(InnerProductResult {
            value,
            exact: true,
            error_bound: 0.0,
        });
    }
    let h = half_cell_sum(&f.dims);
    let error_bound = match (f.lipschitz, g.lipschitz) {
        (Some(lf), Some(lg)) => match (f.sup_bound, g.sup_bound) {
            (Some(sf), Some(sg)) => (lf * sg + lg * sf) * h,
            _ => f64::INFINITY,
        },
        (Some(lf), None) => g.max_modulus() * lf * h,
        (None, Some(lg)) => f.max_modulus() * lg * h,
        // Both cellwise constant: the grid sum is their exact integral.
        (None, None) => 0.0,
    };
    Ok(InnerProductResult {
        value,
        exact: false,
        error_bound,
    })
}

fn fft_axes(data: &mut [Complex64], dims: &[usize], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let total = data.len();
    for axis in 0..dims.len() {
        let len = dims[axis];
        if len == 1 {
            continue;
        }
        let fft = if inverse {
            planner.plan_fft_inverse(len)
        } else {
            planner.plan_fft_forward(len)
        };
        let stride: usize = dims[axis + 1..].iter().product();
        if stride == 1 {
            fft.process(data);
            continue;
        }
        let block = len * stride;
        let mut lane = vec![Complex64::new(0.0, 0.0); len];
        for base in (0..total).step_by(block) {
            for inner in 0..stride {
                for k in 0..len {
                    lane[k] = data[base + inner + k * stride];
                }
                fft.process(&mut lane);
                for k in 0..len {
                    data[base + inner + k * stride] = lane[k];
                }
            }
        }
    }
}

/// Lipschitz bound `2 pi |A| max_i max_a |a_i|` for `F_A`.
pub fn exp_sum_lipschitz(a: &LatticeSet) -> f64 {
    let m = a.max_abs().into_iter().max().unwrap_or(0);
    2.0 * PI * a.len() as f64 * m as f64
}

/// Lipschitz bound for `|F_A|`, using the translate of `A` closest to the origin.
pub fn exp_sum_modulus_lipschitz(a: &LatticeSet) -> f64 {
    let shift = a.centering_shift();
    let m = (0..a.dim())
        .map(|k| {
            (a.lo()[k] - shift[k])
                .unsigned_abs()
                .max((a.hi()[k] - shift[k]).unsigned_abs())
        })
        .max()
        .unwrap_or(0);
    2.0 * PI * a.len() as f64 * m as f64
}

/// Samples of `F_A` on the grid `dims`, by an inverse DFT of the indicator of `A mod G`.
pub fn evaluate_fft(a: &LatticeSet, dims: &[usize]) -> Result<GridFunction> {
    evaluate_fft_with(a, dims, &Limits::default())
}

pub fn evaluate_fft_with(a: &LatticeSet, dims: &[usize], limits: &Limits) -> Result<GridFunction> {
    if dims.len() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: dims.len(),
        });
    }
    let n = checked_samples(dims, limits.sample_budget)?;
    let mut data = vec![Complex64::new(0.0, 0.0); n];
    scatter(a, dims, &mut data, |_| Complex64::new(1.0, 0.0));
    fft_axes(&mut data, dims, true);
    let band = (0..a.dim())
        .map(|k| {
            Some(Band {
                lo: a.lo()[k],
                hi: a.hi()[k],
            })
        })
        .collect();
    Ok(GridFunction::from_samples(dims.to_vec(), data)?
        .with_band(band)
        .with_regularity(
            exp_sum_lipschitz(a),
            exp_sum_modulus_lipschitz(a),
            a.len() as f64,
        )
        .with_moments(centred_moments(a)))
}

/// Per-axis `sum_a (a_i - mean_i)^2`.
pub fn centred_moments(a: &LatticeSet) -> Vec<f64> {
    let n = a.len() as f64;
    (0..a.dim())
        .map(|k| {
            let mean = a.coords().map(|c| c[k] as f64).sum::<f64>() / n;
            a.coords().map(|c| (c[k] as f64 - mean).powi(2)).sum()
        })
        .collect()
}

fn scatter<M>(a: &LatticeSet, dims: &[usize], data: &mut [Complex64], mass: M)
where
    M: Fn(&[i64]) -> Complex64,
{
    for c in a.coords() {
        let mut idx = 0usize;
        for k in 0..dims.len() {
            idx = idx * dims[k] + c[k].rem_euclid(dims[k] as i64) as usize;
        }
        data[idx] += mass(c);
    }
}

/// True when two distinct points of `A` coincide modulo the grid.
pub fn has_collisions(a: &LatticeSet, dims: &[usize]) -> bool {
    let mut keys: Vec<Vec<i64>> = a
        .coords()
        .map(|c| c.iter().zip(dims).map(|(&x, &g)| x.rem_euclid(g as i64)).collect())
        .collect();
    keys.sort_unstable();
    keys.windows(2).any(|w| w[0] == w[1])
}

/// Samples of `F_A` on one coset of a fine grid: the nodes
/// `x_i = r_i / G_i + k_i / H_i` for `k_i < H_i`, where `H_i` divides `G_i`.
/// Returned in row-major order over `k`.
pub fn evaluate_coset(a: &LatticeSet, fine: &[usize], coarse: &[usize], offset: &[usize]) -> Vec<Complex64> {
    let n: usize = coarse.iter().product();
    let mut data = vec![Complex64::new(0.0, 0.0); n];
    scatter(a, coarse, &mut data, |c| {
        let mut z = Complex64::new(1.0, 0.0);
        for k in 0..c.len() {
            if offset[k] != 0 {
                z *= e_frac(c[k] as i128 * offset[k] as i128, fine[k] as u64);
            }
        }
        z
    });
    fft_axes(&mut data, coarse, true);
    data
}

/// Direct Kahan-compensated evaluation of `F_A` at arbitrary points.
pub fn evaluate_naive(a: &LatticeSet, points: &[Vec<f64>]) -> Result<Vec<Complex64>> {
    points
        .iter()
        .map(|x| {
            if x.len() != a.dim() {
                return Err(Error::DimensionMismatch {
                    expected: a.dim(),
                    found: x.len(),
                });
            }
            let mut acc = accum::ComplexNeumaier::default();
            for c in a.coords() {
                // Reduce each product mod 1 before combining to keep phases accurate.
                let mut t = 0.0;
                for k in 0..c.len() {
                    let frac = (c[k] as f64 * x[k]).rem_euclid(1.0);
                    t += frac;
                }
                acc.add(e(t));
            }
            Ok(acc.total())
        })
        .collect()
}

/// Normalised DFT coefficients of a grid function.
#[derive(Clone, Debug)]
pub struct Spectrum {
    dims: Vec<usize>,
    coeffs: Vec<Complex64>,
    band: Bands,
}

impl Spectrum {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Coefficient of the residue class of `freq`.
    pub fn coefficient(&self, freq: &[i64]) -> Complex64 {
        let mut idx = 0usize;
        for k in 0..self.dims.len() {
            idx = idx * self.dims[k] + freq[k].rem_euclid(self.dims[k] as i64) as usize;
        }
        self.coeffs[idx]
    }

    /// Representative frequency of a residue index: inside the declared band
    /// when there is one, otherwise in `(-G/2, G/2]`.
    fn representative(&self, idx: usize) -> Vec<i64> {
        let j = unflatten(idx, &self.dims);
        (0..self.dims.len())
            .map(|k| {
                let g = self.dims[k] as i64;
                let r = j[k] as i64;
                match self.band[k] {
                    Some(b) if b.width() <= g as u64 => b.lo + (r - b.lo).rem_euclid(g),
                    _ => {
                        if r > g / 2 {
                            r - g
                        } else {
                            r
                        }
                    }
                }
            })
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vec<i64>, Complex64)> + '_ {
        self.coeffs
            .iter()
            .enumerate()
            .map(move |(i, &c)| (self.representative(i), c))
    }

    /// Frequencies whose coefficient modulus exceeds `tol`.
    pub fn support(&self, tol: f64) -> Vec<Vec<i64>> {
        self.iter().filter(|(_, c)| c.norm() > tol).map(|(f, _)| f).collect()
    }
}

pub fn spectrum(f: &GridFunction) -> Spectrum {
    let mut data = f.samples.clone();
    fft_axes(&mut data, &f.dims, false);
    let n = data.len() as f64;
    for z in &mut data {
        *z /= n;
    }
    Spectrum {
        dims: f.dims.clone(),
        coeffs: data,
        band: f.band.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn singleton_zero_is_constant() {
        let a = LatticeSet::from_values([0]).unwrap();
        let f = evaluate_fft(&a, &[16]).unwrap();
        assert!(f.samples().iter().all(|z| close(*z, Complex64::new(1.0, 0.0), 1e-15)));
    }

    #[test]
    fn two_term_sum_at_quarter() {
        let a = LatticeSet::from_values([0, 1]).unwrap();
        let f = evaluate_fft(&a, &[4]).unwrap();
        assert!(close(f.samples()[1], Complex64::new(1.0, 1.0), 1e-14));
    }

    #[test]
    fn fft_matches_naive_at_random_nodes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pts = Vec::new();
        while pts.len() < 20 {
            let p = [rng.gen_range(-32..=32), rng.gen_range(-32..=32), 0];
            if !pts.contains(&p) {
                pts.push(p);
            }
        }
        let a = LatticeSet::new(2, pts).unwrap();
        let f = evaluate_fft(&a, &[128, 128]).unwrap();
        assert!(!f.is_aliased());
        for _ in 0..50 {
            let idx = rng.gen_range(0..f.len());
            let naive = evaluate_naive(&a, &[f.node(idx)]).unwrap()[0];
            assert!(close(f.samples()[idx], naive, 1e-10));
        }
    }

    #[test]
    fn naive_examples() {
        let a = LatticeSet::from_values([5]).unwrap();
        let v = evaluate_naive(&a, &[vec![0.2]]).unwrap()[0];
        assert!(close(v, Complex64::new(1.0, 0.0), 1e-14));
        let sq = crate::lattice::gen_cube(2, 2).unwrap();
        let v = evaluate_naive(&sq, &[vec![0.0, 0.0]]).unwrap()[0];
        assert!(close(v, Complex64::new(4.0, 0.0), 1e-14));
    }

    #[test]
    fn aliasing_flag_and_collisions() {
        let a = LatticeSet::from_values([0, 8]).unwrap();
        assert!(has_collisions(&a, &[8]));
        let f = evaluate_fft(&a, &[8]).unwrap();
        assert!(f.is_aliased());
        // Samples are still the values of F_A at the nodes.
        assert!(f.samples().iter().all(|z| close(*z, Complex64::new(2.0, 0.0), 1e-12)));
        assert!(!evaluate_fft(&a, &[16]).unwrap().is_aliased());
    }

    #[test]
    fn pointwise_algebra() {
        let lim = Limits::default();
        let f = GridFunction::exponential(vec![32], &[3], &lim).unwrap();
        let g = GridFunction::exponential(vec![32], &[4], &lim).unwrap();
        let p = multiply(&f, &g).unwrap();
        assert_eq!(p.freq_bound(), vec![Some(7)]);
        let direct = GridFunction::exponential(vec![32], &[7], &lim).unwrap();
        for (x, y) in p.samples().iter().zip(direct.samples()) {
            assert!(close(*x, *y, 1e-12));
        }
        let m = multiply(&f, &conjugate(&f)).unwrap();
        assert!(m.samples().iter().all(|z| z.re >= 0.0 && z.im.abs() < 1e-15));
        assert_eq!(add(&f, &g).unwrap().band()[0], Some(Band { lo: 3, hi: 4 }));
        assert_eq!(conjugate(&f).band()[0], Some(Band::point(-3)));
        let other = GridFunction::exponential(vec![16], &[3], &lim).unwrap();
        assert!(matches!(multiply(&f, &other), Err(Error::GridMismatch { .. })));
    }

    #[test]
    fn inner_products() {
        let lim = Limits::default();
        let e3 = GridFunction::exponential(vec![8], &[3], &lim).unwrap();
        let ip = inner_product(&e3, &e3).unwrap();
        assert!(ip.exact && close(ip.value, Complex64::new(1.0, 0.0), 1e-14));

        let e3 = GridFunction::exponential(vec![16], &[3], &lim).unwrap();
        let e5 = GridFunction::exponential(vec![16], &[5], &lim).unwrap();
        let ip = inner_product(&e3, &e5).unwrap();
        assert!(ip.exact && ip.value.norm() < 1e-14);

        let a = LatticeSet::from_values([1, 4, 6]).unwrap();
        let f = evaluate_fft(&a, &[16]).unwrap();
        let ip = inner_product(&f, &f).unwrap();
        assert!(ip.exact && ip.error_bound == 0.0);
        assert!(close(ip.value, Complex64::new(3.0, 0.0), 1e-12));
    }

    #[test]
    fn inexact_inner_product_has_bound() {
        let a = LatticeSet::from_values([0, 5]).unwrap();
        let f = evaluate_fft(&a, &[4]).unwrap();
        let ip = inner_product(&f, &f).unwrap();
        assert!(!ip.exact);
        assert!(ip.error_bound.is_finite() && ip.error_bound > 0.0);
        assert!((ip.value.re - 2.0).abs() <= ip.error_bound);
    }

    #[test]
    fn spectrum_examples() {
        let a = LatticeSet::from_values([2]).unwrap();
        let s = spectrum(&evaluate_fft(&a, &[8]).unwrap());
        for (freq, c) in s.iter() {
            let expected = if freq == vec![2] { 1.0 } else { 0.0 };
            assert!(close(c, Complex64::new(expected, 0.0), 1e-12));
        }
        let lim = Limits::default();
        let p = multiply(
            &GridFunction::exponential(vec![16], &[2], &lim).unwrap(),
            &GridFunction::exponential(vec![16], &[3], &lim).unwrap(),
        )
        .unwrap();
        assert_eq!(spectrum(&p).support(1e-9), vec![vec![5]]);
    }

    #[test]
    fn coset_evaluation_covers_fine_grid() {
        let a = LatticeSet::from_values([-7, 0, 3, 11, 40]).unwrap();
        let fine = evaluate_fft(&a, &[64]).unwrap();
        for r in 0..4 {
            let coset = evaluate_coset(&a, &[64], &[16], &[r]);
            for (k, z) in coset.iter().enumerate() {
                assert!(close(*z, fine.samples()[r + 4 * k], 1e-11));
            }
        }
    }

    #[test]
    fn budget_guard() {
        let a = LatticeSet::from_values([1]).unwrap();
        let lim = Limits::default().with_sample_budget(1024);
        assert!(matches!(
            evaluate_fft_with(&a, &[2048], &lim),
            Err(Error::SampleBudget { .. })
        ));
    }

    #[test]
    fn binary_dump_is_complex64() {
        let a = LatticeSet::from_values([1]).unwrap();
        let f = evaluate_fft(&a, &[8]).unwrap();
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 * 8);
        assert_eq!(f32::from_le_bytes(buf[..4].try_into().unwrap()), 1.0);
    }
}
