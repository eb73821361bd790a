//! Compensated, chunked summation.
//!
//! Sums are split into fixed-size chunks, each accumulated with Neumaier
//! compensation, and the chunk totals are combined in index order. The
//! result depends on the chunk size only, never on the thread count.

use num_complex::Complex64;
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ComplexNeumaier {
    re: Neumaier,
    im: Neumaier,
}

impl ComplexNeumaier {
    pub fn add(&mut self, z: Complex64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    pub fn total(&self) -> Complex64 {
        Complex64::new(self.re.total(), self.im.total())
    }
}

fn chunk_bounds(len: usize, chunk: usize) -> Vec<(usize, usize)> {
    let chunk = chunk.max(1);
    (0..len.div_ceil(chunk))
        .map(|c| (c * chunk, ((c + 1) * chunk).min(len)))
        .collect()
}

/// Sum of `term(i)` for `i < len`.
pub fn sum_real<F>(len: usize, chunk: usize, term: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let partials: Vec<f64> = chunk_bounds(len, chunk)
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut acc = Neumaier::default();
            for i in lo..hi {
                acc.add(term(i));
            }
            acc.total()
        })
        .collect();
    let mut acc = Neumaier::default();
    for p in partials {
        acc.add(p);
    }
    acc.total()
}

pub fn sum_complex<F>(len: usize, chunk: usize, term: F) -> Complex64
where
    F: Fn(usize) -> Complex64 + Sync,
{
    let partials: Vec<Complex64> = chunk_bounds(len, chunk)
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut acc = ComplexNeumaier::default();
            for i in lo..hi {
                acc.add(term(i));
            }
            acc.total()
        })
        .collect();
    let mut acc = ComplexNeumaier::default();
    for p in partials {
        acc.add(p);
    }
    acc.total()
}

/// Largest `value(i)` for `i < len` (0 for an empty range).
pub fn max_real<F>(len: usize, chunk: usize, value: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    chunk_bounds(len, chunk)
        .into_par_iter()
        .map(|(lo, hi)| (lo..hi).map(&value).fold(0.0f64, f64::max))
        .reduce(|| 0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensation_recovers_small_terms() {
        let mut acc = Neumaier::default();
        acc.add(1e16);
        for _ in 0..1000 {
            acc.add(1.0);
        }
        acc.add(-1e16);
        assert_eq!(acc.total(), 1000.0);
    }

    #[test]
    fn chunked_sum_independent_of_chunk_for_integers() {
        let exact = (0..10_000).map(|i| i as f64).sum::<f64>();
        for chunk in [1, 7, 128, 1 << 20] {
            assert_eq!(sum_real(10_000, chunk, |i| i as f64), exact);
        }
        assert_eq!(sum_real(0, 16, |_| 1.0), 0.0);
    }
}
