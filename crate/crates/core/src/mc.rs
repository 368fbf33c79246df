//! Deterministic Monte Carlo reductions.
//!
//! Replicates are grouped into fixed-size chunks. Each chunk is reduced
//! sequentially and the chunk results are merged in chunk order, so the
//! floating-point result is identical for any number of threads.

use serde::Serialize;

pub const CHUNK: usize = 256;

#[cfg(feature = "parallel")]
fn map_chunks<A, F>(n_chunks: usize, f: F) -> Vec<A>
where
    A: Send,
    F: Fn(usize) -> A + Sync + Send,
{
    use rayon::prelude::*;
    (0..n_chunks).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_chunks<A, F>(n_chunks: usize, f: F) -> Vec<A>
where
    A: Send,
    F: Fn(usize) -> A + Sync + Send,
{
    (0..n_chunks).map(f).collect()
}

/// Parallel map over `0..n` preserving order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let n_chunks = n.div_ceil(CHUNK);
    let chunks = map_chunks(n_chunks, |c| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(n);
        (lo..hi).map(&f).collect::<Vec<T>>()
    });
    chunks.into_iter().flatten().collect()
}

/// Reduces replicates `0..n` with a fixed chunking and merge order.
pub fn reduce_replicates<A, I, S, M>(n: usize, init: I, step: S, merge: M) -> A
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    S: Fn(&mut A, usize) + Sync + Send,
    M: Fn(&mut A, A),
{
    let n_chunks = n.div_ceil(CHUNK);
    let parts = map_chunks(n_chunks, |c| {
        let mut acc = init();
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(n);
        for k in lo..hi {
            step(&mut acc, k);
        }
        acc
    });
    let mut total = init();
    for p in parts {
        merge(&mut total, p);
    }
    total
}

/// Running first and second moments of a vector-valued statistic.
#[derive(Debug, Clone)]
pub struct Moments {
    pub count: usize,
    pub sum: Vec<f64>,
    pub sum_sq: Vec<f64>,
}

impl Moments {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            sum: vec![0.0; dim],
            sum_sq: vec![0.0; dim],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.count += 1;
        for ((s, q), v) in self.sum.iter_mut().zip(self.sum_sq.iter_mut()).zip(x) {
            *s += v;
            *q += v * v;
        }
    }

    pub fn merge(&mut self, other: Moments) {
        self.count += other.count;
        for (a, b) in self.sum.iter_mut().zip(other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(other.sum_sq) {
            *a += b;
        }
    }

    pub fn estimate(&self, i: usize) -> Estimate {
        Estimate::from_sums(self.count, self.sum[i], self.sum_sq[i])
    }

    pub fn estimates(&self) -> Vec<Estimate> {
        (0..self.sum.len()).map(|i| self.estimate(i)).collect()
    }
}

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn from_sums(n: usize, sum: f64, sum_sq: f64) -> Self {
        let nf = n as f64;
        let mean = sum / nf;
        let var = if n > 1 {
            ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0)
        } else {
            0.0
        };
        Self {
            mean,
            stderr: (var / nf).sqrt(),
        }
    }

    pub fn from_samples(xs: &[f64]) -> Self {
        let (s, q) = xs.iter().fold((0.0, 0.0), |(s, q), x| (s + x, q + x * x));
        Self::from_sums(xs.len(), s, q)
    }

    /// `|mean - target| <= k * stderr`, with a tiny absolute slack for exact cases.
    pub fn agrees_with(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr + 1e-12 * (1.0 + target.abs())
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduction_is_order_stable() {
        let f = |k: usize| ((k as f64) * 0.1).sin();
        let a = reduce_replicates(10_000, || 0.0, |acc, k| *acc += f(k), |a, b| *a += b);
        let b = reduce_replicates(10_000, || 0.0, |acc, k| *acc += f(k), |a, b| *a += b);
        assert_eq!(a.to_bits(), b.to_bits());
        let mapped = map_indexed(1000, |k| k * 2);
        assert_eq!(mapped[999], 1998);
    }

    #[test]
    fn estimate_of_constant_has_zero_error() {
        let e = Estimate::from_samples(&[2.0; 10]);
        assert_eq!(e.mean, 2.0);
        assert!(e.stderr < 1e-12);
    }

    #[test]
    fn slope_of_power_law() {
        let x = [8.0, 16.0, 32.0, 64.0];
        let y: Vec<f64> = x.iter().map(|t: &f64| 3.0 / t.sqrt()).collect();
        assert!((loglog_slope(&x, &y) + 0.5).abs() < 1e-12);
    }
}
