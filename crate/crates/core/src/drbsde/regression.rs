//! Cross-sectional least squares used by the Monte Carlo solver.
//!
//! Columns are standardized, then orthonormalized by modified Gram–Schmidt.
//! A column whose residual after projection falls below `DROP_RATIO` of its
//! standardized norm is dropped as collinear. Every inner product is a sum
//! over fixed-size chunks reduced in index order, so results do not depend
//! on the number of worker threads.

use rayon::prelude::*;

const CHUNK: usize = 4096;
const DROP_RATIO: f64 = 1e-8;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect::<Vec<f64>>()
        .iter()
        .sum()
}

pub(crate) fn mean(a: &[f64]) -> f64 {
    a.par_chunks(CHUNK)
        .map(|x| x.iter().sum::<f64>())
        .collect::<Vec<f64>>()
        .iter()
        .sum::<f64>()
        / a.len() as f64
}

/// Orthonormal basis of the span of a set of feature columns.
pub(crate) struct Projector {
    q: Vec<Vec<f64>>,
}

impl Projector {
    /// `columns` excludes the constant, which is always included.
    pub(crate) fn new(n: usize, columns: Vec<Vec<f64>>) -> Self {
        let inv_sqrt_n = 1.0 / (n as f64).sqrt();
        let mut q: Vec<Vec<f64>> = vec![vec![inv_sqrt_n; n]];
        for mut c in columns {
            let m = mean(&c);
            c.par_iter_mut().for_each(|v| *v -= m);
            let norm0 = dot(&c, &c).sqrt();
            if !(norm0 > 0.0) || !norm0.is_finite() {
                continue;
            }
            c.par_iter_mut().for_each(|v| *v /= norm0);
            for b in &q {
                let r = dot(&c, b);
                c.par_iter_mut().zip(b.par_iter()).for_each(|(v, w)| *v -= r * w);
            }
            let norm = dot(&c, &c).sqrt();
            if norm < DROP_RATIO {
                continue;
            }
            c.par_iter_mut().for_each(|v| *v /= norm);
            q.push(c);
        }
        Self { q }
    }

    #[cfg(test)]
    pub(crate) fn rank(&self) -> usize {
        self.q.len()
    }

    /// Least-squares fitted values of `y`.
    pub(crate) fn project(&self, y: &[f64]) -> Vec<f64> {
        let mut fit = vec![0.0; y.len()];
        for b in &self.q {
            let r = dot(y, b);
            fit.par_iter_mut().zip(b.par_iter()).for_each(|(f, w)| *f += r * w);
        }
        fit
    }
}

/// Piecewise-constant regression on equal-width bins of a scalar feature.
pub(crate) fn bin_means(x: &[f64], y: &[f64], n_bins: usize) -> Vec<f64> {
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / n_bins as f64;
    let bin = |v: f64| {
        if width > 0.0 {
            (((v - lo) / width) as usize).min(n_bins - 1)
        } else {
            0
        }
    };
    let mut sum = vec![0.0; n_bins];
    let mut count = vec![0usize; n_bins];
    for (&a, &b) in x.iter().zip(y) {
        let k = bin(a);
        sum[k] += b;
        count[k] += 1;
    }
    x.iter()
        .map(|&a| {
            let k = bin(a);
            sum[k] / count[k] as f64
        })
        .collect()
}
