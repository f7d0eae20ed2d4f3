//! Square root of a symmetric positive definite matrix by the power series
//! of `√(1 − x)` applied to `I − Γ/|Γ|`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::paths::rng::CounterRng;

pub const DEFAULT_TERMS: usize = 20_000;
pub const DEFAULT_TOL: f64 = 1e-14;

/// A validated symmetric positive definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix(DMatrix<f64>);

impl SpdMatrix {
    /// Accepts `m` when it is square, symmetric to `1e-12·max(1, |m|)` and
    /// admits a Cholesky factorization.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::NotSpd(format!("shape {}x{}", m.nrows(), m.ncols())));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotSpd("non-finite entry".into()));
        }
        let scale = m.norm().max(1.0);
        let asym = (&m - m.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(Error::NotSpd(format!("asymmetry {asym:e}")));
        }
        if m.clone().cholesky().is_none() {
            return Err(Error::NotSpd("Cholesky factorization failed".into()));
        }
        Ok(Self(m))
    }

    pub fn from_row_slice(d: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != d * d {
            return Err(Error::Dimension(format!("{} entries for a {d}x{d} matrix", entries.len())));
        }
        Self::new(DMatrix::from_row_slice(d, d, entries))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// `c_j = −(1·3·⋯·(2j−3)) / (2^j · j!)`, the `j`-th Taylor coefficient of
/// `√(1 − x)`; the product is empty for `j = 1`.
pub fn sqrt_coefficient(j: usize) -> Result<f64> {
    if j == 0 {
        return Err(Error::InvalidArgument("coefficient index starts at 1".into()));
    }
    // (1·3⋯(2j−3)) / (2^j j!) = Π_{i<j} (2i−1)/(2i) · 1/(2j)
    let mut ratio = 1.0;
    for i in 1..j {
        ratio *= (2 * i - 1) as f64 / (2 * i) as f64;
    }
    Ok(-ratio / (2 * j) as f64)
}

/// Square root via `q = I + Σ_j c_j (I − Γ̂)^j` with `Γ̂ = Γ/|Γ|_F`,
/// rescaled by `|Γ|_F^{1/2}`.
///
/// Summation stops once a term's Frobenius norm drops below `tol`. The
/// spectrum of `Γ̂` lies in `(0, 1]`, so the terms decay like
/// `(1 − λ_min(Γ̂))^j`; ill-conditioned inputs need many terms.
pub fn spd_sqrt_series(gamma: &SpdMatrix, n_terms: usize, tol: f64) -> Result<SpdMatrix> {
    let d = gamma.dim();
    let scale = gamma.matrix().norm();
    let identity = DMatrix::<f64>::identity(d, d);
    let m = &identity - gamma.matrix() / scale;

    let mut q = identity.clone();
    let mut power = identity;
    let mut c = -0.5;
    let mut last = f64::INFINITY;
    let mut converged = false;
    for j in 1..=n_terms {
        power = &power * &m;
        let term = &power * c;
        last = term.norm();
        q += term;
        if last < tol {
            converged = true;
            break;
        }
        c *= (2 * j - 1) as f64 / (2 * j + 2) as f64;
    }
    if !converged {
        return Err(Error::SeriesNonConvergent {
            terms: n_terms,
            last_term: last,
        });
    }
    let r = q * scale.sqrt();
    SpdMatrix::new((&r + r.transpose()) * 0.5)
}

/// `|r·r − Γ|_F / |Γ|_F`.
pub fn sqrt_residual(gamma: &SpdMatrix, r: &SpdMatrix) -> f64 {
    (r.matrix() * r.matrix() - gamma.matrix()).norm() / gamma.matrix().norm()
}

/// Random SPD matrix `Q·diag(λ)·Qᵀ` with `Q` orthogonal (QR of a Gaussian
/// matrix) and eigenvalues log-uniform in `[1, cond]`. For `d ≥ 2` the
/// extremes `1` and `cond` are always present, so the condition number is
/// exactly `cond` up to rounding.
pub fn random_spd(d: usize, cond: f64, seed: u64) -> Result<SpdMatrix> {
    if d == 0 || !(cond >= 1.0) || !cond.is_finite() {
        return Err(Error::InvalidArgument(format!("need d >= 1 and finite cond >= 1, got d {d}, cond {cond}")));
    }
    let mut rng = CounterRng::new(seed, 0x5344);
    let g = DMatrix::from_fn(d, d, |_, _| rng.next_gaussian());
    let q = g.qr().q();
    let lambda: Vec<f64> = (0..d)
        .map(|i| match (i, d) {
            (0, _) => 1.0,
            (1, _) => cond,
            _ => cond.powf(rng.next_uniform()),
        })
        .collect();
    let m = &q * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(lambda)) * q.transpose();
    SpdMatrix::new((&m + m.transpose()) * 0.5)
}
