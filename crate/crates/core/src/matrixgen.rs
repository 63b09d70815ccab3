//! Correlation matrices used by the experiments, class-membership checks, and
//! square-root factors for sampling.

use std::collections::HashSet;
use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SymSparse;

/// Above this dimension, general sparse matrices are factored through the
/// binomial series instead of a dense decomposition.
pub const DENSE_LIMIT: usize = 4096;

const PD_RETRIES: usize = 50;

/// Off-diagonal row sums up to this bound use the series square root, which
/// converges geometrically at this rate or faster.
const SERIES_ROW_SUM: f64 = 0.75;

/// A symmetric correlation matrix with unit diagonal and sparse off-diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrMatrix {
    inner: SymSparse,
    band: Option<usize>,
}

impl CorrMatrix {
    pub fn identity(p: usize) -> Self {
        CorrMatrix {
            inner: SymSparse::identity(p),
            band: Some(0),
        }
    }

    /// Builds from upper-triangle entries; fails on entries with magnitude `>= 1`.
    pub fn from_upper(
        p: usize,
        entries: impl IntoIterator<Item = (usize, usize, f64)>,
        band: Option<usize>,
    ) -> Result<Self> {
        let mut checked = Vec::new();
        for (i, j, v) in entries {
            if i >= j || j >= p {
                return Err(Error::invalid(format!(
                    "entry ({i},{j}) is not strictly upper triangular in dimension {p}"
                )));
            }
            if !(v.abs() < 1.0) {
                return Err(Error::invalid(format!(
                    "off-diagonal entry ({i},{j}) = {v} must have magnitude < 1"
                )));
            }
            checked.push((i, j, v));
        }
        let inner = SymSparse::from_upper(vec![1.0; p], checked);
        let band = band.or_else(|| Some(inner.bandwidth()).filter(|&b| b <= 8));
        Ok(CorrMatrix { inner, band })
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    pub fn band(&self) -> Option<usize> {
        self.band
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner.get(i, j)
    }

    pub fn as_sparse(&self) -> &SymSparse {
        &self.inner
    }

    pub fn upper_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.inner.upper_entries()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.inner.mul_vec(x)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.inner.to_dense()
    }

    /// Writes the upper triangle as `i,j,value` rows (0-based, diagonal implicit).
    pub fn write_triplets(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(["i", "j", "value"]).map_err(|e| Error::csv(path, e))?;
        for (i, j, v) in self.upper_entries() {
            w.write_record([i.to_string(), j.to_string(), format!("{v:?}")])
                .map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_triplets(path: &Path, p: usize) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["i", "j", "value"] {
            return Err(Error::Parse {
                path: path.into(),
                message: format!("expected header i,j,value, found {headers:?}"),
            });
        }
        let mut entries = Vec::new();
        for rec in rdr.deserialize::<(usize, usize, f64)>() {
            entries.push(rec.map_err(|e| Error::csv(path, e))?);
        }
        Self::from_upper(p, entries, None)
    }
}

/// `T(a)`: unit diagonal, `a` on the first off-diagonals.
pub fn tridiagonal(p: usize, a: f64) -> Result<CorrMatrix> {
    if p == 0 {
        return Err(Error::invalid("p must be at least 1"));
    }
    if !(a.abs() < 0.5) {
        return Err(Error::invalid(format!("tridiagonal requires |a| < 1/2, got {a}")));
    }
    CorrMatrix::from_upper(p, (1..p).map(|j| (j - 1, j, a)), Some(1))
}

/// Band-2 matrix with `a1` on the first and `a2` on the second off-diagonals.
pub fn pentadiagonal(p: usize, a1: f64, a2: f64) -> Result<CorrMatrix> {
    if p == 0 {
        return Err(Error::invalid("p must be at least 1"));
    }
    if !a1.is_finite() || !a2.is_finite() {
        return Err(Error::invalid("band values must be finite"));
    }
    if a1.abs() + a2.abs() >= 1.0 {
        warn!("pentadiagonal({a1}, {a2}) is not diagonally dominant");
    }
    let first = (1..p).map(|j| (j - 1, j, a1));
    let second = (2..p).map(|j| (j - 2, j, a2));
    CorrMatrix::from_upper(p, first.chain(second), Some(if p > 2 { 2 } else { 1 }))
}

/// Random sparse correlation matrix: each pair `i < j` is nonzero independently
/// with probability `avg_offdiag_per_row / (p - 1)`, with value `±magnitude`.
pub fn random_sparse<R: Rng + ?Sized>(
    p: usize,
    avg_offdiag_per_row: f64,
    magnitude: f64,
    rng: &mut R,
) -> Result<CorrMatrix> {
    if p == 0 {
        return Err(Error::invalid("p must be at least 1"));
    }
    if !(avg_offdiag_per_row >= 0.0) || !(magnitude.abs() < 1.0) {
        return Err(Error::invalid(format!(
            "invalid random_sparse parameters (avg {avg_offdiag_per_row}, magnitude {magnitude})"
        )));
    }
    if avg_offdiag_per_row * magnitude.abs() >= 1.0 {
        return Err(Error::invalid(format!(
            "avg_offdiag_per_row * magnitude = {} must be < 1",
            avg_offdiag_per_row * magnitude.abs()
        )));
    }
    if p == 1 || avg_offdiag_per_row == 0.0 || magnitude == 0.0 {
        return Ok(CorrMatrix::identity(p));
    }
    let pairs = (p as u64) * (p as u64 - 1) / 2;
    let prob = (avg_offdiag_per_row / (p - 1) as f64).min(1.0);
    let binom = Binomial::new(pairs, prob).map_err(|e| Error::invalid(e.to_string()))?;
    for _ in 0..PD_RETRIES {
        let count = binom.sample(rng) as usize;
        let mut seen: HashSet<(usize, usize)> = HashSet::with_capacity(count);
        let mut entries = Vec::with_capacity(count);
        while entries.len() < count {
            let i = rng.random_range(0..p);
            let j = rng.random_range(0..p);
            if i == j {
                continue;
            }
            let key = (i.min(j), i.max(j));
            if seen.insert(key) {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                entries.push((key.0, key.1, sign * magnitude.abs()));
            }
        }
        let m = CorrMatrix::from_upper(p, entries, None)?;
        if is_positive_definite(&m) {
            return Ok(m);
        }
    }
    Err(Error::GenerationFailed {
        attempts: PD_RETRIES,
    })
}

/// Positive-definiteness check: Gershgorin first, then a dense Cholesky for
/// moderate `p`, or a power-iteration bound on the off-diagonal part otherwise.
pub fn is_positive_definite(m: &CorrMatrix) -> bool {
    let s = m.as_sparse();
    if max_offdiag_row_sum(s) < 1.0 {
        return true;
    }
    if s.dim() <= DENSE_LIMIT {
        return m.to_dense().cholesky().is_some();
    }
    spectral_radius_offdiag(s, 200) < 0.95
}

/// Power-iteration estimate of the spectral radius of the off-diagonal part.
fn spectral_radius_offdiag(s: &SymSparse, iters: usize) -> f64 {
    let p = s.dim();
    // deterministic start vector with no special structure
    let mut v: Vec<f64> = (0..p).map(|i| 1.0 + ((i * 7919) % 13) as f64 / 13.0).collect();
    let mut est = 0.0;
    for _ in 0..iters {
        // iterate on E^2 so that negative eigenvalues are captured too
        let w = s.mul_vec_offdiag(&s.mul_vec_offdiag(&v));
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        est = (norm / vn).sqrt();
        v = w.into_iter().map(|x| x / norm).collect();
    }
    est
}

/// Membership in the summability classes and the related constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub in_mp: bool,
    pub d_omega: f64,
    pub in_mp_star: bool,
    pub in_mp_plus: bool,
    pub delta0: f64,
}

pub fn check_class(omega: &CorrMatrix, gamma: f64, cap_a: f64, omega0: f64) -> ClassReport {
    let s = omega.as_sparse();
    let p = s.dim();
    let mut in_mp = true;
    let mut row_upper = vec![0.0; p];
    let mut col_upper = vec![0.0; p];
    let mut delta0: f64 = 0.0;
    let mut nonnegative = true;
    for i in 0..p {
        let mut gsum = 1.0; // unit diagonal
        for &(j, v) in s.row(i) {
            gsum += v.abs().powf(gamma);
            delta0 = delta0.max(v.abs());
            nonnegative &= v >= 0.0;
            if j > i {
                row_upper[i] += v.abs();
                col_upper[j] += v.abs();
            }
        }
        if gsum > cap_a {
            in_mp = false;
        }
    }
    let norm_inf = row_upper.iter().cloned().fold(0.0, f64::max);
    let norm_one = col_upper.iter().cloned().fold(0.0, f64::max);
    let d_omega = norm_inf.max(norm_one);
    let in_mp_star = in_mp && d_omega <= omega0;
    ClassReport {
        in_mp,
        d_omega,
        in_mp_star,
        in_mp_plus: in_mp_star && nonnegative,
        delta0,
    }
}

/// A factor `B` with `B B' = Omega`, in whichever representation fits the matrix.
#[derive(Debug, Clone)]
pub enum SqrtFactor {
    /// Lower-triangular banded Cholesky factor; row `i` holds columns `i-band..=i`.
    Banded { p: usize, band: usize, data: Vec<f64> },
    /// Dense factor (lower Cholesky or symmetric square root).
    Dense(DMatrix<f64>),
    /// Symmetric square root applied through `sum_k c_k E^k`, `E = Omega - I`.
    Series { offdiag: SymSparse, coeffs: Vec<f64> },
}

impl SqrtFactor {
    pub fn dim(&self) -> usize {
        match self {
            SqrtFactor::Banded { p, .. } => *p,
            SqrtFactor::Dense(m) => m.nrows(),
            SqrtFactor::Series { offdiag, .. } => offdiag.dim(),
        }
    }

    /// Returns `B z`.
    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), self.dim());
        match self {
            SqrtFactor::Banded { p, band, data } => {
                let w = band + 1;
                (0..*p)
                    .map(|i| {
                        let lo = i.saturating_sub(*band);
                        (lo..=i).map(|j| data[i * w + (j + band - i)] * z[j]).sum()
                    })
                    .collect()
            }
            SqrtFactor::Dense(m) => {
                let v = m * nalgebra::DVector::from_column_slice(z);
                v.as_slice().to_vec()
            }
            SqrtFactor::Series { offdiag, coeffs } => {
                let mut acc = z.to_vec();
                let mut term = z.to_vec();
                for &c in &coeffs[1..] {
                    term = offdiag.mul_vec_offdiag(&term);
                    for (a, t) in acc.iter_mut().zip(&term) {
                        *a += c * t;
                    }
                }
                acc
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            SqrtFactor::Dense(m) => m.clone(),
            _ => {
                let p = self.dim();
                let mut out = DMatrix::zeros(p, p);
                let mut e = vec![0.0; p];
                for j in 0..p {
                    e[j] = 1.0;
                    let col = self.apply(&e);
                    out.set_column(j, &nalgebra::DVector::from_vec(col));
                    e[j] = 0.0;
                }
                out
            }
        }
    }
}

/// Any factor `B` with `B B' = Omega`: banded Cholesky for banded input, the
/// symmetric binomial series when the off-diagonal mass is small, and a dense
/// Cholesky otherwise (series again beyond [`DENSE_LIMIT`]).
pub fn sqrt_factor(omega: &CorrMatrix) -> Result<SqrtFactor> {
    if let Some(band) = omega.band() {
        return banded_cholesky(omega.as_sparse(), band);
    }
    if max_offdiag_row_sum(omega.as_sparse()) <= SERIES_ROW_SUM || omega.dim() > DENSE_LIMIT {
        return series_sqrt(omega);
    }
    omega
        .to_dense()
        .cholesky()
        .map(|c| SqrtFactor::Dense(c.l()))
        .ok_or_else(|| Error::NotPositiveDefinite("dense Cholesky failed".into()))
}

/// Symmetric positive square root: the binomial series when the off-diagonal
/// mass is small or `p` is large, a dense eigendecomposition otherwise.
pub fn sym_sqrt_factor(omega: &CorrMatrix) -> Result<SqrtFactor> {
    if max_offdiag_row_sum(omega.as_sparse()) <= SERIES_ROW_SUM || omega.dim() > DENSE_LIMIT {
        series_sqrt(omega)
    } else {
        sym_sqrt(omega).map(SqrtFactor::Dense)
    }
}

fn max_offdiag_row_sum(s: &SymSparse) -> f64 {
    (0..s.dim())
        .map(|i| s.row(i).iter().map(|&(_, v)| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Dense symmetric square root via the eigendecomposition.
pub fn sym_sqrt(omega: &CorrMatrix) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(omega.to_dense());
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(Error::NotPositiveDefinite(format!("smallest eigenvalue {min:e}")));
    }
    let roots = eig.eigenvalues.map(f64::sqrt);
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&roots) * v.transpose())
}

fn banded_cholesky(s: &SymSparse, band: usize) -> Result<SqrtFactor> {
    let p = s.dim();
    let w = band + 1;
    let mut data = vec![0.0; p * w];
    let at = |i: usize, j: usize| i * w + (j + band - i);
    for i in 0..p {
        let lo = i.saturating_sub(band);
        for j in lo..=i {
            let mut sum = s.get(i, j);
            let klo = lo.max(j.saturating_sub(band));
            for k in klo..j {
                sum -= data[at(i, k)] * data[at(j, k)];
            }
            if i == j {
                if !(sum > 0.0) {
                    return Err(Error::NotPositiveDefinite(format!(
                        "banded Cholesky pivot {sum:e} at row {i}"
                    )));
                }
                data[at(i, i)] = sum.sqrt();
            } else {
                data[at(i, j)] = sum / data[at(j, j)];
            }
        }
    }
    Ok(SqrtFactor::Banded { p, band, data })
}

fn series_sqrt(omega: &CorrMatrix) -> Result<SqrtFactor> {
    let s = omega.as_sparse();
    let gersh = max_offdiag_row_sum(s);
    let rho = if gersh < 1.0 { gersh } else { spectral_radius_offdiag(s, 200) };
    if !(rho < 0.95) {
        return Err(Error::NotPositiveDefinite(format!(
            "off-diagonal spectral radius {rho:.3} too large for the series square root"
        )));
    }
    // binomial coefficients of (1 + x)^{1/2}
    let mut coeffs = vec![1.0];
    let mut c: f64 = 1.0;
    let mut k = 1;
    loop {
        c *= (0.5 - (k as f64 - 1.0)) / k as f64;
        coeffs.push(c);
        if c.abs() * rho.powi(k as i32) < 1e-15 || k > 2000 {
            break;
        }
        k += 1;
    }
    let offdiag = SymSparse::from_upper(vec![0.0; s.dim()], s.upper_entries());
    Ok(SqrtFactor::Series { offdiag, coeffs })
}
