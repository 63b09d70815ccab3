//! Sampling of coefficients, designs, responses and Stein observations.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrixgen::{CorrMatrix, SqrtFactor};

/// Distribution of the nonzero coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalPrior {
    PointMass { tau: f64 },
    Uniform { center: f64, half_width: f64 },
    /// Equal-weight mixture of `Uniform(center ± w)` and `Uniform(-center ± w)`.
    TwoSidedMixture { center: f64, half_width: f64 },
}

impl SignalPrior {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SignalPrior::PointMass { tau } if tau.is_finite() && tau != 0.0 => Ok(()),
            SignalPrior::Uniform { center, half_width }
            | SignalPrior::TwoSidedMixture { center, half_width }
                if half_width >= 0.0 && center - half_width > 0.0 =>
            {
                Ok(())
            }
            other => Err(Error::invalid(format!("invalid signal prior {other:?}"))),
        }
    }

    /// Center of the positive part, which plays the role of `tau` in tuning.
    pub fn center(&self) -> f64 {
        match *self {
            SignalPrior::PointMass { tau } => tau,
            SignalPrior::Uniform { center, .. } | SignalPrior::TwoSidedMixture { center, .. } => {
                center
            }
        }
    }

    pub fn is_two_sided(&self) -> bool {
        matches!(self, SignalPrior::TwoSidedMixture { .. })
    }

    /// Whether `x` lies in the support of the prior.
    pub fn contains(&self, x: f64) -> bool {
        match *self {
            SignalPrior::PointMass { tau } => x == tau,
            SignalPrior::Uniform { center, half_width } => (x - center).abs() <= half_width,
            SignalPrior::TwoSidedMixture { center, half_width } => {
                (x.abs() - center).abs() <= half_width
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            SignalPrior::PointMass { tau } => tau,
            SignalPrior::Uniform { center, half_width } => {
                uniform_around(center, half_width, rng)
            }
            SignalPrior::TwoSidedMixture { center, half_width } => {
                let v = uniform_around(center, half_width, rng);
                if rng.random::<bool>() {
                    v
                } else {
                    -v
                }
            }
        }
    }
}

fn uniform_around<R: Rng + ?Sized>(center: f64, half_width: f64, rng: &mut R) -> f64 {
    if half_width == 0.0 {
        center
    } else {
        rng.random_range(center - half_width..=center + half_width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    RandomDesignGaussian,
    RandomDesignUniform,
    Stein,
}

impl ModelKind {
    pub fn is_stein(self) -> bool {
        self == ModelKind::Stein
    }
}

/// One realization of the truth and the observations.
///
/// For the Stein model `x` is absent and `y` holds the length-`p` vector `Ỹ`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub beta: Vec<f64>,
    pub x: Option<DMatrix<f64>>,
    pub y: Vec<f64>,
    pub kind: ModelKind,
    pub seed: u64,
    pub omega: Arc<CorrMatrix>,
}

impl Dataset {
    pub fn p(&self) -> usize {
        self.beta.len()
    }

    /// Number of observations; `p` for the Stein model.
    pub fn n(&self) -> usize {
        self.x.as_ref().map_or(self.beta.len(), |x| x.nrows())
    }

    /// `X'Y` for random designs, `Ỹ` for the Stein model.
    pub fn inner_products(&self) -> Vec<f64> {
        match &self.x {
            Some(x) => x.tr_mul(&DVector::from_column_slice(&self.y)).as_slice().to_vec(),
            None => self.y.clone(),
        }
    }
}

/// `beta_j` is zero with probability `1 - eps` and a draw from `prior` otherwise.
pub fn draw_beta<R: Rng + ?Sized>(p: usize, eps: f64, prior: &SignalPrior, rng: &mut R) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::invalid(format!("eps = {eps} not in [0,1]")));
    }
    prior.validate()?;
    Ok((0..p)
        .map(|_| {
            if rng.random::<f64>() < eps {
                prior.sample(rng)
            } else {
                0.0
            }
        })
        .collect())
}

fn standard_normals<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

/// Rows i.i.d. `N(0, Omega / n)`, each realized as `B zeta / sqrt(n)`.
pub fn draw_design_gaussian<R: Rng + ?Sized>(n: usize, factor: &SqrtFactor, rng: &mut R) -> DMatrix<f64> {
    let p = factor.dim();
    let z = DMatrix::from_row_iterator(n, p, (0..n * p).map(|_| StandardNormal.sample(rng)));
    rows_times_factor(z, factor) / (n as f64).sqrt()
}

/// `Z B'`: row `i` becomes `B z_i`.
fn rows_times_factor(z: DMatrix<f64>, factor: &SqrtFactor) -> DMatrix<f64> {
    if let SqrtFactor::Dense(b) = factor {
        return z * b.transpose();
    }
    let (n, p) = z.shape();
    let mut x = DMatrix::zeros(n, p);
    let mut buf = vec![0.0; p];
    for i in 0..n {
        for (j, v) in buf.iter_mut().enumerate() {
            *v = z[(i, j)];
        }
        for (j, v) in factor.apply(&buf).into_iter().enumerate() {
            x[(i, j)] = v;
        }
    }
    x
}

/// `X = M Omega^{1/2} / sqrt(n)` with `M` i.i.d. `Uniform(-sqrt 3, sqrt 3)`;
/// `sym_root` must be the symmetric square root.
pub fn draw_design_uniform<R: Rng + ?Sized>(n: usize, sym_root: &SqrtFactor, rng: &mut R) -> DMatrix<f64> {
    let p = sym_root.dim();
    let s3 = 3f64.sqrt();
    let unif = Uniform::new(-s3, s3).expect("valid bounds");
    let m = DMatrix::from_row_iterator(n, p, (0..n * p).map(|_| unif.sample(rng)));
    // M R = M R' because R is symmetric
    rows_times_factor(m, sym_root) / (n as f64).sqrt()
}

/// `Y = X beta + z` with a supplied noise vector.
pub fn response_with_noise(x: &DMatrix<f64>, beta: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    if x.ncols() != beta.len() || x.nrows() != z.len() {
        return Err(Error::DimensionMismatch(format!(
            "X is {}x{}, beta has {}, noise has {}",
            x.nrows(),
            x.ncols(),
            beta.len(),
            z.len()
        )));
    }
    let mut y = z.to_vec();
    for (j, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            for (yi, xij) in y.iter_mut().zip(x.column(j).iter()) {
                *yi += b * xij;
            }
        }
    }
    Ok(y)
}

/// `Y = X beta + z`, `z ~ N(0, I_n)`.
pub fn draw_response<R: Rng + ?Sized>(x: &DMatrix<f64>, beta: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let z = standard_normals(x.nrows(), rng);
    response_with_noise(x, beta, &z)
}

/// `Ỹ = Omega beta + B zeta` with a supplied `zeta`.
pub fn stein_with_noise(omega: &CorrMatrix, factor: &SqrtFactor, beta: &[f64], zeta: &[f64]) -> Result<Vec<f64>> {
    let p = omega.dim();
    if beta.len() != p || zeta.len() != p || factor.dim() != p {
        return Err(Error::DimensionMismatch(format!(
            "Omega is {p}x{p}, beta has {}, zeta has {}",
            beta.len(),
            zeta.len()
        )));
    }
    let mean = omega.mul_vec(beta);
    let noise = factor.apply(zeta);
    Ok(mean.iter().zip(&noise).map(|(m, e)| m + e).collect())
}

/// `Ỹ ~ N(Omega beta, Omega)`.
pub fn draw_stein<R: Rng + ?Sized>(
    omega: &CorrMatrix,
    factor: &SqrtFactor,
    beta: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let zeta = standard_normals(omega.dim(), rng);
    stein_with_noise(omega, factor, beta, &zeta)
}

/// Metadata written next to a dataset on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub kind: ModelKind,
    pub seed: u64,
    pub p: usize,
    pub n: usize,
    #[serde(default)]
    pub params: serde_json::Value,
}

fn write_column(path: &Path, values: &[f64]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    for v in values {
        w.write_record([format!("{v:?}")]).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let row = rec
            .iter()
            .map(|f| {
                f.trim().parse::<f64>().map_err(|e| Error::Parse {
                    path: path.into(),
                    message: format!("`{f}`: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn read_column(path: &Path) -> Result<Vec<f64>> {
    read_rows(path)?
        .into_iter()
        .map(|r| match r.as_slice() {
            [v] => Ok(*v),
            _ => Err(Error::Parse {
                path: path.into(),
                message: format!("expected one value per line, found {}", r.len()),
            }),
        })
        .collect()
}

impl Dataset {
    /// Writes `beta.csv`, `Y.csv`, `omega.csv`, `meta.json` and, for random
    /// designs, `X.csv` (row-major, one observation per line).
    pub fn write_dir(&self, dir: &Path, params: serde_json::Value) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_column(&dir.join("beta.csv"), &self.beta)?;
        write_column(&dir.join("Y.csv"), &self.y)?;
        self.omega.write_triplets(&dir.join("omega.csv"))?;
        if let Some(x) = &self.x {
            let path = dir.join("X.csv");
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_path(&path)
                .map_err(|e| Error::csv(&path, e))?;
            for i in 0..x.nrows() {
                w.write_record(x.row(i).iter().map(|v| format!("{v:?}")))
                    .map_err(|e| Error::csv(&path, e))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
        let meta = DatasetMeta {
            kind: self.kind,
            seed: self.seed,
            p: self.p(),
            n: self.n(),
            params,
        };
        let path = dir.join("meta.json");
        let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::json(&path, e))?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn read_dir(dir: &Path) -> Result<Dataset> {
        let meta_path = dir.join("meta.json");
        let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: DatasetMeta = serde_json::from_str(&text).map_err(|e| Error::json(&meta_path, e))?;
        let beta = read_column(&dir.join("beta.csv"))?;
        let y = read_column(&dir.join("Y.csv"))?;
        let omega = CorrMatrix::read_triplets(&dir.join("omega.csv"), meta.p)?;
        let x = if meta.kind.is_stein() {
            None
        } else {
            let path = dir.join("X.csv");
            let rows = read_rows(&path)?;
            if rows.len() != meta.n || rows.iter().any(|r| r.len() != meta.p) {
                return Err(Error::DimensionMismatch(format!(
                    "{} does not hold a {}x{} matrix",
                    path.display(),
                    meta.n,
                    meta.p
                )));
            }
            Some(DMatrix::from_fn(meta.n, meta.p, |i, j| rows[i][j]))
        };
        if beta.len() != meta.p || y.len() != meta.n {
            return Err(Error::DimensionMismatch(format!(
                "beta has {} entries and Y has {}, expected p = {} and n = {}",
                beta.len(),
                y.len(),
                meta.p,
                meta.n
            )));
        }
        Ok(Dataset {
            beta,
            x,
            y,
            kind: meta.kind,
            seed: meta.seed,
            omega: Arc::new(omega),
        })
    }
}
