//! Calibration arithmetic shared by every other module.
//!
//! All logarithms are natural. The calibration ties sparsity, signal strength and
//! sample size to the dimension `p` through fixed exponents:
//! `eps = p^-vartheta`, `tau = sqrt(2 r ln p)`, `n = round(p^theta)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Calibration exponents plus the structural constants of the matrix classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseParams {
    /// Sparsity exponent.
    pub vartheta: f64,
    /// Sample-size exponent.
    pub theta: f64,
    /// Signal-strength exponent.
    pub r: f64,
    /// Threshold exponent used by `t = sqrt(2 q ln p)`.
    pub q: f64,
    /// Band correlation of the reference matrix, when there is one.
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default = "default_omega0")]
    pub omega0: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_cap_a")]
    pub cap_a: f64,
}

fn default_omega0() -> f64 {
    0.45
}

fn default_gamma() -> f64 {
    0.5
}

fn default_cap_a() -> f64 {
    3.0
}

impl PhaseParams {
    pub fn new(vartheta: f64, theta: f64, r: f64, q: f64) -> Self {
        PhaseParams {
            vartheta,
            theta,
            r,
            q,
            a: None,
            omega0: default_omega0(),
            gamma: default_gamma(),
            cap_a: default_cap_a(),
        }
    }

    pub fn with_a(mut self, a: f64) -> Self {
        self.a = Some(a);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |x: f64| x > 0.0 && x < 1.0;
        if !open_unit(self.vartheta) {
            return Err(Error::invalid(format!("vartheta = {} not in (0,1)", self.vartheta)));
        }
        if !open_unit(self.theta) {
            return Err(Error::invalid(format!("theta = {} not in (0,1)", self.theta)));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::invalid(format!("r = {} must be positive", self.r)));
        }
        if !(self.q > 0.0 && self.q.is_finite()) {
            return Err(Error::invalid(format!("q = {} must be positive", self.q)));
        }
        if !(self.omega0 > 0.0 && self.omega0 < 0.5) {
            return Err(Error::invalid(format!("omega0 = {} not in (0,1/2)", self.omega0)));
        }
        if !open_unit(self.gamma) {
            return Err(Error::invalid(format!("gamma = {} not in (0,1)", self.gamma)));
        }
        if !(self.cap_a > 0.0) {
            return Err(Error::invalid(format!("cap_a = {} must be positive", self.cap_a)));
        }
        if let Some(a) = self.a {
            if !(a.abs() < 0.5) {
                return Err(Error::invalid(format!("|a| = {} must be < 1/2", a.abs())));
            }
        }
        Ok(())
    }

    /// `vartheta < r < (1 + sqrt(1 - vartheta))^2`, the almost-full-recovery band.
    pub fn in_almost_full_recovery(&self) -> bool {
        let upper = (1.0 + (1.0 - self.vartheta).sqrt()).powi(2);
        self.vartheta < self.r && self.r < upper
    }

    /// The threshold exponent that balances false positives and misses.
    pub fn ideal_q(&self) -> f64 {
        ideal_q(self.vartheta, self.r)
    }
}

/// Dimension-dependent quantities derived from [`PhaseParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSize {
    pub p: usize,
    pub n: usize,
    pub eps: f64,
    pub tau: f64,
    pub s_expected: f64,
}

pub fn calibrate(p: usize, params: &PhaseParams) -> Result<ProblemSize> {
    if p < 2 {
        return Err(Error::invalid(format!("p = {p} must be at least 2")));
    }
    params.validate()?;
    let pf = p as f64;
    let eps = pf.powf(-params.vartheta);
    let n = (pf.powf(params.theta).round() as usize).max(1);
    Ok(ProblemSize {
        p,
        n,
        eps,
        tau: tau_of(p, params.r),
        s_expected: pf * eps,
    })
}

/// `sqrt(2 r ln p)`.
pub fn tau_of(p: usize, r: f64) -> f64 {
    (2.0 * r * (p as f64).ln()).sqrt()
}

/// Inverse of [`tau_of`]: the `r` giving signal strength `tau` at dimension `p`.
pub fn r_of_tau(p: usize, tau: f64) -> f64 {
    tau * tau / (2.0 * (p as f64).ln())
}

/// `sqrt(2 q ln p)`.
pub fn threshold_of(p: usize, q: f64) -> f64 {
    (2.0 * q * (p as f64).ln()).sqrt()
}

/// `(vartheta + r)^2 / (4 r)`.
pub fn ideal_q(vartheta: f64, r: f64) -> f64 {
    (vartheta + r).powi(2) / (4.0 * r)
}

pub fn eta_constant(vartheta: f64, r: f64, omega0: f64) -> Result<f64> {
    if !(vartheta > 0.0) {
        return Err(Error::invalid("vartheta must be positive"));
    }
    if !(r > vartheta) {
        return Err(Error::invalid(format!(
            "eta requires r > vartheta (r = {r}, vartheta = {vartheta})"
        )));
    }
    if !(omega0 > 0.0 && omega0 < 0.5) {
        return Err(Error::invalid(format!("omega0 = {omega0} not in (0,1/2)")));
    }
    let ratio = vartheta / r;
    let scale = (vartheta * r).sqrt() / ((vartheta + r) * (1.0 + 2.0 * omega0).sqrt());
    let m = (2.0 * ratio)
        .min(1.0 - ratio)
        .min((2.0 * (1.0 - omega0)).sqrt() - 1.0 + ratio);
    Ok(scale * m)
}

/// Coordinate-wise size of the design-noise term, `sqrt(2 ln p) p^{-(theta-(1-vartheta))/2}`.
pub fn design_gap(p: usize, theta: f64, vartheta: f64) -> Result<f64> {
    let excess = theta - (1.0 - vartheta);
    if !(excess > 0.0) {
        return Err(Error::invalid(format!(
            "design gap requires theta > 1 - vartheta (theta = {theta}, vartheta = {vartheta})"
        )));
    }
    if p < 2 {
        return Err(Error::invalid(format!("p = {p} must be at least 2")));
    }
    let pf = p as f64;
    Ok((2.0 * pf.ln()).sqrt() * pf.powf(-excess / 2.0))
}

/// Standard normal survival function.
pub fn gaussian_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Standard normal distribution function.
pub fn gaussian_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Strength above which signals are recovered exactly: `(1 + sqrt(1 - vartheta)) sqrt(2 ln p)`.
pub fn exact_recovery_tau(p: usize, vartheta: f64) -> f64 {
    (1.0 + (1.0 - vartheta).sqrt()) * (2.0 * (p as f64).ln()).sqrt()
}
