//! Closed-form phase-diagram quantities: region classifiers, per-signal error
//! exponents, the finite-`p` Hamming lower bound and the tuning window.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calib::{gaussian_cdf, gaussian_tail, tau_of};
use crate::error::{Error, Result};

/// Tolerance for deciding that a point lies on a region boundary.
pub const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMethod {
    Optimal,
    Lasso,
    Subset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    NoRecovery,
    AlmostFull,
    Exact,
    Nonoptimal,
    OptimalRegion,
    ExactRecovery,
    Unclassified,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::NoRecovery => "no_recovery",
            Label::AlmostFull => "almost_full",
            Label::Exact => "exact",
            Label::Nonoptimal => "nonoptimal",
            Label::OptimalRegion => "optimal_region",
            Label::ExactRecovery => "exact_recovery",
            Label::Unclassified => "unclassified",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionLabel {
    pub method: PhaseMethod,
    pub label: Label,
    /// Some defining inequality holds with equality (within [`BOUNDARY_TOL`]).
    pub boundary: bool,
}

fn near(x: f64, y: f64) -> bool {
    (x - y).abs() <= BOUNDARY_TOL
}

/// `(1 + sqrt(1 - vartheta))²`, the exact-recovery boundary of the optimal procedure.
pub fn exact_boundary(vartheta: f64) -> f64 {
    (1.0 + (1.0 - vartheta).sqrt()).powi(2)
}

pub fn classify_optimal(vartheta: f64, r: f64) -> RegionLabel {
    let upper = exact_boundary(vartheta);
    let label = if r < vartheta {
        Label::NoRecovery
    } else if r > upper {
        Label::Exact
    } else {
        Label::AlmostFull
    };
    RegionLabel {
        method: PhaseMethod::Optimal,
        label,
        boundary: near(r, vartheta) || near(r, upper),
    }
}

/// Slope `(1 + sqrt(1 - a²)) / a` separating the lasso's optimal and nonoptimal regions.
pub fn lasso_slope(a: f64) -> f64 {
    (1.0 + (1.0 - a * a).sqrt()) / a.abs()
}

/// `(1 + sqrt((1 + a) / (1 - a)))²`, the lasso's exact-recovery coefficient on `1 - vartheta`.
pub fn lasso_exact_coef(a: f64) -> f64 {
    (1.0 + ((1.0 + a) / (1.0 - a)).sqrt()).powi(2)
}

pub fn classify_lasso(vartheta: f64, r: f64, a: f64) -> Result<RegionLabel> {
    if !(a > 0.0 && a < 0.5) {
        return Err(Error::invalid(format!("lasso regions need a in (0, 1/2), got {a}")));
    }
    if r <= vartheta {
        return Err(Error::invalid(format!("lasso regions need r > vartheta, got r = {r}")));
    }
    let theta_cap = 2.0 * a / (1.0 + a);
    let lower = lasso_slope(a) * vartheta;
    let upper = lasso_exact_coef(a) * (1.0 - vartheta);
    let exact = exact_boundary(vartheta);
    let label = if vartheta < theta_cap && lower < r && r < upper {
        Label::Nonoptimal
    } else if vartheta < 1.0 && r < lower && r < exact {
        Label::OptimalRegion
    } else if vartheta < 1.0 && r > exact && r > upper {
        Label::ExactRecovery
    } else {
        Label::Unclassified
    };
    Ok(RegionLabel {
        method: PhaseMethod::Lasso,
        label,
        boundary: near(vartheta, theta_cap) || near(r, lower) || near(r, upper) || near(r, exact),
    })
}

pub fn v1(a: f64) -> f64 {
    let s = (1.0 - a * a).sqrt();
    (2.0 - s) / (s * (1.0 - s))
}

pub fn v2(a: f64) -> f64 {
    2.0 * (1.0 - a * a).sqrt() - 1.0
}

/// `[(sqrt(1 - 2 vartheta) + sqrt(1 - 2 vartheta + vartheta v2)) / v2]²`; `None`
/// when `vartheta >= 1/2`.
pub fn subset_exact_bound(vartheta: f64, a: f64) -> Option<f64> {
    if vartheta >= 0.5 {
        return None;
    }
    let w = v2(a);
    let s = 1.0 - 2.0 * vartheta;
    Some(((s.sqrt() + (s + vartheta * w).sqrt()) / w).powi(2))
}

pub fn classify_subset(vartheta: f64, r: f64, a: f64) -> Result<RegionLabel> {
    if !(a > 0.0 && a < 0.5) {
        return Err(Error::invalid(format!("subset regions need a in (0, 1/2), got {a}")));
    }
    if r <= vartheta {
        return Err(Error::invalid(format!("subset regions need r > vartheta, got r = {r}")));
    }
    let v = v1(a);
    let theta_cap = 4.0 * v / (v + 1.0).powi(2);
    let lower = v * vartheta;
    let exact = exact_boundary(vartheta);
    let bound = subset_exact_bound(vartheta, a);
    let label = match bound {
        Some(b) if vartheta < theta_cap && lower < r && r < b => Label::Nonoptimal,
        _ if vartheta < 1.0 && r < lower && r < exact => Label::OptimalRegion,
        Some(b) if vartheta < 1.0 && r > exact && r > b => Label::ExactRecovery,
        _ => Label::Unclassified,
    };
    Ok(RegionLabel {
        method: PhaseMethod::Subset,
        label,
        boundary: near(vartheta, theta_cap)
            || near(r, lower)
            || near(r, exact)
            || bound.is_some_and(|b| near(r, b)),
    })
}

/// `(r - vartheta)² / (4 r)`.
pub fn optimal_exponent(vartheta: f64, r: f64) -> Result<f64> {
    if r < vartheta || !(r > 0.0) {
        return Err(Error::invalid(format!("need r >= vartheta > 0, got ({vartheta}, {r})")));
    }
    Ok((r - vartheta).powi(2) / (4.0 * r))
}

/// Per-signal exponent of the lasso error lower bound at `lambda = sqrt(2 q ln p)`.
pub fn lasso_rate_lower(vartheta: f64, r: f64, a: f64, q: f64) -> Result<f64> {
    if r <= vartheta || !(q > 0.0) || !(a.abs() < 0.5) {
        return Err(Error::invalid(format!("invalid lasso rate inputs ({vartheta}, {r}, {a}, {q})")));
    }
    let k = (1.0 - a.abs()) / (1.0 + a.abs());
    let split = (vartheta + r).powi(2) / (4.0 * r);
    Ok(if q < split {
        (k * q).min(q - vartheta)
    } else if q < r {
        (k * q).min((r.sqrt() - q.sqrt()).powi(2))
    } else {
        0.0
    })
}

/// Lasso exponent minimized over the tuning: the optimal exponent when
/// `r / vartheta < (1 + sqrt(1 - a²)) / |a|`, otherwise the signed value
/// `vartheta - (1 - |a|)(1 - sqrt(1 - a²)) r / (2 a²)`.
pub fn lasso_best_exponent(vartheta: f64, r: f64, a: f64) -> Result<f64> {
    let opt = optimal_exponent(vartheta, r)?;
    if a == 0.0 || r / vartheta < lasso_slope(a) {
        return Ok(opt);
    }
    let s = (1.0 - a * a).sqrt();
    let c = (1.0 - a.abs()) * (1.0 - s) / (2.0 * a * a);
    Ok(vartheta - c * r)
}

/// Subset-selection exponent minimized over the tuning: the optimal exponent
/// when `r / vartheta < v1(a)`, otherwise `[2 vartheta + r(1-a²)]² / (4 r (1-a²)) - vartheta`.
pub fn subset_best_exponent(vartheta: f64, r: f64, a: f64) -> Result<f64> {
    let opt = optimal_exponent(vartheta, r)?;
    if a == 0.0 || r / vartheta < v1(a) {
        return Ok(opt);
    }
    let b = 1.0 - a * a;
    Ok((2.0 * vartheta + r * b).powi(2) / (4.0 * r * b) - vartheta)
}

/// `lambda_p = [ln((1 - eps)/eps) + tau²/2] / tau`.
pub fn lower_bound_lambda(p: usize, vartheta: f64, r: f64) -> f64 {
    let eps = (p as f64).powf(-vartheta);
    let tau = tau_of(p, r);
    (((1.0 - eps) / eps).ln() + tau * tau / 2.0) / tau
}

/// Finite-`p` Hamming lower bound `s_p [(1 - eps) Φ̄(λ) / eps + Φ(λ - τ)]`.
pub fn lower_bound_hamming(p: usize, vartheta: f64, r: f64) -> Result<f64> {
    if p < 2 || !(r > 0.0) || !(vartheta > 0.0 && vartheta < 1.0) {
        return Err(Error::invalid(format!("invalid lower-bound inputs ({p}, {vartheta}, {r})")));
    }
    let eps = (p as f64).powf(-vartheta);
    let s = p as f64 * eps;
    let tau = tau_of(p, r);
    let lam = lower_bound_lambda(p, vartheta, r);
    Ok(s * ((1.0 - eps) * gaussian_tail(lam) / eps + gaussian_cdf(lam - tau)))
}

/// Admissible range `(q_low, q_high]` of the threshold exponent for estimated tuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QWindow {
    pub q_low: f64,
    pub q_high: f64,
    /// `2 delta0 (1 + eta) - 1 <= vartheta / r`.
    pub delta0_condition: bool,
    /// The condition above holds with equality.
    pub delta0_boundary: bool,
}

impl QWindow {
    pub fn is_empty(&self) -> bool {
        self.q_low >= self.q_high
    }

    pub fn contains(&self, q: f64) -> bool {
        self.q_low < q && q <= self.q_high
    }
}

pub fn validate_q(vartheta: f64, r: f64, delta0: f64, eta: f64) -> Result<QWindow> {
    if r <= vartheta {
        return Err(Error::invalid(format!("need r > vartheta, got ({vartheta}, {r})")));
    }
    let lhs = 2.0 * delta0 * (1.0 + eta) - 1.0;
    let rhs = vartheta / r;
    Ok(QWindow {
        q_low: (delta0 * delta0 * (1.0 + eta).powi(2) * r).max(vartheta),
        q_high: (vartheta + r).powi(2) / (4.0 * r),
        delta0_condition: lhs <= rhs + BOUNDARY_TOL,
        delta0_boundary: near(lhs, rhs),
    })
}

/// One row of a phase-diagram grid export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub vartheta: f64,
    pub r: f64,
    pub a: f64,
    pub method: PhaseMethod,
    pub label: Label,
    pub exponent: Option<f64>,
}

/// Labels and exponents of all three methods on the product grid.
pub fn phase_grid(varthetas: &[f64], rs: &[f64], a: f64) -> Result<Vec<GridRow>> {
    let mut rows = Vec::new();
    for &vt in varthetas {
        for &r in rs {
            let opt = classify_optimal(vt, r);
            let (lasso, subset) = if r > vt {
                (classify_lasso(vt, r, a)?.label, classify_subset(vt, r, a)?.label)
            } else {
                (Label::Unclassified, Label::Unclassified)
            };
            let exps = if r >= vt {
                (
                    optimal_exponent(vt, r).ok(),
                    lasso_best_exponent(vt, r, a).ok(),
                    subset_best_exponent(vt, r, a).ok(),
                )
            } else {
                (None, None, None)
            };
            for (method, label, exponent) in [
                (PhaseMethod::Optimal, opt.label, exps.0),
                (PhaseMethod::Lasso, lasso, exps.1),
                (PhaseMethod::Subset, subset, exps.2),
            ] {
                rows.push(GridRow {
                    vartheta: vt,
                    r,
                    a,
                    method,
                    label,
                    exponent,
                });
            }
        }
    }
    Ok(rows)
}

/// Writes grid rows as CSV `vartheta,r,a,method,label,exponent`.
pub fn write_grid_csv(rows: &[GridRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["vartheta", "r", "a", "method", "label", "exponent"])
        .map_err(|e| Error::csv(path, e))?;
    for row in rows {
        let method = match row.method {
            PhaseMethod::Optimal => "optimal",
            PhaseMethod::Lasso => "lasso",
            PhaseMethod::Subset => "subset",
        };
        w.write_record([
            row.vartheta.to_string(),
            row.r.to_string(),
            row.a.to_string(),
            method.to_string(),
            row.label.as_str().to_string(),
            row.exponent.map_or(String::new(), |e| e.to_string()),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
