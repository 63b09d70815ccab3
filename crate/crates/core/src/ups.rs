//! The screen-and-clean estimator: univariate screening, a per-component
//! penalized likelihood fit with values restricted to `{0, u}`, data-driven
//! tuning, the iterative refinement, and Hamming loss.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::time::Instant;

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::graphops::{survivors, GramSource, Sidedness};

/// Largest component solved by exhaustive enumeration.
pub const K_MAX: usize = 20;

/// Ratio bound on successive standard deviations that accepts a refinement round.
pub const REFINE_RATIO: f64 = 1.05;

pub const REFINE_ROUNDS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningSource {
    Ideal,
    Estimated,
}

/// Screening threshold `t`, penalty `lambda` and nonzero value `u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpsTuning {
    pub t: f64,
    pub lambda: f64,
    pub u: f64,
    pub source: TuningSource,
}

impl UpsTuning {
    /// `t = (vartheta + r) / (2 r) tau`, `lambda = sqrt(2 vartheta ln p)`, `u = tau`
    /// with `r` recovered from `tau = sqrt(2 r ln p)`.
    pub fn ideal(p: usize, vartheta: f64, tau: f64) -> Self {
        let lp = (p as f64).ln();
        let r = tau * tau / (2.0 * lp);
        UpsTuning {
            t: (vartheta + r) / (2.0 * r) * tau,
            lambda: (2.0 * vartheta * lp).sqrt(),
            u: tau,
            source: TuningSource::Ideal,
        }
    }

    /// `t = sqrt(2 q ln p)` with `lambda` and `u` estimated from the exceedances.
    pub fn estimated(inner_products: &[f64], q: f64, sidedness: Sidedness) -> Result<Self> {
        let t = (2.0 * q * (inner_products.len() as f64).ln()).sqrt();
        let (lambda, u) = estimate_tuning(inner_products, t, sidedness)?;
        Ok(UpsTuning {
            t,
            lambda,
            u,
            source: TuningSource::Estimated,
        })
    }
}

/// `lambda = sqrt(-2 ln F(t))` and `u` = mean exceedance, where `F(t)` is the
/// fraction of coordinates strictly above `t` (absolute values when two-sided).
pub fn estimate_tuning(inner_products: &[f64], t_star: f64, sidedness: Sidedness) -> Result<(f64, f64)> {
    let p = inner_products.len() as f64;
    let mut count = 0usize;
    let mut sum = 0.0;
    for &v in inner_products {
        let v = match sidedness {
            Sidedness::OneSided => v,
            Sidedness::TwoSided => v.abs(),
        };
        if v > t_star {
            count += 1;
            sum += v;
        }
    }
    if count == 0 {
        return Err(Error::NoExceedances { threshold: t_star });
    }
    let frac = count as f64 / p;
    Ok(((-2.0 * frac.ln()).max(0.0).sqrt(), sum / count as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PStepOptions {
    pub k_max: usize,
    /// Nonzero values take the sign of `w_k` instead of always `+u`.
    pub two_sided: bool,
}

impl Default for PStepOptions {
    fn default() -> Self {
        PStepOptions {
            k_max: K_MAX,
            two_sided: false,
        }
    }
}

/// Minimizer of `½ (w - A mu)' A^-1 (w - A mu) + ½ lambda² |supp mu|` over
/// `mu_k ∈ {0, s_k u}`. For a singular `A` the objective omits the constant `½ w' A^-1 w`.
#[derive(Debug, Clone, PartialEq)]
pub struct PStepFit {
    pub mu: Vec<f64>,
    pub objective: f64,
    /// False when the component was too large and greedy selection was used.
    pub exhaustive: bool,
}

fn bit_count(mask: u64) -> u32 {
    mask.count_ones()
}

/// Fewer nonzeros first, then the lexicographically smaller sorted support.
fn support_precedes(a: u64, b: u64) -> bool {
    match bit_count(a).cmp(&bit_count(b)) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => {
            // the first differing bit (from index 0 upward) decides
            let diff = a ^ b;
            diff != 0 && a & (diff & diff.wrapping_neg()) != 0
        }
    }
}

struct Quadratic<'a> {
    a: &'a DMatrix<f64>,
    w: &'a [f64],
    signs: Vec<f64>,
    u: f64,
    half_lambda2: f64,
}

impl Quadratic<'_> {
    /// Objective without the constant `½ w' A^-1 w`, evaluated directly.
    fn value(&self, mask: u64) -> f64 {
        let k = self.w.len();
        let idx: Vec<usize> = (0..k).filter(|&i| mask >> i & 1 == 1).collect();
        let mut lin = 0.0;
        let mut quad = 0.0;
        for &i in &idx {
            lin += self.signs[i] * self.w[i];
            for &j in &idx {
                quad += self.signs[i] * self.signs[j] * self.a[(i, j)];
            }
        }
        -self.u * lin + 0.5 * self.u * self.u * quad + self.half_lambda2 * idx.len() as f64
    }

    /// Expanded objective at an arbitrary `mu`.
    fn value_of(&self, mu: &[f64]) -> f64 {
        let idx: Vec<usize> = (0..mu.len()).filter(|&i| mu[i] != 0.0).collect();
        let lin: f64 = idx.iter().map(|&i| mu[i] * self.w[i]).sum();
        let quad: f64 = idx
            .iter()
            .flat_map(|&i| idx.iter().map(move |&j| (i, j)))
            .map(|(i, j)| mu[i] * mu[j] * self.a[(i, j)])
            .sum();
        -lin + 0.5 * quad + self.half_lambda2 * idx.len() as f64
    }

    /// Whether `cand` should replace `best`, given incrementally tracked values.
    fn better(&self, cand: u64, f_cand: f64, best: u64, f_best: f64) -> bool {
        let tol = 1e-9 * (1.0 + f_best.abs());
        if f_cand < f_best - tol {
            return true;
        }
        if f_cand > f_best + tol {
            return false;
        }
        let (ec, eb) = (self.value(cand), self.value(best));
        let tie = 1e-12 * (1.0 + eb.abs());
        if (ec - eb).abs() <= tie {
            support_precedes(cand, best)
        } else {
            ec < eb
        }
    }

    fn exhaustive(&self) -> u64 {
        let k = self.w.len();
        let mut v = vec![0.0; k]; // v_i = sum_{l in S} s_l A_il
        let mut mask = 0u64;
        let (mut lin, mut quad, mut size) = (0.0, 0.0, 0usize);
        let mut best = 0u64;
        let mut f_best = 0.0;
        let u2 = 0.5 * self.u * self.u;
        for step in 1u64..(1u64 << k) {
            let i = step.trailing_zeros() as usize;
            let s = self.signs[i];
            if mask >> i & 1 == 0 {
                quad += 2.0 * s * v[i] + self.a[(i, i)];
                for (vl, al) in v.iter_mut().zip(self.a.column(i).iter()) {
                    *vl += s * al;
                }
                lin += s * self.w[i];
                size += 1;
            } else {
                for (vl, al) in v.iter_mut().zip(self.a.column(i).iter()) {
                    *vl -= s * al;
                }
                quad -= 2.0 * s * v[i] + self.a[(i, i)];
                lin -= s * self.w[i];
                size -= 1;
            }
            mask ^= 1 << i;
            let f = -self.u * lin + u2 * quad + self.half_lambda2 * size as f64;
            if self.better(mask, f, best, f_best) {
                best = mask;
                f_best = f;
            }
        }
        best
    }

    /// Forward selection: add the coordinate with the largest decrease until none decreases.
    fn greedy(&self) -> Vec<bool> {
        let k = self.w.len();
        let mut chosen = vec![false; k];
        let mut v = vec![0.0; k];
        let u2 = 0.5 * self.u * self.u;
        loop {
            let mut best: Option<(usize, f64)> = None;
            for i in (0..k).filter(|&i| !chosen[i]) {
                let s = self.signs[i];
                let delta = -self.u * s * self.w[i] + u2 * (2.0 * s * v[i] + self.a[(i, i)]) + self.half_lambda2;
                if delta < 0.0 && best.is_none_or(|(_, d)| delta < d) {
                    best = Some((i, delta));
                }
            }
            let Some((i, _)) = best else { break };
            chosen[i] = true;
            let s = self.signs[i];
            for (vl, al) in v.iter_mut().zip(self.a.column(i).iter()) {
                *vl += s * al;
            }
        }
        chosen
    }
}

/// Exact objective `½ (w - A mu)' A^-1 (w - A mu) + ½ lambda² |supp mu|` using a
/// Cholesky factor of `A`.
pub fn p_step_objective(chol: &Cholesky<f64, Dyn>, a: &DMatrix<f64>, w: &[f64], mu: &[f64], lambda: f64) -> f64 {
    let mu_v = DVector::from_column_slice(mu);
    let resid = DVector::from_column_slice(w) - a * &mu_v;
    let solved = chol.solve(&resid);
    0.5 * resid.dot(&solved) + 0.5 * lambda * lambda * mu.iter().filter(|&&m| m != 0.0).count() as f64
}

pub fn p_step_fit(a: &DMatrix<f64>, w: &[f64], lambda: f64, u: f64) -> Result<PStepFit> {
    p_step_fit_with(a, w, lambda, u, PStepOptions::default())
}

pub fn p_step_fit_with(a: &DMatrix<f64>, w: &[f64], lambda: f64, u: f64, opts: PStepOptions) -> Result<PStepFit> {
    let k = w.len();
    if a.nrows() != k || a.ncols() != k {
        return Err(Error::DimensionMismatch(format!(
            "A is {}x{} but w has {k} entries",
            a.nrows(),
            a.ncols()
        )));
    }
    if opts.k_max > 62 {
        return Err(Error::invalid("k_max above 62 is not supported"));
    }
    // A rank-deficient block (component larger than n) has no A^-1; the
    // selection only needs the expanded form, so it proceeds without it.
    let chol = a.clone().cholesky();
    if chol.is_none() {
        warn!("component block of size {k} is singular; objective reported without the constant term");
    }
    let signs: Vec<f64> = w
        .iter()
        .map(|&wi| if opts.two_sided && wi < 0.0 { -1.0 } else { 1.0 })
        .collect();
    let quad = Quadratic {
        a,
        w,
        signs,
        u,
        half_lambda2: 0.5 * lambda * lambda,
    };
    let (chosen, exhaustive) = if k <= opts.k_max {
        let mask = quad.exhaustive();
        ((0..k).map(|i| mask >> i & 1 == 1).collect::<Vec<_>>(), true)
    } else {
        warn!("component of size {k} exceeds {}; using greedy forward selection", opts.k_max);
        (quad.greedy(), false)
    };
    let mu: Vec<f64> = chosen
        .iter()
        .zip(&quad.signs)
        .map(|(&c, &s)| if c { s * u } else { 0.0 })
        .collect();
    let objective = match &chol {
        Some(chol) => p_step_objective(chol, a, w, &mu, lambda),
        None => quad.value_of(&mu),
    };
    Ok(PStepFit { mu, objective, exhaustive })
}

/// Estimated coefficients plus fit diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub beta_hat: Vec<f64>,
    pub survivor_count: usize,
    pub component_size_histogram: BTreeMap<usize, usize>,
    pub tuning: Option<UpsTuning>,
    /// Penalty of non-UPS methods (lasso, thresholding, subset).
    pub penalty: Option<f64>,
    pub method_label: String,
    pub refinement_rounds: usize,
    /// Standard-deviation ratios observed by the refinement loop, one per attempted round.
    pub refinement_ratios: Vec<f64>,
    /// Components solved greedily because they exceeded the exhaustive limit.
    pub oversize_components: usize,
    /// Components whose fit failed; their coefficients are left at zero.
    pub component_failures: Vec<String>,
    pub timings_ms: BTreeMap<String, f64>,
}

impl SelectionResult {
    pub fn empty(p: usize, method_label: &str) -> Self {
        SelectionResult {
            beta_hat: vec![0.0; p],
            survivor_count: 0,
            component_size_histogram: BTreeMap::new(),
            tuning: None,
            penalty: None,
            method_label: method_label.to_string(),
            refinement_rounds: 0,
            refinement_ratios: Vec::new(),
            oversize_components: 0,
            component_failures: Vec::new(),
            timings_ms: BTreeMap::new(),
        }
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.beta_hat.len()).filter(|&j| self.beta_hat[j] != 0.0).collect()
    }

    /// Compact JSON form: support indices and values instead of the full vector.
    pub fn to_json(&self) -> serde_json::Value {
        let support = self.support();
        let values: Vec<f64> = support.iter().map(|&j| self.beta_hat[j]).collect();
        serde_json::json!({
            "method": self.method_label,
            "p": self.beta_hat.len(),
            "support": support,
            "values": values,
            "survivor_count": self.survivor_count,
            "component_size_histogram": self.component_size_histogram,
            "tuning": self.tuning,
            "penalty": self.penalty,
            "refinement_rounds": self.refinement_rounds,
            "refinement_ratios": self.refinement_ratios,
            "oversize_components": self.oversize_components,
            "component_failures": self.component_failures,
            "timings_ms": self.timings_ms,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpsOptions {
    pub k_max: usize,
    pub sidedness: Sidedness,
}

impl Default for UpsOptions {
    fn default() -> Self {
        UpsOptions {
            k_max: K_MAX,
            sidedness: Sidedness::OneSided,
        }
    }
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Screens `inner_products` at `tuning.t`, splits the survivors into components
/// of the regularized graph and fits each component.
pub fn ups_from_inner(inner_products: &[f64], source: &GramSource, tuning: &UpsTuning, opts: UpsOptions) -> Result<SelectionResult> {
    let p = inner_products.len();
    if source.dim() != p {
        return Err(Error::DimensionMismatch(format!(
            "{} inner products for a {}-dimensional Gram matrix",
            p,
            source.dim()
        )));
    }
    let mut result = SelectionResult::empty(p, "ups");
    result.tuning = Some(*tuning);

    let start = Instant::now();
    let surv = survivors(inner_products, tuning.t, opts.sidedness);
    result.survivor_count = surv.indices.len();
    result.timings_ms.insert("screen".into(), elapsed_ms(start));

    let start = Instant::now();
    let dec = source.decompose(&surv.indices);
    result.component_size_histogram = dec.components.histogram();
    result.timings_ms.insert("decompose".into(), elapsed_ms(start));

    let start = Instant::now();
    let pstep = PStepOptions {
        k_max: opts.k_max,
        two_sided: opts.sidedness == Sidedness::TwoSided,
    };
    let fits: Vec<Result<PStepFit>> = dec
        .components
        .components
        .par_iter()
        .zip(dec.blocks.par_iter())
        .map(|(comp, block)| {
            let w: Vec<f64> = comp.iter().map(|&j| inner_products[j]).collect();
            p_step_fit_with(block, &w, tuning.lambda, tuning.u, pstep)
        })
        .collect();
    for (comp, fit) in dec.components.components.iter().zip(fits) {
        match fit {
            Ok(fit) => {
                if !fit.exhaustive {
                    result.oversize_components += 1;
                }
                for (&j, &m) in comp.iter().zip(&fit.mu) {
                    result.beta_hat[j] = m;
                }
            }
            Err(e) => result
                .component_failures
                .push(format!("component starting at {}: {e}", comp[0])),
        }
    }
    result.timings_ms.insert("p_step".into(), elapsed_ms(start));
    Ok(result)
}

pub fn ups_estimate(dataset: &Dataset, source: &GramSource, tuning: &UpsTuning, opts: UpsOptions) -> Result<SelectionResult> {
    ups_from_inner(&dataset.inner_products(), source, tuning, opts)
}

/// Sample standard deviation with the `1 / (p - 1)` variance normalization.
pub fn sample_sd(y: &[f64]) -> f64 {
    let n = y.len();
    if n < 2 {
        return 0.0;
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Iterates `W = X'Y - (X'X - Omega*) beta_hat` for up to three rounds, keeping
/// a round only when the standard deviation of `W` grows by at most 5%.
pub fn refine_from_inner(xty: &[f64], source: &GramSource, tuning: &UpsTuning, opts: UpsOptions) -> Result<SelectionResult> {
    let start = Instant::now();
    let mut fit = ups_from_inner(xty, source, tuning, opts)?;
    let mut s_prev = sample_sd(xty);
    let mut rounds = 0;
    let mut ratios = Vec::new();
    for j in 1..=REFINE_ROUNDS {
        let gb = source.gram_times(&fit.beta_hat);
        let sb = source.star_times(&fit.beta_hat);
        let w: Vec<f64> = (0..xty.len()).map(|i| xty[i] - (gb[i] - sb[i])).collect();
        let s = sample_sd(&w);
        let ratio = if s_prev > 0.0 { s / s_prev } else { 1.0 };
        ratios.push(ratio);
        if ratio > REFINE_RATIO {
            break;
        }
        fit = ups_from_inner(&w, source, tuning, opts)?;
        rounds = j;
        s_prev = s;
    }
    fit.method_label = "ups_refined".into();
    fit.refinement_rounds = rounds;
    fit.refinement_ratios = ratios;
    fit.timings_ms.insert("refine_total".into(), elapsed_ms(start));
    Ok(fit)
}

pub fn refine(dataset: &Dataset, source: &GramSource, tuning: &UpsTuning, opts: UpsOptions) -> Result<SelectionResult> {
    if dataset.x.is_none() {
        return Err(Error::invalid("refinement needs a random-design dataset"));
    }
    refine_from_inner(&dataset.inner_products(), source, tuning, opts)
}

/// Sign-mismatch count split into false positives (nonzero where the truth is
/// zero) and false negatives (zero or wrong sign where the truth is nonzero).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HammingLoss {
    pub total: usize,
    pub false_pos: usize,
    pub false_neg: usize,
}

fn sgn(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

pub fn hamming(beta_hat: &[f64], beta_true: &[f64]) -> Result<HammingLoss> {
    if beta_hat.len() != beta_true.len() {
        return Err(Error::DimensionMismatch(format!(
            "estimate has {} entries, truth has {}",
            beta_hat.len(),
            beta_true.len()
        )));
    }
    let mut loss = HammingLoss {
        total: 0,
        false_pos: 0,
        false_neg: 0,
    };
    for (&e, &t) in beta_hat.iter().zip(beta_true) {
        if sgn(e) != sgn(t) {
            if t == 0.0 {
                loss.false_pos += 1;
            } else {
                loss.false_neg += 1;
            }
        }
    }
    loss.total = loss.false_pos + loss.false_neg;
    Ok(loss)
}
