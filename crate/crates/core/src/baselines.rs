//! Comparison selectors: thresholding rules, coordinate-descent lasso, the
//! closed-form bivariate lasso and subset selection, and subset selection
//! restricted to screened components.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphops::{survivors, GramSource, Sidedness};
use crate::sparse::SymSparse;
use crate::ups::SelectionResult;

pub fn soft_threshold(y: f64, lambda: f64) -> f64 {
    y.signum() * (y.abs() - lambda).max(0.0)
}

pub fn hard_threshold(y: f64, lambda: f64) -> f64 {
    if y.abs() >= lambda {
        y
    } else {
        0.0
    }
}

/// Default lasso penalty `max{(vartheta + r) / (2 r), 1 / (1 + sqrt((1-a)/(1+a)))} tau`.
pub fn ideal_lasso_lambda(vartheta: f64, r: f64, a: f64, tau: f64) -> f64 {
    let first = (vartheta + r) / (2.0 * r);
    let second = 1.0 / (1.0 + ((1.0 - a) / (1.0 + a)).sqrt());
    first.max(second) * tau
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    pub lambda: f64,
    pub max_sweeps: usize,
    /// Convergence when the largest coordinate change in a sweep falls below this.
    pub tol: f64,
}

impl LassoConfig {
    pub fn new(lambda: f64) -> Self {
        LassoConfig {
            lambda,
            max_sweeps: 10_000,
            tol: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !(self.tol > 0.0) || self.max_sweeps == 0 {
            return Err(Error::invalid(format!("invalid lasso configuration {self:?}")));
        }
        Ok(())
    }
}

/// Input to the coordinate-descent solver.
#[derive(Debug, Clone, Copy)]
pub enum LassoProblem<'a> {
    /// `½ ‖y - X b‖² + lambda ‖b‖₁`.
    Design { x: &'a DMatrix<f64>, y: &'a [f64] },
    /// `½ b' G b - b' c + lambda ‖b‖₁` with a dense Gram matrix.
    Gram { gram: &'a DMatrix<f64>, c: &'a [f64] },
    /// As `Gram`, with a sparse Gram matrix.
    SparseGram { gram: &'a SymSparse, c: &'a [f64] },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub beta: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    /// Largest violation of the optimality conditions at `beta`.
    pub kkt_violation: f64,
}

/// Coordinate-wise view of a quadratic loss.
trait CdState {
    fn dim(&self) -> usize;
    fn curvature(&self, j: usize) -> f64;
    /// Negative partial derivative of the smooth part at the current point.
    fn neg_grad(&self, j: usize) -> f64;
    /// Moves coordinate `j` by `delta`.
    fn update(&mut self, j: usize, delta: f64);
    /// Exact negative gradient recomputed from scratch.
    fn exact_neg_grad(&self, beta: &[f64]) -> Vec<f64>;
}

struct DesignState<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [f64],
    resid: DVector<f64>,
    norms: Vec<f64>,
}

impl CdState for DesignState<'_> {
    fn dim(&self) -> usize {
        self.x.ncols()
    }
    fn curvature(&self, j: usize) -> f64 {
        self.norms[j]
    }
    fn neg_grad(&self, j: usize) -> f64 {
        self.x.column(j).dot(&self.resid)
    }
    fn update(&mut self, j: usize, delta: f64) {
        self.resid.axpy(-delta, &self.x.column(j), 1.0);
    }
    fn exact_neg_grad(&self, beta: &[f64]) -> Vec<f64> {
        let r = DVector::from_column_slice(self.y) - self.x * DVector::from_column_slice(beta);
        self.x.tr_mul(&r).as_slice().to_vec()
    }
}

struct DenseGramState<'a> {
    gram: &'a DMatrix<f64>,
    c: &'a [f64],
    g: Vec<f64>,
}

impl CdState for DenseGramState<'_> {
    fn dim(&self) -> usize {
        self.c.len()
    }
    fn curvature(&self, j: usize) -> f64 {
        self.gram[(j, j)]
    }
    fn neg_grad(&self, j: usize) -> f64 {
        self.g[j]
    }
    fn update(&mut self, j: usize, delta: f64) {
        for (gi, a) in self.g.iter_mut().zip(self.gram.column(j).iter()) {
            *gi -= delta * a;
        }
    }
    fn exact_neg_grad(&self, beta: &[f64]) -> Vec<f64> {
        let gb = self.gram * DVector::from_column_slice(beta);
        self.c.iter().zip(gb.iter()).map(|(c, v)| c - v).collect()
    }
}

struct SparseGramState<'a> {
    gram: &'a SymSparse,
    c: &'a [f64],
    g: Vec<f64>,
}

impl CdState for SparseGramState<'_> {
    fn dim(&self) -> usize {
        self.c.len()
    }
    fn curvature(&self, j: usize) -> f64 {
        self.gram.diag()[j]
    }
    fn neg_grad(&self, j: usize) -> f64 {
        self.g[j]
    }
    fn update(&mut self, j: usize, delta: f64) {
        self.g[j] -= delta * self.gram.diag()[j];
        for &(i, v) in self.gram.row(j) {
            self.g[i] -= delta * v;
        }
    }
    fn exact_neg_grad(&self, beta: &[f64]) -> Vec<f64> {
        let gb = self.gram.mul_vec(beta);
        self.c.iter().zip(gb).map(|(c, v)| c - v).collect()
    }
}

fn kkt_violation(neg_grad: &[f64], beta: &[f64], lambda: f64) -> f64 {
    neg_grad
        .iter()
        .zip(beta)
        .map(|(&g, &b)| {
            if b == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                (g - lambda * b.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

fn run_cd<S: CdState>(state: &mut S, config: &LassoConfig) -> LassoFit {
    let p = state.dim();
    let mut beta = vec![0.0; p];
    let mut sweeps = 0;
    let mut converged = false;
    let lambda = config.lambda;
    let step = |state: &mut S, beta: &mut [f64], j: usize| -> f64 {
        let h = state.curvature(j);
        let z = state.neg_grad(j) + h * beta[j];
        let new = soft_threshold(z, lambda) / h;
        let delta = new - beta[j];
        if delta != 0.0 {
            state.update(j, delta);
            beta[j] = new;
        }
        delta.abs()
    };
    'outer: while sweeps < config.max_sweeps {
        // full pass over every coordinate
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            max_change = max_change.max(step(state, &mut beta, j));
        }
        if max_change < config.tol {
            converged = true;
            break;
        }
        // passes restricted to the active set until it settles
        let active: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
        loop {
            if sweeps >= config.max_sweeps {
                break 'outer;
            }
            sweeps += 1;
            let mut change: f64 = 0.0;
            for &j in &active {
                change = change.max(step(state, &mut beta, j));
            }
            if change < config.tol {
                break;
            }
        }
    }
    let viol = kkt_violation(&state.exact_neg_grad(&beta), &beta, lambda);
    LassoFit {
        beta,
        sweeps,
        converged,
        kkt_violation: viol,
    }
}

/// Cyclic coordinate descent with exact soft-threshold updates, warm-started at
/// zero. Non-convergence is reported through `converged`, not as an error.
pub fn lasso_cd(problem: LassoProblem, config: &LassoConfig) -> Result<LassoFit> {
    config.validate()?;
    let fit = match problem {
        LassoProblem::Design { x, y } => {
            if x.nrows() != y.len() {
                return Err(Error::DimensionMismatch(format!(
                    "X has {} rows, y has {}",
                    x.nrows(),
                    y.len()
                )));
            }
            let norms: Vec<f64> = (0..x.ncols()).map(|j| x.column(j).norm_squared()).collect();
            if norms.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::invalid("design has a zero column"));
            }
            let mut st = DesignState {
                x,
                y,
                resid: DVector::from_column_slice(y),
                norms,
            };
            run_cd(&mut st, config)
        }
        LassoProblem::Gram { gram, c } => {
            if gram.nrows() != c.len() || gram.ncols() != c.len() {
                return Err(Error::DimensionMismatch("Gram and c disagree".into()));
            }
            if (0..c.len()).any(|j| !(gram[(j, j)] > 0.0)) {
                return Err(Error::invalid("Gram diagonal must be positive"));
            }
            let mut st = DenseGramState { gram, c, g: c.to_vec() };
            run_cd(&mut st, config)
        }
        LassoProblem::SparseGram { gram, c } => {
            if gram.dim() != c.len() {
                return Err(Error::DimensionMismatch("Gram and c disagree".into()));
            }
            if gram.diag().iter().any(|&d| !(d > 0.0)) {
                return Err(Error::invalid("Gram diagonal must be positive"));
            }
            let mut st = SparseGramState { gram, c, g: c.to_vec() };
            run_cd(&mut st, config)
        }
    };
    if !fit.converged {
        warn!("lasso did not converge in {} sweeps", fit.sweeps);
    }
    Ok(fit)
}

fn bilasso_objective(b: (f64, f64), y: (f64, f64), a: f64, lambda: f64) -> f64 {
    0.5 * (b.0 * b.0 + b.1 * b.1) + a * b.0 * b.1 - y.0 * b.0 - y.1 * b.1 + lambda * (b.0.abs() + b.1.abs())
}

/// Exact minimizer of `½ b' [[1,a],[a,1]] b - b' y + lambda ‖b‖₁`, found by
/// checking the optimality conditions of every sign pattern.
pub fn bilasso(y1: f64, y2: f64, a: f64, lambda: f64) -> (f64, f64) {
    let tol = 1e-12 * (1.0 + y1.abs().max(y2.abs()) + lambda);
    let y = (y1, y2);
    let mut best: Option<((f64, f64), f64)> = None;
    let mut consider = |b: (f64, f64)| {
        let f = bilasso_objective(b, y, a, lambda);
        if best.is_none_or(|(_, fb)| f < fb) {
            best = Some((b, f));
        }
    };
    if y1.abs() <= lambda + tol && y2.abs() <= lambda + tol {
        consider((0.0, 0.0));
    }
    for s in [1.0, -1.0] {
        let b1 = y1 - lambda * s;
        if b1 * s > 0.0 && (y2 - a * b1).abs() <= lambda + tol {
            consider((b1, 0.0));
        }
        let b2 = y2 - lambda * s;
        if b2 * s > 0.0 && (y1 - a * b2).abs() <= lambda + tol {
            consider((0.0, b2));
        }
    }
    let det = 1.0 - a * a;
    for s1 in [1.0, -1.0] {
        for s2 in [1.0, -1.0] {
            let z1 = y1 - lambda * s1;
            let z2 = y2 - lambda * s2;
            let b = ((z1 - a * z2) / det, (z2 - a * z1) / det);
            if b.0 * s1 > 0.0 && b.1 * s2 > 0.0 {
                consider(b);
            }
        }
    }
    best.map(|(b, _)| b).unwrap_or((0.0, 0.0))
}

/// Minimizer of `½ b₁² + ½ b₂² + a b₁ b₂ - y'b + (lambda²/2) ‖b‖₀` over the four
/// supports; ties go to the smaller support, then to the first coordinate.
pub fn bisubset(y1: f64, y2: f64, a: f64, lambda: f64) -> (f64, f64) {
    let half_l2 = 0.5 * lambda * lambda;
    let det = 1.0 - a * a;
    let joint = ((y1 - a * y2) / det, (y2 - a * y1) / det);
    let joint_value = -0.5 * (y1 * joint.0 + y2 * joint.1) + 2.0 * half_l2;
    let candidates = [
        ((0.0, 0.0), 0.0),
        ((y1, 0.0), -0.5 * y1 * y1 + half_l2),
        ((0.0, y2), -0.5 * y2 * y2 + half_l2),
        (joint, joint_value),
    ];
    let mut best = candidates[0];
    for &(b, f) in &candidates[1..] {
        if f < best.1 - 1e-12 * (1.0 + best.1.abs()) {
            best = (b, f);
        }
    }
    best.0
}

/// Largest component solved exhaustively by [`subset_on_components`].
pub const SUBSET_K_MAX: usize = 16;

/// Value of `-½ w_S' A_SS^-1 w_S + ½ lambda² |S|` and the fitted values, or
/// `None` when the block is singular.
fn subset_value(a: &DMatrix<f64>, w: &[f64], support: &[usize], half_l2: f64) -> Option<(f64, Vec<f64>)> {
    if support.is_empty() {
        return Some((0.0, Vec::new()));
    }
    let sub = DMatrix::from_fn(support.len(), support.len(), |i, j| a[(support[i], support[j])]);
    let ws = DVector::from_iterator(support.len(), support.iter().map(|&i| w[i]));
    let chol = sub.cholesky()?;
    let mu = chol.solve(&ws);
    Some((-0.5 * ws.dot(&mu) + half_l2 * support.len() as f64, mu.as_slice().to_vec()))
}

/// Per-component subset selection with free nonzero values: minimizes
/// `½ (w - A mu)' A^-1 (w - A mu) + ½ lambda² |supp mu|`.
pub fn subset_fit(a: &DMatrix<f64>, w: &[f64], lambda: f64, k_max: usize) -> Result<(Vec<f64>, bool)> {
    let k = w.len();
    if a.nrows() != k || a.ncols() != k {
        return Err(Error::DimensionMismatch(format!("A is {}x{}, w has {k}", a.nrows(), a.ncols())));
    }
    let half_l2 = 0.5 * lambda * lambda;
    let singular = || Error::NotPositiveDefinite(format!("component block of size {k}"));
    let mut best_support: Vec<usize> = Vec::new();
    let mut best_value: f64 = 0.0;
    let mut best_mu = Vec::new();
    let exhaustive = k <= k_max;
    if exhaustive {
        // masks in order of increasing size then lexicographic support keep ties stable
        let mut masks: Vec<u64> = (1u64..(1u64 << k)).collect();
        masks.sort_by_key(|&m| {
            let idx: Vec<usize> = (0..k).filter(|&i| m >> i & 1 == 1).collect();
            (idx.len(), idx)
        });
        for m in masks {
            let support: Vec<usize> = (0..k).filter(|&i| m >> i & 1 == 1).collect();
            let (v, mu) = subset_value(a, w, &support, half_l2).ok_or_else(singular)?;
            if v < best_value - 1e-12 * (1.0 + best_value.abs()) {
                best_value = v;
                best_support = support;
                best_mu = mu;
            }
        }
    } else {
        warn!("component of size {k} exceeds {k_max}; using greedy forward selection");
        loop {
            let mut step: Option<(f64, Vec<usize>, Vec<f64>)> = None;
            for i in (0..k).filter(|i| !best_support.contains(i)) {
                let mut s = best_support.clone();
                s.push(i);
                s.sort_unstable();
                let (v, mu) = subset_value(a, w, &s, half_l2).ok_or_else(singular)?;
                if v < best_value && step.as_ref().is_none_or(|(bv, _, _)| v < *bv) {
                    step = Some((v, s, mu));
                }
            }
            let Some((v, s, mu)) = step else { break };
            best_value = v;
            best_support = s;
            best_mu = mu;
        }
    }
    let mut out = vec![0.0; k];
    for (&i, &m) in best_support.iter().zip(&best_mu) {
        out[i] = m;
    }
    Ok((out, exhaustive))
}

/// Screens at `t`, then runs [`subset_fit`] on every component.
pub fn subset_on_components(
    inner_products: &[f64],
    source: &GramSource,
    t: f64,
    lambda: f64,
    sidedness: Sidedness,
    k_max: usize,
) -> Result<SelectionResult> {
    let p = inner_products.len();
    let mut result = SelectionResult::empty(p, "subset_components");
    result.penalty = Some(lambda);
    let surv = survivors(inner_products, t, sidedness);
    result.survivor_count = surv.indices.len();
    let dec = source.decompose(&surv.indices);
    result.component_size_histogram = dec.components.histogram();
    for (comp, block) in dec.components.components.iter().zip(&dec.blocks) {
        let w: Vec<f64> = comp.iter().map(|&j| inner_products[j]).collect();
        match subset_fit(block, &w, lambda, k_max) {
            Ok((mu, exhaustive)) => {
                if !exhaustive {
                    result.oversize_components += 1;
                }
                for (&j, &m) in comp.iter().zip(&mu) {
                    result.beta_hat[j] = m;
                }
            }
            Err(e) => result
                .component_failures
                .push(format!("component starting at {}: {e}", comp[0])),
        }
    }
    Ok(result)
}

/// Coordinatewise soft or hard thresholding of the inner products.
pub fn threshold_select(inner_products: &[f64], lambda: f64, hard: bool) -> SelectionResult {
    let label = if hard { "hard" } else { "soft" };
    let mut result = SelectionResult::empty(inner_products.len(), label);
    result.penalty = Some(lambda);
    for (b, &y) in result.beta_hat.iter_mut().zip(inner_products) {
        *b = if hard { hard_threshold(y, lambda) } else { soft_threshold(y, lambda) };
    }
    result.survivor_count = result.beta_hat.iter().filter(|&&b| b != 0.0).count();
    result
}
