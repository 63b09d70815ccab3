//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Random `k × k` correlation matrix with moderate off-diagonals, from a
/// normalized Wishart draw plus a ridge.
pub fn random_correlation(k: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let m = k + 3;
    let z = DMatrix::from_fn(m, k, |_, _| rng.random::<f64>() - 0.5);
    let mut s = z.transpose() * z;
    for i in 0..k {
        s[(i, i)] += 0.15 * m as f64 / 12.0;
    }
    let d: Vec<f64> = (0..k).map(|i| s[(i, i)].sqrt()).collect();
    DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 } else { s[(i, j)] / (d[i] * d[j]) })
}

/// `½ (w - A mu)' A⁻¹ (w - A mu) + ½ lambda² |supp mu|` with a fresh LU solve.
pub fn p_step_value(a: &DMatrix<f64>, w: &[f64], mu: &[f64], lambda: f64) -> f64 {
    let w = DVector::from_column_slice(w);
    let mu_v = DVector::from_column_slice(mu);
    let resid = &w - a * &mu_v;
    let sol = a.clone().lu().solve(&resid).expect("nonsingular block");
    let k = mu.iter().filter(|&&m| m != 0.0).count();
    0.5 * resid.dot(&sol) + 0.5 * lambda * lambda * k as f64
}

/// Enumerates all `2^K` one-sided patterns `mu_k ∈ {0, u}`. Ties go to the
/// smaller support.
pub fn enumerate_p_step(a: &DMatrix<f64>, w: &[f64], lambda: f64, u: f64) -> (Vec<f64>, f64) {
    let k = w.len();
    let mut best: Option<(Vec<f64>, f64, usize)> = None;
    for mask in 0u32..(1 << k) {
        let mu: Vec<f64> = (0..k).map(|i| if mask >> i & 1 == 1 { u } else { 0.0 }).collect();
        let v = p_step_value(a, w, &mu, lambda);
        let size = mask.count_ones() as usize;
        let better = match &best {
            None => true,
            Some((_, bv, bs)) => v < bv - 1e-12 * (1.0 + bv.abs()) || ((v - bv).abs() <= 1e-12 * (1.0 + bv.abs()) && size < *bs),
        };
        if better {
            best = Some((mu, v, size));
        }
    }
    let (mu, v, _) = best.unwrap();
    (mu, v)
}

pub fn bilasso_value(b: (f64, f64), y: (f64, f64), a: f64, lambda: f64) -> f64 {
    0.5 * (b.0 * b.0 + b.1 * b.1) + a * b.0 * b.1 - y.0 * b.0 - y.1 * b.1 + lambda * (b.0.abs() + b.1.abs())
}

pub fn bisubset_value(b: (f64, f64), y: (f64, f64), a: f64, lambda: f64) -> f64 {
    let k = (b.0 != 0.0) as usize + (b.1 != 0.0) as usize;
    0.5 * (b.0 * b.0 + b.1 * b.1) + a * b.0 * b.1 - y.0 * b.0 - y.1 * b.1 + 0.5 * lambda * lambda * k as f64
}

/// Grid search over `b1` in steps of `step`; `b2` is minimized exactly for each `b1`
/// (one-dimensional soft thresholding).
pub fn grid_bilasso(y: (f64, f64), a: f64, lambda: f64, step: f64) -> (f64, f64) {
    let range = 2.0 * (y.0.abs() + y.1.abs()) / (1.0 - a * a) + 1.0;
    let steps = (range / step).ceil() as i64;
    let mut best = ((0.0, 0.0), f64::INFINITY);
    for i in -steps..=steps {
        let b1 = i as f64 * step;
        let z = y.1 - a * b1;
        let b2 = z.signum() * (z.abs() - lambda).max(0.0);
        let v = bilasso_value((b1, b2), y, a, lambda);
        if v < best.1 {
            best = ((b1, b2), v);
        }
    }
    best.0
}

/// Grid search for the L0 problem; `b2` is chosen between 0 and its
/// unpenalized optimum for each grid value of `b1` (exactly 0 included).
pub fn grid_bisubset(y: (f64, f64), a: f64, lambda: f64, step: f64) -> (f64, f64) {
    let range = 2.0 * (y.0.abs() + y.1.abs()) / (1.0 - a * a) + 1.0;
    let steps = (range / step).ceil() as i64;
    let mut best = ((0.0, 0.0), f64::INFINITY);
    for i in -steps..=steps {
        let b1 = i as f64 * step;
        for b2 in [0.0, y.1 - a * b1] {
            let v = bisubset_value((b1, b2), y, a, lambda);
            if v < best.1 {
                best = ((b1, b2), v);
            }
        }
    }
    best.0
}

/// Connected components of the subgraph induced on `nodes`, by breadth-first search.
pub fn bfs_components(nodes: &[usize], edges: &[(usize, usize)]) -> BTreeSet<Vec<usize>> {
    let set: BTreeSet<usize> = nodes.iter().copied().collect();
    let mut adj: std::collections::BTreeMap<usize, Vec<usize>> = set.iter().map(|&v| (v, Vec::new())).collect();
    for &(i, j) in edges {
        if set.contains(&i) && set.contains(&j) && i != j {
            adj.get_mut(&i).unwrap().push(j);
            adj.get_mut(&j).unwrap().push(i);
        }
    }
    let mut seen = BTreeSet::new();
    let mut out = BTreeSet::new();
    for &start in &set {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &nb in &adj[&v] {
                if seen.insert(nb) {
                    comp.push(nb);
                    queue.push_back(nb);
                }
            }
        }
        comp.sort_unstable();
        out.insert(comp);
    }
    out
}

/// Largest violation of the lasso optimality conditions for
/// `½ b' G b - b' c + lambda ‖b‖₁`, computed from scratch.
pub fn kkt_violation(gram: &DMatrix<f64>, c: &[f64], b: &[f64], lambda: f64) -> f64 {
    let g = gram * DVector::from_column_slice(b) - DVector::from_column_slice(c);
    let mut worst: f64 = 0.0;
    for j in 0..b.len() {
        let v = if b[j] != 0.0 {
            (g[j] + lambda * b[j].signum()).abs()
        } else {
            (g[j].abs() - lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Outcome of a randomized comparison suite.
#[derive(Debug, Default)]
pub struct SuiteOutcome {
    pub instances: usize,
    pub mismatches: Vec<String>,
}

impl SuiteOutcome {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// `p_step_fit` against exhaustive enumeration on random blocks with `K <= 10`.
pub fn p_step_suite(instances: usize, seed: u64) -> SuiteOutcome {
    let mut r = rng(seed);
    let mut out = SuiteOutcome { instances, ..Default::default() };
    for case in 0..instances {
        let k = r.random_range(1..=10);
        let a = random_correlation(k, &mut r);
        let u = r.random_range(1.0..6.0);
        let lambda = r.random_range(0.3..4.0);
        let truth: Vec<f64> = (0..k).map(|_| if r.random_bool(0.4) { u } else { 0.0 }).collect();
        let signal = &a * DVector::from_column_slice(&truth);
        let w: Vec<f64> = (0..k).map(|i| signal[i] + r.random_range(-1.5..1.5)).collect();
        let fit = ups_core::ups::p_step_fit(&a, &w, lambda, u).expect("p-step fit");
        let (mu, value) = enumerate_p_step(&a, &w, lambda, u);
        if fit.mu != mu {
            out.mismatches.push(format!(
                "case {case}: K={k} fit {:?} (obj {}) vs oracle {:?} (obj {value})",
                fit.mu, fit.objective, mu
            ));
        }
    }
    out
}

pub const GRID_STEP: f64 = 1e-3;

fn random_pair_problem(r: &mut ChaCha20Rng) -> ((f64, f64), f64, f64) {
    let y = (r.random_range(-6.0..6.0), r.random_range(-6.0..6.0));
    let a = r.random_range(-0.49..0.49);
    let lambda = r.random_range(0.05..3.0);
    (y, a, lambda)
}

/// `bilasso` against the grid minimizer: within one grid step per coordinate.
pub fn bilasso_suite(instances: usize, seed: u64) -> SuiteOutcome {
    let mut r = rng(seed);
    let mut out = SuiteOutcome { instances, ..Default::default() };
    for case in 0..instances {
        let (y, a, lambda) = random_pair_problem(&mut r);
        let b = ups_core::baselines::bilasso(y.0, y.1, a, lambda);
        let g = grid_bilasso(y, a, lambda, GRID_STEP);
        if (b.0 - g.0).abs() > GRID_STEP + 1e-9 || (b.1 - g.1).abs() > GRID_STEP + 1e-9 {
            out.mismatches.push(format!("case {case}: y={y:?} a={a} lambda={lambda}: {b:?} vs grid {g:?}"));
        }
    }
    out
}

/// `bisubset` against the grid minimizer: within one grid step per coordinate.
pub fn bisubset_suite(instances: usize, seed: u64) -> SuiteOutcome {
    let mut r = rng(seed);
    let mut out = SuiteOutcome { instances, ..Default::default() };
    for case in 0..instances {
        let (y, a, lambda) = random_pair_problem(&mut r);
        let b = ups_core::baselines::bisubset(y.0, y.1, a, lambda);
        let g = grid_bisubset(y, a, lambda, GRID_STEP);
        if (b.0 - g.0).abs() > GRID_STEP + 1e-9 || (b.1 - g.1).abs() > GRID_STEP + 1e-9 {
            out.mismatches.push(format!("case {case}: y={y:?} a={a} lambda={lambda}: {b:?} vs grid {g:?}"));
        }
    }
    out
}

/// `lasso_cd` on two-variable Gram problems against `bilasso`, to 1e-5.
pub fn lasso_cd_suite(instances: usize, seed: u64) -> SuiteOutcome {
    use ups_core::baselines::{bilasso, lasso_cd, LassoConfig, LassoProblem};
    let mut r = rng(seed);
    let mut out = SuiteOutcome { instances, ..Default::default() };
    for case in 0..instances {
        let (y, a, lambda) = random_pair_problem(&mut r);
        let gram = DMatrix::from_row_slice(2, 2, &[1.0, a, a, 1.0]);
        let c = [y.0, y.1];
        let fit = lasso_cd(LassoProblem::Gram { gram: &gram, c: &c }, &LassoConfig::new(lambda)).expect("lasso fit");
        let b = bilasso(y.0, y.1, a, lambda);
        if !fit.converged || (fit.beta[0] - b.0).abs() > 1e-5 || (fit.beta[1] - b.1).abs() > 1e-5 {
            out.mismatches.push(format!("case {case}: cd {:?} vs bilasso {b:?}", fit.beta));
        }
    }
    out
}

/// Method exponents against the optimal exponent on sampled region points:
/// equal (to 1e-12) inside the method's optimal region, strictly smaller inside
/// its nonoptimal region. Samples until `per_region` points of each kind are seen.
pub fn phase_suite(subset: bool, per_region: usize, seed: u64) -> SuiteOutcome {
    use ups_core::phase::{classify_lasso, classify_subset, lasso_best_exponent, optimal_exponent, subset_best_exponent, Label};
    let mut r = rng(seed);
    let mut out = SuiteOutcome::default();
    let (mut opt_seen, mut non_seen) = (0, 0);
    let mut draws = 0usize;
    while (opt_seen < per_region || non_seen < per_region) && draws < 10_000_000 {
        draws += 1;
        let a = r.random_range(0.05..0.49);
        let vartheta = r.random_range(0.01..0.99);
        let r_exp = r.random_range(vartheta..8.0);
        if r_exp <= vartheta {
            continue;
        }
        let (label, method) = if subset {
            (classify_subset(vartheta, r_exp, a).unwrap(), subset_best_exponent(vartheta, r_exp, a).unwrap())
        } else {
            (classify_lasso(vartheta, r_exp, a).unwrap(), lasso_best_exponent(vartheta, r_exp, a).unwrap())
        };
        if label.boundary {
            continue;
        }
        let opt = optimal_exponent(vartheta, r_exp).unwrap();
        match label.label {
            Label::OptimalRegion if opt_seen < per_region => {
                opt_seen += 1;
                if (method - opt).abs() > 1e-12 {
                    out.mismatches.push(format!("optimal region ({vartheta}, {r_exp}, a={a}): {method} vs {opt}"));
                }
            }
            Label::Nonoptimal if non_seen < per_region => {
                non_seen += 1;
                if !(method < opt) {
                    out.mismatches.push(format!("nonoptimal region ({vartheta}, {r_exp}, a={a}): {method} vs {opt}"));
                }
            }
            _ => {}
        }
    }
    out.instances = opt_seen + non_seen;
    if opt_seen < per_region || non_seen < per_region {
        out.mismatches.push(format!("only sampled {opt_seen} optimal and {non_seen} nonoptimal points"));
    }
    out
}

/// Smallest `lower_bound_hamming / s_p` at `r = 0.9 vartheta`, `p = 10⁶`, over
/// `vartheta` in 0.05..0.99. Below 0.05 the signal fraction exceeds 0.5 and the
/// bound no longer describes a sparse problem.
pub fn lower_bound_below_diagonal_min() -> f64 {
    let p = 1_000_000usize;
    (5..100)
        .map(|k| k as f64 / 100.0)
        .map(|vt| ups_core::phase::lower_bound_hamming(p, vt, 0.9 * vt).unwrap() / (p as f64).powf(1.0 - vt))
        .fold(f64::INFINITY, f64::min)
}
