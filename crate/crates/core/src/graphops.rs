//! Gram matrices, their hard-thresholded regularization, screening, and the
//! connected components of the thresholded dependence graph.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrixgen::CorrMatrix;
use crate::sparse::SymSparse;

/// Default flop ceiling above which a full Gram computation triggers a warning.
pub const DEFAULT_FLOP_CEILING: f64 = 5e11;

const GRAM_BLOCK: usize = 256;

/// `X'X`, computed over column blocks in parallel.
pub fn empirical_gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    let p = x.ncols();
    let starts: Vec<usize> = (0..p).step_by(GRAM_BLOCK).collect();
    let blocks: Vec<DMatrix<f64>> = starts
        .par_iter()
        .map(|&s| {
            let w = GRAM_BLOCK.min(p - s);
            x.tr_mul(&x.columns(s, w))
        })
        .collect();
    let mut g = DMatrix::zeros(p, p);
    for (&s, b) in starts.iter().zip(&blocks) {
        g.columns_mut(s, b.ncols()).copy_from(b);
    }
    g
}

/// Number of multiply-adds in a full `n x p` Gram product.
pub fn gram_flops(n: usize, p: usize) -> f64 {
    (p as f64) * (p as f64) * (n as f64)
}

/// Logs a warning and returns `false` when `p^2 n` exceeds `ceiling`.
pub fn check_budget(n: usize, p: usize, ceiling: f64) -> bool {
    let flops = gram_flops(n, p);
    if flops > ceiling {
        warn!("Gram computation for n = {n}, p = {p} needs {flops:.2e} flops (ceiling {ceiling:.2e})");
        false
    } else {
        true
    }
}

/// The default regularization threshold `1 / ln p`.
pub fn default_threshold(p: usize) -> f64 {
    1.0 / (p as f64).ln()
}

/// Entrywise hard threshold of the off-diagonals: keeps `|g_ij| >= threshold`.
pub fn regularize(gram: &DMatrix<f64>, threshold: f64) -> SymSparse {
    let p = gram.nrows();
    let diag = (0..p).map(|i| gram[(i, i)]).collect();
    let mut entries = Vec::new();
    for j in 0..p {
        for i in 0..j {
            let v = gram[(i, j)];
            if v.abs() >= threshold {
                entries.push((i, j, v));
            }
        }
    }
    SymSparse::from_upper(diag, entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    OneSided,
    TwoSided,
}

/// Indices whose inner product passes the screening threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivorSet {
    pub indices: Vec<usize>,
    pub threshold_used: f64,
    pub sidedness: Sidedness,
}

pub fn survivors(inner_products: &[f64], t: f64, sidedness: Sidedness) -> SurvivorSet {
    let keep = |v: f64| match sidedness {
        Sidedness::OneSided => v >= t,
        Sidedness::TwoSided => v.abs() >= t,
    };
    SurvivorSet {
        indices: (0..inner_products.len()).filter(|&j| keep(inner_products[j])).collect(),
        threshold_used: t,
        sidedness,
    }
}

/// Connected components of the graph induced on the survivors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSet {
    pub components: Vec<Vec<usize>>,
    pub max_size: usize,
}

impl ComponentSet {
    pub fn histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for c in &self.components {
            *h.entry(c.len()).or_insert(0) += 1;
        }
        h
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.components).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Groups `nodes` (sorted, distinct) using edges given as local positions into
/// `nodes`; components come out sorted and ordered by their smallest member.
pub fn components_from_edges(nodes: &[usize], edges: impl IntoIterator<Item = (usize, usize)>) -> ComponentSet {
    let mut ds = DisjointSets::new(nodes.len());
    for (a, b) in edges {
        if a != b {
            ds.union(a, b);
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    // nodes are sorted, so first appearance order is ascending smallest member
    for (pos, &node) in nodes.iter().enumerate() {
        let root = ds.find(pos);
        let g = *slot.entry(root).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(node);
    }
    let max_size = groups.iter().map(Vec::len).max().unwrap_or(0);
    ComponentSet {
        components: groups,
        max_size,
    }
}

fn positions(nodes: &[usize]) -> HashMap<usize, usize> {
    nodes.iter().enumerate().map(|(k, &j)| (j, k)).collect()
}

fn sparse_edges(nodes: &[usize], m: &SymSparse) -> Vec<(usize, usize)> {
    let pos = positions(nodes);
    let mut edges = Vec::new();
    for (a, &i) in nodes.iter().enumerate() {
        for &(j, v) in m.row(i) {
            if j > i && v != 0.0 {
                if let Some(&b) = pos.get(&j) {
                    edges.push((a, b));
                }
            }
        }
    }
    edges
}

/// Components of the survivors under the graph of nonzero off-diagonals of `omega_star`.
pub fn components(survivors: &[usize], omega_star: &SymSparse) -> ComponentSet {
    let mut nodes = survivors.to_vec();
    nodes.sort_unstable();
    nodes.dedup();
    let edges = sparse_edges(&nodes, omega_star);
    components_from_edges(&nodes, edges)
}

/// Survivor components together with the Gram block of each component.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub components: ComponentSet,
    pub blocks: Vec<DMatrix<f64>>,
}

/// Where the Gram matrix and its regularized version come from.
#[derive(Debug, Clone, Copy)]
pub enum GramSource<'a> {
    /// Known correlation matrix (Stein model): the Gram matrix and its
    /// regularization are both `Omega`.
    Known(&'a CorrMatrix),
    /// Random design: Gram entries are computed from `X` on demand and
    /// thresholded at `threshold`.
    Design { x: &'a DMatrix<f64>, threshold: f64 },
    /// Precomputed Gram matrix with an explicit regularized version.
    Explicit { gram: &'a DMatrix<f64>, omega_star: &'a SymSparse },
}

impl GramSource<'_> {
    pub fn dim(&self) -> usize {
        match self {
            GramSource::Known(o) => o.dim(),
            GramSource::Design { x, .. } => x.ncols(),
            GramSource::Explicit { gram, .. } => gram.ncols(),
        }
    }

    /// Components of `survivors` under the regularized graph plus, for each
    /// component, the unregularized Gram block.
    pub fn decompose(&self, survivors: &[usize]) -> Decomposition {
        let mut nodes = survivors.to_vec();
        nodes.sort_unstable();
        nodes.dedup();
        match self {
            GramSource::Known(o) => {
                let components = components(&nodes, o.as_sparse());
                let blocks = components.components.iter().map(|c| o.as_sparse().submatrix(c)).collect();
                Decomposition { components, blocks }
            }
            GramSource::Explicit { gram, omega_star } => {
                let components = components(&nodes, omega_star);
                let blocks = components
                    .components
                    .iter()
                    .map(|c| gram.select_rows(c).select_columns(c))
                    .collect();
                Decomposition { components, blocks }
            }
            GramSource::Design { x, threshold } => {
                let xs = x.select_columns(&nodes);
                let g = empirical_gram(&xs);
                let m = nodes.len();
                let mut edges = Vec::new();
                for b in 0..m {
                    for a in 0..b {
                        if g[(a, b)].abs() >= *threshold {
                            edges.push((a, b));
                        }
                    }
                }
                let components = components_from_edges(&nodes, edges);
                let pos = positions(&nodes);
                let blocks = components
                    .components
                    .iter()
                    .map(|c| {
                        let loc: Vec<usize> = c.iter().map(|j| pos[j]).collect();
                        g.select_rows(&loc).select_columns(&loc)
                    })
                    .collect();
                Decomposition { components, blocks }
            }
        }
    }

    /// `G b` for the unregularized Gram matrix `G`.
    pub fn gram_times(&self, b: &[f64]) -> Vec<f64> {
        match self {
            GramSource::Known(o) => o.mul_vec(b),
            GramSource::Design { x, .. } => {
                let xb = *x * DVector::from_column_slice(b);
                x.tr_mul(&xb).as_slice().to_vec()
            }
            GramSource::Explicit { gram, .. } => (*gram * DVector::from_column_slice(b)).as_slice().to_vec(),
        }
    }

    /// `Omega* b`, touching only the columns where `b` is nonzero.
    pub fn star_times(&self, b: &[f64]) -> Vec<f64> {
        match self {
            GramSource::Known(o) => o.mul_vec(b),
            GramSource::Explicit { omega_star, .. } => omega_star.mul_vec(b),
            GramSource::Design { x, threshold } => {
                let p = x.ncols();
                let mut out = vec![0.0; p];
                for (k, &bk) in b.iter().enumerate() {
                    if bk == 0.0 {
                        continue;
                    }
                    let col = x.tr_mul(&x.column(k));
                    for (j, o) in out.iter_mut().enumerate() {
                        let g = col[j];
                        if j == k || g.abs() >= *threshold {
                            *o += g * bk;
                        }
                    }
                }
                out
            }
        }
    }
}
