//! The recovery pipeline: sample correlations, Chow-Liu skeleton,
//! v-structure thresholding and orientation propagation.
//!
//! The skeleton estimate is the maximum-weight spanning tree under absolute
//! sample correlations (Kruskal). Orientations come from testing each
//! non-adjacent pair with a common neighbor against a correlation threshold:
//! an (approximately) uncorrelated pair means a collider at the shared
//! neighbor. The remaining edges are closed under the rule that an edge
//! leaving a node with an incoming directed edge must point away from it.

use crate::graph::{apply_rule1, Cpdag, Skeleton};
use crate::sem::CorrelationMatrix;
use crate::stats::student_t_quantile;
use crate::union_find::UnionFind;
use std::collections::BTreeSet;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("column {0} is constant; correlations are undefined")]
    ConstantColumn(usize),
    #[error("need at least {needed} samples, got {n}")]
    InsufficientSamples { n: usize, needed: usize },
    #[error("edge {{{0}, {1}}} is demanded in both directions by v-structure tests")]
    OrientationConflict(usize, usize),
    #[error("invalid test level alpha={0}; must lie strictly in (0, 1)")]
    InvalidAlpha(f64),
    #[error("invalid correlation threshold {0}; must lie strictly in (0, 1)")]
    InvalidThreshold(f64),
    #[error("data matrix error: {0}")]
    BadData(String),
    #[error("parse error: {0}")]
    Parse(String),
}

/// An n x p matrix of observations, row-major by sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    n: usize,
    p: usize,
    data: Vec<f64>,
}

impl DataMatrix {
    pub fn new(n: usize, p: usize, data: Vec<f64>) -> Result<Self, LearnError> {
        if n == 0 || p == 0 {
            return Err(LearnError::BadData("data matrix must be non-empty".into()));
        }
        if data.len() != n * p {
            return Err(LearnError::BadData(format!(
                "data length {} does not match {n} x {p}",
                data.len()
            )));
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(LearnError::BadData(format!(
                "non-finite value at row {}, column {}",
                idx / p,
                idx % p
            )));
        }
        Ok(Self { n, p, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.p + col]
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }

    /// Headerless CSV, one sample per row; scientific notation accepted.
    pub fn from_csv_text(text: &str) -> Result<Self, LearnError> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let row: Result<Vec<f64>, _> = line
                .split(',')
                .map(|tok| {
                    tok.trim()
                        .parse::<f64>()
                        .map_err(|e| LearnError::Parse(format!("line {}: {e}", lineno + 1)))
                })
                .collect();
            let row = row?;
            if let Some(first) = rows.first() {
                if row.len() != first.len() {
                    return Err(LearnError::Parse(format!(
                        "line {}: expected {} columns, found {}",
                        lineno + 1,
                        first.len(),
                        row.len()
                    )));
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(LearnError::Parse("no data rows".into()));
        }
        let (n, p) = (rows.len(), rows[0].len());
        Self::new(n, p, rows.into_iter().flatten().collect())
    }

    pub fn to_csv_text(&self) -> String {
        let mut out = String::new();
        for row in self.data.chunks_exact(self.p) {
            for (c, v) in row.iter().enumerate() {
                if c > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Pearson correlations with mean centering. Exactly constant columns are a
/// hard error, not imputed.
pub fn sample_correlations(d: &DataMatrix) -> Result<CorrelationMatrix, LearnError> {
    let (n, p) = (d.n(), d.p());
    if n < 2 {
        return Err(LearnError::InsufficientSamples { n, needed: 2 });
    }
    for c in 0..p {
        let first = d.get(0, c);
        if (1..n).all(|r| d.get(r, c) == first) {
            return Err(LearnError::ConstantColumn(c));
        }
    }
    // centered columns, column-major
    let mut cols = vec![0.0; n * p];
    for c in 0..p {
        let mut mean = 0.0;
        for r in 0..n {
            mean += d.get(r, c);
        }
        mean /= n as f64;
        for r in 0..n {
            cols[c * n + r] = d.get(r, c) - mean;
        }
    }
    let norms: Vec<f64> = (0..p)
        .map(|c| {
            cols[c * n..(c + 1) * n]
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    CorrelationMatrix::from_fn(p, |i, j| {
        let dot: f64 = cols[i * n..(i + 1) * n]
            .iter()
            .zip(&cols[j * n..(j + 1) * n])
            .map(|(a, b)| a * b)
            .sum();
        (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
    })
    .map_err(|e| LearnError::BadData(e.to_string()))
}

/// Maximum-weight spanning tree under |rho|, built with Kruskal's algorithm.
/// Ties break deterministically: larger weight first, then lexicographic
/// (min, max) node pair.
pub fn chow_liu_skeleton(c: &CorrelationMatrix) -> Skeleton {
    let p = c.p();
    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(p * (p - 1) / 2);
    for i in 0..p {
        for j in (i + 1)..p {
            edges.push((i, j));
        }
    }
    edges.sort_unstable_by(|&(a1, b1), &(a2, b2)| {
        let w1 = c.get(a1, b1).abs();
        let w2 = c.get(a2, b2).abs();
        w2.total_cmp(&w1).then((a1, b1).cmp(&(a2, b2)))
    });
    let mut uf = UnionFind::new(p);
    let mut chosen = Vec::with_capacity(p.saturating_sub(1));
    for (a, b) in edges {
        if uf.union(a, b) {
            chosen.push((a, b));
            if chosen.len() + 1 == p {
                break;
            }
        }
    }
    Skeleton::new(p, chosen).expect("spanning tree edges are valid")
}

/// Correlation threshold for the zero-correlation test at level alpha:
/// sqrt(1 - 1 / (1 + t^2 / (n - 2))) with t the 1 - alpha/2 Student-t
/// quantile at n - 2 degrees of freedom.
pub fn rho_crit(n: usize, alpha: f64) -> Result<f64, LearnError> {
    if n < 3 {
        return Err(LearnError::InsufficientSamples { n, needed: 3 });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(LearnError::InvalidAlpha(alpha));
    }
    let df = (n - 2) as f64;
    let t = student_t_quantile(1.0 - alpha / 2.0, df);
    Ok((1.0 - 1.0 / (1.0 + t * t / df)).sqrt())
}

/// Directed-edge demands from the v-structure test: for every path triple
/// i - k - j with i, j non-adjacent and |rho_ij| < threshold, demand both
/// i -> k and j -> k.
fn v_structure_demands(
    s: &Skeleton,
    c: &CorrelationMatrix,
    threshold: f64,
) -> BTreeSet<(usize, usize)> {
    let adj = s.neighbor_lists();
    let mut demands = BTreeSet::new();
    for (k, nk) in adj.iter().enumerate() {
        for (a, &i) in nk.iter().enumerate() {
            for &j in nk.iter().skip(a + 1) {
                if !s.contains(i, j) && c.get(i, j).abs() < threshold {
                    demands.insert((i, k));
                    demands.insert((j, k));
                }
            }
        }
    }
    demands
}

type EdgeList = Vec<(usize, usize)>;

/// Splits skeleton edges into (directed, undirected, conflicted) under the
/// orientation demands.
fn split_demands(
    s: &Skeleton,
    demands: &BTreeSet<(usize, usize)>,
) -> (EdgeList, EdgeList, EdgeList) {
    let mut directed = Vec::new();
    let mut undirected = Vec::new();
    let mut conflicted = Vec::new();
    for &(a, b) in s.edges() {
        let fwd = demands.contains(&(a, b));
        let rev = demands.contains(&(b, a));
        match (fwd, rev) {
            (true, true) => conflicted.push((a, b)),
            (true, false) => directed.push((a, b)),
            (false, true) => directed.push((b, a)),
            (false, false) => undirected.push((a, b)),
        }
    }
    (directed, undirected, conflicted)
}

/// Orients v-structures found by thresholding; edges demanded in both
/// directions are an error here (see [`learn_cpdag`] for the lenient policy).
pub fn detect_v_structures(
    s: &Skeleton,
    c: &CorrelationMatrix,
    threshold: f64,
) -> Result<Cpdag, LearnError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(LearnError::InvalidThreshold(threshold));
    }
    let demands = v_structure_demands(s, c, threshold);
    let (directed, undirected, conflicted) = split_demands(s, &demands);
    if let Some(&(a, b)) = conflicted.first() {
        return Err(LearnError::OrientationConflict(a, b));
    }
    Cpdag::new(s.p(), directed, undirected).map_err(|e| LearnError::BadData(e.to_string()))
}

/// Learner settings: the test level for the correlation threshold, or an
/// explicit threshold overriding the formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnConfig {
    pub alpha: f64,
    pub rho_crit_override: Option<f64>,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            rho_crit_override: None,
        }
    }
}

/// Output of the full pipeline.
#[derive(Debug, Clone)]
pub struct LearnedCpdag {
    pub cpdag: Cpdag,
    pub skeleton: Skeleton,
    pub correlations: CorrelationMatrix,
    pub rho_crit: f64,
    /// Edges whose orientation was demanded in both directions; they were
    /// left undirected. Zero whenever the data is consistent with a polytree.
    pub orientation_conflicts: usize,
}

/// Runs Chow-Liu, v-structure detection and orientation propagation on a
/// precomputed correlation matrix. Conflicted edges stay undirected and are
/// counted rather than aborting the run.
pub fn learn_cpdag_from_correlations(
    c: &CorrelationMatrix,
    threshold: f64,
) -> Result<(Cpdag, usize), LearnError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(LearnError::InvalidThreshold(threshold));
    }
    let skeleton = chow_liu_skeleton(c);
    let demands = v_structure_demands(&skeleton, c, threshold);
    let (directed, mut undirected, conflicted) = split_demands(&skeleton, &demands);
    let mut conflicts = conflicted.len();
    undirected.extend(conflicted);
    let closure = apply_rule1(skeleton.p(), &directed, &undirected);
    conflicts += closure.conflicts;
    let cpdag = Cpdag::new(skeleton.p(), closure.directed, closure.undirected)
        .map_err(|e| LearnError::BadData(e.to_string()))?;
    Ok((cpdag, conflicts))
}

/// The full pipeline: sample correlations, Chow-Liu skeleton, v-structure
/// thresholding at the configured level, orientation propagation.
pub fn learn_cpdag(d: &DataMatrix, cfg: &LearnConfig) -> Result<LearnedCpdag, LearnError> {
    let correlations = sample_correlations(d)?;
    let threshold = match cfg.rho_crit_override {
        Some(t) => {
            if !(t > 0.0 && t < 1.0) {
                return Err(LearnError::InvalidThreshold(t));
            }
            t
        }
        None => rho_crit(d.n(), cfg.alpha)?,
    };
    let (cpdag, orientation_conflicts) = learn_cpdag_from_correlations(&correlations, threshold)?;
    // orientation never adds or removes pairs, so the Chow-Liu skeleton is
    // exactly the cpdag's skeleton
    let skeleton = Skeleton::new(cpdag.p(), cpdag.skeleton_pairs())
        .map_err(|e| LearnError::BadData(e.to_string()))?;
    Ok(LearnedCpdag {
        cpdag,
        skeleton,
        correlations,
        rho_crit: threshold,
        orientation_conflicts,
    })
}
