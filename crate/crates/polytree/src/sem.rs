//! Linear structural equation models on polytrees.
//!
//! A model is X = B^T X + eps with independent mean-zero noises; beta_ij is
//! nonzero exactly on the directed edges. On a polytree the parents of every
//! node are mutually independent, which gives closed forms for variances and
//! correlations: after standardization each edge carries its correlation as
//! the beta coefficient, the correlation of any node pair is the product of
//! edge correlations along the connecting path when that path has no
//! collider, and zero otherwise.

use crate::graph::Dag;
use crate::learn::DataMatrix;
use crate::rng::seeded_rng;
use rand::Rng;
use rand_distr::StandardNormal;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemError {
    #[error("beta support does not match the edge set at ({0}, {1})")]
    BetaSupportMismatch(usize, usize),
    #[error("beta coefficient on edge ({0}, {1}) must be nonzero and finite")]
    InvalidBeta(usize, usize),
    #[error("noise variance omega[{0}] must be positive and finite")]
    InvalidNoiseVariance(usize),
    #[error("omega has length {got}, expected {expected}")]
    OmegaLengthMismatch { got: usize, expected: usize },
    #[error("model dag is not a polytree")]
    NotAPolytree,
    #[error("implied variance at node {0} is numerically singular")]
    SingularModel(usize),
    #[error("model has no edges")]
    EmptyGraph,
    #[error("matrix entry ({0}, {1}) out of the valid correlation range")]
    CorrelationOutOfRange(usize, usize),
    #[error("correlation matrix is not symmetric at ({0}, {1})")]
    NotSymmetric(usize, usize),
    #[error("correlation matrix diagonal at {0} is not 1")]
    BadDiagonal(usize),
    #[error("matrix data has length {got}, expected {expected}")]
    DataLengthMismatch { got: usize, expected: usize },
    #[error("parse error: {0}")]
    Parse(String),
}

/// Noise distribution, scaled to the per-node variance. All three families
/// are sub-Gaussian with mean zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseFamily {
    Gaussian,
    /// Uniform on [-sqrt(3 w), sqrt(3 w)].
    Uniform,
    /// Two-point distribution on {-sqrt(w), +sqrt(w)}.
    RademacherScaled,
}

impl NoiseFamily {
    fn draw(self, omega: f64, rng: &mut impl Rng) -> f64 {
        match self {
            NoiseFamily::Gaussian => {
                let z: f64 = rng.sample(StandardNormal);
                z * omega.sqrt()
            }
            NoiseFamily::Uniform => {
                let half = (3.0 * omega).sqrt();
                rng.gen_range(-half..half)
            }
            NoiseFamily::RademacherScaled => {
                if rng.gen::<bool>() {
                    omega.sqrt()
                } else {
                    -omega.sqrt()
                }
            }
        }
    }
}

impl FromStr for NoiseFamily {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gaussian" => Ok(NoiseFamily::Gaussian),
            "uniform" => Ok(NoiseFamily::Uniform),
            "rademacher" | "rademacher_scaled" => Ok(NoiseFamily::RademacherScaled),
            other => Err(format!("unknown noise family {other:?}")),
        }
    }
}

impl std::fmt::Display for NoiseFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            NoiseFamily::Gaussian => "gaussian",
            NoiseFamily::Uniform => "uniform",
            NoiseFamily::RademacherScaled => "rademacher",
        };
        f.write_str(s)
    }
}

/// Minimum and maximum absolute edge correlation of a standardized model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoBounds {
    pub rho_min: f64,
    pub rho_max: f64,
}

/// A symmetric p x p matrix with unit diagonal, stored dense.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    p: usize,
    data: Vec<f64>,
}

impl CorrelationMatrix {
    /// Validates shape, unit diagonal, symmetry and entry range (all to
    /// 1e-9); storage is symmetrized from the upper triangle.
    pub fn new(p: usize, data: Vec<f64>) -> Result<Self, SemError> {
        if data.len() != p * p {
            return Err(SemError::DataLengthMismatch {
                got: data.len(),
                expected: p * p,
            });
        }
        for i in 0..p {
            if (data[i * p + i] - 1.0).abs() > 1e-9 {
                return Err(SemError::BadDiagonal(i));
            }
            for j in (i + 1)..p {
                let a = data[i * p + j];
                let b = data[j * p + i];
                if (a - b).abs() > 1e-9 {
                    return Err(SemError::NotSymmetric(i, j));
                }
                if !a.is_finite() || a.abs() > 1.0 + 1e-9 {
                    return Err(SemError::CorrelationOutOfRange(i, j));
                }
            }
        }
        let mut m = Self { p, data };
        for i in 0..p {
            m.data[i * p + i] = 1.0;
            for j in (i + 1)..p {
                m.data[j * p + i] = m.data[i * p + j];
            }
        }
        Ok(m)
    }

    /// Builds from the upper triangle of `f`; symmetric by construction.
    pub fn from_fn(p: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self, SemError> {
        let mut data = vec![0.0; p * p];
        for i in 0..p {
            data[i * p + i] = 1.0;
            for j in (i + 1)..p {
                let v = f(i, j);
                data[i * p + j] = v;
                data[j * p + i] = v;
            }
        }
        Self::new(p, data)
    }

    pub fn identity(p: usize) -> Self {
        Self::from_fn(p, |_, _| 0.0).expect("identity is a valid correlation matrix")
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.p + j]
    }

    /// Positive semidefinite within `tol`: Cholesky of A + tol * I succeeds.
    pub fn is_psd(&self, tol: f64) -> bool {
        let p = self.p;
        let mut a = self.data.clone();
        for i in 0..p {
            a[i * p + i] += tol;
        }
        cholesky_in_place(p, &mut a)
    }
}

fn cholesky_in_place(p: usize, a: &mut [f64]) -> bool {
    for j in 0..p {
        let mut d = a[j * p + j];
        for k in 0..j {
            d -= a[j * p + k] * a[j * p + k];
        }
        if d <= 0.0 {
            return false;
        }
        let d = d.sqrt();
        a[j * p + j] = d;
        for i in (j + 1)..p {
            let mut v = a[i * p + j];
            for k in 0..j {
                v -= a[i * p + k] * a[j * p + k];
            }
            a[i * p + j] = v / d;
        }
    }
    true
}

/// A linear SEM whose directed graph is a polytree.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSem {
    dag: Dag,
    beta: BTreeMap<(usize, usize), f64>,
    omega: Vec<f64>,
    // derived, cached at construction
    topo: Vec<usize>,
    parent_coeffs: Vec<Vec<(usize, f64)>>,
    standardized: bool,
}

impl LinearSem {
    pub fn new(
        dag: Dag,
        beta: BTreeMap<(usize, usize), f64>,
        omega: Vec<f64>,
    ) -> Result<Self, SemError> {
        if !dag.is_polytree() {
            return Err(SemError::NotAPolytree);
        }
        let p = dag.p();
        if omega.len() != p {
            return Err(SemError::OmegaLengthMismatch {
                got: omega.len(),
                expected: p,
            });
        }
        for (j, &w) in omega.iter().enumerate() {
            if !(w.is_finite() && w > 0.0) {
                return Err(SemError::InvalidNoiseVariance(j));
            }
        }
        for (&(i, j), &b) in &beta {
            if !dag.contains_edge(i, j) {
                return Err(SemError::BetaSupportMismatch(i, j));
            }
            if !(b.is_finite() && b != 0.0) {
                return Err(SemError::InvalidBeta(i, j));
            }
        }
        if let Some(&(i, j)) = dag.edges().iter().find(|e| !beta.contains_key(e)) {
            return Err(SemError::BetaSupportMismatch(i, j));
        }
        let topo = dag.topological_order().expect("validated DAG");
        let mut parent_coeffs = vec![Vec::new(); p];
        for (&(i, j), &b) in &beta {
            parent_coeffs[j].push((i, b));
        }
        let mut sem = Self {
            dag,
            beta,
            omega,
            topo,
            parent_coeffs,
            standardized: false,
        };
        let vars = sem.implied_variances();
        sem.standardized = vars.iter().all(|v| (v - 1.0).abs() <= 1e-9);
        Ok(sem)
    }

    pub fn p(&self) -> usize {
        self.dag.p()
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn beta(&self, i: usize, j: usize) -> f64 {
        self.beta.get(&(i, j)).copied().unwrap_or(0.0)
    }

    pub fn betas(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.beta
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    /// Var(X_j) for every node. Parents are independent on a polytree, so
    /// variances propagate in topological order.
    pub fn implied_variances(&self) -> Vec<f64> {
        let mut var = vec![0.0; self.p()];
        for &j in &self.topo {
            let mut v = self.omega[j];
            for &(i, b) in &self.parent_coeffs[j] {
                v += b * b * var[i];
            }
            var[j] = v;
        }
        var
    }

    /// Rescales to unit variances: B -> D B D^-1 and Omega -> D^-2 Omega
    /// where D holds the implied standard deviations.
    pub fn standardize(&self) -> Result<LinearSem, SemError> {
        let var = self.implied_variances();
        if let Some(j) = var.iter().position(|&v| v <= 1e-12) {
            return Err(SemError::SingularModel(j));
        }
        let sd: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
        let beta = self
            .beta
            .iter()
            .map(|(&(i, j), &b)| ((i, j), b * sd[i] / sd[j]))
            .collect();
        let omega = self.omega.iter().zip(&var).map(|(w, v)| w / v).collect();
        LinearSem::new(self.dag.clone(), beta, omega)
    }

    /// Exact covariance (I - B)^-T Omega (I - B)^-1, assembled from one
    /// forward substitution per noise coordinate; exactly symmetric.
    #[allow(clippy::needless_range_loop)] // index loops mirror the upper triangle
    pub fn covariance_matrix(&self) -> Vec<Vec<f64>> {
        let p = self.p();
        let mut cov = vec![vec![0.0; p]; p];
        let mut resp = vec![0.0; p];
        for k in 0..p {
            resp.fill(0.0);
            for &j in &self.topo {
                let mut v = if j == k { 1.0 } else { 0.0 };
                for &(i, b) in &self.parent_coeffs[j] {
                    v += b * resp[i];
                }
                resp[j] = v;
            }
            let w = self.omega[k];
            for i in 0..p {
                if resp[i] == 0.0 {
                    continue;
                }
                let wi = w * resp[i];
                for j in i..p {
                    cov[i][j] += wi * resp[j];
                }
            }
        }
        for i in 0..p {
            for j in 0..i {
                cov[i][j] = cov[j][i];
            }
        }
        cov
    }

    /// Population correlation matrix, from the exact covariance.
    pub fn correlation_matrix(&self) -> Result<CorrelationMatrix, SemError> {
        let cov = self.covariance_matrix();
        let p = self.p();
        if let Some(j) = (0..p).find(|&j| cov[j][j] <= 1e-12) {
            return Err(SemError::SingularModel(j));
        }
        let sd: Vec<f64> = (0..p).map(|j| cov[j][j].sqrt()).collect();
        CorrelationMatrix::from_fn(p, |i, j| cov[i][j] / (sd[i] * sd[j]))
    }

    /// Correlation of X_i and X_j by the trek rule: the product of edge
    /// correlations along the unique skeleton path when that path has no
    /// collider, 0 otherwise. Requires a standardized model.
    pub fn correlation_by_treks(&self, i: usize, j: usize) -> f64 {
        assert!(
            self.standardized,
            "trek-rule correlations require a standardized model"
        );
        assert!(i != j, "nodes must be distinct");
        let path = self.skeleton_path(i, j);
        let mut product = 1.0;
        for w in 0..path.len() - 1 {
            let (a, b) = (path[w], path[w + 1]);
            // collider at b: both surrounding path edges point into b
            if w + 2 < path.len() {
                let c = path[w + 2];
                if self.dag.contains_edge(a, b) && self.dag.contains_edge(c, b) {
                    return 0.0;
                }
            }
            let rho = if self.dag.contains_edge(a, b) {
                self.beta(a, b)
            } else {
                self.beta(b, a)
            };
            product *= rho;
        }
        product
    }

    /// Unique path between two nodes in the skeleton (BFS).
    fn skeleton_path(&self, from: usize, to: usize) -> Vec<usize> {
        let p = self.p();
        let mut adj = vec![Vec::new(); p];
        for &(a, b) in self.dag.edges() {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut prev = vec![usize::MAX; p];
        prev[from] = from;
        let mut queue = std::collections::VecDeque::from([from]);
        while let Some(v) = queue.pop_front() {
            if v == to {
                break;
            }
            for &w in &adj[v] {
                if prev[w] == usize::MAX {
                    prev[w] = v;
                    queue.push_back(w);
                }
            }
        }
        assert!(prev[to] != usize::MAX, "polytree skeleton is connected");
        let mut path = vec![to];
        let mut cur = to;
        while cur != from {
            cur = prev[cur];
            path.push(cur);
        }
        path.reverse();
        path
    }

    /// Min and max absolute edge correlation; requires a standardized model.
    pub fn rho_bounds(&self) -> Result<RhoBounds, SemError> {
        assert!(
            self.standardized,
            "rho bounds are defined for standardized models"
        );
        if self.beta.is_empty() {
            return Err(SemError::EmptyGraph);
        }
        let mut lo = f64::INFINITY;
        let mut hi = 0.0_f64;
        for &b in self.beta.values() {
            lo = lo.min(b.abs());
            hi = hi.max(b.abs());
        }
        Ok(RhoBounds {
            rho_min: lo,
            rho_max: hi,
        })
    }

    /// Draws n i.i.d. rows of X = (I - B)^-T eps; deterministic in the seed.
    pub fn sample(&self, n: usize, family: NoiseFamily, seed: u64) -> DataMatrix {
        assert!(n >= 1, "need at least one sample");
        let p = self.p();
        let mut rng = seeded_rng(seed);
        let mut data = vec![0.0; n * p];
        for row in data.chunks_exact_mut(p) {
            for &j in &self.topo {
                let mut v = family.draw(self.omega[j], &mut rng);
                for &(i, b) in &self.parent_coeffs[j] {
                    v += b * row[i];
                }
                row[j] = v;
            }
        }
        DataMatrix::new(n, p, data).expect("sampled matrix is well-formed")
    }

    /// Canonical SEM text: the edge-list format with beta and omega values
    /// at 17 significant digits, so parsing reproduces the model exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "p={}", self.p());
        for (&(i, j), &b) in &self.beta {
            let _ = writeln!(out, "{i} -> {j} : beta={b:.16e}");
        }
        for (j, &w) in self.omega.iter().enumerate() {
            let _ = writeln!(out, "node {j} : omega={w:.16e}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, SemError> {
        let mut p: Option<usize> = None;
        let mut beta = BTreeMap::new();
        let mut omega: BTreeMap<usize, f64> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| SemError::Parse(format!("line {}: {msg}", lineno + 1));
            if p.is_none() {
                let rest = line
                    .strip_prefix("p=")
                    .ok_or_else(|| err(format!("expected p=<count>, found {line:?}")))?;
                p = Some(
                    rest.trim()
                        .parse()
                        .map_err(|e| err(format!("invalid node count: {e}")))?,
                );
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            match tokens.as_slice() {
                [i, "->", j, ":", kv] => {
                    let i: usize = i.parse().map_err(|e| err(format!("invalid node: {e}")))?;
                    let j: usize = j.parse().map_err(|e| err(format!("invalid node: {e}")))?;
                    let b = kv
                        .strip_prefix("beta=")
                        .ok_or_else(|| err(format!("expected beta=<float>, found {kv:?}")))?
                        .parse::<f64>()
                        .map_err(|e| err(format!("invalid beta: {e}")))?;
                    if beta.insert((i, j), b).is_some() {
                        return Err(err(format!("duplicate edge {i} -> {j}")));
                    }
                }
                ["node", j, ":", kv] => {
                    let j: usize = j.parse().map_err(|e| err(format!("invalid node: {e}")))?;
                    let w = kv
                        .strip_prefix("omega=")
                        .ok_or_else(|| err(format!("expected omega=<float>, found {kv:?}")))?
                        .parse::<f64>()
                        .map_err(|e| err(format!("invalid omega: {e}")))?;
                    if omega.insert(j, w).is_some() {
                        return Err(err(format!("duplicate node line for {j}")));
                    }
                }
                _ => return Err(err(format!("unrecognized line {line:?}"))),
            }
        }
        let p = p.ok_or_else(|| SemError::Parse("missing p=<count> header".into()))?;
        let dag = Dag::new(p, beta.keys().copied())
            .map_err(|e| SemError::Parse(format!("invalid edge set: {e}")))?;
        let mut omega_vec = Vec::with_capacity(p);
        for j in 0..p {
            let w = omega
                .get(&j)
                .copied()
                .ok_or_else(|| SemError::Parse(format!("missing omega for node {j}")))?;
            omega_vec.push(w);
        }
        LinearSem::new(dag, beta, omega_vec)
    }
}

/// Convenience constructor from plain edge/beta lists.
pub fn sem_from_edges(
    p: usize,
    edges: &[(usize, usize, f64)],
    omega: Vec<f64>,
) -> Result<LinearSem, SemError> {
    let dag =
        Dag::new(p, edges.iter().map(|&(i, j, _)| (i, j))).map_err(|_| SemError::NotAPolytree)?;
    let beta = edges.iter().map(|&(i, j, b)| ((i, j), b)).collect();
    LinearSem::new(dag, beta, omega)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn standardized_v_structure() -> LinearSem {
        sem_from_edges(3, &[(0, 2, 0.5), (1, 2, 0.6)], vec![1.0, 1.0, 0.39]).unwrap()
    }

    #[test]
    fn constructor_validates_support_and_omega() {
        let dag = Dag::new(2, [(0, 1)]).unwrap();
        let err = LinearSem::new(dag.clone(), BTreeMap::new(), vec![1.0, 1.0]);
        assert_eq!(err, Err(SemError::BetaSupportMismatch(0, 1)));
        let beta: BTreeMap<_, _> = [((0, 1), 0.5)].into_iter().collect();
        let err = LinearSem::new(dag.clone(), beta.clone(), vec![1.0, 0.0]);
        assert_eq!(err, Err(SemError::InvalidNoiseVariance(1)));
        let err = LinearSem::new(dag, beta, vec![1.0]);
        assert!(matches!(err, Err(SemError::OmegaLengthMismatch { .. })));
        // disconnected graph is not a polytree
        let dag = Dag::new(4, [(0, 1), (2, 3)]).unwrap();
        let beta: BTreeMap<_, _> = [((0, 1), 0.5), ((2, 3), 0.5)].into_iter().collect();
        assert_eq!(
            LinearSem::new(dag, beta, vec![1.0; 4]),
            Err(SemError::NotAPolytree)
        );
    }

    #[test]
    fn standardize_is_identity_on_standardized_models() {
        let m = standardized_v_structure();
        assert!(m.is_standardized());
        let s = m.standardize().unwrap();
        for (&(i, j), &b) in m.betas() {
            assert_abs_diff_eq!(s.beta(i, j), b, epsilon = 1e-12);
        }
        for j in 0..3 {
            assert_abs_diff_eq!(s.omega()[j], m.omega()[j], epsilon = 1e-12);
        }
    }

    #[test]
    fn standardize_single_edge_hand_check() {
        // Var(X0)=4, Var(X1)=0.25*4+3=4: beta stays 0.5, omega becomes (1, 3/4)
        let m = sem_from_edges(2, &[(0, 1, 0.5)], vec![4.0, 3.0]).unwrap();
        assert!(!m.is_standardized());
        let s = m.standardize().unwrap();
        assert_abs_diff_eq!(s.beta(0, 1), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.omega()[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.omega()[1], 0.75, epsilon = 1e-12);
        assert!(s.is_standardized());
    }

    #[test]
    fn standardize_unit_beta_chain() {
        // Var(X1) = 1 + 1 = 2, so the standardized coefficient is 1/sqrt(2)
        let m = sem_from_edges(2, &[(0, 1, 1.0)], vec![1.0, 1.0]).unwrap();
        let s = m.standardize().unwrap();
        assert_abs_diff_eq!(s.beta(0, 1), 1.0 / 2.0_f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(s.omega()[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn eq4_closure_after_standardize() {
        let m = sem_from_edges(
            4,
            &[(0, 1, 0.9), (2, 1, -1.4), (1, 3, 0.7)],
            vec![2.0, 0.5, 1.25, 3.0],
        )
        .unwrap();
        let s = m.standardize().unwrap();
        let parents = s.dag().parent_lists();
        for j in 0..4 {
            let sum: f64 = parents[j].iter().map(|&i| s.beta(i, j).powi(2)).sum();
            assert_abs_diff_eq!(s.omega()[j] + sum, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn covariance_of_v_structure() {
        let m = standardized_v_structure();
        let cov = m.covariance_matrix();
        assert_abs_diff_eq!(cov[0][2], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(cov[1][2], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(cov[0][1], 0.0, epsilon = 1e-12);
        for j in 0..3 {
            assert_abs_diff_eq!(cov[j][j], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn covariance_of_edgeless_model_is_identity() {
        let m = sem_from_edges(1, &[], vec![1.0]).unwrap();
        assert_eq!(m.covariance_matrix(), vec![vec![1.0]]);
    }

    #[test]
    fn trek_rule_cases() {
        let chain = sem_from_edges(3, &[(0, 1, 0.5), (1, 2, 0.4)], vec![1.0, 0.75, 0.84]).unwrap();
        assert_abs_diff_eq!(chain.correlation_by_treks(0, 2), 0.2, epsilon = 1e-12);
        let collider = standardized_v_structure();
        assert_eq!(collider.correlation_by_treks(0, 1), 0.0);
        let fork = sem_from_edges(3, &[(1, 0, 0.7), (1, 2, 0.3)], vec![0.51, 1.0, 0.91]).unwrap();
        assert_abs_diff_eq!(fork.correlation_by_treks(0, 2), 0.21, epsilon = 1e-12);
    }

    #[test]
    fn trek_rule_matches_covariance_on_a_mixed_polytree() {
        let m = sem_from_edges(
            6,
            &[
                (0, 1, 0.5),
                (2, 1, 0.4),
                (1, 3, -0.6),
                (3, 4, 0.3),
                (5, 4, 0.2),
            ],
            vec![1.0, 0.59, 1.0, 0.64, 0.87, 1.0],
        )
        .unwrap();
        assert!(m.is_standardized());
        let cov = m.covariance_matrix();
        for i in 0..6 {
            for j in (i + 1)..6 {
                assert_abs_diff_eq!(m.correlation_by_treks(i, j), cov[i][j], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn rho_bounds_cases() {
        let single = sem_from_edges(2, &[(0, 1, 0.5)], vec![1.0, 0.75]).unwrap();
        let b = single.rho_bounds().unwrap();
        assert_eq!((b.rho_min, b.rho_max), (0.5, 0.5));
        let v = standardized_v_structure();
        let b = v.rho_bounds().unwrap();
        assert_eq!((b.rho_min, b.rho_max), (0.5, 0.6));
        let empty = sem_from_edges(1, &[], vec![1.0]).unwrap();
        assert_eq!(empty.rho_bounds(), Err(SemError::EmptyGraph));
    }

    #[test]
    fn sampling_is_deterministic_in_the_seed() {
        let m = standardized_v_structure();
        let a = m.sample(64, NoiseFamily::Gaussian, 42);
        let b = m.sample(64, NoiseFamily::Gaussian, 42);
        assert_eq!(a.raw(), b.raw());
        let c = m.sample(64, NoiseFamily::Gaussian, 43);
        assert_ne!(a.raw(), c.raw());
    }

    #[test]
    fn sampled_edge_correlation_approaches_beta() {
        let m = sem_from_edges(2, &[(0, 1, 0.5)], vec![1.0, 0.75]).unwrap();
        let data = m.sample(200_000, NoiseFamily::Gaussian, 7);
        let n = data.n();
        let (mut sx, mut sy) = (0.0, 0.0);
        for r in 0..n {
            sx += data.get(r, 0);
            sy += data.get(r, 1);
        }
        let (mx, my) = (sx / n as f64, sy / n as f64);
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for r in 0..n {
            let (dx, dy) = (data.get(r, 0) - mx, data.get(r, 1) - my);
            sxx += dx * dx;
            syy += dy * dy;
            sxy += dx * dy;
        }
        let rho = sxy / (sxx * syy).sqrt();
        assert!(
            (rho - 0.5).abs() < 0.01,
            "sample correlation {rho} too far from 0.5"
        );
    }

    #[test]
    fn rademacher_noise_is_two_point_with_exact_support() {
        let m = sem_from_edges(1, &[], vec![0.7]).unwrap();
        let data = m.sample(100_000, NoiseFamily::RademacherScaled, 5);
        let root = 0.7_f64.sqrt();
        let mut sum_sq = 0.0;
        for r in 0..data.n() {
            let v = data.get(r, 0);
            assert!(v == root || v == -root);
            sum_sq += v * v;
        }
        let var = sum_sq / data.n() as f64;
        assert!((var - 0.7).abs() / 0.7 < 0.01);
    }

    #[test]
    fn uniform_noise_variance_matches_omega() {
        let m = sem_from_edges(1, &[], vec![2.5]).unwrap();
        let data = m.sample(100_000, NoiseFamily::Uniform, 11);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for r in 0..data.n() {
            sum += data.get(r, 0);
            sum_sq += data.get(r, 0) * data.get(r, 0);
        }
        let mean = sum / data.n() as f64;
        let var = sum_sq / data.n() as f64 - mean * mean;
        assert!((var - 2.5).abs() / 2.5 < 0.02);
        let half = (3.0 * 2.5_f64).sqrt();
        for r in 0..data.n() {
            assert!(data.get(r, 0).abs() <= half);
        }
    }

    #[test]
    fn scaling_leaves_correlations_invariant() {
        let m = sem_from_edges(
            4,
            &[(0, 1, 0.9), (2, 1, -1.4), (1, 3, 0.7)],
            vec![2.0, 0.5, 1.25, 3.0],
        )
        .unwrap();
        let scaled = {
            // rescale each X_j by d_j: beta_ij -> beta_ij * d_j / d_i, omega -> d^2 omega
            let d = [2.0, 0.25, 3.0, 1.5];
            let beta = m
                .betas()
                .iter()
                .map(|(&(i, j), &b)| ((i, j), b * d[j] / d[i]))
                .collect();
            let omega = m.omega().iter().zip(d).map(|(w, dj)| w * dj * dj).collect();
            LinearSem::new(m.dag().clone(), beta, omega).unwrap()
        };
        let c1 = m.correlation_matrix().unwrap();
        let c2 = scaled.correlation_matrix().unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_abs_diff_eq!(c1.get(i, j), c2.get(i, j), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn sem_text_round_trip_is_exact() {
        let m = sem_from_edges(
            3,
            &[(0, 2, 0.12345678912345678), (1, 2, -0.6)],
            vec![1.0, 1.0, 0.5],
        )
        .unwrap();
        let text = m.to_text();
        let back = LinearSem::from_text(&text).unwrap();
        assert_eq!(m.betas(), back.betas());
        assert_eq!(m.omega(), back.omega());
        assert_eq!(text, back.to_text());
    }

    #[test]
    fn sem_text_rejects_malformed_input() {
        assert!(LinearSem::from_text("p=2\n0 -> 1 : beta=0.5\n").is_err()); // missing omega
        assert!(LinearSem::from_text("0 -> 1 : beta=0.5\n").is_err()); // missing header
        assert!(LinearSem::from_text(
            "p=2\n0 -> 1 : bta=0.5\nnode 0 : omega=1\nnode 1 : omega=1\n"
        )
        .is_err());
    }

    #[test]
    fn correlation_matrix_validation() {
        assert!(CorrelationMatrix::new(2, vec![1.0, 0.5, 0.5, 1.0]).is_ok());
        assert_eq!(
            CorrelationMatrix::new(2, vec![1.0, 0.5, 0.4, 1.0]),
            Err(SemError::NotSymmetric(0, 1))
        );
        assert_eq!(
            CorrelationMatrix::new(2, vec![1.0, 1.5, 1.5, 1.0]),
            Err(SemError::CorrelationOutOfRange(0, 1))
        );
        assert_eq!(
            CorrelationMatrix::new(2, vec![0.9, 0.5, 0.5, 1.0]),
            Err(SemError::BadDiagonal(0))
        );
        let id = CorrelationMatrix::identity(3);
        assert!(id.is_psd(1e-9));
        // rank-deficient but PSD: duplicated variable
        let dup = CorrelationMatrix::new(2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(dup.is_psd(1e-9));
        // violates PSD clearly
        let bad = CorrelationMatrix::from_fn(3, |_, _| -0.9).unwrap();
        assert!(!bad.is_psd(1e-9));
    }
}
