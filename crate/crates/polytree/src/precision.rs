//! Inverse correlation matrices for polytree models.
//!
//! For a standardized polytree SEM the inverse correlation matrix
//! Theta = (I - B) Omega^-1 (I - B^T) has a closed form: edge entries
//! -rho/omega, co-parent entries rho rho'/omega through the shared collider,
//! and diagonal 1/omega_jj plus child contributions. The same entries can be
//! written against the CPDAG alone: nodes whose parent sets the CPDAG does
//! not identify contribute through their undirected edges as 1/(1 - rho^2)
//! terms, which is invariant across the equivalence class. That CPDAG form
//! is the estimator applied to sample correlations.

use crate::graph::Cpdag;
use crate::sem::{CorrelationMatrix, LinearSem};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrecisionError {
    #[error("estimated noise variance at node {0} is not positive")]
    DegenerateVariance(usize),
    #[error("dimension mismatch: {a} vs {b}")]
    DimensionMismatch { a: usize, b: usize },
    #[error("estimated graph is not a valid polytree CPDAG: {0}")]
    InvalidCpdag(String),
}

/// Symmetric p x p matrix, dense storage.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionMatrix {
    p: usize,
    data: Vec<f64>,
}

impl PrecisionMatrix {
    fn zeros(p: usize) -> Self {
        Self {
            p,
            data: vec![0.0; p * p],
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.p + j]
    }

    fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.p + j] = v;
        self.data[j * self.p + i] = v;
    }

    fn add_sym(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.p + j] += v;
        if i != j {
            self.data[j * self.p + i] += v;
        }
    }

    /// Dense CSV, one row per line; values print with exact round-trip.
    pub fn to_dense_csv(&self) -> String {
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

    /// Sparse coordinate triplets `i,j,value` for the upper triangle
    /// including the diagonal; zero entries are omitted.
    pub fn to_coordinate_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.p {
            for j in i..self.p {
                let v = self.get(i, j);
                if v != 0.0 {
                    let _ = writeln!(out, "{i},{j},{v}");
                }
            }
        }
        out
    }
}

/// Exact inverse correlation matrix of a standardized polytree SEM,
/// assembled entry by entry from the closed form, never by dense inversion.
pub fn true_inverse_correlation(m: &LinearSem) -> PrecisionMatrix {
    assert!(
        m.is_standardized(),
        "the closed form requires a standardized model"
    );
    let p = m.p();
    let omega = m.omega();
    let parents = m.dag().parent_lists();
    let children = m.dag().child_lists();
    let mut theta = PrecisionMatrix::zeros(p);
    for j in 0..p {
        let diag = 1.0 / omega[j]
            + children[j]
                .iter()
                .map(|&k| {
                    let b = m.beta(j, k);
                    b * b / omega[k]
                })
                .sum::<f64>();
        theta.set_sym(j, j, diag);
    }
    for (&(i, j), &b) in m.betas() {
        theta.set_sym(i, j, -b / omega[j]);
    }
    for (k, pk) in parents.iter().enumerate() {
        for (a, &i) in pk.iter().enumerate() {
            for &j in pk.iter().skip(a + 1) {
                // the collider joining a co-parent pair is unique in a polytree
                debug_assert_eq!(theta.get(i, j), 0.0);
                theta.add_sym(i, j, m.beta(i, k) * m.beta(j, k) / omega[k]);
            }
        }
    }
    theta
}

/// Inverse correlation estimate from an estimated CPDAG and pairwise sample
/// correlations. Noise variances are only formed for nodes whose parent set
/// the CPDAG identifies; nodes with undirected edges contribute through the
/// equivalence-class-invariant 1/(1 - rho^2) terms instead.
pub fn estimate_inverse_correlation(
    c_hat: &Cpdag,
    corr_hat: &CorrelationMatrix,
) -> Result<PrecisionMatrix, PrecisionError> {
    let p = c_hat.p();
    if corr_hat.p() != p {
        return Err(PrecisionError::DimensionMismatch {
            a: p,
            b: corr_hat.p(),
        });
    }
    c_hat
        .check_polytree_invariants()
        .map_err(|e| PrecisionError::InvalidCpdag(e.to_string()))?;

    let mut parents = vec![Vec::new(); p];
    let mut children = vec![Vec::new(); p];
    for &(i, j) in c_hat.directed_edges() {
        parents[j].push(i);
        children[i].push(j);
    }
    let mut undirected = vec![Vec::new(); p];
    for &(a, b) in c_hat.undirected_edges() {
        undirected[a].push(b);
        undirected[b].push(a);
        if 1.0 - corr_hat.get(a, b) * corr_hat.get(a, b) <= 1e-10 {
            return Err(PrecisionError::DegenerateVariance(b));
        }
    }
    // omega_hat is defined exactly on V_d (nodes with no undirected edges)
    let mut omega_hat = vec![f64::NAN; p];
    for j in 0..p {
        if undirected[j].is_empty() {
            let w = 1.0
                - parents[j]
                    .iter()
                    .map(|&i| corr_hat.get(i, j).powi(2))
                    .sum::<f64>();
            if w <= 1e-10 {
                return Err(PrecisionError::DegenerateVariance(j));
            }
            omega_hat[j] = w;
        }
    }

    let mut theta = PrecisionMatrix::zeros(p);
    for &(i, j) in c_hat.directed_edges() {
        theta.set_sym(i, j, -corr_hat.get(i, j) / omega_hat[j]);
    }
    for &(a, b) in c_hat.undirected_edges() {
        let rho = corr_hat.get(a, b);
        theta.set_sym(a, b, -rho / (1.0 - rho * rho));
    }
    for (k, pk) in parents.iter().enumerate() {
        for (a, &i) in pk.iter().enumerate() {
            for &j in pk.iter().skip(a + 1) {
                debug_assert_eq!(theta.get(i, j), 0.0);
                theta.add_sym(i, j, corr_hat.get(i, k) * corr_hat.get(j, k) / omega_hat[k]);
            }
        }
    }
    for j in 0..p {
        let child_sum: f64 = children[j]
            .iter()
            .map(|&k| corr_hat.get(j, k).powi(2) / omega_hat[k])
            .sum();
        let diag = if undirected[j].is_empty() {
            1.0 / omega_hat[j] + child_sum
        } else {
            let und_sum: f64 = undirected[j]
                .iter()
                .map(|&k| {
                    let r2 = corr_hat.get(j, k).powi(2);
                    r2 / (1.0 - r2)
                })
                .sum();
            1.0 + und_sum + child_sum
        };
        theta.set_sym(j, j, diag);
    }
    Ok(theta)
}

/// Entrywise l1 errors, split into the diagonal sum and the off-diagonal
/// sum (both orders of each pair counted).
pub fn l1_errors(
    theta_hat: &PrecisionMatrix,
    theta: &PrecisionMatrix,
) -> Result<(f64, f64), PrecisionError> {
    if theta_hat.p() != theta.p() {
        return Err(PrecisionError::DimensionMismatch {
            a: theta_hat.p(),
            b: theta.p(),
        });
    }
    let p = theta.p();
    let mut diag = 0.0;
    let mut off = 0.0;
    for i in 0..p {
        for j in 0..p {
            let d = (theta_hat.get(i, j) - theta.get(i, j)).abs();
            if i == j {
                diag += d;
            } else {
                off += d;
            }
        }
    }
    Ok((diag, off))
}
