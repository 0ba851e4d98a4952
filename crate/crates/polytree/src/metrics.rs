//! CPDAG comparison: edge classification and FDR / Jaccard metrics.
//!
//! An edge present in both graphs is correct when its orientation status is
//! identical (same direction, or undirected in both) and wrong-direction in
//! every other case, including directed-vs-undirected disagreements. Edges
//! only in the truth are missing; edges only in the estimate are extra.

use crate::graph::Cpdag;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("the estimated graph has no edges; the rate is undefined")]
    EmptyEstimate,
    #[error("both graphs are empty; the index is undefined")]
    EmptyUnion,
    #[error("graphs have different node counts: {a} vs {b}")]
    DimensionMismatch { a: usize, b: usize },
}

/// Edge counts from comparing an estimated CPDAG against the truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeClassification {
    pub correct: usize,
    pub wrong_direction: usize,
    pub missing: usize,
    pub extra: usize,
    pub true_size: usize,
    pub est_size: usize,
}

impl EdgeClassification {
    /// Builds from raw counts; the graph sizes follow from the identities
    /// |G| = correct + wrong + missing and |G_hat| = correct + wrong + extra.
    pub fn from_counts(
        correct: usize,
        wrong_direction: usize,
        missing: usize,
        extra: usize,
    ) -> Self {
        Self {
            correct,
            wrong_direction,
            missing,
            extra,
            true_size: correct + wrong_direction + missing,
            est_size: correct + wrong_direction + extra,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PairStatus {
    Forward,
    Backward,
    Undirected,
}

fn pair_statuses(c: &Cpdag) -> BTreeMap<(usize, usize), PairStatus> {
    let mut map = BTreeMap::new();
    for &(i, j) in c.directed_edges() {
        if i < j {
            map.insert((i, j), PairStatus::Forward);
        } else {
            map.insert((j, i), PairStatus::Backward);
        }
    }
    for &(a, b) in c.undirected_edges() {
        map.insert((a, b), PairStatus::Undirected);
    }
    map
}

/// Compares two CPDAGs edge by edge.
pub fn classify_edges(truth: &Cpdag, est: &Cpdag) -> Result<EdgeClassification, MetricsError> {
    if truth.p() != est.p() {
        return Err(MetricsError::DimensionMismatch {
            a: truth.p(),
            b: est.p(),
        });
    }
    let t = pair_statuses(truth);
    let e = pair_statuses(est);
    let mut counts = EdgeClassification {
        correct: 0,
        wrong_direction: 0,
        missing: 0,
        extra: 0,
        true_size: t.len(),
        est_size: e.len(),
    };
    for (pair, &ts) in &t {
        match e.get(pair) {
            Some(&es) if es == ts => counts.correct += 1,
            Some(_) => counts.wrong_direction += 1,
            None => counts.missing += 1,
        }
    }
    counts.extra = e.keys().filter(|pair| !t.contains_key(*pair)).count();
    Ok(counts)
}

/// Skeleton false discovery rate: extra / |G_hat|.
pub fn fdr_skeleton(ec: &EdgeClassification) -> Result<f64, MetricsError> {
    if ec.est_size == 0 {
        return Err(MetricsError::EmptyEstimate);
    }
    Ok(ec.extra as f64 / ec.est_size as f64)
}

/// Skeleton Jaccard index: (correct + wrong) / (missing + |G_hat|).
pub fn jaccard_skeleton(ec: &EdgeClassification) -> Result<f64, MetricsError> {
    let denom = ec.missing + ec.est_size;
    if denom == 0 {
        return Err(MetricsError::EmptyUnion);
    }
    Ok((ec.correct + ec.wrong_direction) as f64 / denom as f64)
}

/// CPDAG false discovery rate: (extra + wrong) / |G_hat|.
pub fn fdr_cpdag(ec: &EdgeClassification) -> Result<f64, MetricsError> {
    if ec.est_size == 0 {
        return Err(MetricsError::EmptyEstimate);
    }
    Ok((ec.extra + ec.wrong_direction) as f64 / ec.est_size as f64)
}

/// CPDAG Jaccard index: correct / (|G| + |G_hat| - correct).
pub fn jaccard_cpdag(ec: &EdgeClassification) -> Result<f64, MetricsError> {
    let denom = ec.true_size + ec.est_size - ec.correct;
    if denom == 0 {
        return Err(MetricsError::EmptyUnion);
    }
    Ok(ec.correct as f64 / denom as f64)
}
