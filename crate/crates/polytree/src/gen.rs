//! Random polytree SEM generation and the two information-theoretic
//! hardness ensembles.
//!
//! Generation follows a three-stage protocol: draw a uniform labeled tree
//! from a random Prufer sequence (seeding one node's occurrences so it
//! reaches a target degree), orient the edges so the maximum in-degree is
//! exactly the target, then draw standardized edge coefficients that attain
//! the configured correlation bounds while keeping every noise variance at
//! or above its floor.

use crate::graph::{Dag, Skeleton};
use crate::rng::{derive_seed, seeded_rng, stream_rng};
use crate::sem::LinearSem;
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::{BTreeMap, VecDeque};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenError {
    #[error("no node has degree >= {d_in_max} (maximum degree is {max_degree})")]
    InfeasibleDegree { d_in_max: usize, max_degree: usize },
    #[error("infeasible configuration: {0}")]
    InfeasibleConfig(String),
    #[error("rho = {rho} out of range; must lie strictly in (0, {bound})")]
    InvalidRho { rho: f64, bound: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Targets for random SEM generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenConfig {
    pub p: usize,
    pub d_in_max: usize,
    pub rho_min: f64,
    pub rho_max: f64,
    pub omega_min: f64,
    pub seed: u64,
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        let fail = |msg: String| Err(GenError::InvalidConfig(msg));
        if self.p < 3 {
            return fail(format!("p = {} but at least 3 nodes are required", self.p));
        }
        if self.d_in_max < 1 || self.d_in_max > self.p - 1 {
            return fail(format!(
                "d_in_max = {} out of range 1..={}",
                self.d_in_max,
                self.p - 1
            ));
        }
        if !(self.rho_min > 0.0 && self.rho_min <= self.rho_max && self.rho_max < 1.0) {
            return fail(format!(
                "need 0 < rho_min <= rho_max < 1, got ({}, {})",
                self.rho_min, self.rho_max
            ));
        }
        if !self.omega_min.is_finite() || self.omega_min <= 0.0 {
            return fail(format!("omega_min = {} must be positive", self.omega_min));
        }
        if self.rho_max * self.rho_max + self.omega_min > 1.0 {
            return fail(format!(
                "rho_max^2 + omega_min = {} exceeds 1",
                self.rho_max * self.rho_max + self.omega_min
            ));
        }
        if self.d_in_max as f64 * self.rho_min * self.rho_min > 1.0 - self.omega_min {
            return fail(format!(
                "d_in_max * rho_min^2 = {} exceeds 1 - omega_min = {}",
                self.d_in_max as f64 * self.rho_min * self.rho_min,
                1.0 - self.omega_min
            ));
        }
        Ok(())
    }
}

/// Decodes a Prufer sequence into the labeled tree it encodes. The sequence
/// must have length p - 2 with labels below p; repeatedly the smallest
/// current leaf attaches to the next sequence element.
pub fn decode_prufer(p: usize, seq: &[usize]) -> Result<Skeleton, GenError> {
    if p < 2 {
        return Err(GenError::InvalidConfig(format!(
            "p = {p} but trees need at least 2 nodes"
        )));
    }
    if seq.len() != p - 2 {
        return Err(GenError::InvalidConfig(format!(
            "sequence length {} does not match p - 2 = {}",
            seq.len(),
            p - 2
        )));
    }
    if let Some(&bad) = seq.iter().find(|&&a| a >= p) {
        return Err(GenError::InvalidConfig(format!(
            "label {bad} out of range for p = {p}"
        )));
    }
    let mut degree = vec![1usize; p];
    for &a in seq {
        degree[a] += 1;
    }
    let mut leaves: std::collections::BinaryHeap<std::cmp::Reverse<usize>> = (0..p)
        .filter(|&v| degree[v] == 1)
        .map(std::cmp::Reverse)
        .collect();
    let mut edges = Vec::with_capacity(p - 1);
    for &a in seq {
        let std::cmp::Reverse(u) = leaves.pop().expect("a tree always has a leaf");
        edges.push((u, a));
        degree[a] -= 1;
        if degree[a] == 1 {
            leaves.push(std::cmp::Reverse(a));
        }
    }
    let std::cmp::Reverse(u) = leaves.pop().expect("two leaves remain");
    let std::cmp::Reverse(v) = leaves.pop().expect("two leaves remain");
    edges.push((u, v));
    Ok(Skeleton::new(p, edges).expect("decoded edges form a tree"))
}

/// A uniformly random labeled tree on p >= 3 nodes.
pub fn random_prufer_tree(p: usize, seed: u64) -> Result<Skeleton, GenError> {
    if p < 3 {
        return Err(GenError::InvalidConfig(format!(
            "p = {p} but at least 3 nodes are required"
        )));
    }
    let mut rng = seeded_rng(seed);
    let seq: Vec<usize> = (0..p - 2).map(|_| rng.gen_range(0..p)).collect();
    decode_prufer(p, &seq)
}

/// Orients a tree so the maximum in-degree is exactly `d_in_max`: a node of
/// degree >= d_in_max gets exactly d_in_max incoming edges, and the rest of
/// the tree is oriented edge by edge outward from it, flipping a coin per
/// edge but never letting any node exceed the in-degree cap.
pub fn orient_with_forced_indegree(
    t: &Skeleton,
    d_in_max: usize,
    seed: u64,
) -> Result<Dag, GenError> {
    let p = t.p();
    let degrees = t.degrees();
    let eligible: Vec<usize> = (0..p).filter(|&v| degrees[v] >= d_in_max).collect();
    if eligible.is_empty() {
        return Err(GenError::InfeasibleDegree {
            d_in_max,
            max_degree: degrees.iter().copied().max().unwrap_or(0),
        });
    }
    let mut rng = seeded_rng(seed);
    let forced = *eligible
        .choose(&mut rng)
        .expect("eligible set is non-empty");

    let adj = t.neighbor_lists();
    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(p.saturating_sub(1));
    let mut in_deg = vec![0usize; p];
    let mut visited = vec![false; p];
    visited[forced] = true;

    let mut spokes = adj[forced].clone();
    spokes.sort_unstable();
    spokes.shuffle(&mut rng);
    let mut queue = VecDeque::new();
    for (idx, &nbr) in spokes.iter().enumerate() {
        if idx < d_in_max {
            edges.push((nbr, forced));
            in_deg[forced] += 1;
        } else {
            edges.push((forced, nbr));
            in_deg[nbr] += 1;
        }
        visited[nbr] = true;
        queue.push_back(nbr);
    }
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if visited[w] {
                continue;
            }
            visited[w] = true;
            if rng.gen::<bool>() && in_deg[v] < d_in_max {
                edges.push((w, v));
                in_deg[v] += 1;
            } else {
                edges.push((v, w));
                in_deg[w] += 1;
            }
            queue.push_back(w);
        }
    }
    let dag = Dag::new(p, edges).expect("orienting a tree yields a polytree");
    debug_assert_eq!(dag.max_in_degree(), d_in_max);
    Ok(dag)
}

/// Inverse-CDF draw from Beta(1, d): 1 - u^(1/d).
fn beta_one_d(d: usize, rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.gen();
    1.0 - u.powf(1.0 / d as f64)
}

/// Draws standardized edge coefficients for a polytree so that the extreme
/// correlations rho_min and rho_max are both attained exactly, every |beta|
/// lies in [rho_min, rho_max], and every noise variance stays at or above
/// omega_min.
///
/// One node that can afford it receives an incoming |beta| = rho_max,
/// another receives rho_min. The remaining squared coefficients are drawn
/// sequentially in random order as rho_min^2 + v_j * x with x ~ Beta(1, d~),
/// where d~ counts the node's not-yet-assigned incoming edges and v_j is the
/// slack left after reserving rho_min^2 for each of them; the draw is capped
/// at rho_max^2. Signs are uniform.
pub fn sample_betas(g: &Dag, cfg: &GenConfig) -> Result<LinearSem, GenError> {
    cfg.validate()?;
    let p = g.p();
    if p != cfg.p {
        return Err(GenError::InvalidConfig(format!(
            "graph has {p} nodes but the configuration says {}",
            cfg.p
        )));
    }
    if g.max_in_degree() > cfg.d_in_max {
        return Err(GenError::InfeasibleConfig(format!(
            "graph max in-degree {} exceeds configured d_in_max {}",
            g.max_in_degree(),
            cfg.d_in_max
        )));
    }
    let mut rng = stream_rng(cfg.seed, &[2]);
    let in_deg = g.in_degrees();
    let parents = g.parent_lists();
    let budget = 1.0 - cfg.omega_min;
    let (r_min_sq, r_max_sq) = (cfg.rho_min * cfg.rho_min, cfg.rho_max * cfg.rho_max);

    // one incoming edge pinned at rho_max, on a node that can still reserve
    // rho_min^2 for each of its other incoming edges
    let eligible_a: Vec<usize> = (0..p)
        .filter(|&i| in_deg[i] > 0 && r_min_sq * (in_deg[i] - 1) as f64 + r_max_sq <= budget)
        .collect();
    let Some(&node_a) = eligible_a.choose(&mut rng) else {
        return Err(GenError::InfeasibleConfig(
            "no node can carry an incoming correlation of rho_max".into(),
        ));
    };
    let edge_a = (
        *parents[node_a]
            .as_slice()
            .choose(&mut rng)
            .expect("in-degree > 0"),
        node_a,
    );

    // one incoming edge pinned at rho_min, on a different node
    let eligible_b: Vec<usize> = (0..p).filter(|&k| k != node_a && in_deg[k] > 0).collect();
    let Some(&node_b) = eligible_b.choose(&mut rng) else {
        return Err(GenError::InfeasibleConfig(
            "no second node with an incoming edge to carry rho_min".into(),
        ));
    };
    let edge_b = (
        *parents[node_b]
            .as_slice()
            .choose(&mut rng)
            .expect("in-degree > 0"),
        node_b,
    );

    let mut beta_sq: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut chosen_sq_sum = vec![0.0; p];
    let mut remaining_in = in_deg.clone();
    let mut preset = |edge: (usize, usize), value: f64| {
        beta_sq.insert(edge, value);
        chosen_sq_sum[edge.1] += value;
        remaining_in[edge.1] -= 1;
    };
    preset(edge_a, r_max_sq);
    preset(edge_b, r_min_sq);

    let mut rest: Vec<(usize, usize)> = g
        .edges()
        .iter()
        .copied()
        .filter(|e| *e != edge_a && *e != edge_b)
        .collect();
    rest.shuffle(&mut rng);
    for (i, j) in rest {
        let d_tilde = remaining_in[j];
        let slack = budget - d_tilde as f64 * r_min_sq - chosen_sq_sum[j];
        let x = beta_one_d(d_tilde, &mut rng);
        let b2 = (r_min_sq + slack.max(0.0) * x).min(r_max_sq);
        beta_sq.insert((i, j), b2);
        chosen_sq_sum[j] += b2;
        remaining_in[j] -= 1;
    }

    let beta: BTreeMap<(usize, usize), f64> = beta_sq
        .into_iter()
        .map(|(edge, b2)| {
            let magnitude = if edge == edge_a {
                cfg.rho_max
            } else if edge == edge_b {
                cfg.rho_min
            } else {
                b2.sqrt().clamp(cfg.rho_min, cfg.rho_max)
            };
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            (edge, sign * magnitude)
        })
        .collect();
    let omega: Vec<f64> = (0..p)
        .map(|j| {
            1.0 - parents[j]
                .iter()
                .map(|&i| beta[&(i, j)] * beta[&(i, j)])
                .sum::<f64>()
        })
        .collect();
    let sem = LinearSem::new(g.clone(), beta, omega).expect("generated coefficients are valid");
    debug_assert!(sem.is_standardized());
    Ok(sem)
}

/// Generates a full random polytree SEM: seeded Prufer tree with one node of
/// degree >= d_in_max, capped random orientation, then coefficient sampling.
pub fn generate_polytree_sem(cfg: &GenConfig) -> Result<LinearSem, GenError> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, &[0]);
    let forced: usize = rng.gen_range(0..cfg.p);
    let mut seq = vec![forced; cfg.d_in_max - 1];
    while seq.len() < cfg.p - 2 {
        seq.push(rng.gen_range(0..cfg.p));
    }
    seq.shuffle(&mut rng);
    let tree = decode_prufer(cfg.p, &seq)?;
    let dag = orient_with_forced_indegree(&tree, cfg.d_in_max, derive_seed(cfg.seed, &[1]))?;
    sample_betas(&dag, cfg)
}

/// Builds the standardized star-free ensemble used for skeleton lower
/// bounds: p - 2 polytrees sharing the edges i -> p-2 for i < p-2, with the
/// pendant node p-1 attached to a different head node j in each member. All
/// edge correlations equal rho.
pub fn hardness_ensemble_skeleton(p: usize, rho: f64) -> Result<Vec<LinearSem>, GenError> {
    if p < 4 {
        return Err(GenError::InvalidConfig(format!(
            "p = {p} but the ensemble needs p >= 4"
        )));
    }
    let bound = 1.0 / (p as f64).sqrt();
    if !(rho > 0.0 && rho < bound) {
        return Err(GenError::InvalidRho { rho, bound });
    }
    let hub = p - 2;
    let tail = p - 1;
    let mut members = Vec::with_capacity(p - 2);
    for j in 0..p - 2 {
        let mut beta = BTreeMap::new();
        for i in 0..p - 2 {
            beta.insert((i, hub), rho);
        }
        beta.insert((tail, j), rho);
        let mut omega = vec![1.0; p];
        omega[hub] = 1.0 - (p - 2) as f64 * rho * rho;
        omega[j] = 1.0 - rho * rho;
        let dag = Dag::new(p, beta.keys().copied()).expect("ensemble edges form a polytree");
        members.push(LinearSem::new(dag, beta, omega).expect("ensemble model is valid"));
    }
    Ok(members)
}

/// Builds the star ensemble used for CPDAG lower bounds: all (p-1)(p-2)/2
/// stars with hub p-1, where exactly the chosen pair of leaves points into
/// the hub and every other edge points out. All edge correlations equal rho.
pub fn hardness_ensemble_cpdag(p: usize, rho: f64) -> Result<Vec<LinearSem>, GenError> {
    if p < 5 {
        return Err(GenError::InvalidConfig(format!(
            "p = {p} but the ensemble needs p >= 5"
        )));
    }
    if !(rho > 0.0 && rho < 0.5) {
        return Err(GenError::InvalidRho { rho, bound: 0.5 });
    }
    let hub = p - 1;
    let mut members = Vec::with_capacity((p - 1) * (p - 2) / 2);
    for a in 0..p - 1 {
        for b in (a + 1)..p - 1 {
            let mut beta = BTreeMap::new();
            let mut omega = vec![1.0; p];
            beta.insert((a, hub), rho);
            beta.insert((b, hub), rho);
            omega[hub] = 1.0 - 2.0 * rho * rho;
            for (c, w) in omega.iter_mut().enumerate().take(p - 1) {
                if c != a && c != b {
                    beta.insert((hub, c), rho);
                    *w = 1.0 - rho * rho;
                }
            }
            let dag = Dag::new(p, beta.keys().copied()).expect("a star is a polytree");
            members.push(LinearSem::new(dag, beta, omega).expect("ensemble model is valid"));
        }
    }
    Ok(members)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn decode_matches_the_worked_example() {
        let t = decode_prufer(3, &[2]).unwrap();
        assert_eq!(t.edges(), &BTreeSet::from([(0, 2), (1, 2)]));
    }

    #[test]
    fn decode_validates_input() {
        assert!(decode_prufer(3, &[]).is_err());
        assert!(decode_prufer(3, &[7]).is_err());
        assert!(decode_prufer(1, &[]).is_err());
    }

    /// Inverse mapping, used as the oracle: repeatedly strip the smallest
    /// leaf and record its neighbor.
    fn encode_prufer(t: &Skeleton) -> Vec<usize> {
        let p = t.p();
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); p];
        for &(a, b) in t.edges() {
            adj[a].insert(b);
            adj[b].insert(a);
        }
        let mut leaves: std::collections::BinaryHeap<std::cmp::Reverse<usize>> = (0..p)
            .filter(|&v| adj[v].len() == 1)
            .map(std::cmp::Reverse)
            .collect();
        let mut seq = Vec::with_capacity(p - 2);
        for _ in 0..p - 2 {
            let std::cmp::Reverse(u) = leaves.pop().unwrap();
            let &v = adj[u].iter().next().unwrap();
            seq.push(v);
            adj[u].clear();
            adj[v].remove(&u);
            if adj[v].len() == 1 {
                leaves.push(std::cmp::Reverse(v));
            }
        }
        seq
    }

    #[test]
    fn prufer_is_a_bijection() {
        let mut rng = seeded_rng(424242);
        for trial in 0..10_000 {
            let p = 3 + (trial % 48);
            let seq: Vec<usize> = (0..p - 2).map(|_| rng.gen_range(0..p)).collect();
            let tree = decode_prufer(p, &seq).unwrap();
            assert!(tree.is_tree());
            assert_eq!(encode_prufer(&tree), seq);
        }
    }

    #[test]
    fn random_trees_on_three_nodes_are_uniform() {
        // 3 labeled trees on 3 nodes; chi-squared at df = 2, 1% critical 9.21
        let mut counts = [0usize; 3];
        for seed in 0..100_000u64 {
            let t = random_prufer_tree(3, derive_seed(9, &[seed])).unwrap();
            // identify by the center node (degree 2)
            let center = (0..3).find(|&v| t.degrees()[v] == 2).unwrap();
            counts[center] += 1;
        }
        let expected = 100_000.0 / 3.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(
            chi2 < 9.21,
            "chi-squared {chi2} too large, counts {counts:?}"
        );
    }

    #[test]
    fn star_orients_all_spokes_inward() {
        let star = Skeleton::new(5, [(4, 0), (4, 1), (4, 2), (4, 3)]).unwrap();
        let dag = orient_with_forced_indegree(&star, 4, 7).unwrap();
        assert_eq!(
            dag.edges(),
            &BTreeSet::from([(0, 4), (1, 4), (2, 4), (3, 4)])
        );
    }

    #[test]
    fn path_with_unit_cap_becomes_a_rooted_path() {
        let path = Skeleton::new(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]).unwrap();
        for seed in 0..20 {
            let dag = orient_with_forced_indegree(&path, 1, seed).unwrap();
            assert!(dag.is_polytree());
            assert_eq!(dag.max_in_degree(), 1);
        }
    }

    #[test]
    fn infeasible_degree_is_reported() {
        let path = Skeleton::new(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        assert_eq!(
            orient_with_forced_indegree(&path, 3, 0),
            Err(GenError::InfeasibleDegree {
                d_in_max: 3,
                max_degree: 2
            })
        );
    }

    #[test]
    fn generated_polytrees_hit_the_forced_indegree_exactly() {
        for seed in 0..100 {
            let cfg = GenConfig {
                p: 50,
                d_in_max: 10,
                rho_min: 0.2,
                rho_max: 0.8,
                omega_min: 0.1,
                seed,
            };
            let sem = generate_polytree_sem(&cfg).unwrap();
            assert!(sem.dag().is_polytree());
            assert_eq!(sem.dag().max_in_degree(), 10);
        }
    }

    #[test]
    fn sampled_betas_attain_both_extremes_exactly() {
        for seed in 0..50 {
            let cfg = GenConfig {
                p: 30,
                d_in_max: 4,
                rho_min: 0.3,
                rho_max: 0.7,
                omega_min: 0.1,
                seed: 1000 + seed,
            };
            let sem = generate_polytree_sem(&cfg).unwrap();
            let bounds = sem.rho_bounds().unwrap();
            assert_eq!(bounds.rho_min, 0.3);
            assert_eq!(bounds.rho_max, 0.7);
        }
    }

    // The boundary grid (d_in_max * rho_min^2 == 1 - omega_min): betas stay
    // inside the correlation band and every noise variance respects the
    // floor, across 100 seeds.
    #[test]
    fn beta_sampling_respects_all_constraints_on_a_tight_grid() {
        for seed in 0..100 {
            let cfg = GenConfig {
                p: 100,
                d_in_max: 10,
                rho_min: 0.3,
                rho_max: 0.8,
                omega_min: 0.1,
                seed: 5000 + seed,
            };
            let sem = generate_polytree_sem(&cfg).unwrap();
            assert!(sem.is_standardized());
            for &b in sem.betas().values() {
                assert!(b.abs() >= 0.3 && b.abs() <= 0.8, "beta {b} out of band");
            }
            for &w in sem.omega() {
                assert!(w >= 0.1 - 1e-12, "omega {w} below the floor");
            }
        }
    }

    #[test]
    fn degenerate_band_pins_every_beta() {
        let cfg = GenConfig {
            p: 12,
            d_in_max: 3,
            rho_min: 0.4,
            rho_max: 0.4,
            omega_min: 0.2,
            seed: 3,
        };
        let sem = generate_polytree_sem(&cfg).unwrap();
        for &b in sem.betas().values() {
            assert_eq!(b.abs(), 0.4);
        }
    }

    #[test]
    fn config_validation_catches_infeasible_targets() {
        let ok = GenConfig {
            p: 10,
            d_in_max: 3,
            rho_min: 0.2,
            rho_max: 0.7,
            omega_min: 0.1,
            seed: 0,
        };
        assert!(ok.validate().is_ok());
        assert!(GenConfig { p: 2, ..ok }.validate().is_err());
        assert!(GenConfig { d_in_max: 0, ..ok }.validate().is_err());
        assert!(GenConfig { d_in_max: 10, ..ok }.validate().is_err());
        assert!(GenConfig { rho_min: 0.8, ..ok }.validate().is_err()); // min > max
        assert!(GenConfig { rho_max: 1.0, ..ok }.validate().is_err());
        assert!(GenConfig {
            omega_min: 0.0,
            ..ok
        }
        .validate()
        .is_err());
        assert!(GenConfig {
            rho_max: 0.99,
            ..ok
        }
        .validate()
        .is_err()); // band + floor > 1
        assert!(GenConfig {
            d_in_max: 9,
            rho_min: 0.4,
            rho_max: 0.5,
            omega_min: 0.3,
            ..ok
        }
        .validate()
        .is_err());
    }

    #[test]
    fn skeleton_ensemble_members_are_distinct_trees() {
        let members = hardness_ensemble_skeleton(10, 0.2).unwrap();
        assert_eq!(members.len(), 8);
        let mut skeletons = BTreeSet::new();
        for m in &members {
            assert!(m.dag().is_polytree());
            assert!(m.is_standardized());
            skeletons.insert(m.dag().skeleton().edges().clone());
        }
        assert_eq!(skeletons.len(), 8);
        assert_eq!(
            hardness_ensemble_skeleton(10, 0.5),
            Err(GenError::InvalidRho {
                rho: 0.5,
                bound: 1.0 / 10.0_f64.sqrt()
            })
        );
    }

    #[test]
    fn star_ensemble_shares_a_skeleton_but_not_v_structures() {
        let members = hardness_ensemble_cpdag(8, 0.3).unwrap();
        assert_eq!(members.len(), 21);
        let first_skeleton = members[0].dag().skeleton();
        let mut v_sets = BTreeSet::new();
        for m in &members {
            assert!(m.dag().is_polytree());
            assert!(m.is_standardized());
            assert_eq!(m.dag().skeleton(), first_skeleton);
            v_sets.insert(format!("{:?}", m.dag().v_structures()));
        }
        assert_eq!(v_sets.len(), 21);
        assert!(hardness_ensemble_cpdag(8, 0.6).is_err());
    }
}
