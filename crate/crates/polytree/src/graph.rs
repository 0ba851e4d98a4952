//! Directed and mixed graphs over dense node labels 0..p-1.
//!
//! [`Dag`] is a directed acyclic graph; when its skeleton is a connected tree
//! it is a polytree and [`Dag::cpdag`] produces the completed partially
//! directed graph representing its Markov equivalence class. Equivalence of
//! two DAGs means equal skeletons and equal v-structure sets, so the CPDAG is
//! computed by keeping the skeleton, orienting v-structure edges, and closing
//! under the single orientation rule that applies on polytrees: direct
//! `j - k` into `j -> k` whenever some directed `i -> j` exists.

use crate::union_find::UnionFind;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("node {node} out of bounds for a graph on {p} nodes")]
    NodeOutOfBounds { node: usize, p: usize },
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("edge between {0} and {1} present in both directions")]
    BothDirections(usize, usize),
    #[error("duplicate edge between {0} and {1}")]
    DuplicateEdge(usize, usize),
    #[error("directed edges contain a cycle")]
    Cycle,
    #[error("graph is not a polytree")]
    NotAPolytree,
    #[error("pair {{{0}, {1}}} appears both directed and undirected")]
    MixedEdgePair(usize, usize),
    #[error("undirected subgraph contains a cycle")]
    UndirectedCycle,
    #[error("node {0} has an incident undirected edge and an incoming directed edge")]
    IncomingIntoUndirectedNode(usize),
    #[error("equivalence class size {size} exceeds limit {limit}")]
    LimitExceeded { size: u128, limit: u128 },
    #[error("parse error: {0}")]
    Parse(String),
}

fn norm(a: usize, b: usize) -> (usize, usize) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn check_node(node: usize, p: usize) -> Result<(), GraphError> {
    if node >= p {
        Err(GraphError::NodeOutOfBounds { node, p })
    } else {
        Ok(())
    }
}

/// A directed acyclic graph on nodes 0..p-1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    p: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Dag {
    /// Builds a DAG, rejecting self-loops, anti-parallel pairs and cycles.
    pub fn new(
        p: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            check_node(i, p)?;
            check_node(j, p)?;
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            if set.contains(&(j, i)) {
                return Err(GraphError::BothDirections(i, j));
            }
            if !set.insert((i, j)) {
                return Err(GraphError::DuplicateEdge(i, j));
            }
        }
        let dag = Self { p, edges: set };
        if dag.topological_order().is_none() {
            return Err(GraphError::Cycle);
        }
        Ok(dag)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i, j))
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i, j)) || self.edges.contains(&(j, i))
    }

    pub fn parent_lists(&self) -> Vec<Vec<usize>> {
        let mut parents = vec![Vec::new(); self.p];
        for &(i, j) in &self.edges {
            parents[j].push(i);
        }
        parents
    }

    pub fn child_lists(&self) -> Vec<Vec<usize>> {
        let mut children = vec![Vec::new(); self.p];
        for &(i, j) in &self.edges {
            children[i].push(j);
        }
        children
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.p];
        for &(_, j) in &self.edges {
            d[j] += 1;
        }
        d
    }

    pub fn max_in_degree(&self) -> usize {
        self.in_degrees().into_iter().max().unwrap_or(0)
    }

    /// Kahn's algorithm, smallest-label first; None if a cycle exists.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let mut indeg = self.in_degrees();
        let children = self.child_lists();
        let mut ready: BTreeSet<usize> = (0..self.p).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(self.p);
        while let Some(&v) = ready.iter().next() {
            ready.remove(&v);
            order.push(v);
            for &c in &children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        if order.len() == self.p {
            Some(order)
        } else {
            None
        }
    }

    /// True iff the skeleton is a connected tree.
    pub fn is_polytree(&self) -> bool {
        if self.p == 0 {
            return false;
        }
        if self.edges.len() != self.p - 1 {
            return false;
        }
        let mut uf = UnionFind::new(self.p);
        for &(i, j) in &self.edges {
            if !uf.union(i, j) {
                return false;
            }
        }
        uf.component_size(0) == self.p
    }

    /// Drops edge directions.
    pub fn skeleton(&self) -> Skeleton {
        let edges = self.edges.iter().map(|&(i, j)| norm(i, j)).collect();
        Skeleton { p: self.p, edges }
    }

    /// All triples i -> k <- j with i and j non-adjacent, canonicalized i < j.
    pub fn v_structures(&self) -> BTreeSet<VStructure> {
        let parents = self.parent_lists();
        let mut out = BTreeSet::new();
        for (k, pk) in parents.iter().enumerate() {
            for (a, &i) in pk.iter().enumerate() {
                for &j in pk.iter().skip(a + 1) {
                    if !self.adjacent(i, j) {
                        out.insert(VStructure::new(i, k, j));
                    }
                }
            }
        }
        out
    }

    /// The CPDAG of a polytree: skeleton plus v-structure orientations,
    /// closed under orientation propagation.
    pub fn cpdag(&self) -> Result<Cpdag, GraphError> {
        if !self.is_polytree() {
            return Err(GraphError::NotAPolytree);
        }
        let mut directed = BTreeSet::new();
        for v in self.v_structures() {
            directed.insert((v.left, v.collider));
            directed.insert((v.right, v.collider));
        }
        let undirected: Vec<(usize, usize)> = self
            .edges
            .iter()
            .filter(|&&(i, j)| !directed.contains(&(i, j)))
            .map(|&(i, j)| norm(i, j))
            .collect();
        let directed: Vec<(usize, usize)> = directed.into_iter().collect();
        let closure = apply_rule1(self.p, &directed, &undirected);
        // v-structures of an actual DAG are consistent, so ties cannot occur
        debug_assert_eq!(closure.conflicts, 0);
        let cpdag = Cpdag::new(self.p, closure.directed, closure.undirected)?;
        debug_assert!(cpdag.check_polytree_invariants().is_ok());
        Ok(cpdag)
    }

    /// Canonical edge-list text: `p=<count>` then `i -> j` lines, ascending.
    pub fn to_edge_list_text(&self) -> String {
        write_edge_list(self.p, &self.edges, &BTreeSet::new())
    }

    pub fn from_edge_list_text(text: &str) -> Result<Self, GraphError> {
        let (p, directed, undirected) = parse_edge_list(text)?;
        if let Some(&(a, b)) = undirected.first() {
            return Err(GraphError::Parse(format!(
                "undirected edge {a} -- {b} not allowed in a DAG file"
            )));
        }
        Self::new(p, directed)
    }
}

/// An undirected simple graph on nodes 0..p-1, edges stored as (min, max).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skeleton {
    p: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Skeleton {
    pub fn new(
        p: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            check_node(a, p)?;
            check_node(b, p)?;
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            if !set.insert(norm(a, b)) {
                return Err(GraphError::DuplicateEdge(a, b));
            }
        }
        Ok(Self { p, edges: set })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&norm(a, b))
    }

    pub fn neighbor_lists(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.p];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.p];
        for &(a, b) in &self.edges {
            d[a] += 1;
            d[b] += 1;
        }
        d
    }

    /// Connected and acyclic, i.e. exactly p-1 edges joining all nodes.
    pub fn is_tree(&self) -> bool {
        if self.p == 0 || self.edges.len() != self.p - 1 {
            return false;
        }
        let mut uf = UnionFind::new(self.p);
        for &(a, b) in &self.edges {
            if !uf.union(a, b) {
                return false;
            }
        }
        uf.component_size(0) == self.p
    }

    pub fn to_edge_list_text(&self) -> String {
        write_edge_list(self.p, &BTreeSet::new(), &self.edges)
    }

    pub fn from_edge_list_text(text: &str) -> Result<Self, GraphError> {
        let (p, directed, undirected) = parse_edge_list(text)?;
        if let Some(&(i, j)) = directed.first() {
            return Err(GraphError::Parse(format!(
                "directed edge {i} -> {j} not allowed in a skeleton file"
            )));
        }
        Self::new(p, undirected)
    }
}

/// A collider triple left -> collider <- right with left < right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct VStructure {
    pub left: usize,
    pub collider: usize,
    pub right: usize,
}

impl VStructure {
    pub fn new(a: usize, collider: usize, b: usize) -> Self {
        let (left, right) = norm(a, b);
        Self {
            left,
            collider,
            right,
        }
    }
}

/// A mixed graph with directed and undirected edges; node pairs appear in at
/// most one of the two sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cpdag {
    p: usize,
    directed: BTreeSet<(usize, usize)>,
    undirected: BTreeSet<(usize, usize)>,
}

impl Cpdag {
    pub fn new(
        p: usize,
        directed: impl IntoIterator<Item = (usize, usize)>,
        undirected: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        let mut dir = BTreeSet::new();
        for (i, j) in directed {
            check_node(i, p)?;
            check_node(j, p)?;
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            if dir.contains(&(j, i)) {
                return Err(GraphError::BothDirections(i, j));
            }
            if !dir.insert((i, j)) {
                return Err(GraphError::DuplicateEdge(i, j));
            }
        }
        let mut und = BTreeSet::new();
        for (a, b) in undirected {
            check_node(a, p)?;
            check_node(b, p)?;
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            let e = norm(a, b);
            if dir.contains(&e) || dir.contains(&(e.1, e.0)) {
                return Err(GraphError::MixedEdgePair(e.0, e.1));
            }
            if !und.insert(e) {
                return Err(GraphError::DuplicateEdge(a, b));
            }
        }
        Ok(Self {
            p,
            directed: dir,
            undirected: und,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn directed_edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.directed
    }

    pub fn undirected_edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.undirected
    }

    pub fn edge_count(&self) -> usize {
        self.directed.len() + self.undirected.len()
    }

    /// Unordered pairs of the skeleton, directed and undirected alike.
    pub fn skeleton_pairs(&self) -> BTreeSet<(usize, usize)> {
        let mut pairs: BTreeSet<(usize, usize)> =
            self.directed.iter().map(|&(i, j)| norm(i, j)).collect();
        pairs.extend(self.undirected.iter().copied());
        pairs
    }

    pub fn parents_of(&self, j: usize) -> Vec<usize> {
        self.directed
            .iter()
            .filter(|&&(_, t)| t == j)
            .map(|&(s, _)| s)
            .collect()
    }

    pub fn directed_children_of(&self, j: usize) -> Vec<usize> {
        self.directed
            .iter()
            .filter(|&&(s, _)| s == j)
            .map(|&(_, t)| t)
            .collect()
    }

    pub fn undirected_neighbors_of(&self, j: usize) -> Vec<usize> {
        self.undirected
            .iter()
            .filter_map(|&(a, b)| {
                if a == j {
                    Some(b)
                } else if b == j {
                    Some(a)
                } else {
                    None
                }
            })
            .collect()
    }

    /// Checks the structural facts that hold for the CPDAG of a polytree:
    /// the undirected subgraph is a forest and no node with an incident
    /// undirected edge has an incoming directed edge.
    pub fn check_polytree_invariants(&self) -> Result<(), GraphError> {
        let mut uf = UnionFind::new(self.p);
        for &(a, b) in &self.undirected {
            if !uf.union(a, b) {
                return Err(GraphError::UndirectedCycle);
            }
        }
        let mut has_undirected = vec![false; self.p];
        for &(a, b) in &self.undirected {
            has_undirected[a] = true;
            has_undirected[b] = true;
        }
        for &(_, j) in &self.directed {
            if has_undirected[j] {
                return Err(GraphError::IncomingIntoUndirectedNode(j));
            }
        }
        Ok(())
    }

    /// Splits nodes into (V_m, V_d): nodes with at least one incident
    /// undirected edge, and all the rest.
    pub fn vm_vd_partition(&self) -> (BTreeSet<usize>, BTreeSet<usize>) {
        let mut vm = BTreeSet::new();
        for &(a, b) in &self.undirected {
            vm.insert(a);
            vm.insert(b);
        }
        let vd = (0..self.p).filter(|v| !vm.contains(v)).collect();
        (vm, vd)
    }

    /// Number of DAGs in the equivalence class: each undirected tree of the
    /// forest may be rooted at any of its nodes, independently. Saturates at
    /// u128::MAX.
    pub fn equivalence_class_size(&self) -> u128 {
        let mut uf = UnionFind::new(self.p);
        for &(a, b) in &self.undirected {
            uf.union(a, b);
        }
        let mut roots: BTreeMap<usize, u128> = BTreeMap::new();
        for v in 0..self.p {
            let r = uf.find(v);
            *roots.entry(r).or_insert(0) += 1;
        }
        let mut touched: BTreeSet<usize> = BTreeSet::new();
        for &(a, _) in &self.undirected {
            touched.insert(uf.find(a));
        }
        let mut size: u128 = 1;
        for root in touched {
            size = size.saturating_mul(roots[&root]);
        }
        size
    }

    /// All DAGs in the equivalence class, obtained by rooting each undirected
    /// tree at each of its nodes. Deterministic order: components by smallest
    /// node, roots ascending within a component.
    pub fn enumerate_equivalent_dags(&self, limit: u128) -> Result<Vec<Dag>, GraphError> {
        let size = self.equivalence_class_size();
        if size > limit {
            return Err(GraphError::LimitExceeded { size, limit });
        }
        let mut uf = UnionFind::new(self.p);
        for &(a, b) in &self.undirected {
            uf.union(a, b);
        }
        let mut comp_nodes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for v in 0..self.p {
            comp_nodes.entry(uf.find(v)).or_default().push(v);
        }
        let mut touched: BTreeSet<usize> = BTreeSet::new();
        for &(a, _) in &self.undirected {
            touched.insert(uf.find(a));
        }
        let components: Vec<Vec<usize>> = comp_nodes
            .into_iter()
            .filter(|(root, _)| touched.contains(root))
            .map(|(_, nodes)| nodes)
            .collect();

        let adj = {
            let mut adj = vec![Vec::new(); self.p];
            for &(a, b) in &self.undirected {
                adj[a].push(b);
                adj[b].push(a);
            }
            adj
        };

        // Orient a component's edges away from the chosen root by BFS.
        let orient_component = |root: usize| -> Vec<(usize, usize)> {
            let mut out = Vec::new();
            let mut seen = BTreeSet::from([root]);
            let mut queue = VecDeque::from([root]);
            while let Some(v) = queue.pop_front() {
                for &w in &adj[v] {
                    if seen.insert(w) {
                        out.push((v, w));
                        queue.push_back(w);
                    }
                }
            }
            out
        };

        let mut dags = Vec::with_capacity(size as usize);
        let mut choice = vec![0usize; components.len()];
        loop {
            let mut edges: Vec<(usize, usize)> = self.directed.iter().copied().collect();
            for (c, nodes) in components.iter().enumerate() {
                edges.extend(orient_component(nodes[choice[c]]));
            }
            dags.push(Dag::new(self.p, edges).expect("rooting a forest never creates a cycle"));
            // advance the mixed-radix counter over root choices
            let mut k = components.len();
            loop {
                if k == 0 {
                    return Ok(dags);
                }
                k -= 1;
                choice[k] += 1;
                if choice[k] < components[k].len() {
                    break;
                }
                choice[k] = 0;
            }
        }
    }

    pub fn to_edge_list_text(&self) -> String {
        write_edge_list(self.p, &self.directed, &self.undirected)
    }

    pub fn from_edge_list_text(text: &str) -> Result<Self, GraphError> {
        let (p, directed, undirected) = parse_edge_list(text)?;
        Self::new(p, directed, undirected)
    }
}

/// Result of closing a partially directed graph under the orientation rule.
#[derive(Debug, Clone)]
pub struct Rule1Closure {
    pub directed: BTreeSet<(usize, usize)>,
    pub undirected: BTreeSet<(usize, usize)>,
    /// Undirected edges whose two endpoints demanded opposite orientations;
    /// they are left undirected.
    pub conflicts: usize,
}

/// Closes the mixed graph under: orient `j - k` into `j -> k` whenever a
/// directed edge `i -> j` exists.
///
/// Orientations are applied synchronously, so the result does not depend on
/// the order of the input slices: a node is "reached" at its BFS distance
/// from the set of nodes with incoming directed edges, walking undirected
/// edges only, and each undirected edge orients from the strictly earlier
/// endpoint. An edge whose endpoints are reached simultaneously is demanded
/// in both directions; it stays undirected and is counted as a conflict.
/// For the skeleton and v-structures of an actual polytree no conflict can
/// occur and the closure equals the sequential fixpoint.
pub fn apply_rule1(
    p: usize,
    directed: &[(usize, usize)],
    undirected: &[(usize, usize)],
) -> Rule1Closure {
    const UNSEEN: usize = usize::MAX;
    let mut adj = vec![Vec::new(); p];
    let undirected: BTreeSet<(usize, usize)> =
        undirected.iter().map(|&(a, b)| norm(a, b)).collect();
    for &(a, b) in &undirected {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut dist = vec![UNSEEN; p];
    let mut queue = VecDeque::new();
    for &(_, j) in directed {
        if dist[j] == UNSEEN {
            dist[j] = 0;
            queue.push_back(j);
        }
    }
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if dist[w] == UNSEEN {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    let mut out_directed: BTreeSet<(usize, usize)> = directed.iter().copied().collect();
    let mut out_undirected = BTreeSet::new();
    let mut conflicts = 0;
    for &(a, b) in &undirected {
        match (dist[a], dist[b]) {
            (UNSEEN, UNSEEN) => {
                out_undirected.insert((a, b));
            }
            (da, db) if da < db => {
                out_directed.insert((a, b));
            }
            (da, db) if db < da => {
                out_directed.insert((b, a));
            }
            _ => {
                conflicts += 1;
                out_undirected.insert((a, b));
            }
        }
    }
    Rule1Closure {
        directed: out_directed,
        undirected: out_undirected,
        conflicts,
    }
}

fn write_edge_list(
    p: usize,
    directed: &BTreeSet<(usize, usize)>,
    undirected: &BTreeSet<(usize, usize)>,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "p={p}");
    for &(i, j) in directed {
        let _ = writeln!(out, "{i} -> {j}");
    }
    for &(a, b) in undirected {
        let _ = writeln!(out, "{a} -- {b}");
    }
    out
}

type ParsedEdges = (usize, Vec<(usize, usize)>, Vec<(usize, usize)>);

/// Parses the edge-list text format: `#` comments, a `p=<count>` header,
/// then one `i -> j` or `i -- j` line per edge.
fn parse_edge_list(text: &str) -> Result<ParsedEdges, GraphError> {
    let mut p: Option<usize> = None;
    let mut directed = Vec::new();
    let mut undirected = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| GraphError::Parse(format!("line {}: {msg}", lineno + 1));
        if p.is_none() {
            let rest = line
                .strip_prefix("p=")
                .ok_or_else(|| err(format!("expected p=<count>, found {line:?}")))?;
            p = Some(
                rest.trim()
                    .parse::<usize>()
                    .map_err(|e| err(format!("invalid node count: {e}")))?,
            );
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 3 {
            return Err(err(format!(
                "expected `i -> j` or `i -- j`, found {line:?}"
            )));
        }
        let a: usize = tokens[0]
            .parse()
            .map_err(|e| err(format!("invalid node: {e}")))?;
        let b: usize = tokens[2]
            .parse()
            .map_err(|e| err(format!("invalid node: {e}")))?;
        match tokens[1] {
            "->" => directed.push((a, b)),
            "--" => undirected.push((a, b)),
            other => return Err(err(format!("unknown edge operator {other:?}"))),
        }
    }
    let p = p.ok_or_else(|| GraphError::Parse("missing p=<count> header".into()))?;
    Ok((p, directed, undirected))
}
