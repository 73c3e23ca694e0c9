//! Variable metadata, tree structures and Chow-Liu structure learning.
//!
//! A [`StructureGraph`] is the shared skeleton every learner agrees on. Once
//! validated it is turned into a [`TreeLayout`], which fixes the parameter
//! indexing (edge blocks, row-major with the lower vertex index as the major
//! coordinate) and the rooted traversal order used by inference.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Feature,
    Label,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Feature => "feature",
            Role::Label => "label",
        }
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "feature" => Ok(Role::Feature),
            "label" => Ok(Role::Label),
            other => Err(Error::Structure(format!("unknown role {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VariableSpec {
    pub name: String,
    pub arity: usize,
    pub role: Role,
}

impl VariableSpec {
    pub fn new(name: impl Into<String>, arity: usize, role: Role) -> Self {
        VariableSpec {
            name: name.into(),
            arity,
            role,
        }
    }

    pub fn feature(name: impl Into<String>, arity: usize) -> Self {
        Self::new(name, arity, Role::Feature)
    }

    pub fn label(name: impl Into<String>, arity: usize) -> Self {
        Self::new(name, arity, Role::Label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StructureGraph {
    pub variables: Vec<VariableSpec>,
    /// Unordered pairs stored as `(s, t)` with `s < t`.
    pub edges: Vec<(usize, usize)>,
}

/// First violated property found by [`validate_tree`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeDiagnostic {
    NoVariables,
    ArityTooSmall { vertex: usize, arity: usize },
    EdgeOutOfRange { edge: (usize, usize) },
    SelfLoop { vertex: usize },
    UnorderedEdge { edge: (usize, usize) },
    DuplicateEdge { edge: (usize, usize) },
    Cycle { edge: (usize, usize) },
    Disconnected,
    LabelCount { found: usize },
}

impl fmt::Display for TreeDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeDiagnostic::NoVariables => write!(f, "no variables"),
            TreeDiagnostic::ArityTooSmall { vertex, arity } => {
                write!(f, "arity {arity} of vertex {vertex} is below 2")
            }
            TreeDiagnostic::EdgeOutOfRange { edge } => {
                write!(f, "edge ({}, {}) out of range", edge.0, edge.1)
            }
            TreeDiagnostic::SelfLoop { vertex } => write!(f, "self-loop at vertex {vertex}"),
            TreeDiagnostic::UnorderedEdge { edge } => {
                write!(f, "edge ({}, {}) is not stored as s < t", edge.0, edge.1)
            }
            TreeDiagnostic::DuplicateEdge { edge } => {
                write!(f, "duplicate edge ({}, {})", edge.0, edge.1)
            }
            TreeDiagnostic::Cycle { .. } => write!(f, "cycle"),
            TreeDiagnostic::Disconnected => write!(f, "disconnected"),
            TreeDiagnostic::LabelCount { found } => {
                write!(f, "expected exactly one label variable, found {found}")
            }
        }
    }
}

/// Union-find over vertex indices, used by Kruskal and the cycle check.
struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false when `a` and `b` were already joined.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// Checks the spanning-tree invariants and returns the first violation.
pub fn validate_tree(g: &StructureGraph) -> std::result::Result<(), TreeDiagnostic> {
    let n = g.variables.len();
    if n == 0 {
        return Err(TreeDiagnostic::NoVariables);
    }
    if let Some((vertex, v)) = g.variables.iter().enumerate().find(|(_, v)| v.arity < 2) {
        return Err(TreeDiagnostic::ArityTooSmall { vertex, arity: v.arity });
    }
    let mut seen = std::collections::HashSet::new();
    let mut sets = DisjointSets::new(n);
    for &(s, t) in &g.edges {
        if s >= n || t >= n {
            return Err(TreeDiagnostic::EdgeOutOfRange { edge: (s, t) });
        }
        if s == t {
            return Err(TreeDiagnostic::SelfLoop { vertex: s });
        }
        if s > t {
            return Err(TreeDiagnostic::UnorderedEdge { edge: (s, t) });
        }
        if !seen.insert((s, t)) {
            return Err(TreeDiagnostic::DuplicateEdge { edge: (s, t) });
        }
        if !sets.union(s, t) {
            return Err(TreeDiagnostic::Cycle { edge: (s, t) });
        }
    }
    if g.edges.len() != n - 1 {
        return Err(TreeDiagnostic::Disconnected);
    }
    let labels = g.variables.iter().filter(|v| v.role == Role::Label).count();
    if labels != 1 {
        return Err(TreeDiagnostic::LabelCount { found: labels });
    }
    Ok(())
}

/// Empirical mutual information in bits of a two-way contingency table.
pub fn mutual_information(joint_counts: &[Vec<u64>]) -> Result<f64> {
    let rows = joint_counts.len();
    let cols = joint_counts.first().map_or(0, Vec::len);
    if joint_counts.iter().any(|r| r.len() != cols) {
        return Err(Error::Dimension {
            expected: cols,
            got: joint_counts.iter().map(Vec::len).find(|&l| l != cols).unwrap_or(0),
        });
    }
    let total: u64 = joint_counts.iter().flatten().sum();
    if total == 0 {
        return Err(Error::EmptyCounts);
    }
    let row_sums: Vec<u64> = joint_counts.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<u64> = (0..cols).map(|j| joint_counts.iter().map(|r| r[j]).sum()).collect();
    let n = total as f64;
    let mut mi = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            let c = joint_counts[i][j];
            if c == 0 {
                continue;
            }
            // p(s,t) / (p(s) p(t)) = c n / (r_i c_j)
            let ratio = (c as f64 * n) / (row_sums[i] as f64 * col_sums[j] as f64);
            mi += (c as f64 / n) * ratio.log2();
        }
    }
    // Rounding can leave tiny negative residue for independent tables.
    Ok(mi.max(0.0))
}

fn check_rows(rows: &[Vec<usize>], specs: &[VariableSpec]) -> Result<()> {
    for (i, row) in rows.iter().enumerate() {
        if row.len() != specs.len() {
            return Err(Error::Dimension {
                expected: specs.len(),
                got: row.len(),
            });
        }
        for (v, (&x, spec)) in row.iter().zip(specs).enumerate() {
            if x >= spec.arity {
                return Err(Error::Assignment(format!(
                    "row {i}: state {x} of variable {v} exceeds arity {}",
                    spec.arity
                )));
            }
        }
    }
    Ok(())
}

/// Pairwise contingency table of variables `s` and `t` over `rows`.
pub fn joint_counts(rows: &[Vec<usize>], specs: &[VariableSpec], s: usize, t: usize) -> Vec<Vec<u64>> {
    let mut table = vec![vec![0u64; specs[t].arity]; specs[s].arity];
    for row in rows {
        table[row[s]][row[t]] += 1;
    }
    table
}

/// Maximum-weight spanning tree over pairwise mutual information.
///
/// Candidate edges are ordered by `(-MI, s, t)` and added greedily, so ties
/// resolve to the lexicographically smallest edge.
pub fn chow_liu(holdout: &[Vec<usize>], specs: &[VariableSpec]) -> Result<StructureGraph> {
    if specs.len() < 2 {
        return Err(Error::Structure(format!(
            "chow-liu needs at least 2 variables, got {}",
            specs.len()
        )));
    }
    if holdout.is_empty() {
        return Err(Error::Empty("holdout"));
    }
    check_rows(holdout, specs)?;

    let n = specs.len();
    let mut candidates = Vec::with_capacity(n * (n - 1) / 2);
    for s in 0..n {
        for t in s + 1..n {
            let mi = mutual_information(&joint_counts(holdout, specs, s, t))?;
            candidates.push((mi, s, t));
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut sets = DisjointSets::new(n);
    let mut edges = Vec::with_capacity(n - 1);
    for (_, s, t) in candidates {
        if sets.union(s, t) {
            edges.push((s, t));
            if edges.len() == n - 1 {
                break;
            }
        }
    }
    edges.sort_unstable();
    Ok(StructureGraph {
        variables: specs.to_vec(),
        edges,
    })
}

impl StructureGraph {
    pub fn new(variables: Vec<VariableSpec>, edges: Vec<(usize, usize)>) -> Self {
        let edges = edges.into_iter().map(|(s, t)| (s.min(t), s.max(t))).collect();
        StructureGraph { variables, edges }
    }

    /// Features named `x0, x1, ...` with the last variable as the label.
    pub fn with_arities(arities: &[usize], edges: &[(usize, usize)]) -> Self {
        let last = arities.len().saturating_sub(1);
        let variables = arities
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                if i == last {
                    VariableSpec::label(format!("x{i}"), a)
                } else {
                    VariableSpec::feature(format!("x{i}"), a)
                }
            })
            .collect();
        Self::new(variables, edges.to_vec())
    }

    pub fn arities(&self) -> Vec<usize> {
        self.variables.iter().map(|v| v.arity).collect()
    }

    pub fn label_index(&self) -> Option<usize> {
        self.variables.iter().position(|v| v.role == Role::Label)
    }

    /// One line per variable (`name arity role`) then one per edge (`s t`).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for v in &self.variables {
            out.push_str(&format!("{} {} {}\n", v.name, v.arity, v.role.as_str()));
        }
        for &(s, t) in &self.edges {
            out.push_str(&format!("{s} {t}\n"));
        }
        out
    }

    /// Parses [`StructureGraph::to_text`] output. Blank lines and `#` comments are skipped.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut variables = Vec::new();
        let mut edges = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |msg: String| Error::Parse { line: i + 1, msg };
            let tokens: Vec<&str> = line.split_whitespace().collect();
            match tokens.as_slice() {
                [name, arity, role] => {
                    if !edges.is_empty() {
                        return Err(parse_err("variable line after edge lines".into()));
                    }
                    let arity = arity
                        .parse()
                        .map_err(|e| parse_err(format!("bad arity {arity:?}: {e}")))?;
                    let role = role.parse().map_err(|e: Error| parse_err(e.to_string()))?;
                    variables.push(VariableSpec::new(*name, arity, role));
                }
                [s, t] => {
                    let s: usize = s.parse().map_err(|e| parse_err(format!("bad vertex {s:?}: {e}")))?;
                    let t: usize = t.parse().map_err(|e| parse_err(format!("bad vertex {t:?}: {e}")))?;
                    edges.push((s, t));
                }
                _ => return Err(parse_err(format!("unrecognized line {line:?}"))),
            }
        }
        Ok(StructureGraph { variables, edges })
    }
}

/// A validated tree with its parameter layout and a rooted traversal.
///
/// The root is vertex 0; `order` lists vertices in breadth-first order from
/// the root so that every parent precedes its children.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeLayout {
    graph: StructureGraph,
    arities: Vec<usize>,
    offsets: Vec<usize>,
    dim: usize,
    /// `(neighbor, edge index)` per vertex, sorted by neighbor.
    neighbors: Vec<Vec<(usize, usize)>>,
    order: Vec<usize>,
    /// `(parent, edge index)` per vertex; `None` for the root.
    parent: Vec<Option<(usize, usize)>>,
    label: usize,
}

impl TreeLayout {
    pub fn new(graph: StructureGraph) -> Result<Self> {
        validate_tree(&graph).map_err(|d| Error::Structure(d.to_string()))?;
        let arities = graph.arities();
        let n = arities.len();
        let mut offsets = Vec::with_capacity(graph.edges.len());
        let mut dim = 0;
        let mut neighbors = vec![Vec::new(); n];
        for (e, &(s, t)) in graph.edges.iter().enumerate() {
            offsets.push(dim);
            dim += arities[s] * arities[t];
            neighbors[s].push((t, e));
            neighbors[t].push((s, e));
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        let mut order = Vec::with_capacity(n);
        let mut parent = vec![None; n];
        let mut visited = vec![false; n];
        visited[0] = true;
        order.push(0);
        let mut head = 0;
        while head < order.len() {
            let u = order[head];
            head += 1;
            for &(w, e) in &neighbors[u] {
                if !visited[w] {
                    visited[w] = true;
                    parent[w] = Some((u, e));
                    order.push(w);
                }
            }
        }
        let label = graph.label_index().expect("validated tree has a label");
        Ok(TreeLayout {
            graph,
            arities,
            offsets,
            dim,
            neighbors,
            order,
            parent,
            label,
        })
    }

    pub fn graph(&self) -> &StructureGraph {
        &self.graph
    }

    pub fn num_vertices(&self) -> usize {
        self.arities.len()
    }

    pub fn num_edges(&self) -> usize {
        self.offsets.len()
    }

    pub fn arities(&self) -> &[usize] {
        &self.arities
    }

    pub fn arity(&self, v: usize) -> usize {
        self.arities[v]
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.graph.edges
    }

    pub fn edge(&self, e: usize) -> (usize, usize) {
        self.graph.edges[e]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Size of the parameter block of edge `e`.
    pub fn block_len(&self, e: usize) -> usize {
        let (s, t) = self.graph.edges[e];
        self.arities[s] * self.arities[t]
    }

    /// Flat parameter index of edge `e` in joint state `(x_s, x_t)`.
    #[inline]
    pub fn index(&self, e: usize, xs: usize, xt: usize) -> usize {
        let (_, t) = self.graph.edges[e];
        self.offsets[e] + xs * self.arities[t] + xt
    }

    /// Flat index of edge `e` with endpoint `u` in state `xu` and the other endpoint in `xw`.
    #[inline]
    pub fn oriented_index(&self, e: usize, u: usize, xu: usize, xw: usize) -> usize {
        if self.graph.edges[e].0 == u {
            self.index(e, xu, xw)
        } else {
            self.index(e, xw, xu)
        }
    }

    /// Neighbors of `v` other than its parent, with the connecting edge.
    pub fn children(&self, v: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let parent = self.parent[v].map(|(p, _)| p);
        self.neighbors[v]
            .iter()
            .copied()
            .filter(move |&(w, _)| Some(w) != parent)
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.neighbors[v]
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn parent(&self, v: usize) -> Option<(usize, usize)> {
        self.parent[v]
    }

    pub fn label(&self) -> usize {
        self.label
    }

    /// Number of joint assignments, saturating at `u128::MAX`.
    pub fn state_space(&self) -> u128 {
        self.arities
            .iter()
            .try_fold(1u128, |acc, &a| acc.checked_mul(a as u128))
            .unwrap_or(u128::MAX)
    }

    pub fn check_assignment(&self, x: &[usize]) -> Result<()> {
        if x.len() != self.arities.len() {
            return Err(Error::Dimension {
                expected: self.arities.len(),
                got: x.len(),
            });
        }
        for (v, (&s, &a)) in x.iter().zip(&self.arities).enumerate() {
            if s >= a {
                return Err(Error::Assignment(format!("state {s} of vertex {v} exceeds arity {a}")));
            }
        }
        Ok(())
    }
}

/// Calls `f` on every joint assignment in lexicographic order (last vertex fastest).
pub fn for_each_assignment(arities: &[usize], mut f: impl FnMut(&[usize])) {
    if arities.contains(&0) {
        return;
    }
    let mut x = vec![0usize; arities.len()];
    loop {
        f(&x);
        let mut v = arities.len();
        loop {
            if v == 0 {
                return;
            }
            v -= 1;
            x[v] += 1;
            if x[v] < arities[v] {
                break;
            }
            x[v] = 0;
        }
    }
}
