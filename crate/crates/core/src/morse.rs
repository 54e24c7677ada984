//! Strongly connected components, Morse graphs and regions of attraction of
//! a cell map viewed as a directed graph.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::outer::CellMap;

/// Directed graph with sorted, duplicate-free adjacency lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiGraph {
    pub adj: Vec<Vec<usize>>,
}

impl DiGraph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut adj = vec![Vec::new(); n];
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::config(format!("edge ({a}, {b}) out of range for {n} vertices")));
            }
            adj[a].push(b);
        }
        for row in &mut adj {
            row.sort_unstable();
            row.dedup();
        }
        Ok(Self { adj })
    }

    pub fn from_map(map: &CellMap) -> Self {
        Self {
            adj: map.images.clone(),
        }
    }

    /// Like [`from_map`](Self::from_map) but escaping cells lose their
    /// out-edges, so they can never be recurrent.
    pub fn recurrence_graph(map: &CellMap) -> Self {
        Self {
            adj: map
                .images
                .iter()
                .zip(&map.escapes)
                .map(|(img, &esc)| if esc { Vec::new() } else { img.clone() })
                .collect(),
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.adj.len()
    }

    pub fn num_edges(&self) -> usize {
        self.adj.iter().map(Vec::len).sum()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].binary_search(&b).is_ok()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SccPartition {
    /// Component id of every vertex.
    pub component_of: Vec<usize>,
    /// Vertices of each component, sorted. Components are numbered in
    /// reverse topological order: every edge goes to an equal or lower id.
    pub components: Vec<Vec<usize>>,
    pub nontrivial: Vec<bool>,
}

/// Tarjan's algorithm with an explicit stack.
pub fn scc(g: &DiGraph) -> SccPartition {
    const UNSEEN: usize = usize::MAX;
    let n = g.num_vertices();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut component_of = vec![UNSEEN; n];
    let mut components: Vec<Vec<usize>> = Vec::new();
    let mut next = 0;
    let mut call: Vec<(usize, usize)> = Vec::new();
    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        call.push((root, 0));
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if let Some(&w) = g.adj[v].get(*pos) {
                *pos += 1;
                if index[w] == UNSEEN {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let id = components.len();
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack");
                    on_stack[w] = false;
                    component_of[w] = id;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                components.push(comp);
            }
        }
    }
    let nontrivial = components
        .iter()
        .map(|c| c.len() > 1 || g.has_edge(c[0], c[0]))
        .collect();
    SccPartition {
        component_of,
        components,
        nontrivial,
    }
}

/// Edges of the condensation, deduplicated, self-loops dropped.
pub fn condensation(g: &DiGraph, p: &SccPartition) -> DiGraph {
    let edges = g.adj.iter().enumerate().flat_map(|(a, row)| {
        row.iter().filter_map(move |&b| {
            let (ca, cb) = (p.component_of[a], p.component_of[b]);
            (ca != cb).then_some((ca, cb))
        })
    });
    DiGraph::new(p.components.len(), edges).expect("component ids in range")
}

/// Kahn's algorithm; true iff `g` has no directed cycle (self-loops count).
pub fn is_acyclic(g: &DiGraph) -> bool {
    let n = g.num_vertices();
    let mut indeg = vec![0usize; n];
    for row in &g.adj {
        for &b in row {
            indeg[b] += 1;
        }
    }
    let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut seen = 0;
    while let Some(v) = queue.pop_front() {
        seen += 1;
        for &b in &g.adj[v] {
            indeg[b] -= 1;
            if indeg[b] == 0 {
                queue.push_back(b);
            }
        }
    }
    seen == n
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MorseNode {
    pub id: usize,
    /// Linear cell indices, sorted.
    pub cells: Vec<usize>,
    pub minimal: bool,
}

/// Hasse diagram of the reachability order on Morse sets.
///
/// `order[q][p]` means `p < q`: `M(p)` is reachable from `M(q)`. Minimal
/// nodes are attractor-like. Hasse edges are `(upper, lower)` pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MorseGraph {
    pub nodes: Vec<MorseNode>,
    pub hasse_edges: Vec<(usize, usize)>,
    pub order: Vec<Vec<bool>>,
}

#[derive(Clone, Copy)]
struct BitRow<'a>(&'a [u64]);

impl BitRow<'_> {
    fn get(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }
}

pub fn morse_graph(map: &CellMap) -> Result<MorseGraph> {
    let g = DiGraph::recurrence_graph(map);
    let part = scc(&g);
    let cond = condensation(&g, &part);
    if !is_acyclic(&cond) {
        return Err(Error::Solver("condensation graph contains a cycle".into()));
    }
    // Morse nodes numbered by smallest contained cell
    let mut morse_comps: Vec<usize> = (0..part.components.len()).filter(|&c| part.nontrivial[c]).collect();
    morse_comps.sort_by_key(|&c| part.components[c][0]);
    let m = morse_comps.len();
    let mut node_of_comp = vec![usize::MAX; part.components.len()];
    for (i, &c) in morse_comps.iter().enumerate() {
        node_of_comp[c] = i;
    }
    // reach[c] = Morse nodes strictly reachable from component c; components
    // are in reverse topological order so successors are done first
    let words = m.div_ceil(64).max(1);
    let mut reach = vec![0u64; part.components.len() * words];
    for c in 0..part.components.len() {
        let (done, rest) = reach.split_at_mut(c * words);
        let row = &mut rest[..words];
        for &d in &cond.adj[c] {
            debug_assert!(d < c);
            let src = &done[d * words..(d + 1) * words];
            for (a, b) in row.iter_mut().zip(src) {
                *a |= b;
            }
            if node_of_comp[d] != usize::MAX {
                row[node_of_comp[d] / 64] |= 1 << (node_of_comp[d] % 64);
            }
        }
    }
    let order: Vec<Vec<bool>> = morse_comps
        .iter()
        .map(|&c| {
            let row = BitRow(&reach[c * words..(c + 1) * words]);
            (0..m).map(|p| row.get(p)).collect()
        })
        .collect();
    let hasse_edges = transitive_reduction(&order);
    let nodes = morse_comps
        .iter()
        .enumerate()
        .map(|(i, &c)| MorseNode {
            id: i,
            cells: part.components[c].clone(),
            minimal: !order[i].iter().any(|&b| b),
        })
        .collect();
    let mg = MorseGraph {
        nodes,
        hasse_edges,
        order,
    };
    mg.check()?;
    Ok(mg)
}

/// Cover relation `(q, p)`: `p < q` with nothing strictly between.
pub fn transitive_reduction(order: &[Vec<bool>]) -> Vec<(usize, usize)> {
    let m = order.len();
    let mut edges = Vec::new();
    for q in 0..m {
        for p in 0..m {
            if order[q][p] && !(0..m).any(|r| order[q][r] && order[r][p]) {
                edges.push((q, p));
            }
        }
    }
    edges
}

/// Reflexive-free transitive closure of a relation given as `(upper, lower)` edges.
pub fn transitive_closure(m: usize, edges: &[(usize, usize)]) -> Vec<Vec<bool>> {
    let mut c = vec![vec![false; m]; m];
    for &(q, p) in edges {
        c[q][p] = true;
    }
    for k in 0..m {
        for i in 0..m {
            if c[i][k] {
                for j in 0..m {
                    if c[k][j] {
                        c[i][j] = true;
                    }
                }
            }
        }
    }
    c
}

impl MorseGraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// True when `p < q`.
    pub fn is_below(&self, p: usize, q: usize) -> bool {
        self.order[q][p]
    }

    pub fn minimal_nodes(&self) -> Vec<usize> {
        self.nodes.iter().filter(|n| n.minimal).map(|n| n.id).collect()
    }

    /// Structural invariants: disjoint Morse sets, antisymmetric order,
    /// Hasse edges equal to the transitive reduction of the order, whose
    /// closure gives back the order.
    pub fn check(&self) -> Result<()> {
        let m = self.num_nodes();
        let mut owner = BTreeMap::new();
        for n in &self.nodes {
            for &c in &n.cells {
                if let Some(o) = owner.insert(c, n.id) {
                    return Err(Error::Solver(format!("cell {c} in Morse sets {o} and {}", n.id)));
                }
            }
        }
        for p in 0..m {
            if self.order[p][p] {
                return Err(Error::Solver(format!("Morse node {p} is below itself")));
            }
            for q in 0..m {
                if self.order[p][q] && self.order[q][p] {
                    return Err(Error::Solver(format!("order is not antisymmetric at {p}, {q}")));
                }
            }
        }
        if transitive_reduction(&self.order) != self.hasse_edges {
            return Err(Error::Solver("Hasse edges are not the transitive reduction".into()));
        }
        if transitive_closure(m, &self.hasse_edges) != self.order {
            return Err(Error::Solver("Hasse closure differs from the order".into()));
        }
        if !is_acyclic(&DiGraph::new(m, self.hasse_edges.iter().copied())?) {
            return Err(Error::Solver("Hasse diagram has a cycle".into()));
        }
        Ok(())
    }
}

/// Forward-reachable cells from `seeds`, seeds included, sorted.
pub fn reachable_closure(map: &CellMap, seeds: &[usize]) -> Vec<usize> {
    let mut seen = vec![false; map.num_cells()];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for &s in seeds {
        if !seen[s] {
            seen[s] = true;
            queue.push_back(s);
        }
    }
    while let Some(v) = queue.pop_front() {
        for &w in &map.images[v] {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    (0..seen.len()).filter(|&i| seen[i]).collect()
}

/// Cells whose images eventually lie inside the forward closure `R` of
/// `seeds`. Cells flagged as escaping or with empty images never qualify,
/// and neither does any cell of `R` that can reach one: the core is the
/// largest subset of `R` mapped into itself. The region is the least set
/// containing the core and every cell whose whole image lies in the set.
pub fn region_of_attraction(map: &CellMap, seeds: &[usize]) -> Vec<usize> {
    let n = map.num_cells();
    let excluded = |c: usize| map.escapes[c] || map.images[c].is_empty();
    let mut preds = vec![Vec::new(); n];
    for (a, row) in map.images.iter().enumerate() {
        for &b in row {
            preds[b].push(a);
        }
    }
    let mut inside = vec![false; n];
    for c in reachable_closure(map, seeds) {
        inside[c] = true;
    }
    // peel cells of R that can leave the kept set
    let mut drop: VecDeque<usize> = (0..n).filter(|&c| inside[c] && excluded(c)).collect();
    for &c in &drop {
        inside[c] = false;
    }
    while let Some(b) = drop.pop_front() {
        for &a in &preds[b] {
            if inside[a] {
                inside[a] = false;
                drop.push_back(a);
            }
        }
    }
    let mut missing: Vec<usize> = (0..n)
        .map(|c| map.images[c].iter().filter(|&&b| !inside[b]).count())
        .collect();
    let mut queue: VecDeque<usize> = (0..n)
        .filter(|&c| !inside[c] && !excluded(c) && missing[c] == 0)
        .collect();
    for &c in &queue {
        inside[c] = true;
    }
    while let Some(b) = queue.pop_front() {
        for &a in &preds[b] {
            if inside[a] || excluded(a) {
                continue;
            }
            missing[a] -= 1;
            if missing[a] == 0 {
                inside[a] = true;
                queue.push_back(a);
            }
        }
    }
    (0..n).filter(|&i| inside[i]).collect()
}

/// Regions of attraction of every Morse node, by node id.
pub fn all_regions_of_attraction(map: &CellMap, mg: &MorseGraph) -> Vec<Vec<usize>> {
    use rayon::prelude::*;
    mg.nodes
        .par_iter()
        .map(|n| region_of_attraction(map, &n.cells))
        .collect()
}

/// Errors if two minimal nodes share a cell in their regions of attraction.
pub fn check_minimal_roas_disjoint(mg: &MorseGraph, roas: &[Vec<usize>]) -> Result<()> {
    let mins = mg.minimal_nodes();
    for (i, &a) in mins.iter().enumerate() {
        for &b in &mins[i + 1..] {
            if let Some(c) = sorted_intersection(&roas[a], &roas[b]).first() {
                return Err(Error::Solver(format!(
                    "regions of attraction of minimal nodes {a} and {b} share cell {c}"
                )));
            }
        }
    }
    Ok(())
}

pub(crate) fn sorted_intersection(a: &[usize], b: &[usize]) -> Vec<usize> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

/// Morse graph together with every node's region of attraction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MorseAnalysis {
    pub graph: MorseGraph,
    pub roas: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct MorseFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    header: Option<serde_json::Value>,
    nodes: Vec<MorseNode>,
    hasse_edges: Vec<(usize, usize)>,
    roa: BTreeMap<String, Vec<usize>>,
}

impl MorseAnalysis {
    /// Builds the Morse graph and all RoAs, checking every invariant.
    pub fn compute(map: &CellMap) -> Result<Self> {
        let graph = morse_graph(map)?;
        let roas = all_regions_of_attraction(map, &graph);
        check_minimal_roas_disjoint(&graph, &roas)?;
        Ok(Self { graph, roas })
    }

    pub fn to_json(&self, header: Option<serde_json::Value>) -> Result<String> {
        let f = MorseFile {
            header,
            nodes: self.graph.nodes.clone(),
            hasse_edges: self.graph.hasse_edges.clone(),
            roa: self
                .roas
                .iter()
                .enumerate()
                .map(|(i, r)| (i.to_string(), r.clone()))
                .collect(),
        };
        Ok(serde_json::to_string(&f)?)
    }

    /// Parses a file written by [`to_json`](Self::to_json); returns the header too.
    pub fn from_json(text: &str) -> Result<(Self, Option<serde_json::Value>)> {
        let f: MorseFile = serde_json::from_str(text)?;
        let m = f.nodes.len();
        if f.nodes.iter().enumerate().any(|(i, n)| n.id != i) {
            return Err(Error::Parse("Morse node ids must be 0..n in order".into()));
        }
        if f.hasse_edges.iter().any(|&(a, b)| a >= m || b >= m) {
            return Err(Error::Parse("Hasse edge refers to a missing node".into()));
        }
        let order = transitive_closure(m, &f.hasse_edges);
        let mut roas = vec![Vec::new(); m];
        for (k, v) in f.roa {
            let i: usize = k.parse().map_err(|_| Error::Parse(format!("bad RoA key {k:?}")))?;
            if i >= m {
                return Err(Error::Parse(format!("RoA for missing node {i}")));
            }
            roas[i] = v;
        }
        let graph = MorseGraph {
            nodes: f.nodes,
            hasse_edges: f.hasse_edges,
            order,
        };
        graph.check()?;
        Ok((Self { graph, roas }, f.header))
    }
}
