//! Comparison of Morse decompositions across methods: aggregation onto an
//! expected structure, IoU of Morse sets and regions of attraction, and
//! metric tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::CubicalGrid;
use crate::morse::{region_of_attraction, sorted_intersection, MorseAnalysis, MorseGraph};
use crate::outer::CellMap;

/// `|a ∩ b| / |a ∪ b|` on sorted cell lists; two empty sets give 1.
pub fn iou(a: &[usize], b: &[usize]) -> f64 {
    let inter = sorted_intersection(a, b).len();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// [`iou`] after checking both sets live on the same grid.
pub fn iou_on(ga: &CubicalGrid, a: &[usize], gb: &CubicalGrid, b: &[usize]) -> Result<f64> {
    if ga != gb {
        return Err(Error::config("IoU of cell sets on different grids"));
    }
    Ok(iou(a, b))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetNode {
    pub label: String,
    pub minimal: bool,
    /// Rough location, used before any Morse set has been assigned.
    pub anchor: Vec<f64>,
}

/// Expected aggregated decomposition; `edges` are `(upper, lower)` Hasse pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetStructure {
    pub nodes: Vec<TargetNode>,
    pub edges: Vec<(usize, usize)>,
}

impl TargetStructure {
    pub fn labels(&self) -> Vec<&str> {
        self.nodes.iter().map(|n| n.label.as_str()).collect()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.label == label)
    }

    fn order(&self) -> Vec<Vec<bool>> {
        crate::morse::transitive_closure(self.nodes.len(), &self.edges)
    }

    fn le(order: &[Vec<bool>], a: usize, b: usize) -> bool {
        a == b || order[b][a]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregatedNode {
    pub label: String,
    /// Union of the member Morse sets, sorted.
    pub cells: Vec<usize>,
    pub members: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregatedMorseGraph {
    pub nodes: Vec<AggregatedNode>,
    /// Hasse edges among labels induced by the original order.
    pub edges: Vec<(usize, usize)>,
    /// Original nodes left unassigned.
    pub residue: Vec<usize>,
}

impl AggregatedMorseGraph {
    /// Every target node is nonempty and the induced order equals the target's.
    pub fn matches(&self, target: &TargetStructure) -> bool {
        self.nodes.iter().all(|n| !n.members.is_empty()) && {
            let mut a = self.edges.clone();
            let mut b = target.edges.clone();
            a.sort_unstable();
            b.sort_unstable();
            a == b
        }
    }

    pub fn node(&self, label: &str) -> Option<&AggregatedNode> {
        self.nodes.iter().find(|n| n.label == label)
    }
}

fn centroid(grid: &CubicalGrid, cells: &[usize]) -> Vec<f64> {
    let mut c = vec![0.0; grid.dim()];
    for &cell in cells {
        for (a, b) in c.iter_mut().zip(grid.cell_center(cell)) {
            *a += b;
        }
    }
    c.iter_mut().for_each(|a| *a /= cells.len().max(1) as f64);
    c
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn dist_to_cells(grid: &CubicalGrid, x: &[f64], cells: &[usize]) -> f64 {
    cells
        .iter()
        .map(|&c| dist(x, &grid.cell_center(c)))
        .fold(f64::INFINITY, f64::min)
}

/// Default clustering radius: ten cell widths.
pub fn default_radius(grid: &CubicalGrid) -> f64 {
    10.0 * grid.min_cell_width()
}

/// Groups Morse nodes into the target's nodes.
///
/// Minimal nodes go to the minimal target whose anchor is nearest their
/// centroid. The rest, lowest first, go to the order-compatible target whose
/// assigned cells (or anchor, while empty) lie nearest the node's centroid,
/// provided that distance is within `radius`; failing that, to the only
/// compatible non-minimal target if there is exactly one. Anything else is
/// residue.
pub fn aggregate(mg: &MorseGraph, grid: &CubicalGrid, target: &TargetStructure, radius: f64) -> Result<AggregatedMorseGraph> {
    let tn = target.nodes.len();
    let t_order = target.order();
    let minimal_targets: Vec<usize> = (0..tn).filter(|&t| target.nodes[t].minimal).collect();
    if minimal_targets.is_empty() {
        return Err(Error::Aggregation("target structure has no minimal node".into()));
    }
    let m = mg.num_nodes();
    let centroids: Vec<Vec<f64>> = mg.nodes.iter().map(|n| centroid(grid, &n.cells)).collect();
    let mut assign: Vec<Option<usize>> = vec![None; m];
    let mut cells: Vec<Vec<usize>> = vec![Vec::new(); tn];
    for p in mg.minimal_nodes() {
        let t = *minimal_targets
            .iter()
            .min_by(|&&a, &&b| {
                dist(&centroids[p], &target.nodes[a].anchor).total_cmp(&dist(&centroids[p], &target.nodes[b].anchor))
            })
            .expect("nonempty");
        assign[p] = Some(t);
        cells[t].extend(&mg.nodes[p].cells);
    }
    let mut rest: Vec<usize> = (0..m).filter(|&p| !mg.nodes[p].minimal).collect();
    rest.sort_by_key(|&q| (mg.order[q].iter().filter(|&&b| b).count(), q));
    let mut residue = Vec::new();
    for q in rest {
        let compatible: Vec<usize> = (0..tn)
            .filter(|&t| {
                (0..m).all(|p| match assign[p] {
                    Some(tp) if mg.is_below(p, q) => TargetStructure::le(&t_order, tp, t),
                    Some(tp) if mg.is_below(q, p) => TargetStructure::le(&t_order, t, tp),
                    _ => true,
                })
            })
            .collect();
        if compatible.is_empty() {
            return Err(Error::Aggregation(format!(
                "Morse node {q} (centroid {:?}) has no order-compatible target",
                centroids[q]
            )));
        }
        let near = compatible
            .iter()
            .map(|&t| {
                let d = if cells[t].is_empty() {
                    dist(&centroids[q], &target.nodes[t].anchor)
                } else {
                    dist_to_cells(grid, &centroids[q], &cells[t])
                };
                (d, t)
            })
            .filter(|(d, _)| *d <= radius)
            .min_by(|a, b| a.0.total_cmp(&b.0));
        let upper: Vec<usize> = compatible.iter().copied().filter(|&t| !target.nodes[t].minimal).collect();
        let chosen = near.map(|(_, t)| t).or((upper.len() == 1).then(|| upper[0]));
        match chosen {
            Some(t) => {
                assign[q] = Some(t);
                cells[t].extend(&mg.nodes[q].cells);
            }
            None => residue.push(q),
        }
    }
    // induced order, checked monotone
    for q in 0..m {
        for p in 0..m {
            if let (Some(tp), Some(tq)) = (assign[p], assign[q]) {
                if mg.is_below(p, q) && !TargetStructure::le(&t_order, tp, tq) {
                    return Err(Error::Aggregation(format!("assignment of nodes {p} < {q} reverses the order")));
                }
            }
        }
    }
    let mut induced = vec![vec![false; tn]; tn];
    for q in 0..m {
        for p in 0..m {
            if let (Some(tp), Some(tq)) = (assign[p], assign[q]) {
                if tp != tq && mg.is_below(p, q) {
                    induced[tq][tp] = true;
                }
            }
        }
    }
    let edges = crate::morse::transitive_reduction(&crate::morse::transitive_closure(
        tn,
        &(0..tn)
            .flat_map(|a| (0..tn).map(move |b| (a, b)))
            .filter(|&(a, b)| induced[a][b])
            .collect::<Vec<_>>(),
    ));
    let nodes = (0..tn)
        .map(|t| {
            let mut c = cells[t].clone();
            c.sort_unstable();
            AggregatedNode {
                label: target.nodes[t].label.clone(),
                cells: c,
                members: (0..m).filter(|&p| assign[p] == Some(t)).collect(),
            }
        })
        .collect();
    Ok(AggregatedMorseGraph { nodes, edges, residue })
}

/// Region of attraction of each aggregated node's cell union.
pub fn aggregated_roas(map: &CellMap, agg: &AggregatedMorseGraph) -> Vec<Vec<usize>> {
    use rayon::prelude::*;
    agg.nodes
        .par_iter()
        .map(|n| region_of_attraction(map, &n.cells))
        .collect()
}

/// One method's cell map and Morse analysis at time `tau`.
#[derive(Clone, Debug)]
pub struct MethodRun {
    pub name: String,
    pub tau: f64,
    pub map: CellMap,
    pub analysis: MorseAnalysis,
}

impl MethodRun {
    pub fn new(name: &str, tau: f64, map: CellMap) -> Result<Self> {
        let analysis = MorseAnalysis::compute(&map)?;
        Ok(Self {
            name: name.to_string(),
            tau,
            map,
            analysis,
        })
    }

    pub fn aggregate(&self, target: &TargetStructure, radius: f64) -> Result<(AggregatedMorseGraph, Vec<Vec<usize>>)> {
        let agg = aggregate(&self.analysis.graph, &self.map.grid, target, radius)?;
        let roas = aggregated_roas(&self.map, &agg);
        Ok((agg, roas))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub raw_nodes: usize,
    /// Per target label; `None` when aggregation failed.
    pub ms_iou: Vec<Option<f64>>,
    pub roa_iou: Vec<Option<f64>>,
    pub residue: usize,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub labels: Vec<String>,
    pub rows: Vec<MetricsRow>,
}

/// Metrics of every candidate against the reference's aggregated sets. The
/// reference itself is the first row.
pub fn compare(reference: &MethodRun, candidates: &[MethodRun], target: &TargetStructure, radius: f64) -> Result<Comparison> {
    for c in candidates {
        if c.map.grid != reference.map.grid {
            return Err(Error::config(format!("run {} uses a different grid than {}", c.name, reference.name)));
        }
        if (c.tau - reference.tau).abs() > 1e-12 {
            return Err(Error::config(format!("run {} uses tau {} but {} uses {}", c.name, c.tau, reference.name, reference.tau)));
        }
    }
    let (ref_agg, ref_roas) = reference.aggregate(target, radius)?;
    let labels: Vec<String> = target.nodes.iter().map(|n| n.label.clone()).collect();
    let mut rows = Vec::with_capacity(candidates.len() + 1);
    for run in std::iter::once(reference).chain(candidates) {
        let raw_nodes = run.analysis.graph.num_nodes();
        let row = match run.aggregate(target, radius) {
            Ok((agg, roas)) => {
                let mut notes = Vec::new();
                let ms_iou = (0..labels.len())
                    .map(|t| {
                        if agg.nodes[t].cells.is_empty() && ref_agg.nodes[t].cells.is_empty() {
                            notes.push(format!("{} empty in both", labels[t]));
                        }
                        Some(iou(&agg.nodes[t].cells, &ref_agg.nodes[t].cells))
                    })
                    .collect();
                let roa_iou = (0..labels.len()).map(|t| Some(iou(&roas[t], &ref_roas[t]))).collect();
                if !agg.residue.is_empty() {
                    notes.push(format!("{} unassigned Morse nodes", agg.residue.len()));
                }
                MetricsRow {
                    method: run.name.clone(),
                    raw_nodes,
                    ms_iou,
                    roa_iou,
                    residue: agg.residue.len(),
                    note: (!notes.is_empty()).then(|| notes.join("; ")),
                }
            }
            Err(e) => {
                log::warn!("aggregation failed for {}: {e}", run.name);
                MetricsRow {
                    method: run.name.clone(),
                    raw_nodes,
                    ms_iou: vec![None; labels.len()],
                    roa_iou: vec![None; labels.len()],
                    residue: 0,
                    note: Some(e.to_string()),
                }
            }
        };
        rows.push(row);
    }
    Ok(Comparison { labels, rows })
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.3}"))
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,raw_nodes");
        for l in &self.labels {
            let _ = write!(out, ",ms_iou_{l}");
        }
        for l in &self.labels {
            let _ = write!(out, ",roa_iou_{l}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{}", r.method, r.raw_nodes);
            for v in r.ms_iou.iter().chain(&r.roa_iou) {
                let _ = write!(out, ",{}", fmt_metric(*v));
            }
            out.push('\n');
        }
        out
    }

    /// Aligned plain-text table with notes below.
    pub fn to_table(&self) -> String {
        let mut header = vec!["Method".to_string(), "#MG".to_string()];
        header.extend(self.labels.iter().map(|l| format!("M({l})")));
        header.extend(self.labels.iter().map(|l| format!("RoA({l})")));
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut v = vec![r.method.clone(), r.raw_nodes.to_string()];
                v.extend(r.ms_iou.iter().chain(&r.roa_iou).map(|x| fmt_metric(*x)));
                v
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|j| body.iter().map(|r| r[j].len()).chain([header[j].len()]).max().unwrap_or(0))
            .collect();
        let line = |cells: &[String]| {
            cells
                .iter()
                .enumerate()
                .map(|(j, c)| if j == 0 { format!("{c:<w$}", w = widths[j]) } else { format!("{c:>w$}", w = widths[j]) })
                .collect::<Vec<_>>()
                .join("  ")
        };
        let mut out = line(&header);
        out.push('\n');
        out.push_str(&"-".repeat(out.len() - 1));
        out.push('\n');
        for r in &body {
            out.push_str(&line(r));
            out.push('\n');
        }
        for r in &self.rows {
            if let Some(n) = &r.note {
                let _ = writeln!(out, "note[{}]: {n}", r.method);
            }
        }
        out
    }
}

/// True when the complement of `cells` inside their bounding box of cells
/// has a face-connected component that does not touch the box boundary.
pub fn has_hole(grid: &CubicalGrid, cells: &[usize]) -> bool {
    if cells.is_empty() {
        return false;
    }
    let n = grid.dim();
    let idx: Vec<Vec<usize>> = cells.iter().map(|&c| grid.multi_index(c).expect("cell in range").0).collect();
    let lo: Vec<usize> = (0..n).map(|d| idx.iter().map(|i| i[d]).min().unwrap_or(0)).collect();
    let hi: Vec<usize> = (0..n).map(|d| idx.iter().map(|i| i[d]).max().unwrap_or(0)).collect();
    let shape: Vec<usize> = (0..n).map(|d| hi[d] - lo[d] + 1).collect();
    let total: usize = shape.iter().product();
    let flat = |i: &[usize]| (0..n).fold(0, |acc, d| acc * shape[d] + i[d] - lo[d]);
    let mut filled = vec![false; total];
    for i in &idx {
        filled[flat(i)] = true;
    }
    let unflat = |mut f: usize| {
        let mut out = vec![0; n];
        for d in (0..n).rev() {
            out[d] = f % shape[d];
            f /= shape[d];
        }
        out
    };
    let mut seen = filled.clone();
    for start in 0..total {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut touches_boundary = false;
        while let Some(f) = stack.pop() {
            let local = unflat(f);
            for d in 0..n {
                if local[d] == 0 || local[d] + 1 == shape[d] {
                    touches_boundary = true;
                }
                for step in [-1i64, 1] {
                    let v = local[d] as i64 + step;
                    if v < 0 || v >= shape[d] as i64 {
                        continue;
                    }
                    let mut nb = local.clone();
                    nb[d] = v as usize;
                    let g = nb.iter().zip(&shape).fold(0, |acc, (x, s)| acc * s + x);
                    if !seen[g] {
                        seen[g] = true;
                        stack.push(g);
                    }
                }
            }
        }
        if !touches_boundary {
            return true;
        }
    }
    false
}
