//! Combinatorial outer approximations of time-τ maps on a cubical grid:
//! vertex bounding boxes, δ-inflation, a global-Lipschitz baseline and a
//! Gaussian-process baseline.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dynamics::{FlowMap, TrajectoryDataset, VectorField};
use crate::error::{Error, Result};
use crate::grid::{Cuboid, CubicalGrid};

/// Multivalued map on grid cells, indexed by linear cell index.
#[derive(Clone, Debug, PartialEq)]
pub struct CellMap {
    pub grid: CubicalGrid,
    pub method: String,
    pub params: serde_json::Value,
    /// Sorted image cells per cell.
    pub images: Vec<Vec<usize>>,
    /// Cells whose image box left the domain (image clipped).
    pub escapes: Vec<bool>,
    pub header: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct CellMapFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    header: Option<serde_json::Value>,
    grid: CubicalGrid,
    method: String,
    params: serde_json::Value,
    rows: Vec<(usize, Vec<usize>)>,
    escapes: Vec<usize>,
}

impl CellMap {
    pub fn new(grid: CubicalGrid, method: &str, params: serde_json::Value, images: Vec<Vec<usize>>, escapes: Vec<bool>) -> Result<Self> {
        let n = grid.num_cells();
        if images.len() != n || escapes.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: images.len().min(escapes.len()),
            });
        }
        if images.iter().flatten().any(|&c| c >= n) {
            return Err(Error::config("image cell out of range"));
        }
        Ok(Self {
            grid,
            method: method.to_string(),
            params,
            images,
            escapes,
            header: None,
        })
    }

    pub fn num_cells(&self) -> usize {
        self.images.len()
    }

    pub fn edge_count(&self) -> usize {
        self.images.iter().map(Vec::len).sum()
    }

    pub fn is_subset_of(&self, other: &CellMap) -> bool {
        self.images.iter().zip(&other.images).all(|(a, b)| {
            let mut j = 0;
            a.iter().all(|x| {
                while j < b.len() && b[j] < *x {
                    j += 1;
                }
                j < b.len() && b[j] == *x
            })
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let file = CellMapFile {
            header: self.header.clone(),
            grid: self.grid.clone(),
            method: self.method.clone(),
            params: self.params.clone(),
            rows: self.images.iter().cloned().enumerate().collect(),
            escapes: (0..self.num_cells()).filter(|&i| self.escapes[i]).collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: CellMapFile = serde_json::from_str(text)?;
        let n = f.grid.num_cells();
        let mut images = vec![Vec::new(); n];
        let mut seen = vec![false; n];
        for (i, img) in f.rows {
            if i >= n || seen[i] {
                return Err(Error::Parse(format!("bad or repeated cell row {i}")));
            }
            seen[i] = true;
            images[i] = img;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Parse("cell map does not list every cell".into()));
        }
        let mut escapes = vec![false; n];
        for e in f.escapes {
            if e >= n {
                return Err(Error::Parse(format!("escape index {e} out of range")));
            }
            escapes[e] = true;
        }
        let mut m = CellMap::new(f.grid, &f.method, f.params, images, escapes)?;
        m.header = f.header;
        Ok(m)
    }
}

/// Settings for the vertex bounding-box construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxParams {
    pub tau: f64,
    pub h: f64,
    pub inflation: f64,
    pub include_center: bool,
}

impl BoxParams {
    /// Inflation of one (smallest) cell width, center included.
    pub fn for_grid(grid: &CubicalGrid, tau: f64, h: f64) -> Self {
        Self {
            tau,
            h,
            inflation: grid.min_cell_width(),
            include_center: true,
        }
    }
}

/// Images of every lattice vertex and (optionally) every cell center.
struct SampledImages {
    vertices: Vec<Option<Vec<f64>>>,
    centers: Option<Vec<Option<Vec<f64>>>>,
}

fn sample_images(grid: &CubicalGrid, map: impl Fn(&[f64]) -> Option<Vec<f64>> + Sync, centers: bool) -> SampledImages {
    let vertices = (0..grid.num_vertices())
        .into_par_iter()
        .map(|v| map(&grid.vertex_point(v)))
        .collect();
    let centers = centers.then(|| {
        (0..grid.num_cells())
            .into_par_iter()
            .map(|c| map(&grid.cell_center(c)))
            .collect()
    });
    SampledImages { vertices, centers }
}

fn flow_sampler<'a>(flow: &'a FlowMap<'a>) -> impl Fn(&[f64]) -> Option<Vec<f64>> + Sync + 'a {
    move |x| flow.apply(x).ok()
}

/// Vertex (and center) image box of `cell`, or `None` if any sample diverged.
fn image_box(grid: &CubicalGrid, s: &SampledImages, cell: usize) -> Option<Cuboid> {
    let ids = grid.cell_vertex_ids(cell);
    let mut pts: Vec<&[f64]> = Vec::with_capacity(ids.len() + 1);
    for v in ids {
        pts.push(s.vertices[v].as_deref()?);
    }
    if let Some(c) = &s.centers {
        pts.push(c[cell].as_deref()?);
    }
    Cuboid::enclosing(pts)
}

fn bbox_rows(grid: &CubicalGrid, s: &SampledImages, inflation: f64) -> (Vec<Vec<usize>>, Vec<bool>) {
    (0..grid.num_cells())
        .into_par_iter()
        .map(|c| match image_box(grid, s, c) {
            Some(b) => {
                let q = grid.cells_intersecting(&b.inflated(inflation));
                (q.cells, q.query_escapes_domain)
            }
            None => (Vec::new(), true),
        })
        .unzip()
}

/// Bounding-box outer approximation: integrate the corners (and center) of
/// each cell for time `tau` and take all cells meeting the inflated box.
pub fn bounding_box_map(grid: &CubicalGrid, field: &VectorField, params: &BoxParams) -> Result<CellMap> {
    if !(params.inflation >= 0.0) {
        return Err(Error::config("inflation must be nonnegative"));
    }
    check_field_dim(grid, field)?;
    let flow = FlowMap::new(field, params.tau, params.h)?;
    let s = sample_images(grid, flow_sampler(&flow), params.include_center);
    let (images, escapes) = bbox_rows(grid, &s, params.inflation);
    CellMap::new(
        grid.clone(),
        "bounding_box",
        serde_json::to_value(params)?,
        images,
        escapes,
    )
}

fn check_field_dim(grid: &CubicalGrid, field: &VectorField) -> Result<()> {
    if grid.dim() != field.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: field.dim(),
        });
    }
    Ok(())
}

/// Coarser outer approximation from inflating each image box by `delta`
/// in the sup metric; requires `0 <= delta < diam / 2`.
pub fn inflate_map(grid: &CubicalGrid, field: &VectorField, tau: f64, h: f64, delta: f64) -> Result<CellMap> {
    let half = grid.diameter() / 2.0;
    if !(delta >= 0.0 && delta < half) {
        return Err(Error::config(format!("delta = {delta} must lie in [0, {half})")));
    }
    let mut m = bounding_box_map(
        grid,
        field,
        &BoxParams {
            tau,
            h,
            inflation: delta,
            include_center: true,
        },
    )?;
    m.method = "inflated".into();
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    /// Largest sampled difference quotient.
    pub raw: f64,
    /// `raw` times the safety factor.
    pub l_tau: f64,
    pub pairs: usize,
    pub excluded: usize,
    pub warning: bool,
}

pub const LIPSCHITZ_SAFETY: f64 = 1.1;

/// Samples difference quotients `|φ(x) - φ(x + r u)| / r` over random pairs
/// with a tiny `r` (1e-7 of the widest side).
pub fn estimate_lipschitz(
    field: &VectorField,
    domain: &Cuboid,
    tau: f64,
    h: f64,
    sample_pairs: usize,
    seed: u64,
) -> Result<LipschitzEstimate> {
    if sample_pairs < 1000 {
        return Err(Error::config("Lipschitz estimation needs at least 1000 pairs"));
    }
    if domain.dim() != field.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            got: domain.dim(),
        });
    }
    let flow = FlowMap::new(field, tau, h)?;
    let n = domain.dim();
    let r = 1e-7 * (0..n).map(|d| domain.width(d)).fold(0.0, f64::max);
    let ratios: Vec<Option<f64>> = (0..sample_pairs)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let x: Vec<f64> = (0..n)
                .map(|d| rng.random_range(domain.lower[d]..=domain.upper[d]))
                .collect();
            let mut u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            u.iter_mut().for_each(|v| *v /= norm);
            let mut y: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + r * b).collect();
            if !domain.contains(&y) {
                y = x.iter().zip(&u).map(|(a, b)| a - r * b).collect();
            }
            let dist = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let fx = flow.apply(&x).ok()?;
            let fy = flow.apply(&y).ok()?;
            let diff = fx.iter().zip(&fy).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            Some(diff / dist)
        })
        .collect();
    let excluded = ratios.iter().filter(|r| r.is_none()).count();
    let raw = ratios.iter().flatten().copied().fold(0.0, f64::max);
    let warning = excluded as f64 > 0.01 * sample_pairs as f64;
    if warning {
        log::warn!("Lipschitz estimate excluded {excluded} of {sample_pairs} diverging pairs");
    }
    Ok(LipschitzEstimate {
        raw,
        l_tau: raw * LIPSCHITZ_SAFETY,
        pairs: sample_pairs,
        excluded,
        warning,
    })
}

/// Lipschitz baseline: union over the corners `v` of the cells meeting the
/// ball of radius `L·d/2` around `φ(v)`, `d` the grid diameter.
pub fn lipschitz_map(grid: &CubicalGrid, field: &VectorField, tau: f64, h: f64, l_tau: f64) -> Result<CellMap> {
    if !(l_tau > 0.0) {
        return Err(Error::config("L_tau must be positive"));
    }
    check_field_dim(grid, field)?;
    let flow = FlowMap::new(field, tau, h)?;
    let s = sample_images(grid, flow_sampler(&flow), false);
    let radius = l_tau * grid.diameter() / 2.0;
    let (images, escapes) = (0..grid.num_cells())
        .into_par_iter()
        .map(|c| {
            let mut cells = Vec::new();
            let mut esc = false;
            for v in grid.cell_vertex_ids(c) {
                match &s.vertices[v] {
                    Some(p) => {
                        let q = grid.cells_intersecting_ball(p, radius);
                        esc |= q.query_escapes_domain;
                        cells.extend(q.cells);
                    }
                    None => return (Vec::new(), true),
                }
            }
            cells.sort_unstable();
            cells.dedup();
            (cells, esc)
        })
        .unzip();
    CellMap::new(
        grid.clone(),
        "lipschitz",
        serde_json::json!({ "tau": tau, "h": h, "L_tau": l_tau, "radius": radius }),
        images,
        escapes,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub length_scale: f64,
    pub signal_var: f64,
    pub noise_var: f64,
}

#[derive(Clone, Debug)]
struct GpOutput {
    mean: f64,
    hyper: GpHyper,
    jitter: f64,
    chol: DMatrix<f64>,
    alpha: DVector<f64>,
    log_marginal: f64,
}

/// Independent exact GP regressions (RBF kernel), one per output dimension.
#[derive(Clone, Debug)]
pub struct GpModel {
    pub inputs: Vec<Vec<f64>>,
    outputs: Vec<GpOutput>,
}

fn rbf(a: &[f64], b: &[f64], hp: &GpHyper) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    hp.signal_var * (-0.5 * d2 / (hp.length_scale * hp.length_scale)).exp()
}

/// Pairs `(x_t, x_{t+tau})` from samples `tau` apart on the same trajectory.
pub fn gp_training_pairs(data: &TrajectoryDataset, tau: f64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut pairs = Vec::new();
    let mut start = 0;
    while start < data.len() {
        let id = data.samples[start].traj_id;
        let mut end = start;
        while end < data.len() && data.samples[end].traj_id == id {
            end += 1;
        }
        let traj = &data.samples[start..end];
        for (i, s) in traj.iter().enumerate() {
            let target = s.t + tau;
            if let Some(o) = traj[i + 1..]
                .iter()
                .find(|o| (o.t - target).abs() <= 1e-9 * (1.0 + target.abs()))
            {
                pairs.push((s.x.clone(), o.x.clone()));
            }
        }
        start = end;
    }
    pairs
}

/// Greedy farthest-point selection of at most `max` inputs, starting from the first.
fn farthest_point_subset(xs: &[Vec<f64>], max: usize) -> Vec<usize> {
    if xs.len() <= max {
        return (0..xs.len()).collect();
    }
    let d2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut chosen = vec![0];
    let mut dist: Vec<f64> = xs.iter().map(|x| d2(x, &xs[0])).collect();
    while chosen.len() < max {
        let (next, &dmax) = dist
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("nonempty");
        if dmax <= 0.0 {
            break;
        }
        chosen.push(next);
        for (d, x) in dist.iter_mut().zip(xs) {
            *d = d.min(d2(x, &xs[next]));
        }
    }
    chosen.sort_unstable();
    chosen
}

pub const GP_MAX_POINTS: usize = 400;

/// Fits a GP per output dimension with hyperparameters chosen by grid
/// search on the log marginal likelihood. At most `max_points` training
/// pairs are used, chosen by farthest-point sampling of the inputs.
pub fn fit_gp(pairs: &[(Vec<f64>, Vec<f64>)], max_points: usize) -> Result<GpModel> {
    if pairs.len() < 20 {
        return Err(Error::Fit(format!("GP needs at least 20 training pairs, got {}", pairs.len())));
    }
    let xs: Vec<Vec<f64>> = pairs.iter().map(|p| p.0.clone()).collect();
    let keep = farthest_point_subset(&xs, max_points.max(20));
    let inputs: Vec<Vec<f64>> = keep.iter().map(|&i| pairs[i].0.clone()).collect();
    let dim_out = pairs[0].1.len();
    let n = inputs.len();
    let dim_in = inputs[0].len();
    let width = (0..dim_in)
        .map(|d| {
            let (lo, hi) = inputs
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x[d]), h.max(x[d])));
            hi - lo
        })
        .fold(0.0, f64::max)
        .max(1e-6);
    let sq: Vec<f64> = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            inputs[i].iter().zip(&inputs[j]).map(|(a, b)| (a - b) * (a - b)).sum()
        })
        .collect();
    let length_factors = [0.02, 0.035, 0.06, 0.1, 0.18, 0.3, 0.55, 1.0];
    let signal_factors = [0.1, 1.0, 10.0];
    let noise_factors = [1e-6, 1e-4, 1e-2];
    let outputs = (0..dim_out)
        .map(|d| {
            let y: Vec<f64> = keep.iter().map(|&i| pairs[i].1[d]).collect();
            let mean = y.iter().sum::<f64>() / n as f64;
            let yc = DVector::from_iterator(n, y.iter().map(|v| v - mean));
            let var = (yc.norm_squared() / n as f64).max(1e-12);
            let mut lattice = Vec::new();
            for &lf in &length_factors {
                for &sf in &signal_factors {
                    for &nf in &noise_factors {
                        lattice.push(GpHyper {
                            length_scale: lf * width,
                            signal_var: sf * var,
                            noise_var: nf * var,
                        });
                    }
                }
            }
            let fits: Vec<Option<GpOutput>> = lattice
                .par_iter()
                .map(|hp| factor(&sq, n, &yc, mean, *hp))
                .collect();
            fits.into_iter()
                .flatten()
                .fold(None, |best: Option<GpOutput>, f| match best {
                    Some(b) if b.log_marginal >= f.log_marginal => Some(b),
                    _ => Some(f),
                })
                .ok_or_else(|| Error::Fit(format!("GP kernel matrix singular for output {d} at every lattice point")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GpModel { inputs, outputs })
}

fn factor(sq: &[f64], n: usize, yc: &DVector<f64>, mean: f64, hp: GpHyper) -> Option<GpOutput> {
    let base = DMatrix::from_fn(n, n, |i, j| {
        hp.signal_var * (-0.5 * sq[i * n + j] / (hp.length_scale * hp.length_scale)).exp()
    });
    let mut jitter = 0.0;
    loop {
        let mut k = base.clone();
        for i in 0..n {
            k[(i, i)] += hp.noise_var + jitter;
        }
        if let Some(ch) = k.cholesky() {
            let alpha = ch.solve(yc);
            let l = ch.l();
            let logdet: f64 = (0..n).map(|i| l[(i, i)].ln()).sum();
            let log_marginal = -0.5 * yc.dot(&alpha) - logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
            return Some(GpOutput {
                mean,
                hyper: hp,
                jitter,
                chol: l,
                alpha,
                log_marginal,
            });
        }
        jitter = if jitter == 0.0 { 1e-8 * hp.signal_var } else { jitter * 100.0 };
        if jitter > 1.0001e-4 * hp.signal_var {
            return None;
        }
    }
}

impl GpModel {
    pub fn hyperparameters(&self) -> Vec<GpHyper> {
        self.outputs.iter().map(|o| o.hyper).collect()
    }

    /// Noise variance plus the jitter actually used, per output.
    pub fn effective_noise(&self) -> Vec<f64> {
        self.outputs.iter().map(|o| o.hyper.noise_var + o.jitter).collect()
    }

    pub fn predict_mean(&self, x: &[f64]) -> Vec<f64> {
        self.outputs
            .iter()
            .map(|o| {
                o.mean
                    + self
                        .inputs
                        .iter()
                        .zip(o.alpha.iter())
                        .map(|(xi, a)| a * rbf(x, xi, &o.hyper))
                        .sum::<f64>()
            })
            .collect()
    }

    /// Predictive mean and latent variance per output.
    pub fn predict(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut mean = Vec::with_capacity(self.outputs.len());
        let mut var = Vec::with_capacity(self.outputs.len());
        for o in &self.outputs {
            let k = DVector::from_iterator(self.inputs.len(), self.inputs.iter().map(|xi| rbf(x, xi, &o.hyper)));
            mean.push(o.mean + k.dot(&o.alpha));
            let v = o
                .chol
                .solve_lower_triangular(&k)
                .unwrap_or_else(|| DVector::zeros(k.len()));
            var.push((o.hyper.signal_var - v.norm_squared()).max(0.0));
        }
        (mean, var)
    }

    /// Scales every output's predictive variance by `factor` (testing aid for
    /// monotonicity in the noise level).
    pub fn with_variance_scale(&self, factor: f64) -> ScaledGp<'_> {
        ScaledGp { gp: self, factor }
    }
}

/// View of a GP whose predictive variances are multiplied by a constant.
pub struct ScaledGp<'a> {
    gp: &'a GpModel,
    factor: f64,
}

/// Anything that predicts a flow-map image and its per-dimension variance.
pub trait FlowPredictor: Sync {
    fn mean(&self, x: &[f64]) -> Vec<f64>;
    fn mean_and_var(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>);
}

impl FlowPredictor for GpModel {
    fn mean(&self, x: &[f64]) -> Vec<f64> {
        self.predict_mean(x)
    }
    fn mean_and_var(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        self.predict(x)
    }
}

impl FlowPredictor for ScaledGp<'_> {
    fn mean(&self, x: &[f64]) -> Vec<f64> {
        self.gp.predict_mean(x)
    }
    fn mean_and_var(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (m, v) = self.gp.predict(x);
        (m, v.into_iter().map(|s| s * self.factor).collect())
    }
}

/// Two-sided standard normal quantile for `confidence` (0.95 → 1.959964).
pub fn normal_quantile(confidence: f64) -> f64 {
    Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(0.5 + confidence / 2.0)
}

/// GP baseline: cells meeting the confidence box at the cell center, plus
/// cells meeting the vertex bounding box of the GP mean map.
pub fn gp_map(grid: &CubicalGrid, gp: &impl FlowPredictor, confidence: f64) -> Result<CellMap> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::config("confidence must lie in (0, 1)"));
    }
    let z = normal_quantile(confidence);
    let s = sample_images(grid, |x| Some(gp.mean(x)), true);
    let (images, escapes) = (0..grid.num_cells())
        .into_par_iter()
        .map(|c| {
            let (m, var) = gp.mean_and_var(&grid.cell_center(c));
            let lower: Vec<f64> = m.iter().zip(&var).map(|(a, v)| a - z * v.sqrt()).collect();
            let upper: Vec<f64> = m.iter().zip(&var).map(|(a, v)| a + z * v.sqrt()).collect();
            let ebox = Cuboid { lower, upper };
            let q1 = grid.cells_intersecting(&ebox);
            let q2 = image_box(grid, &s, c).map(|b| grid.cells_intersecting(&b));
            let mut cells = q1.cells;
            let mut esc = q1.query_escapes_domain;
            if let Some(q2) = q2 {
                esc |= q2.query_escapes_domain;
                cells.extend(q2.cells);
            }
            cells.sort_unstable();
            cells.dedup();
            (cells, esc)
        })
        .unzip();
    CellMap::new(
        grid.clone(),
        "gaussian_process",
        serde_json::json!({ "confidence": confidence, "z": z }),
        images,
        escapes,
    )
}

/// Outcome of checking sampled true images against a cell map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub checked: usize,
    pub violations: usize,
    /// Images leaving the domain from cells flagged as escaping.
    pub escaped: usize,
}

/// Integrates random interior points of random cells and checks that each
/// image lies in the interior of the union of the cell's image cells.
pub fn monte_carlo_check(map: &CellMap, field: &VectorField, tau: f64, h: f64, samples: usize, seed: u64) -> Result<MonteCarloReport> {
    let grid = &map.grid;
    let flow = FlowMap::new(field, tau, h)?;
    let outcomes: Vec<u8> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let c = rng.random_range(0..grid.num_cells());
            let b = grid.realization_of(c);
            let x: Vec<f64> = (0..grid.dim())
                .map(|d| b.lower[d] + b.width(d) * rng.random_range(0.01..0.99))
                .collect();
            let Ok(y) = flow.apply(&x) else {
                return if map.escapes[c] { 2 } else { 1 };
            };
            if !grid.domain.contains(&y) {
                return if map.escapes[c] { 2 } else { 1 };
            }
            // y is interior to the union iff every closed cell touching y is an image cell
            let touching = grid.cells_intersecting(&Cuboid::point(&y)).cells;
            let inside = touching.iter().all(|t| map.images[c].binary_search(t).is_ok());
            u8::from(!inside)
        })
        .collect();
    Ok(MonteCarloReport {
        checked: samples,
        violations: outcomes.iter().filter(|&&o| o == 1).count(),
        escaped: outcomes.iter().filter(|&&o| o == 2).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate_trajectories, SimulationConfig};

    fn toggle_grid(exp: u32) -> CubicalGrid {
        CubicalGrid::dyadic(Cuboid::square(0.0, 6.0, 2), exp).unwrap()
    }

    fn params(grid: &CubicalGrid) -> BoxParams {
        BoxParams {
            tau: 1.0,
            h: 0.01,
            inflation: grid.min_cell_width(),
            include_center: true,
        }
    }

    #[test]
    fn json_round_trip() {
        let g = toggle_grid(3);
        let f = VectorField::toggle_switch();
        let mut m = bounding_box_map(&g, &f, &params(&g)).unwrap();
        m.header = Some(serde_json::json!({ "seed": 3 }));
        let back = CellMap::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
        assert!(CellMap::from_json("{}").is_err());
    }

    #[test]
    fn bounding_box_map_contains_sampled_images() {
        let g = toggle_grid(5);
        let f = VectorField::toggle_switch();
        let m = bounding_box_map(&g, &f, &params(&g)).unwrap();
        let r = monte_carlo_check(&m, &f, 1.0, 0.01, 4000, 11).unwrap();
        assert_eq!(r.violations, 0, "{r:?}");
        assert!(m.images.iter().all(|i| !i.is_empty()));
    }

    #[test]
    fn inflation_is_monotone() {
        let g = toggle_grid(4);
        let f = VectorField::toggle_switch();
        let a = inflate_map(&g, &f, 1.0, 0.01, 0.0).unwrap();
        let b = inflate_map(&g, &f, 1.0, 0.01, 0.1).unwrap();
        let c = inflate_map(&g, &f, 1.0, 0.01, 0.25).unwrap();
        assert!(a.is_subset_of(&b) && b.is_subset_of(&c));
        assert!(a.edge_count() < c.edge_count());
        assert!(inflate_map(&g, &f, 1.0, 0.01, g.diameter()).is_err());
        assert!(inflate_map(&g, &f, 1.0, 0.01, -0.1).is_err());
    }

    #[test]
    fn lipschitz_of_stable_linear_region() {
        let f = VectorField::toggle_switch();
        let region = Cuboid::new(vec![4.0, 0.0], vec![6.0, 2.0]).unwrap();
        let est = estimate_lipschitz(&f, &region, 1.0, 0.01, 2000, 5).unwrap();
        let expected = (-1.0f64).exp();
        assert!((est.raw - expected).abs() / expected < 0.05, "{est:?}");
        assert!((est.l_tau - LIPSCHITZ_SAFETY * est.raw).abs() < 1e-15);
        assert_eq!(est.excluded, 0);
        assert!(estimate_lipschitz(&f, &region, 1.0, 0.01, 10, 5).is_err());
    }

    #[test]
    fn lipschitz_map_is_nonempty_and_valid() {
        let g = toggle_grid(4);
        let f = VectorField::toggle_switch();
        let m = lipschitz_map(&g, &f, 1.0, 0.01, 0.5).unwrap();
        assert!(m.images.iter().all(|i| !i.is_empty() && i.windows(2).all(|w| w[0] < w[1])));
        assert!(lipschitz_map(&g, &f, 1.0, 0.01, 0.0).is_err());
    }

    #[test]
    fn training_pairs_stay_within_trajectories() {
        let f = VectorField::toggle_switch();
        let cfg = SimulationConfig {
            trajectories: 4,
            horizon: 2.0,
            ..Default::default()
        };
        let data = simulate_trajectories(&f, &cfg, &Cuboid::square(0.0, 6.0, 2), 1).unwrap();
        let pairs = gp_training_pairs(&data, 1.0);
        // 11 samples per trajectory, 6 with a successor one time unit later
        assert_eq!(pairs.len(), 4 * 6);
        let flow = FlowMap::new(&f, 1.0, 0.01).unwrap();
        for (x, y) in &pairs {
            let z = flow.apply(x).unwrap();
            assert!(y.iter().zip(&z).all(|(a, b)| (a - b).abs() < 1e-6), "{y:?} vs {z:?}");
        }
    }

    #[test]
    fn gp_recovers_a_smooth_map_and_widens_with_variance() {
        let f = VectorField::toggle_switch();
        let flow = FlowMap::new(&f, 1.0, 0.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pairs: Vec<_> = (0..300)
            .map(|_| {
                let x = vec![rng.random_range(4.0..6.0), rng.random_range(0.0..2.0)];
                let y = flow.apply(&x).unwrap();
                (x, y)
            })
            .collect();
        let gp = fit_gp(&pairs, 200).unwrap();
        assert_eq!(gp.inputs.len(), 200);
        let (m, v) = gp.predict(&[5.0, 1.0]);
        let truth = flow.apply(&[5.0, 1.0]).unwrap();
        assert!((m[0] - truth[0]).abs() < 1e-3 && (m[1] - truth[1]).abs() < 1e-3, "{m:?}");
        assert!(v.iter().all(|s| *s >= 0.0 && *s < 1e-3));

        let g = CubicalGrid::dyadic(Cuboid::new(vec![4.0, 0.0], vec![6.0, 2.0]).unwrap(), 3).unwrap();
        let base = gp_map(&g, &gp, 0.95).unwrap();
        let wide = gp_map(&g, &gp.with_variance_scale(1e6), 0.95).unwrap();
        assert!(base.is_subset_of(&wide));
        assert!(base.edge_count() <= wide.edge_count());
        assert!(fit_gp(&pairs[..5], 200).is_err());
    }

    #[test]
    fn quantile_matches_table() {
        assert!((normal_quantile(0.95) - 1.959964).abs() < 1e-5);
        assert!((normal_quantile(0.9973) - 3.0).abs() < 1e-2);
    }

    #[test]
    fn diverging_model_marks_escape() {
        let f = VectorField::Identified(crate::dynamics::SwitchingModel::affine(&[vec![50.0, 0.0], vec![0.0, 50.0]], &[0.0, 0.0]));
        let g = CubicalGrid::dyadic(Cuboid::square(-1.0, 1.0, 2), 2).unwrap();
        let m = bounding_box_map(&g, &f, &BoxParams { tau: 20.0, h: 0.1, inflation: 0.0, include_center: false }).unwrap();
        assert!(m.escapes.iter().any(|&e| e));
    }

    fn affine(a: [[f64; 2]; 2], b: [f64; 2]) -> VectorField {
        VectorField::Identified(crate::dynamics::SwitchingModel::affine(&[a[0].to_vec(), a[1].to_vec()], &b))
    }

    #[test]
    fn zero_field_maps_cells_to_their_neighborhood() {
        let g = CubicalGrid::dyadic(Cuboid::square(0.0, 1.0, 2), 3).unwrap();
        let f = affine([[0.0; 2]; 2], [0.0; 2]);
        let m = bounding_box_map(&g, &f, &BoxParams { tau: 1.0, h: 0.1, inflation: 0.0, include_center: false }).unwrap();
        for c in 0..g.num_cells() {
            let expected = g.cells_intersecting(&g.realization_of(c)).cells;
            assert_eq!(m.images[c], expected);
            assert!(m.images[c].contains(&c));
        }
        let d0 = inflate_map(&g, &f, 1.0, 0.1, 0.0).unwrap();
        assert_eq!(d0.images, m.images);
    }

    #[test]
    fn vertex_box_is_exact_for_affine_flows() {
        let f = affine([[-0.3, 0.8], [-0.6, -0.2]], [0.1, -0.2]);
        let g = CubicalGrid::dyadic(Cuboid::square(-2.0, 2.0, 2), 3).unwrap();
        let flow = FlowMap::new(&f, 1.0, 0.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for c in [0, 17, 40, 63] {
            let cell = g.realization_of(c);
            let imgs: Vec<Vec<f64>> = g.cell_vertex_ids(c).iter().map(|&v| flow.apply(&g.vertex_point(v)).unwrap()).collect();
            let b = Cuboid::enclosing(imgs.iter().map(|v| v.as_slice())).unwrap();
            for _ in 0..1000 {
                let x: Vec<f64> = (0..2).map(|d| rng.random_range(cell.lower[d]..=cell.upper[d])).collect();
                let y = flow.apply(&x).unwrap();
                assert!(b.inflated(1e-12).contains(&y));
            }
        }
    }

    #[test]
    fn inflation_below_half_width_adds_at_most_one_ring() {
        let g = toggle_grid(4);
        let f = VectorField::toggle_switch();
        let a = inflate_map(&g, &f, 1.0, 0.01, 0.0).unwrap();
        let b = inflate_map(&g, &f, 1.0, 0.01, 0.49 * g.min_cell_width()).unwrap();
        for c in 0..g.num_cells() {
            let base: Vec<Vec<usize>> = a.images[c].iter().map(|&i| g.multi_index(i).unwrap().0).collect();
            for &i in &b.images[c] {
                let idx = g.multi_index(i).unwrap().0;
                let near = base.iter().any(|j| j.iter().zip(&idx).all(|(x, y)| x.abs_diff(*y) <= 1));
                assert!(near, "cell {c}: {i} is more than one ring away");
            }
        }
    }

    #[test]
    fn lipschitz_closed_forms() {
        let region = Cuboid::square(-2.0, 2.0, 2);
        let decay = estimate_lipschitz(&affine([[-1.0, 0.0], [0.0, -1.0]], [0.0; 2]), &region, 1.0, 0.01, 1000, 1).unwrap();
        assert!((decay.raw - (-1.0f64).exp()).abs() / (-1.0f64).exp() < 0.05, "{decay:?}");
        let still = estimate_lipschitz(&affine([[0.0; 2]; 2], [0.0; 2]), &region, 1.0, 0.01, 1000, 1).unwrap();
        assert!((still.raw - 1.0).abs() < 0.05, "{still:?}");
        let again = estimate_lipschitz(&affine([[0.0; 2]; 2], [0.0; 2]), &region, 1.0, 0.01, 1000, 1).unwrap();
        assert_eq!(still, again);
    }

    #[test]
    fn lipschitz_map_covers_vertex_cells_and_bounding_boxes() {
        let f = affine([[-0.5, 1.0], [-1.0, -0.5]], [0.0, 0.0]);
        let g = CubicalGrid::dyadic(Cuboid::square(-2.0, 2.0, 2), 4).unwrap();
        let est = estimate_lipschitz(&f, &g.domain, 1.0, 0.01, 2000, 3).unwrap();
        let lm = lipschitz_map(&g, &f, 1.0, 0.01, est.l_tau).unwrap();
        let bb = bounding_box_map(&g, &f, &BoxParams { tau: 1.0, h: 0.01, inflation: 0.0, include_center: false }).unwrap();
        assert!(bb.is_subset_of(&lm));
        let flow = FlowMap::new(&f, 1.0, 0.01).unwrap();
        for c in 0..g.num_cells() {
            for v in g.cell_vertex_ids(c) {
                let y = flow.apply(&g.vertex_point(v)).unwrap();
                for hit in g.cells_intersecting(&Cuboid::point(&y)).cells {
                    assert!(lm.images[c].binary_search(&hit).is_ok());
                }
            }
        }
    }

    fn linear_pairs(n: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let y = vec![0.5 * x[0] - 0.2 * x[1] + 1.0, 0.3 * x[0] + 0.7 * x[1]];
                (x, y)
            })
            .collect()
    }

    #[test]
    fn gp_interpolates_linear_data() {
        let pairs = linear_pairs(150, 4);
        let gp = fit_gp(&pairs, GP_MAX_POINTS).unwrap();
        let holdout = linear_pairs(50, 5);
        for (x, y) in &holdout {
            let m = gp.predict_mean(x);
            assert!(m.iter().zip(y).all(|(a, b)| (a - b).abs() < 1e-2), "{x:?}: {m:?} vs {y:?}");
        }
        let noise = gp.effective_noise();
        for x in gp.inputs.iter().take(20) {
            let (_, v) = gp.predict(x);
            assert!(v.iter().zip(&noise).all(|(s, n)| *s <= n + 1e-12));
        }
        let again = fit_gp(&pairs, GP_MAX_POINTS).unwrap();
        assert_eq!(again.predict(&[0.3, -0.1]), gp.predict(&[0.3, -0.1]));
    }

    #[test]
    fn gp_map_limits_and_monotonicity() {
        let pairs = linear_pairs(150, 6);
        let gp = fit_gp(&pairs, GP_MAX_POINTS).unwrap();
        let g = CubicalGrid::dyadic(Cuboid::square(-1.0, 1.0, 2), 3).unwrap();
        let zero = gp_map(&g, &gp.with_variance_scale(0.0), 0.95).unwrap();
        let s = sample_images(&g, |x| Some(gp.predict_mean(x)), true);
        let (mean_box, _) = bbox_rows(&g, &s, 0.0);
        assert_eq!(zero.images, mean_box);
        let lo = gp_map(&g, &gp.with_variance_scale(1e4), 0.5).unwrap();
        let hi = gp_map(&g, &gp.with_variance_scale(1e4), 0.99).unwrap();
        assert!(zero.is_subset_of(&lo) && lo.is_subset_of(&hi));
        assert!(gp_map(&g, &gp, 1.0).is_err());
    }
}
