//! Vector fields, polynomial features, RK4 time-τ maps and trajectory data.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Cuboid;

/// All monomials of total degree `<= degree` in `dim` variables, graded
/// lexicographic order (constant first, then `x1` before `x2` within a degree).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolyBasis {
    pub dim: usize,
    pub degree: u32,
    pub exponents: Vec<Vec<u32>>,
}

fn exponents_of_total(dim: usize, total: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if prefix.len() + 1 == dim {
        prefix.push(total);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for e in (0..=total).rev() {
        prefix.push(e);
        exponents_of_total(dim, total - e, prefix, out);
        prefix.pop();
    }
}

impl PolyBasis {
    pub fn new(dim: usize, degree: u32) -> Self {
        assert!(dim > 0, "basis dimension must be positive");
        let mut exponents = Vec::new();
        for total in 0..=degree {
            exponents_of_total(dim, total, &mut Vec::with_capacity(dim), &mut exponents);
        }
        Self {
            dim,
            degree,
            exponents,
        }
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    /// Monomial values at `x`; the first entry is always 1.
    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let mut out = vec![0.0; self.len()];
        self.features_into(x, &mut out);
        Ok(out)
    }

    pub fn features_into(&self, x: &[f64], out: &mut [f64]) {
        eval_monomials(self.dim, self.degree, &self.exponents, x, out);
    }
}

/// Hard switching law: one score per mode, argmax wins (lowest index on ties).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchingClassifier {
    pub dim: usize,
    pub degree: u32,
    /// Per-mode weights over the non-constant features of a degree-`degree` basis.
    pub weights: Vec<Vec<f64>>,
    pub offsets: Vec<f64>,
    #[serde(skip)]
    basis: Option<PolyBasis>,
}

impl SwitchingClassifier {
    pub fn new(dim: usize, degree: u32, weights: Vec<Vec<f64>>, offsets: Vec<f64>) -> Result<Self> {
        let basis = PolyBasis::new(dim, degree);
        if weights.len() != offsets.len() || weights.is_empty() {
            return Err(Error::config("classifier needs one weight vector and offset per mode"));
        }
        if let Some(w) = weights.iter().find(|w| w.len() + 1 != basis.len()) {
            return Err(Error::DimensionMismatch {
                expected: basis.len() - 1,
                got: w.len(),
            });
        }
        Ok(Self {
            dim,
            degree,
            weights,
            offsets,
            basis: Some(basis),
        })
    }

    /// Always selects mode `mode` out of `k`.
    pub fn constant(dim: usize, k: usize, mode: usize) -> Self {
        let p = PolyBasis::new(dim, 0).len() - 1;
        let offsets = (0..k).map(|j| if j == mode { 0.0 } else { -1.0 }).collect();
        Self::new(dim, 0, vec![vec![0.0; p]; k], offsets).expect("consistent constant classifier")
    }

    pub fn num_modes(&self) -> usize {
        self.offsets.len()
    }

    fn basis(&self) -> PolyBasis {
        self.basis
            .clone()
            .unwrap_or_else(|| PolyBasis::new(self.dim, self.degree))
    }

    /// Restores the cached basis after deserialization.
    pub(crate) fn rebuild(&mut self) {
        if self.basis.is_none() {
            self.basis = Some(PolyBasis::new(self.dim, self.degree));
        }
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let owned;
        let basis = match &self.basis {
            Some(b) => b,
            None => {
                owned = self.basis();
                &owned
            }
        };
        let mut phi = vec![0.0; basis.len()];
        basis.features_into(x, &mut phi);
        self.weights
            .iter()
            .zip(&self.offsets)
            .map(|(w, b)| b + w.iter().zip(&phi[1..]).map(|(a, f)| a * f).sum::<f64>())
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.scores(x))
    }

    /// One-hot encoding of [`predict`](Self::predict).
    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_modes()];
        out[self.predict(x)] = 1.0;
        out
    }

    fn predict_with(&self, phi: &[f64]) -> usize {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (j, (w, b)) in self.weights.iter().zip(&self.offsets).enumerate() {
            let s = b + w.iter().zip(&phi[1..]).map(|(a, f)| a * f).sum::<f64>();
            if s > best_score {
                best_score = s;
                best = j;
            }
        }
        best
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (j, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = j;
        }
    }
    best
}

/// Identified switching system `x' = C_{σ(x)} Φ(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchingModel {
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub degree: u32,
    pub monomial_order: Vec<Vec<u32>>,
    /// Per mode, the `n x |basis|` coefficient matrix in row-major order.
    pub coeffs: Vec<Vec<f64>>,
    pub classifier: Option<SwitchingClassifier>,
    pub eta: f64,
    #[serde(default)]
    pub provenance: serde_json::Value,
}

impl SwitchingModel {
    pub fn new(n: usize, degree: u32, coeffs: Vec<Vec<f64>>, eta: f64) -> Result<Self> {
        let basis = PolyBasis::new(n, degree);
        if coeffs.is_empty() {
            return Err(Error::config("a switching model needs at least one mode"));
        }
        if let Some(c) = coeffs.iter().find(|c| c.len() != n * basis.len()) {
            return Err(Error::DimensionMismatch {
                expected: n * basis.len(),
                got: c.len(),
            });
        }
        Ok(Self {
            n,
            k: coeffs.len(),
            degree,
            monomial_order: basis.exponents,
            coeffs,
            classifier: None,
            eta,
            provenance: serde_json::Value::Null,
        })
    }

    /// Single-mode affine system `x' = A x + b`.
    pub fn affine(a: &[Vec<f64>], b: &[f64]) -> Self {
        let n = b.len();
        let mut c = vec![0.0; n * (n + 1)];
        for r in 0..n {
            c[r * (n + 1)] = b[r];
            for j in 0..n {
                c[r * (n + 1) + 1 + j] = a[r][j];
            }
        }
        // the tightest coefficient bound; infinity would not survive JSON
        let eta = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Self::new(n, 1, vec![c], eta).expect("square affine system")
    }

    pub fn with_classifier(mut self, classifier: SwitchingClassifier) -> Self {
        self.classifier = Some(classifier);
        self
    }

    pub fn basis(&self) -> PolyBasis {
        PolyBasis::new(self.n, self.degree)
    }

    pub fn coeff(&self, mode: usize, row: usize, col: usize) -> f64 {
        self.coeffs[mode][row * self.monomial_order.len() + col]
    }

    pub fn mode(&self, x: &[f64]) -> usize {
        match &self.classifier {
            Some(c) if self.k > 1 => c.predict(x).min(self.k - 1),
            _ => 0,
        }
    }

    /// `C_j Φ(x)` for an explicit mode.
    pub fn mode_field(&self, mode: usize, phi: &[f64], out: &mut [f64]) {
        let p = phi.len();
        let c = &self.coeffs[mode];
        for (r, o) in out.iter_mut().enumerate() {
            *o = c[r * p..(r + 1) * p].iter().zip(phi).map(|(a, f)| a * f).sum();
        }
    }

    pub(crate) fn rebuild(&mut self) {
        if let Some(c) = self.classifier.as_mut() {
            c.rebuild();
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut m: SwitchingModel = serde_json::from_str(text)?;
        m.rebuild();
        let basis = m.basis();
        if m.monomial_order != basis.exponents || m.coeffs.len() != m.k {
            return Err(Error::Parse("model file inconsistent with its degree or mode count".into()));
        }
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Piecewise-constant production toggle switch `x' = -diag(γ) x + b(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToggleSwitch {
    pub gamma: [f64; 2],
    pub threshold: [f64; 2],
    pub low: [f64; 2],
    pub high: [f64; 2],
}

impl Default for ToggleSwitch {
    fn default() -> Self {
        Self {
            gamma: [1.0, 1.0],
            threshold: [3.0, 3.0],
            low: [1.0, 1.0],
            high: [5.0, 5.0],
        }
    }
}

#[inline]
fn heaviside(s: f64) -> f64 {
    if s >= 0.0 {
        1.0
    } else {
        0.0
    }
}

impl ToggleSwitch {
    pub fn production(&self, x: &[f64]) -> [f64; 2] {
        [
            self.low[0] + heaviside(self.threshold[1] - x[1]) * (self.high[0] - self.low[0]),
            self.low[1] + heaviside(self.threshold[0] - x[0]) * (self.high[1] - self.low[1]),
        ]
    }

    /// Mode id `2·H(T1 - x1) + H(T2 - x2)`; the production vector of mode `m`
    /// is [`production_of_mode`](Self::production_of_mode).
    pub fn mode(&self, x: &[f64]) -> usize {
        2 * heaviside(self.threshold[0] - x[0]) as usize + heaviside(self.threshold[1] - x[1]) as usize
    }

    pub fn production_of_mode(&self, m: usize) -> [f64; 2] {
        let h2 = (m & 1) as f64;
        let h1 = (m >> 1 & 1) as f64;
        [
            self.low[0] + h2 * (self.high[0] - self.low[0]),
            self.low[1] + h1 * (self.high[1] - self.low[1]),
        ]
    }
}

/// Van der Pol variant whose restoring force is cubic for `|x1| < 1` and
/// linear outside.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseVanDerPol;

impl PiecewiseVanDerPol {
    /// 0 inside the cubic band `|x1| < 1`, 1 outside.
    pub fn mode(&self, x: &[f64]) -> usize {
        usize::from(x[0].abs() >= 1.0)
    }
}

/// A vector field the pipeline can integrate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VectorField {
    ToggleSwitch(ToggleSwitch),
    PiecewiseVanDerPol,
    Identified(SwitchingModel),
}

impl VectorField {
    pub fn toggle_switch() -> Self {
        VectorField::ToggleSwitch(ToggleSwitch::default())
    }

    pub fn dim(&self) -> usize {
        match self {
            VectorField::ToggleSwitch(_) | VectorField::PiecewiseVanDerPol => 2,
            VectorField::Identified(m) => m.n,
        }
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            VectorField::ToggleSwitch(t) => {
                let b = t.production(x);
                out[0] = -t.gamma[0] * x[0] + b[0];
                out[1] = -t.gamma[1] * x[1] + b[1];
            }
            VectorField::PiecewiseVanDerPol => {
                let (x1, x2) = (x[0], x[1]);
                let g = if x1.abs() < 1.0 { x1 * x1 * x1 } else { x1 };
                out[0] = x2;
                out[1] = (1.0 - x1 * x1) * x2 - g;
            }
            VectorField::Identified(m) => {
                let mut phi_buf = [0.0f64; 64];
                let mut heap;
                let p = m.monomial_order.len();
                let phi: &mut [f64] = if p <= 64 {
                    &mut phi_buf[..p]
                } else {
                    heap = vec![0.0; p];
                    &mut heap
                };
                eval_monomials(m.n, m.degree, &m.monomial_order, x, phi);
                let mode = match &m.classifier {
                    Some(c) if m.k > 1 && c.degree == m.degree => c.predict_with(phi).min(m.k - 1),
                    Some(c) if m.k > 1 => c.predict(x).min(m.k - 1),
                    _ => 0,
                };
                m.mode_field(mode, phi, out);
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, &mut out);
        out
    }
}

fn eval_monomials(dim: usize, degree: u32, exponents: &[Vec<u32>], x: &[f64], out: &mut [f64]) {
    let stride = degree as usize + 1;
    let mut buf = [0.0f64; 64];
    let mut heap;
    let powers: &mut [f64] = if dim * stride <= 64 {
        &mut buf[..dim * stride]
    } else {
        heap = vec![0.0; dim * stride];
        &mut heap
    };
    for d in 0..dim {
        powers[d * stride] = 1.0;
        for e in 1..stride {
            powers[d * stride + e] = powers[d * stride + e - 1] * x[d];
        }
    }
    for (o, exps) in out.iter_mut().zip(exponents) {
        *o = exps
            .iter()
            .enumerate()
            .map(|(d, &e)| powers[d * stride + e as usize])
            .product();
    }
}

/// `eval_field` as a free function.
pub fn eval_field(field: &VectorField, x: &[f64]) -> Vec<f64> {
    field.eval(x)
}

/// Fixed-step classical RK4; the final step is shortened to land on `tau`.
#[derive(Clone, Copy, Debug)]
pub struct FlowMap<'a> {
    pub field: &'a VectorField,
    pub tau: f64,
    pub h: f64,
}

impl<'a> FlowMap<'a> {
    pub fn new(field: &'a VectorField, tau: f64, h: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::config(format!("tau must be positive, got {tau}")));
        }
        if !(h > 0.0 && h <= tau) {
            return Err(Error::config(format!("step must satisfy 0 < h <= tau, got h = {h}")));
        }
        Ok(Self { field, tau, h })
    }

    pub fn steps(&self) -> usize {
        let ratio = self.tau / self.h;
        let r = ratio.round();
        if (ratio - r).abs() < 1e-9 * r.max(1.0) {
            r as usize
        } else {
            ratio.ceil() as usize
        }
    }

    pub fn apply(&self, x0: &[f64]) -> Result<Vec<f64>> {
        let n = x0.len();
        let mut x = x0.to_vec();
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        let steps = self.steps();
        for s in 0..steps {
            let h = if s + 1 == steps {
                self.tau - self.h * (steps - 1) as f64
            } else {
                self.h
            };
            self.field.eval_into(&x, &mut k1);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * h * k1[i];
            }
            self.field.eval_into(&tmp, &mut k2);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * h * k2[i];
            }
            self.field.eval_into(&tmp, &mut k3);
            for i in 0..n {
                tmp[i] = x[i] + h * k3[i];
            }
            self.field.eval_into(&tmp, &mut k4);
            for i in 0..n {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::IntegrationDiverged {
                    start: x0.to_vec(),
                    t: self.h * s as f64 + h,
                });
            }
        }
        Ok(x)
    }
}

/// Time-`tau` image of `x0` under RK4 with step `h`.
pub fn integrate(field: &VectorField, x0: &[f64], tau: f64, h: f64) -> Result<Vec<f64>> {
    if x0.len() != field.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            got: x0.len(),
        });
    }
    FlowMap::new(field, tau, h)?.apply(x0)
}

/// One measurement `(x, x')` on trajectory `traj_id` at time `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub traj_id: usize,
    pub t: f64,
    pub x: Vec<f64>,
    pub xdot: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryDataset {
    pub dim: usize,
    pub samples: Vec<Sample>,
}

impl TrajectoryDataset {
    pub fn new(dim: usize, samples: Vec<Sample>) -> Result<Self> {
        for s in &samples {
            if s.x.len() != dim || s.xdot.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: s.x.len().max(s.xdot.len()),
                });
            }
        }
        Ok(Self { dim, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_trajectories(&self) -> usize {
        let mut ids: Vec<usize> = self.samples.iter().map(|s| s.traj_id).collect();
        ids.dedup();
        ids.len()
    }

    pub fn states(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.x.clone()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("traj_id,t");
        for i in 1..=self.dim {
            let _ = write!(out, ",x{i}");
        }
        for i in 1..=self.dim {
            let _ = write!(out, ",dx{i}");
        }
        out.push('\n');
        for s in &self.samples {
            let _ = write!(out, "{},{}", s.traj_id, s.t);
            for v in s.x.iter().chain(&s.xdot) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("missing CSV header".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.len() < 4 || cols[0] != "traj_id" || cols[1] != "t" || (cols.len() - 2) % 2 != 0 {
            return Err(Error::Parse(format!("unexpected dataset header `{header}`")));
        }
        let dim = (cols.len() - 2) / 2;
        for i in 0..dim {
            if cols[2 + i] != format!("x{}", i + 1) || cols[2 + dim + i] != format!("dx{}", i + 1) {
                return Err(Error::Parse(format!("unexpected dataset header `{header}`")));
            }
        }
        let mut samples = Vec::new();
        for (ln, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != cols.len() {
                return Err(Error::Parse(format!("line {}: expected {} fields", ln + 2, cols.len())));
            }
            let num = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 2)))
            };
            let traj_id = fields[0]
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 2)))?;
            let t = num(fields[1])?;
            let x = fields[2..2 + dim].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
            let xdot = fields[2 + dim..].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
            samples.push(Sample { traj_id, t, x, xdot });
        }
        Self::new(dim, samples)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_csv().as_bytes())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

/// Sampling plan for synthetic trajectory data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub trajectories: usize,
    pub horizon: f64,
    pub sample_dt: f64,
    pub h: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            trajectories: 50,
            horizon: 10.0,
            sample_dt: 0.2,
            h: 0.01,
        }
    }
}

/// Uniform random initial conditions in `domain`, sampled every `sample_dt`
/// along RK4 trajectories; a trajectory stops at its first sample outside
/// the domain.
pub fn simulate_trajectories(
    field: &VectorField,
    config: &SimulationConfig,
    domain: &Cuboid,
    seed: u64,
) -> Result<TrajectoryDataset> {
    if config.trajectories == 0 {
        return Err(Error::config("trajectory count must be at least 1"));
    }
    if !(config.horizon >= 0.0) || !(config.sample_dt > 0.0) || !(config.h > 0.0) {
        return Err(Error::config("horizon must be >= 0 and sample_dt, h positive"));
    }
    if domain.dim() != field.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            got: domain.dim(),
        });
    }
    let n_samples = (config.horizon / config.sample_dt + 1e-9).floor() as usize + 1;
    let step = FlowMap::new(field, config.sample_dt, config.h.min(config.sample_dt))?;
    let per_traj: Vec<Vec<Sample>> = (0..config.trajectories)
        .into_par_iter()
        .map(|id| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id as u64);
            let mut x: Vec<f64> = (0..domain.dim())
                .map(|d| rng.random_range(domain.lower[d]..=domain.upper[d]))
                .collect();
            let mut out = Vec::with_capacity(n_samples);
            for k in 0..n_samples {
                if !domain.contains(&x) {
                    break;
                }
                out.push(Sample {
                    traj_id: id,
                    t: k as f64 * config.sample_dt,
                    x: x.clone(),
                    xdot: field.eval(&x),
                });
                if k + 1 < n_samples {
                    match step.apply(&x) {
                        Ok(next) => x = next,
                        Err(_) => break,
                    }
                }
            }
            out
        })
        .collect();
    let samples: Vec<Sample> = per_traj.into_iter().flatten().collect();
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    TrajectoryDataset::new(field.dim(), samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay() -> VectorField {
        VectorField::Identified(SwitchingModel::affine(&[vec![-1.0]], &[0.0]))
    }

    #[test]
    fn affine_features() {
        let b = PolyBasis::new(2, 1);
        assert_eq!(b.features(&[2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        let b1 = PolyBasis::new(1, 2);
        assert_eq!(b1.features(&[2.0]).unwrap(), vec![1.0, 2.0, 4.0]);
        assert!(matches!(b.features(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    fn binomial(n: u64, k: u64) -> u64 {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn cubic_basis_matches_symbolic_expansion() {
        // independent enumeration: x1^a x2^b with a + b <= 3, graded, x1-heavy first
        let b = PolyBasis::new(2, 3);
        let mut expect = Vec::new();
        for total in 0..=3u32 {
            for a in (0..=total).rev() {
                expect.push(vec![a, total - a]);
            }
        }
        assert_eq!(b.exponents, expect);
        let x = [1.5, -2.0];
        let phi = b.features(&x).unwrap();
        assert_eq!(phi.len(), 10);
        for (v, e) in phi.iter().zip(&expect) {
            assert!((v - x[0].powi(e[0] as i32) * x[1].powi(e[1] as i32)).abs() < 1e-12);
        }
        for n in 1..4 {
            for d in 0..5 {
                let b = PolyBasis::new(n, d);
                assert_eq!(b.len() as u64, binomial((n as u64) + d as u64, d as u64));
                assert_eq!(b.features(&vec![0.7; n]).unwrap()[0], 1.0);
            }
        }
    }

    #[test]
    fn toggle_equilibria() {
        let f = VectorField::toggle_switch();
        assert_eq!(f.eval(&[5.0, 1.0]), vec![0.0, 0.0]);
        assert_eq!(f.eval(&[1.0, 5.0]), vec![0.0, 0.0]);
        // boundary takes the ">= 0" branch of the Heaviside step
        assert_eq!(f.eval(&[3.0, 3.0]), vec![2.0, 2.0]);
    }

    #[test]
    fn vdp_origin_is_equilibrium() {
        assert_eq!(VectorField::PiecewiseVanDerPol.eval(&[0.0, 0.0]), vec![0.0, 0.0]);
        let v = VectorField::PiecewiseVanDerPol.eval(&[2.0, 1.0]);
        assert_eq!(v, vec![1.0, (1.0 - 4.0) * 1.0 - 2.0]);
    }

    #[test]
    fn rk4_decay_closed_form() {
        let x = integrate(&decay(), &[1.0], 1.0, 0.01).unwrap();
        assert!((x[0] - (-1.0f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn rk4_fourth_order() {
        let exact = (-1.0f64).exp();
        let err = |h: f64| (integrate(&decay(), &[1.0], 1.0, h).unwrap()[0] - exact).abs();
        let (e1, e2, e3) = (err(0.1), err(0.05), err(0.025));
        for ratio in [e1 / e2, e2 / e3] {
            assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn rk4_last_step_shortened() {
        let f = FlowMap::new(&VectorField::PiecewiseVanDerPol, 1.0, 0.3).unwrap();
        assert_eq!(f.steps(), 4);
        let x = integrate(&decay(), &[1.0], 1.0, 0.3).unwrap();
        assert!((x[0] - (-1.0f64).exp()).abs() < 1e-3);
        assert!(matches!(
            integrate(&decay(), &[1.0], 1.0, 2.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn fixed_point_preserved() {
        let f = VectorField::toggle_switch();
        assert_eq!(integrate(&f, &[5.0, 1.0], 0.5, 0.5).unwrap(), vec![5.0, 1.0]);
    }

    #[test]
    fn toggle_bistable_convergence() {
        let f = VectorField::toggle_switch();
        let dist = |x: &[f64], p: [f64; 2]| ((x[0] - p[0]).powi(2) + (x[1] - p[1]).powi(2)).sqrt();
        for (x0, target) in [([0.5, 0.6], [1.0, 5.0]), ([0.6, 0.5], [5.0, 1.0]), ([4.0, 0.2], [5.0, 1.0])] {
            let x = integrate(&f, &x0, 10.0, 0.01).unwrap();
            assert!(dist(&x, target) < 1e-2, "{x0:?} -> {x:?}");
            let fine = integrate(&f, &x0, 10.0, 1e-4).unwrap();
            assert!(dist(&fine, target) < 1e-2);
        }
        // the diagonal is invariant: a symmetric start slides into the saddle
        let x = integrate(&f, &[0.5, 0.5], 10.0, 0.01).unwrap();
        assert_eq!(x[0], x[1]);
        assert!(dist(&x, [3.0, 3.0]) < 1e-1, "{x:?}");
    }

    #[test]
    fn divergence_reported() {
        let blow = VectorField::Identified(
            SwitchingModel::new(1, 2, vec![vec![0.0, 0.0, 1.0]], 1.0).unwrap(),
        );
        assert!(matches!(
            integrate(&blow, &[10.0], 1.0, 0.01),
            Err(Error::IntegrationDiverged { .. })
        ));
    }

    #[test]
    fn toggle_affine_within_quadrants() {
        use rand::{Rng, SeedableRng};
        let f = VectorField::toggle_switch();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for q in 0..4 {
            let (x0, x1) = if q & 1 == 0 { (0.0, 2.9) } else { (3.1, 6.0) };
            let (y0, y1) = if q & 2 == 0 { (0.0, 2.9) } else { (3.1, 6.0) };
            for _ in 0..50 {
                let p = |rng: &mut ChaCha8Rng| [rng.random_range(x0..x1), rng.random_range(y0..y1)];
                let (a, b) = (p(&mut rng), p(&mut rng));
                let w: f64 = rng.random();
                let mid = [w * a[0] + (1.0 - w) * b[0], w * a[1] + (1.0 - w) * b[1]];
                let (fa, fb, fm) = (f.eval(&a), f.eval(&b), f.eval(&mid));
                for d in 0..2 {
                    assert!((fm[d] - (w * fa[d] + (1.0 - w) * fb[d])).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn classifier_one_hot() {
        use rand::{Rng, SeedableRng};
        let c = SwitchingClassifier::new(
            2,
            1,
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, -1.0]],
            vec![0.0, 0.0, 0.5],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let v = c.evaluate(&x);
            assert_eq!(v.iter().sum::<f64>(), 1.0);
            assert_eq!(v.iter().filter(|&&p| p == 1.0).count(), 1);
        }
        // tie goes to the lowest index
        assert_eq!(c.predict(&[1.0, 1.0]), 0);
    }

    #[test]
    fn simulation_counts_and_determinism() {
        let f = VectorField::toggle_switch();
        let dom = Cuboid::square(0.0, 6.0, 2);
        let cfg = SimulationConfig::default();
        let a = simulate_trajectories(&f, &cfg, &dom, 42).unwrap();
        let b = simulate_trajectories(&f, &cfg, &dom, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.len() <= 50 * 51);
        assert!(a.samples.iter().all(|s| dom.contains(&s.x)));
        let one = simulate_trajectories(
            &f,
            &SimulationConfig {
                trajectories: 1,
                horizon: 0.0,
                ..SimulationConfig::default()
            },
            &dom,
            1,
        )
        .unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.samples[0].t, 0.0);
    }

    #[test]
    fn vdp_trajectories_truncate_on_exit() {
        let dom = Cuboid::square(-3.0, 3.0, 2);
        let d = simulate_trajectories(
            &VectorField::PiecewiseVanDerPol,
            &SimulationConfig::default(),
            &dom,
            0,
        )
        .unwrap();
        assert!(d.len() <= 50 * 51);
        assert!(d.samples.iter().all(|s| dom.contains(&s.x)));
        // samples of each trajectory are contiguous in time
        for w in d.samples.windows(2) {
            if w[0].traj_id == w[1].traj_id {
                assert!((w[1].t - w[0].t - 0.2).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn csv_roundtrip() {
        let f = VectorField::PiecewiseVanDerPol;
        let d = simulate_trajectories(
            &f,
            &SimulationConfig {
                trajectories: 3,
                horizon: 1.0,
                ..SimulationConfig::default()
            },
            &Cuboid::square(-3.0, 3.0, 2),
            9,
        )
        .unwrap();
        let text = d.to_csv();
        assert!(text.starts_with("traj_id,t,x1,x2,dx1,dx2\n"));
        let back = TrajectoryDataset::from_csv(&text).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.to_csv(), text);
        assert!(TrajectoryDataset::from_csv("a,b\n").is_err());
    }

    #[test]
    fn model_json_roundtrip() {
        let m = SwitchingModel::new(2, 1, vec![vec![1.0, -1.0, 0.0, 5.0, 0.0, -1.0]; 2], 10.0)
            .unwrap()
            .with_classifier(
                SwitchingClassifier::new(2, 1, vec![vec![1.0, 0.0], vec![-1.0, 0.0]], vec![-3.0, 3.0])
                    .unwrap(),
            );
        let text = m.to_json().unwrap();
        let back = SwitchingModel::from_json(&text).unwrap();
        assert_eq!(back.to_json().unwrap(), text);
        let f = VectorField::Identified(back);
        assert_eq!(f.eval(&[4.0, 0.0]), vec![1.0 - 4.0, 5.0]);
    }
}
