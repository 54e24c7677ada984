//! Alternating identification of switching models: k-means warm start,
//! per-sample moment SDPs for the modes, ℓ1 regression LPs for the
//! dynamics, and an LP soft-margin classifier for the switching law.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convex::{solve_lp, solve_sdp, LinearProgram, PsdBlock, Relation, SmallSdp, SolveStatus, DEFAULT_TOL};
use crate::dynamics::{argmax, PolyBasis, SwitchingClassifier, SwitchingModel, TrajectoryDataset};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentConfig {
    #[serde(rename = "K")]
    pub k: usize,
    pub degree: u32,
    pub eta: f64,
    pub max_outer_iters: usize,
    pub objective_tol: f64,
    pub lp_tol: f64,
    pub sdp_tol: f64,
    pub lp_max_iter: usize,
    pub sdp_max_iter: usize,
    pub seed: u64,
    /// Independent warm starts (seeds `seed`, `seed + 1`, ...); the run with
    /// the lowest objective is kept. Stops early once a run fits exactly.
    pub restarts: usize,
    pub classifier_degree: u32,
    pub reg_c: f64,
}

impl Default for IdentConfig {
    fn default() -> Self {
        Self {
            k: 2,
            degree: 1,
            eta: 10.0,
            max_outer_iters: 30,
            objective_tol: 1e-6,
            lp_tol: DEFAULT_TOL,
            sdp_tol: DEFAULT_TOL,
            lp_max_iter: 200_000,
            sdp_max_iter: 100,
            seed: 0,
            restarts: 4,
            classifier_degree: 1,
            reg_c: 10.0,
        }
    }
}

impl IdentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("K must be at least 1"));
        }
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return Err(Error::config("eta must be finite and nonnegative"));
        }
        if !(self.reg_c > 0.0) {
            return Err(Error::config("reg_C must be positive"));
        }
        if self.max_outer_iters == 0 {
            return Err(Error::config("max_outer_iters must be at least 1"));
        }
        Ok(())
    }
}

/// Soft first-order moments and hardened labels per sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeAssignment {
    pub soft: Vec<Vec<f64>>,
    pub hard: Vec<usize>,
    /// Samples whose SDP did not solve; their label is the smallest-residual mode.
    pub fallback: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdentResult {
    pub model: SwitchingModel,
    pub assignment: ModeAssignment,
    pub objective_history: Vec<f64>,
    pub converged: bool,
    /// Modes that received no samples in the final dynamics LP.
    pub empty_modes: Vec<usize>,
    pub classifier_accuracy: f64,
}

/// `e_j` for the largest entry, lowest index on ties.
pub fn harden(soft: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; soft.len()];
    e[argmax(soft)] = 1.0;
    e
}

fn feature_matrix(data: &TrajectoryDataset, basis: &PolyBasis) -> Vec<Vec<f64>> {
    data.samples
        .iter()
        .map(|s| {
            let mut phi = vec![0.0; basis.len()];
            basis.features_into(&s.x, &mut phi);
            phi
        })
        .collect()
}

/// `C_j Φ(x)` for coefficient matrix `c` (row-major `n x p`).
fn predict(c: &[f64], phi: &[f64], n: usize) -> Vec<f64> {
    let p = phi.len();
    (0..n)
        .map(|r| c[r * p..(r + 1) * p].iter().zip(phi).map(|(a, f)| a * f).sum())
        .collect()
}

fn l1_residual(c: &[f64], phi: &[f64], xdot: &[f64]) -> f64 {
    predict(c, phi, xdot.len())
        .iter()
        .zip(xdot)
        .map(|(p, y)| (y - p).abs())
        .sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ / Lloyd clustering of the velocities, then per-cluster least squares.
pub fn warm_start(data: &TrajectoryDataset, k: usize, degree: u32, seed: u64) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if k == 0 || k > data.len() {
        return Err(Error::config(format!(
            "K = {k} must be between 1 and the number of samples ({})",
            data.len()
        )));
    }
    let v: Vec<&[f64]> = data.samples.iter().map(|s| s.xdot.as_slice()).collect();
    let labels = kmeans(&v, k, seed);
    let basis = PolyBasis::new(data.dim, degree);
    let phi = feature_matrix(data, &basis);
    let coeffs = (0..k)
        .map(|j| least_squares(data, &phi, &labels, j, basis.len()))
        .collect();
    Ok((labels, coeffs))
}

fn kmeans(v: &[&[f64]], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = v.len();
    let mut centers: Vec<Vec<f64>> = vec![v[rng.random_range(0..n)].to_vec()];
    let mut d2: Vec<f64> = v.iter().map(|x| sq_dist(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut t = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if t < d {
                    pick = i;
                    break;
                }
                t -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push(v[next].to_vec());
        for (d, x) in d2.iter_mut().zip(v) {
            *d = d.min(sq_dist(x, centers.last().expect("nonempty")));
        }
    }
    let mut labels = vec![0; n];
    for iter in 0..100 {
        let mut changed = false;
        for (i, x) in v.iter().enumerate() {
            let mut best = 0;
            let mut bd = f64::INFINITY;
            for (j, c) in centers.iter().enumerate() {
                let d = sq_dist(x, c);
                if d < bd {
                    bd = d;
                    best = j;
                }
            }
            if labels[i] != best || iter == 0 {
                changed |= labels[i] != best;
                labels[i] = best;
            }
        }
        let dim = v[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (x, &l) in v.iter().zip(&labels) {
            counts[l] += 1;
            for (s, a) in sums[l].iter_mut().zip(x.iter()) {
                *s += a;
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                // re-seed from the point farthest from its own center
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(v[a], &centers[labels[a]])
                            .total_cmp(&sq_dist(v[b], &centers[labels[b]]))
                            .then(b.cmp(&a))
                    })
                    .expect("nonempty");
                centers[j] = v[far].to_vec();
                labels[far] = j;
                changed = true;
            } else {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        if !changed && iter > 0 {
            break;
        }
    }
    labels
}

fn least_squares(data: &TrajectoryDataset, phi: &[Vec<f64>], labels: &[usize], mode: usize, p: usize) -> Vec<f64> {
    let n = data.dim;
    let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == mode).collect();
    if idx.is_empty() {
        return vec![0.0; n * p];
    }
    let a = DMatrix::from_fn(idx.len(), p, |r, c| phi[idx[r]][c]);
    let y = DMatrix::from_fn(idx.len(), n, |r, c| data.samples[idx[r]].xdot[c]);
    let sol = a
        .svd(true, true)
        .solve(&y, 1e-10)
        .unwrap_or_else(|_| DMatrix::zeros(p, n));
    let mut c = vec![0.0; n * p];
    for r in 0..n {
        for m in 0..p {
            c[r * p + m] = sol[(m, r)];
        }
    }
    c
}

/// Order-1 moment relaxation for one sample, given each mode's prediction
/// `preds[j] = C_j Φ(x)`. Variables are λ (K), the off-diagonal entries of
/// Λ (K(K-1)/2, row-major), then δ (n).
pub fn mode_moment_sdp(preds: &[Vec<f64>], xdot: &[f64]) -> Result<SmallSdp> {
    let k = preds.len();
    let n = xdot.len();
    let off = k * (k - 1) / 2;
    let nv = k + off + n;
    let mut obj = vec![0.0; nv];
    for o in obj.iter_mut().skip(k + off) {
        *o = 1.0;
    }
    let mut sdp = SmallSdp::new(obj);
    for j in 0..k + off {
        sdp.lp.set_free(j);
    }
    sdp.lp
        .add_sparse_row((0..k).map(|j| (j, 1.0)).collect(), Relation::Eq, 1.0)?;
    for r in 0..n {
        let mut row: Vec<(usize, f64)> = (0..k).map(|j| (j, preds[j][r])).collect();
        row.push((k + off + r, -1.0));
        sdp.lp.add_sparse_row(row.clone(), Relation::Le, xdot[r])?;
        row.last_mut().expect("delta entry").1 = 1.0;
        sdp.lp.add_sparse_row(row, Relation::Ge, xdot[r])?;
    }
    let mut blk = PsdBlock::new(k + 1);
    blk.add_constant(0, 0, 1.0);
    let mut idx = k;
    for a in 0..k {
        blk.add_term(a, 0, a + 1, 1.0);
        blk.add_term(a, a + 1, a + 1, 1.0);
        for b in a + 1..k {
            blk.add_term(idx, a + 1, b + 1, 1.0);
            idx += 1;
        }
    }
    sdp.add_block(blk);
    Ok(sdp)
}

/// Soft λ for one sample, or `None` if the SDP is not solved to optimality.
fn sample_sdp(preds: &[Vec<f64>], xdot: &[f64], tol: f64, max_iter: usize) -> Result<Option<Vec<f64>>> {
    let k = preds.len();
    let sdp = mode_moment_sdp(preds, xdot)?;
    let rep = solve_sdp(&sdp, tol, max_iter)?;
    if rep.status != SolveStatus::Optimal {
        return Ok(None);
    }
    // project the numerically interior λ onto the simplex
    let mut lam: Vec<f64> = rep.x[..k].iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let s: f64 = lam.iter().sum();
    if !(s > 0.0) {
        return Ok(None);
    }
    for l in lam.iter_mut() {
        *l /= s;
    }
    Ok(Some(lam))
}

/// Per-sample mode assignment with the coefficients held fixed.
pub fn mode_sdp(
    data: &TrajectoryDataset,
    coeffs: &[Vec<f64>],
    degree: u32,
    tol: f64,
    max_iter: usize,
) -> Result<ModeAssignment> {
    let k = coeffs.len();
    if k == 0 {
        return Err(Error::config("mode assignment needs at least one mode"));
    }
    let basis = PolyBasis::new(data.dim, degree);
    if let Some(c) = coeffs.iter().find(|c| c.len() != data.dim * basis.len()) {
        return Err(Error::DimensionMismatch {
            expected: data.dim * basis.len(),
            got: c.len(),
        });
    }
    let results: Vec<Result<(Vec<f64>, bool)>> = data
        .samples
        .par_iter()
        .map(|s| {
            if k == 1 {
                return Ok((vec![1.0], false));
            }
            let mut phi = vec![0.0; basis.len()];
            basis.features_into(&s.x, &mut phi);
            let preds: Vec<Vec<f64>> = coeffs.iter().map(|c| predict(c, &phi, data.dim)).collect();
            match sample_sdp(&preds, &s.xdot, tol, max_iter)? {
                Some(lam) => Ok((lam, false)),
                None => {
                    let resid: Vec<f64> = coeffs.iter().map(|c| -l1_residual(c, &phi, &s.xdot)).collect();
                    Ok((harden(&resid), true))
                }
            }
        })
        .collect();
    let mut soft = Vec::with_capacity(results.len());
    let mut fallback = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        let (lam, fb) = r?;
        if fb {
            fallback.push(i);
        }
        soft.push(lam);
    }
    let hard = soft.iter().map(|l| argmax(l)).collect();
    Ok(ModeAssignment { soft, hard, fallback })
}

/// Least-absolute-deviation fit of `y ≈ Φ c` with `|c| <= eta`, solved
/// through the dual `max yᵀu - eta·1ᵀv, -v <= Φᵀu <= v, |u| <= 1`;
/// the coefficients are the multipliers of the two inequality blocks.
fn l1_regression(phi: &[&[f64]], y: &[f64], eta: f64, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let p = phi[0].len();
    let m = y.len();
    let mut obj: Vec<f64> = y.iter().map(|v| -v).collect();
    obj.extend(std::iter::repeat_n(eta, p));
    let mut lp = LinearProgram::new(obj);
    for i in 0..m {
        lp.set_bounds(i, -1.0, 1.0);
    }
    for f in 0..p {
        let col: Vec<(usize, f64)> = (0..m).filter(|&i| phi[i][f] != 0.0).map(|i| (i, phi[i][f])).collect();
        let mut up = col.clone();
        up.push((m + f, -1.0));
        lp.add_sparse_row(up, Relation::Le, 0.0)?;
        let mut dn: Vec<(usize, f64)> = col.into_iter().map(|(i, a)| (i, -a)).collect();
        dn.push((m + f, -1.0));
        lp.add_sparse_row(dn, Relation::Le, 0.0)?;
    }
    let rep = solve_lp(&lp, tol, max_iter)?;
    if rep.status != SolveStatus::Optimal {
        return Err(Error::Solver(format!(
            "dynamics LP ended with status {:?} (residuals {:?})",
            rep.status, rep.residuals
        )));
    }
    Ok((0..p)
        .map(|f| (rep.duals[2 * f + 1] - rep.duals[2 * f]).clamp(-eta, eta))
        .collect())
}

/// Result of one dynamics LP pass.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicsFit {
    pub coeffs: Vec<Vec<f64>>,
    pub objective: f64,
    pub empty_modes: Vec<usize>,
}

/// Per-mode, per-output ℓ1 regressions given hard labels. Empty modes keep
/// `previous` (or zeros) and are flagged.
pub fn dynamics_lp(
    data: &TrajectoryDataset,
    labels: &[usize],
    k: usize,
    degree: u32,
    eta: f64,
    previous: Option<&[Vec<f64>]>,
    tol: f64,
    max_iter: usize,
) -> Result<DynamicsFit> {
    if labels.len() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            got: labels.len(),
        });
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::config(format!("label {l} out of range for K = {k}")));
    }
    let basis = PolyBasis::new(data.dim, degree);
    let p = basis.len();
    let n = data.dim;
    let phi = feature_matrix(data, &basis);
    let jobs: Vec<(usize, usize)> = (0..k).flat_map(|j| (0..n).map(move |r| (j, r))).collect();
    let solved: Vec<Result<Option<Vec<f64>>>> = jobs
        .par_iter()
        .map(|&(j, r)| {
            let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == j).collect();
            if idx.is_empty() {
                return Ok(None);
            }
            let rows: Vec<&[f64]> = idx.iter().map(|&i| phi[i].as_slice()).collect();
            let y: Vec<f64> = idx.iter().map(|&i| data.samples[i].xdot[r]).collect();
            l1_regression(&rows, &y, eta, tol, max_iter)
                .map(Some)
                .map_err(|e| Error::Solver(format!("mode {j}, output {r}: {e}")))
        })
        .collect();
    let mut coeffs = vec![vec![0.0; n * p]; k];
    let mut empty_modes = Vec::new();
    for (&(j, r), res) in jobs.iter().zip(solved) {
        match res? {
            Some(c) => coeffs[j][r * p..(r + 1) * p].copy_from_slice(&c),
            None => {
                if r == 0 {
                    empty_modes.push(j);
                }
                if let Some(prev) = previous {
                    coeffs[j][r * p..(r + 1) * p].copy_from_slice(&prev[j][r * p..(r + 1) * p]);
                }
            }
        }
    }
    let objective = data
        .samples
        .iter()
        .zip(&phi)
        .zip(labels)
        .map(|((s, f), &l)| l1_residual(&coeffs[l], f, &s.xdot))
        .sum();
    Ok(DynamicsFit {
        coeffs,
        objective,
        empty_modes,
    })
}

/// Alternates dynamics LPs and mode SDPs from a k-means warm start.
/// Per-sample residual below which a fit counts as exact.
const EXACT_FIT: f64 = 1e-9;

pub fn alternate(data: &TrajectoryDataset, config: &IdentConfig) -> Result<IdentResult> {
    config.validate()?;
    let mut best: Option<IdentResult> = None;
    for r in 0..config.restarts.max(1) {
        let seed = config.seed.wrapping_add(r as u64);
        let (labels, _) = warm_start(data, config.k, config.degree, seed)?;
        let mut res = alternate_from_labels(data, config, labels)?;
        res.model.provenance["warm_start_seed"] = seed.into();
        let better = best.as_ref().is_none_or(|b| {
            res.objective_history.last() < b.objective_history.last()
        });
        if better {
            best = Some(res);
        }
        let obj = best.as_ref().and_then(|b| b.objective_history.last().copied()).unwrap_or(f64::INFINITY);
        if obj <= EXACT_FIT * data.len() as f64 {
            break;
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Alternation starting from explicit initial labels.
pub fn alternate_from_labels(data: &TrajectoryDataset, config: &IdentConfig, mut labels: Vec<usize>) -> Result<IdentResult> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if config.k > data.len() {
        return Err(Error::config("K exceeds the number of samples"));
    }
    let basis = PolyBasis::new(data.dim, config.degree);
    let phi = feature_matrix(data, &basis);
    let mut history: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut coeffs: Option<Vec<Vec<f64>>> = None;
    let mut best: Option<DynamicsFit> = None;
    for iter in 0..config.max_outer_iters {
        let fit = dynamics_lp(
            data,
            &labels,
            config.k,
            config.degree,
            config.eta,
            coeffs.as_deref(),
            config.lp_tol,
            config.lp_max_iter,
        )
        .map_err(|e| Error::Fit(format!("iteration {iter}: {e}")))?;
        if let Some(&prev) = history.last() {
            if fit.objective > prev {
                // numerical noise only; the previous iterate stays best
                converged = true;
                break;
            }
        }
        let prev = history.last().copied();
        history.push(fit.objective);
        coeffs = Some(fit.coeffs.clone());
        best = Some(fit.clone());
        if config.k == 1 || fit.objective <= 1e-12 {
            converged = true;
            break;
        }
        if let Some(prev) = prev {
            if prev - fit.objective <= config.objective_tol * prev.max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
        let assign = mode_sdp(data, &fit.coeffs, config.degree, config.sdp_tol, config.sdp_max_iter)
            .map_err(|e| Error::Fit(format!("iteration {iter}: {e}")))?;
        // accept a relabel only when it does not increase the sample's residual
        for (i, &new) in assign.hard.iter().enumerate() {
            let old = labels[i];
            if new != old {
                let s = &data.samples[i];
                if l1_residual(&fit.coeffs[new], &phi[i], &s.xdot) <= l1_residual(&fit.coeffs[old], &phi[i], &s.xdot) {
                    labels[i] = new;
                }
            }
        }
    }
    let best = best.expect("at least one iteration");
    let assignment = mode_sdp(data, &best.coeffs, config.degree, config.sdp_tol, config.sdp_max_iter)?;
    let states = data.states();
    let (classifier, accuracy) = fit_classifier(
        &states,
        &assignment.hard,
        config.k,
        config.classifier_degree,
        config.reg_c,
    )?;
    let mut model = SwitchingModel::new(data.dim, config.degree, best.coeffs, config.eta)?.with_classifier(classifier);
    model.provenance = serde_json::json!({
        "method": "alternating_convex",
        "seed": config.seed,
        "eta": config.eta,
        "reg_C": config.reg_c,
        "classifier_degree": config.classifier_degree,
        "classifier_accuracy": accuracy,
        "objective": history.last(),
        "iterations": history.len(),
        "converged": converged,
        "samples": data.len(),
    });
    Ok(IdentResult {
        model,
        assignment,
        objective_history: history,
        converged,
        empty_modes: best.empty_modes,
        classifier_accuracy: accuracy,
    })
}

/// Multi-class soft-margin classifier on standardized features: one hinge
/// term per (sample, wrong class) pair plus an ℓ1 weight penalty scaled by
/// `1/reg_c`, solved jointly through its dual, which has `2·K·(p-1) + K - 1`
/// rows.
pub fn fit_classifier(
    points: &[Vec<f64>],
    labels: &[usize],
    k: usize,
    degree: u32,
    reg_c: f64,
) -> Result<(SwitchingClassifier, f64)> {
    if points.is_empty() || points.len() != labels.len() {
        return Err(Error::Fit("classifier needs one label per point".into()));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Fit(format!("label {l} out of range for K = {k}")));
    }
    let dim = points[0].len();
    let mut present: Vec<usize> = labels.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        let c = SwitchingClassifier::constant(dim, k, present[0]);
        return Ok((c, 1.0));
    }
    let basis = PolyBasis::new(dim, degree);
    let q = basis.len() - 1;
    if q == 0 {
        return Err(Error::Fit("classifier degree must be at least 1 with two or more modes".into()));
    }
    let feats: Vec<Vec<f64>> = points
        .iter()
        .map(|x| {
            let mut f = vec![0.0; basis.len()];
            basis.features_into(x, &mut f);
            f[1..].to_vec()
        })
        .collect();
    let npts = feats.len() as f64;
    let mean: Vec<f64> = (0..q).map(|m| feats.iter().map(|f| f[m]).sum::<f64>() / npts).collect();
    let std: Vec<f64> = (0..q)
        .map(|m| (feats.iter().map(|f| (f[m] - mean[m]).powi(2)).sum::<f64>() / npts).sqrt())
        .collect();
    if std.iter().all(|&s| s < 1e-12) {
        return Err(Error::Fit(format!(
            "degenerate feature matrix: all {} points share the same features",
            points.len()
        )));
    }
    let z: Vec<Vec<f64>> = feats
        .iter()
        .map(|f| {
            (0..q)
                .map(|m| if std[m] < 1e-12 { 0.0 } else { (f[m] - mean[m]) / std[m] })
                .collect()
        })
        .collect();
    // classes are renumbered 0..present.len() for the joint problem
    let compact: Vec<usize> = labels
        .iter()
        .map(|l| present.binary_search(l).expect("label is present"))
        .collect();
    let (w, b) = multiclass_hinge_dual(&z, &compact, present.len(), 1.0 / reg_c)?;
    let mut weights = vec![vec![0.0; q]; k];
    let mut offsets = vec![-1e9; k];
    for (c, &j) in present.iter().enumerate() {
        // back to raw features
        let mut off = b[c];
        for m in 0..q {
            if std[m] >= 1e-12 {
                weights[j][m] = w[c][m] / std[m];
                off -= w[c][m] * mean[m] / std[m];
            }
        }
        offsets[j] = off;
    }
    let clf = SwitchingClassifier::new(dim, degree, weights, offsets)?;
    let correct = points
        .iter()
        .zip(labels)
        .filter(|(x, &l)| clf.predict(x) == l)
        .count();
    Ok((clf, correct as f64 / points.len() as f64))
}

/// Solves `min Σ_i Σ_{j≠y_i} max(0, 1 - (w_{y_i} - w_j)ᵀz_i - b_{y_i} + b_j)
/// + lambda·Σ_c ‖w_c‖₁` through its dual over `0 <= α_ij <= 1`. The offset
/// rows sum to zero, so the last one is dropped and `b` of the last class is 0.
fn multiclass_hinge_dual(z: &[Vec<f64>], y: &[usize], k: usize, lambda: f64) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let q = z[0].len();
    // (sample, wrong class) pairs, one dual variable each
    let pairs: Vec<(usize, usize)> = y
        .iter()
        .enumerate()
        .flat_map(|(i, &yi)| (0..k).filter(move |&j| j != yi).map(move |j| (i, j)))
        .collect();
    let mut lp = LinearProgram::new(vec![-1.0; pairs.len()]);
    for v in 0..pairs.len() {
        lp.set_bounds(v, 0.0, 1.0);
    }
    // coefficient of pair v in the rows of class c: +1 for its true class, -1 for the other
    let class_col = |c: usize| -> Vec<(usize, f64)> {
        pairs
            .iter()
            .enumerate()
            .filter_map(|(v, &(i, j))| {
                if y[i] == c {
                    Some((v, 1.0))
                } else if j == c {
                    Some((v, -1.0))
                } else {
                    None
                }
            })
            .collect()
    };
    for c in 0..k - 1 {
        lp.add_sparse_row(class_col(c), Relation::Eq, 0.0)?;
    }
    for c in 0..k {
        let col = class_col(c);
        for m in 0..q {
            let row: Vec<(usize, f64)> = col
                .iter()
                .filter(|&&(v, _)| z[pairs[v].0][m] != 0.0)
                .map(|&(v, s)| (v, s * z[pairs[v].0][m]))
                .collect();
            lp.add_sparse_row(row.clone(), Relation::Le, lambda)?;
            lp.add_sparse_row(row.into_iter().map(|(v, a)| (v, -a)).collect(), Relation::Le, lambda)?;
        }
    }
    let rep = solve_lp(&lp, DEFAULT_TOL, 200_000)?;
    if rep.status != SolveStatus::Optimal {
        return Err(Error::Fit(format!(
            "classifier LP ended with status {:?} (residuals {:?})",
            rep.status, rep.residuals
        )));
    }
    let base = k - 1;
    let w = (0..k)
        .map(|c| {
            (0..q)
                .map(|m| {
                    let r = base + 2 * (c * q + m);
                    rep.duals[r + 1] - rep.duals[r]
                })
                .collect()
        })
        .collect();
    let mut b: Vec<f64> = (0..base).map(|c| -rep.duals[c]).collect();
    b.push(0.0);
    Ok((w, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate_trajectories, Sample, SimulationConfig, ToggleSwitch, VectorField};
    use crate::grid::Cuboid;

    fn toggle_data(seed: u64) -> TrajectoryDataset {
        simulate_trajectories(
            &VectorField::toggle_switch(),
            &SimulationConfig::default(),
            &Cuboid::square(0.0, 6.0, 2),
            seed,
        )
        .unwrap()
    }

    fn toggle_true_coeffs() -> Vec<Vec<f64>> {
        let t = ToggleSwitch::default();
        (0..4)
            .map(|m| {
                let b = t.production_of_mode(m);
                vec![b[0], -1.0, 0.0, b[1], 0.0, -1.0]
            })
            .collect()
    }

    fn decay_data() -> TrajectoryDataset {
        let samples = (0..40)
            .map(|i| {
                let x = -2.0 + 0.1 * i as f64;
                Sample {
                    traj_id: 0,
                    t: i as f64,
                    x: vec![x],
                    xdot: vec![-x],
                }
            })
            .collect();
        TrajectoryDataset::new(1, samples).unwrap()
    }

    #[test]
    fn harden_examples() {
        assert_eq!(harden(&[0.1, 0.7, 0.2]), vec![0.0, 1.0, 0.0]);
        assert_eq!(harden(&[0.5, 0.5]), vec![1.0, 0.0]);
        assert_eq!(harden(&[1.0, 0.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn single_cluster_is_global_least_squares() {
        let d = decay_data();
        let (labels, c) = warm_start(&d, 1, 1, 0).unwrap();
        assert!(labels.iter().all(|&l| l == 0));
        assert!(c[0][0].abs() < 1e-9 && (c[0][1] + 1.0).abs() < 1e-9);
        assert!(matches!(warm_start(&d, 41, 1, 0), Err(Error::Config(_))));
    }

    #[test]
    fn warm_start_deterministic() {
        let d = toggle_data(3);
        assert_eq!(warm_start(&d, 4, 1, 9).unwrap(), warm_start(&d, 4, 1, 9).unwrap());
    }

    #[test]
    fn l1_recovers_linear_decay() {
        let d = decay_data();
        let fit = dynamics_lp(&d, &vec![0; d.len()], 1, 1, 10.0, None, 1e-7, 10_000).unwrap();
        assert!(fit.coeffs[0][0].abs() < 1e-4 && (fit.coeffs[0][1] + 1.0).abs() < 1e-4);
        assert!(fit.objective < 1e-8);
    }

    #[test]
    fn zero_eta_forces_zero_coefficients() {
        let d = decay_data();
        let fit = dynamics_lp(&d, &vec![0; d.len()], 1, 1, 0.0, None, 1e-7, 10_000).unwrap();
        assert!(fit.coeffs[0].iter().all(|&c| c == 0.0));
        let total: f64 = d.samples.iter().map(|s| s.xdot[0].abs()).sum();
        assert!((fit.objective - total).abs() < 1e-9);
    }

    #[test]
    fn l1_matches_brute_force_median_fit() {
        // constant model: the ℓ1 optimum is any median
        let ys = [3.0, -1.0, 7.0, 2.0, 2.5];
        let phi: Vec<Vec<f64>> = ys.iter().map(|_| vec![1.0]).collect();
        let rows: Vec<&[f64]> = phi.iter().map(|r| r.as_slice()).collect();
        let c = l1_regression(&rows, &ys, 10.0, 1e-9, 1000).unwrap();
        assert!((c[0] - 2.5).abs() < 1e-9, "{c:?}");
        let c = l1_regression(&rows, &ys, 1.0, 1e-9, 1000).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-9, "{c:?}");
    }

    #[test]
    fn decoupled_lp_equals_coupled_formulation() {
        let d = toggle_data(11);
        let small = TrajectoryDataset::new(2, d.samples[..120].to_vec()).unwrap();
        let labels: Vec<usize> = small.samples.iter().map(|s| ToggleSwitch::default().mode(&s.x) % 2).collect();
        let k = 2;
        let fit = dynamics_lp(&small, &labels, k, 1, 10.0, None, 1e-9, 100_000).unwrap();
        // one LP over all modes with δ variables, as in the joint formulation
        let basis = PolyBasis::new(2, 1);
        let p = basis.len();
        let nc = k * 2 * p;
        let ns = small.len();
        let mut obj = vec![0.0; nc];
        obj.extend(std::iter::repeat_n(1.0, ns * 2));
        let mut lp = LinearProgram::new(obj);
        for j in 0..nc {
            lp.set_bounds(j, -10.0, 10.0);
        }
        for (i, s) in small.samples.iter().enumerate() {
            let phi = basis.features(&s.x).unwrap();
            for r in 0..2 {
                let mut row: Vec<(usize, f64)> =
                    (0..p).map(|m| (labels[i] * 2 * p + r * p + m, phi[m])).collect();
                row.push((nc + 2 * i + r, -1.0));
                lp.add_sparse_row(row.clone(), Relation::Le, s.xdot[r]).unwrap();
                row.last_mut().unwrap().1 = 1.0;
                lp.add_sparse_row(row, Relation::Ge, s.xdot[r]).unwrap();
            }
        }
        let rep = solve_lp(&lp, 1e-9, 100_000).unwrap();
        assert_eq!(rep.status, SolveStatus::Optimal);
        assert!((rep.objective - fit.objective).abs() < 1e-8, "{} vs {}", rep.objective, fit.objective);
    }

    #[test]
    fn true_labels_recover_toggle_coefficients() {
        let d = toggle_data(5);
        let t = ToggleSwitch::default();
        let labels: Vec<usize> = d.samples.iter().map(|s| t.mode(&s.x)).collect();
        let fit = dynamics_lp(&d, &labels, 4, 1, 10.0, None, 1e-7, 100_000).unwrap();
        let truth = toggle_true_coeffs();
        for j in 0..4 {
            if fit.empty_modes.contains(&j) {
                continue;
            }
            for (a, b) in fit.coeffs[j].iter().zip(&truth[j]) {
                assert!((a - b).abs() < 1e-3, "mode {j}: {:?}", fit.coeffs[j]);
            }
        }
    }

    #[test]
    fn sdp_assigns_exact_mode() {
        let preds = vec![vec![1.0, 2.0], vec![-1.0, 0.5]];
        for (xdot, expect) in [([1.0, 2.0], 0), ([-1.0, 0.5], 1)] {
            let lam = sample_sdp(&preds, &xdot, 1e-7, 100).unwrap().unwrap();
            assert!(lam[expect] >= 0.99, "{lam:?}");
            assert_eq!(argmax(&lam), expect);
        }
        // K = 1
        let d = decay_data();
        let a = mode_sdp(&d, &[vec![0.0, -1.0]], 1, 1e-7, 100).unwrap();
        assert!(a.soft.iter().all(|l| l == &vec![1.0]));
    }

    #[test]
    fn true_coefficients_give_true_modes() {
        let d = toggle_data(8);
        let t = ToggleSwitch::default();
        let a = mode_sdp(&d, &toggle_true_coeffs(), 1, 1e-7, 100).unwrap();
        assert!(a.fallback.is_empty());
        for (s, &h) in d.samples.iter().zip(&a.hard) {
            assert_eq!(h, t.mode(&s.x), "at {:?}", s.x);
        }
        for row in &a.soft {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn separable_clouds() {
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for i in 0..30 {
            let t = i as f64 * 0.1;
            pts.push(vec![-2.0 + 0.3 * t.sin(), t]);
            labels.push(0);
            pts.push(vec![2.0 + 0.3 * t.cos(), -t]);
            labels.push(1);
        }
        let (c, acc) = fit_classifier(&pts, &labels, 2, 1, 10.0).unwrap();
        assert_eq!(acc, 1.0);
        assert_eq!(c.predict(&[-3.0, 0.0]), 0);
        assert_eq!(c.predict(&[3.0, 0.0]), 1);
        let (c, acc) = fit_classifier(&pts, &vec![1; pts.len()], 2, 1, 10.0).unwrap();
        assert_eq!((c.predict(&[0.0, 0.0]), acc), (1, 1.0));
        assert!(fit_classifier(&vec![vec![0.0, 0.0]; 4], &[0, 1, 0, 1], 2, 1, 10.0).is_err());
    }

    #[test]
    fn quadrant_modes_need_the_joint_fit() {
        // no single line separates a quadrant from the rest, but four linear
        // scores under argmax do
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for i in 0..12 {
            for j in 0..12 {
                let x = vec![0.25 + 0.5 * i as f64, 0.25 + 0.5 * j as f64];
                labels.push(2 * usize::from(x[0] < 3.0) + usize::from(x[1] < 3.0));
                pts.push(x);
            }
        }
        let (c, acc) = fit_classifier(&pts, &labels, 4, 1, 10.0).unwrap();
        assert_eq!(acc, 1.0);
        assert_eq!(c.predict(&[0.0, 0.0]), 3);
        assert_eq!(c.predict(&[6.0, 6.0]), 0);
        // an absent class is never predicted
        let (c, _) = fit_classifier(&pts, &labels, 5, 1, 10.0).unwrap();
        assert!(pts.iter().all(|x| c.predict(x) < 4));
    }

    #[test]
    fn k1_is_a_single_lp() {
        let d = decay_data();
        let cfg = IdentConfig {
            k: 1,
            ..IdentConfig::default()
        };
        let r = alternate(&d, &cfg).unwrap();
        assert_eq!(r.objective_history.len(), 1);
        assert!(r.converged);
        assert!(matches!(
            alternate(&d, &IdentConfig { k: 0, ..IdentConfig::default() }),
            Err(Error::Config(_))
        ));
    }
}
