//! Primal-dual interior point method for `min cᵀx` over linear rows and
//! small linear matrix inequalities `F0 + Σ x_i F_i ⪰ 0`, using
//! Nesterov–Todd scaling and a Mehrotra predictor-corrector step.
//!
//! Internally the problem is `min cᵀx  s.t.  Gx + s = h, Ax = b, s ∈ K`
//! with `K` a product of a nonnegative orthant and PSD cones.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use super::{lp_primal_violation, maybe_dump, KktResiduals, LinearProgram, Relation, SolveReport, SolveStatus};
use crate::error::{Error, Result};

pub const MAX_BLOCK_SIZE: usize = 16;

/// Symmetric affine matrix map `F0 + Σ_i x_i F_i`; entries are given on the
/// upper triangle and mirrored.
#[derive(Clone, Debug, PartialEq)]
pub struct PsdBlock {
    pub size: usize,
    pub constant: Vec<(usize, usize, f64)>,
    /// `(variable, row, col, value)`.
    pub terms: Vec<(usize, usize, usize, f64)>,
}

impl PsdBlock {
    pub fn new(size: usize) -> Self {
        Self {
            size,
            constant: Vec::new(),
            terms: Vec::new(),
        }
    }

    pub fn add_constant(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = (i.min(j), i.max(j));
        self.constant.push((i, j, v));
    }

    pub fn add_term(&mut self, var: usize, i: usize, j: usize, v: f64) {
        let (i, j) = (i.min(j), i.max(j));
        self.terms.push((var, i, j, v));
    }

    pub fn evaluate(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant_matrix();
        for &(var, i, j, v) in &self.terms {
            m[(i, j)] += v * x[var];
            if i != j {
                m[(j, i)] += v * x[var];
            }
        }
        m
    }

    fn coefficient_matrix(&self, var: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.size, self.size);
        for &(k, i, j, v) in &self.terms {
            if k == var {
                m[(i, j)] += v;
                if i != j {
                    m[(j, i)] += v;
                }
            }
        }
        m
    }

    fn constant_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.size, self.size);
        for &(i, j, v) in &self.constant {
            m[(i, j)] += v;
            if i != j {
                m[(j, i)] += v;
            }
        }
        m
    }
}

/// Linear program plus PSD blocks over the same variables.
#[derive(Clone, Debug, PartialEq)]
pub struct SmallSdp {
    pub lp: LinearProgram,
    pub blocks: Vec<PsdBlock>,
}

impl SmallSdp {
    pub fn new(objective: Vec<f64>) -> Self {
        Self {
            lp: LinearProgram::new(objective),
            blocks: Vec::new(),
        }
    }

    pub fn from_lp(lp: LinearProgram) -> Self {
        Self { lp, blocks: Vec::new() }
    }

    pub fn add_block(&mut self, block: PsdBlock) {
        self.blocks.push(block);
    }

    pub fn to_canonical_text(&self) -> String {
        let mut out = self.lp.to_canonical_text();
        for (b, blk) in self.blocks.iter().enumerate() {
            let _ = writeln!(out, "psd {b} size {}", blk.size);
            for &(i, j, v) in &blk.constant {
                let _ = writeln!(out, "psd {b} const {i} {j} {v:e}");
            }
            for &(k, i, j, v) in &blk.terms {
                let _ = writeln!(out, "psd {b} var {k} {i} {j} {v:e}");
            }
        }
        out
    }

    /// Smallest eigenvalue over all blocks at `x` (`+inf` without blocks).
    pub fn min_block_eigenvalue(&self, x: &[f64]) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.evaluate(x).symmetric_eigenvalues().min())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Element of the cone product: orthant part and one symmetric matrix per block.
#[derive(Clone, Debug)]
struct CVec {
    o: DVector<f64>,
    p: Vec<DMatrix<f64>>,
}

impl CVec {
    fn dot(&self, other: &CVec) -> f64 {
        self.o.dot(&other.o) + self.p.iter().zip(&other.p).map(|(a, b)| a.dot(b)).sum::<f64>()
    }

    fn axpy(&mut self, a: f64, other: &CVec) {
        self.o.axpy(a, &other.o, 1.0);
        for (m, o) in self.p.iter_mut().zip(&other.p) {
            *m += o * a;
        }
    }

    fn add(&self, other: &CVec) -> CVec {
        let mut r = self.clone();
        r.axpy(1.0, other);
        r
    }

    fn sub(&self, other: &CVec) -> CVec {
        let mut r = self.clone();
        r.axpy(-1.0, other);
        r
    }

    fn scaled(&self, a: f64) -> CVec {
        CVec {
            o: &self.o * a,
            p: self.p.iter().map(|m| m * a).collect(),
        }
    }

    fn norm_inf(&self) -> f64 {
        self.p.iter().map(|m| amax(m.as_slice())).fold(amax(self.o.as_slice()), f64::max)
    }

    fn identity_like(&self) -> CVec {
        CVec {
            o: DVector::from_element(self.o.len(), 1.0),
            p: self.p.iter().map(|m| DMatrix::identity(m.nrows(), m.ncols())).collect(),
        }
    }

    /// Smallest "eigenvalue": min over orthant entries and block eigenvalues.
    fn min_eig(&self) -> f64 {
        let o = self.o.iter().copied().fold(f64::INFINITY, f64::min);
        self.p
            .iter()
            .map(|m| m.clone().symmetric_eigenvalues().min())
            .fold(o, f64::min)
    }
}

struct Conic {
    n: usize,
    c: DVector<f64>,
    go: DMatrix<f64>,
    gp: Vec<Vec<DMatrix<f64>>>,
    h: CVec,
    a: DMatrix<f64>,
    b: DVector<f64>,
    /// For each original LP row: (orthant row or equality row, sign).
    row_map: Vec<(bool, usize, f64)>,
    degree: f64,
}

impl Conic {
    fn build(sdp: &SmallSdp) -> Result<Self> {
        let lp = &sdp.lp;
        let n = lp.num_vars();
        let mut orows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
        let mut erows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
        let mut row_map = Vec::new();
        for c in &lp.constraints {
            match c.relation {
                Relation::Le => {
                    row_map.push((true, orows.len(), -1.0));
                    orows.push((c.coeffs.clone(), c.rhs));
                }
                Relation::Ge => {
                    row_map.push((true, orows.len(), 1.0));
                    orows.push((c.coeffs.iter().map(|&(j, a)| (j, -a)).collect(), -c.rhs));
                }
                Relation::Eq => {
                    row_map.push((false, erows.len(), -1.0));
                    erows.push((c.coeffs.clone(), c.rhs));
                }
            }
        }
        for (j, &(lo, hi)) in lp.bounds.iter().enumerate() {
            if lo == hi {
                erows.push((vec![(j, 1.0)], lo));
                continue;
            }
            if lo.is_finite() {
                orows.push((vec![(j, -1.0)], -lo));
            }
            if hi.is_finite() {
                orows.push((vec![(j, 1.0)], hi));
            }
        }
        let mut go = DMatrix::zeros(orows.len(), n);
        let mut ho = DVector::zeros(orows.len());
        for (r, (coeffs, rhs)) in orows.iter().enumerate() {
            for &(j, a) in coeffs {
                go[(r, j)] += a;
            }
            ho[r] = *rhs;
        }
        let mut a = DMatrix::zeros(erows.len(), n);
        let mut b = DVector::zeros(erows.len());
        for (r, (coeffs, rhs)) in erows.iter().enumerate() {
            for &(j, v) in coeffs {
                a[(r, j)] += v;
            }
            b[r] = *rhs;
        }
        let mut gp = Vec::new();
        let mut hp = Vec::new();
        for blk in &sdp.blocks {
            if blk.size == 0 || blk.size > MAX_BLOCK_SIZE {
                return Err(Error::config(format!(
                    "PSD block size {} outside 1..={MAX_BLOCK_SIZE}",
                    blk.size
                )));
            }
            if blk.terms.iter().any(|t| t.0 >= n || t.1 >= blk.size || t.2 >= blk.size)
                || blk.constant.iter().any(|t| t.0 >= blk.size || t.1 >= blk.size)
            {
                return Err(Error::config("PSD block entry out of range"));
            }
            gp.push((0..n).map(|k| -blk.coefficient_matrix(k)).collect());
            hp.push(blk.constant_matrix());
        }
        let degree = (orows.len() + sdp.blocks.iter().map(|b| b.size).sum::<usize>()) as f64;
        Ok(Self {
            n,
            c: DVector::from_column_slice(&lp.objective),
            go,
            gp,
            h: CVec { o: ho, p: hp },
            a,
            b,
            row_map,
            degree,
        })
    }

    fn g_mul(&self, x: &DVector<f64>) -> CVec {
        CVec {
            o: &self.go * x,
            p: self
                .gp
                .iter()
                .map(|cols| {
                    let mut m = DMatrix::zeros(cols[0].nrows(), cols[0].ncols());
                    for (k, f) in cols.iter().enumerate() {
                        if x[k] != 0.0 {
                            m += f * x[k];
                        }
                    }
                    m
                })
                .collect(),
        }
    }

    fn gt_mul(&self, z: &CVec) -> DVector<f64> {
        let mut r = self.go.tr_mul(&z.o);
        for (cols, zb) in self.gp.iter().zip(&z.p) {
            for (k, f) in cols.iter().enumerate() {
                r[k] += f.dot(zb);
            }
        }
        r
    }

    fn column(&self, k: usize) -> CVec {
        CVec {
            o: self.go.column(k).into_owned(),
            p: self.gp.iter().map(|cols| cols[k].clone()).collect(),
        }
    }
}

/// Nesterov–Todd scaling point: orthant weights and `R` per block.
struct Scaling {
    w: DVector<f64>,
    r: Vec<DMatrix<f64>>,
    rinv: Vec<DMatrix<f64>>,
    lambda: CVec,
}

impl Scaling {
    fn compute(s: &CVec, z: &CVec) -> Option<Self> {
        let w = s.o.zip_map(&z.o, |a, b| (a / b).sqrt());
        let lo = s.o.zip_map(&z.o, |a, b| (a * b).sqrt());
        let mut r = Vec::new();
        let mut rinv = Vec::new();
        let mut lp = Vec::new();
        for (sb, zb) in s.p.iter().zip(&z.p) {
            let ls = sb.clone().cholesky()?.l();
            let lz = zb.clone().cholesky()?.l();
            let svd = (lz.transpose() * &ls).svd(true, true);
            let (u, vt) = (svd.u?, svd.v_t?);
            let sig = svd.singular_values;
            if sig.iter().any(|&v| !(v > 0.0)) {
                return None;
            }
            let isq = DMatrix::from_diagonal(&sig.map(|v| 1.0 / v.sqrt()));
            r.push(&ls * vt.transpose() * &isq);
            rinv.push(&isq * u.transpose() * lz.transpose());
            lp.push(DMatrix::from_diagonal(&sig));
        }
        Some(Self {
            w,
            r,
            rinv,
            lambda: CVec { o: lo, p: lp },
        })
    }

    /// `W^{-T} u`
    fn inv_t(&self, u: &CVec) -> CVec {
        CVec {
            o: u.o.component_div(&self.w),
            p: u
                .p
                .iter()
                .zip(&self.rinv)
                .map(|(m, ri)| ri * m * ri.transpose())
                .collect(),
        }
    }

    /// `W^{-1} u`
    fn inv(&self, u: &CVec) -> CVec {
        CVec {
            o: u.o.component_div(&self.w),
            p: u
                .p
                .iter()
                .zip(&self.rinv)
                .map(|(m, ri)| ri.transpose() * m * ri)
                .collect(),
        }
    }

    /// `Wᵀ u`
    fn tr(&self, u: &CVec) -> CVec {
        CVec {
            o: u.o.component_mul(&self.w),
            p: u
                .p
                .iter()
                .zip(&self.r)
                .map(|(m, r)| r * m * r.transpose())
                .collect(),
        }
    }
}

fn amax(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn lam(l: &CVec) -> impl Fn(usize, usize, usize) -> f64 + '_ {
    move |b, i, j| l.p[b][(i, i)] + l.p[b][(j, j)]
}

/// Inverse of `u ↦ λ ∘ u`.
fn lambda_div(l: &CVec, u: &CVec) -> CVec {
    let f = lam(l);
    CVec {
        o: u.o.component_div(&l.o),
        p: u
            .p
            .iter()
            .enumerate()
            .map(|(b, m)| DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| 2.0 * m[(i, j)] / f(b, i, j)))
            .collect(),
    }
}

/// Symmetrized product `(UV + VU)/2` per block, elementwise on the orthant.
fn jordan(u: &CVec, v: &CVec) -> CVec {
    CVec {
        o: u.o.component_mul(&v.o),
        p: u
            .p
            .iter()
            .zip(&v.p)
            .map(|(a, b)| {
                let ab = a * b;
                (&ab + ab.transpose()) * 0.5
            })
            .collect(),
    }
}

/// Largest step `α` with `λ + α d` in the cone (λ diagonal per block).
fn max_step(l: &CVec, d: &CVec) -> f64 {
    let mut alpha = f64::INFINITY;
    for (li, di) in l.o.iter().zip(d.o.iter()) {
        if *di < 0.0 {
            alpha = alpha.min(-li / di);
        }
    }
    for (lb, db) in l.p.iter().zip(&d.p) {
        let k = lb.nrows();
        let m = DMatrix::from_fn(k, k, |i, j| db[(i, j)] / (lb[(i, i)] * lb[(j, j)]).sqrt());
        let e = m.symmetric_eigenvalues().min();
        if e < 0.0 {
            alpha = alpha.min(-1.0 / e);
        }
    }
    alpha
}

fn shift_into_interior(u: &mut CVec) {
    let alpha = -u.min_eig();
    if alpha >= 0.0 || !alpha.is_finite() {
        let e = u.identity_like();
        u.axpy(1.0 + alpha.max(0.0), &e);
    }
}

struct Kkt {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    mat: DMatrix<f64>,
    n: usize,
}

impl Kkt {
    fn new(h: DMatrix<f64>, a: &DMatrix<f64>) -> Option<Self> {
        let n = h.nrows();
        let p = a.nrows();
        let scale = 1.0 + h.diagonal().amax();
        let mut k = DMatrix::zeros(n + p, n + p);
        k.view_mut((0, 0), (n, n)).copy_from(&h);
        for i in 0..n {
            k[(i, i)] += 1e-13 * scale;
        }
        k.view_mut((n, 0), (p, n)).copy_from(a);
        k.view_mut((0, n), (n, p)).copy_from(&a.transpose());
        for i in 0..p {
            k[(n + i, n + i)] -= 1e-13 * scale;
        }
        let lu = k.clone().lu();
        if !lu.is_invertible() {
            return None;
        }
        Some(Self { lu, mat: k, n })
    }

    fn solve(&self, rx: &DVector<f64>, ry: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        let rhs = DVector::from_iterator(self.mat.nrows(), rx.iter().chain(ry.iter()).copied());
        let mut sol = self.lu.solve(&rhs)?;
        // one step of iterative refinement
        let res = &rhs - &self.mat * &sol;
        if let Some(corr) = self.lu.solve(&res) {
            sol += corr;
        }
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let dx = sol.rows(0, self.n).into_owned();
        let dy = sol.rows(self.n, sol.len() - self.n).into_owned();
        Some((dx, dy))
    }
}

struct Iterate {
    x: DVector<f64>,
    y: DVector<f64>,
    s: CVec,
    z: CVec,
}

/// Solves `sdp`; blocks larger than [`MAX_BLOCK_SIZE`] are rejected.
pub fn solve_sdp(sdp: &SmallSdp, tol: f64, max_iter: usize) -> Result<SolveReport> {
    sdp.lp.validate()?;
    maybe_dump("sdp", || sdp.to_canonical_text());
    for &(lo, hi) in &sdp.lp.bounds {
        if lo > hi {
            return Ok(report(sdp, SolveStatus::Infeasible, &fallback(sdp), None, 0));
        }
    }
    let cp = Conic::build(sdp)?;
    let n = cp.n;

    // Initial point from the W = I least-squares systems.
    let gcols: Vec<CVec> = (0..n).map(|k| cp.column(k)).collect();
    let h0 = DMatrix::from_fn(n, n, |i, j| gcols[i].dot(&gcols[j]));
    let Some(kkt0) = Kkt::new(h0, &cp.a) else {
        return Ok(report(sdp, SolveStatus::MaxIter, &fallback(sdp), None, 0));
    };
    let (x0, _) = kkt0
        .solve(&cp.gt_mul(&cp.h), &cp.b)
        .ok_or_else(|| Error::Solver("initial system singular".into()))?;
    let (u0, y0) = kkt0
        .solve(&(-&cp.c), &DVector::zeros(cp.b.len()))
        .ok_or_else(|| Error::Solver("initial system singular".into()))?;
    let mut s = cp.h.sub(&cp.g_mul(&x0));
    let mut z = cp.g_mul(&u0);
    shift_into_interior(&mut s);
    shift_into_interior(&mut z);
    let mut it = Iterate { x: x0, y: y0, s, z };

    let hnorm = cp.h.norm_inf().max(amax(cp.b.as_slice())).max(1.0);
    let cnorm = amax(cp.c.as_slice()).max(1.0);
    let mut best: Option<(f64, DVector<f64>, DVector<f64>, CVec)> = None;
    let mut iterations = 0;
    let mut status = SolveStatus::MaxIter;

    for iter in 0..=max_iter {
        iterations = iter;
        let rx = &cp.c + cp.a.tr_mul(&it.y) + cp.gt_mul(&it.z);
        let ry = &cp.a * &it.x - &cp.b;
        let rz = cp.g_mul(&it.x).add(&it.s).sub(&cp.h);
        let pobj = cp.c.dot(&it.x);
        let dobj = -cp.b.dot(&it.y) - cp.h.dot(&it.z);
        let gap = it.s.dot(&it.z);
        let pres = amax(ry.as_slice()).max(rz.norm_inf()) / hnorm;
        let dres = amax(rx.as_slice()) / cnorm;
        let rel_gap = gap.max((pobj - dobj).abs()) / (1.0 + pobj.abs().min(dobj.abs()));
        let merit = pres.max(dres).max(rel_gap);
        if best.as_ref().is_none_or(|b| merit < b.0) {
            best = Some((merit, it.x.clone(), it.y.clone(), it.z.clone()));
        }
        if pres <= 0.1 * tol && dres <= 0.1 * tol && rel_gap <= 0.1 * tol {
            status = SolveStatus::Optimal;
            break;
        }
        // certificates
        let hz = cp.h.dot(&it.z) + cp.b.dot(&it.y);
        if hz < 0.0 {
            let res = amax((cp.a.tr_mul(&it.y) + cp.gt_mul(&it.z)).as_slice());
            if res / -hz <= tol && it.z.norm_inf() > 1e6 {
                status = SolveStatus::Infeasible;
                break;
            }
        }
        if pobj < 0.0 {
            let gx = cp.g_mul(&it.x).add(&it.s).norm_inf();
            let ax = amax((&cp.a * &it.x).as_slice());
            if gx.max(ax) / -pobj <= tol && amax(it.x.as_slice()) > 1e6 {
                status = SolveStatus::Unbounded;
                break;
            }
        }
        if iter == max_iter {
            break;
        }

        let Some(w) = Scaling::compute(&it.s, &it.z) else {
            break;
        };
        let gt: Vec<CVec> = gcols.iter().map(|g| w.inv_t(g)).collect();
        let hmat = DMatrix::from_fn(n, n, |i, j| gt[i].dot(&gt[j]));
        let Some(kkt) = Kkt::new(hmat, &cp.a) else {
            break;
        };
        let wrz = w.inv_t(&rz);
        let solve = |ds: &CVec| -> Option<(DVector<f64>, DVector<f64>, CVec, CVec)> {
            let q = lambda_div(&w.lambda, ds);
            let t = q.add(&wrz);
            let mut r1 = -&rx;
            for (k, g) in gt.iter().enumerate() {
                r1[k] -= g.dot(&t);
            }
            let (dx, dy) = kkt.solve(&r1, &(-&ry))?;
            let mut dzt = t.clone();
            for (k, g) in gt.iter().enumerate() {
                if dx[k] != 0.0 {
                    dzt.axpy(dx[k], g);
                }
            }
            let dst = q.sub(&dzt);
            Some((dx, dy, dst, dzt))
        };
        let ll = jordan(&w.lambda, &w.lambda);
        let Some((_, _, dsa, dza)) = solve(&ll.scaled(-1.0)) else {
            break;
        };
        let alpha_aff = max_step(&w.lambda, &dsa).min(max_step(&w.lambda, &dza)).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);
        let mu = gap / cp.degree.max(1.0);
        let mut ds = ll.scaled(-1.0);
        ds.axpy(-1.0, &jordan(&dsa, &dza));
        ds.axpy(sigma * mu, &w.lambda.identity_like());
        let Some((dx, dy, dst, dzt)) = solve(&ds) else {
            break;
        };
        let amax = max_step(&w.lambda, &dst).min(max_step(&w.lambda, &dzt));
        let alpha = (0.99 * amax).min(1.0);
        if !(alpha > 1e-14) {
            break;
        }
        it.x.axpy(alpha, &dx, 1.0);
        it.y.axpy(alpha, &dy, 1.0);
        it.s.axpy(alpha, &w.tr(&dst));
        it.z.axpy(alpha, &w.inv(&dzt));
    }

    let (x, y, z) = if status == SolveStatus::Optimal {
        (it.x, it.y, it.z)
    } else {
        let b = best.expect("at least one iterate");
        (b.1, b.2, b.3)
    };
    let duals = lp_duals(&cp, &y, &z);
    let xs: Vec<f64> = x.iter().copied().collect();
    let dual_objective = -cp.b.dot(&y) - cp.h.dot(&z);
    let dual_resid = amax((&cp.c + cp.a.tr_mul(&y) + cp.gt_mul(&z)).as_slice())
        .max((-z.min_eig()).max(0.0));
    let mut rep = report(
        sdp,
        status,
        &xs,
        Some((duals, dual_objective, dual_resid)),
        iterations,
    );
    if rep.status == SolveStatus::Optimal {
        let r = rep.residuals;
        if !(r.primal <= tol && r.dual <= tol * cnorm && r.gap <= tol * (1.0 + rep.objective.abs())) {
            rep.status = SolveStatus::MaxIter;
        }
    }
    Ok(rep)
}

fn lp_duals(cp: &Conic, y: &DVector<f64>, z: &CVec) -> Vec<f64> {
    cp.row_map
        .iter()
        .map(|&(orth, r, sign)| if orth { sign * z.o[r] } else { sign * y[r] })
        .collect()
}

fn fallback(sdp: &SmallSdp) -> Vec<f64> {
    vec![0.0; sdp.lp.num_vars()]
}

fn report(
    sdp: &SmallSdp,
    status: SolveStatus,
    x: &[f64],
    dual: Option<(Vec<f64>, f64, f64)>,
    iterations: usize,
) -> SolveReport {
    let objective: f64 = sdp.lp.objective.iter().zip(x).map(|(c, v)| c * v).sum();
    let primal = lp_primal_violation(&sdp.lp, x).max((-sdp.min_block_eigenvalue(x)).max(0.0));
    let (duals, dual_objective, dres) =
        dual.unwrap_or_else(|| (vec![0.0; sdp.lp.constraints.len()], f64::NAN, f64::NAN));
    SolveReport {
        status,
        x: x.to_vec(),
        objective,
        dual_objective,
        duals,
        residuals: KktResiduals {
            primal,
            dual: dres,
            gap: (objective - dual_objective).abs(),
        },
        iterations,
    }
}
