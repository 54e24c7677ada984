//! Two-phase primal simplex with bounded variables on a dense tableau.
//!
//! Every row gets a slack (inequalities) and an artificial column. The
//! initial basis is a signed identity made of slacks where the starting point
//! already satisfies the row and artificials elsewhere, so the artificial
//! block of the tableau always holds a signed copy of the basis inverse.

use nalgebra::DMatrix;

use super::{lp_dual_check, lp_primal_violation, maybe_dump, KktResiduals, LinearProgram, Relation, SolveReport, SolveStatus};
use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-10;
const DEGENERATE_SWITCH: usize = 50;
const REFACTOR_EVERY: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq)]
enum State {
    Basic,
    Lower,
    Upper,
    Zero,
}

struct Tableau {
    m: usize,
    ncols: usize,
    n: usize,
    art0: usize,
    t: Vec<f64>,
    beta: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<State>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost1: Vec<f64>,
    cost2: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    cols: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
    iterations: usize,
    since_refactor: usize,
}

enum Step {
    Optimal,
    Unbounded,
    Moved,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let m = lp.constraints.len();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, c) in lp.constraints.iter().enumerate() {
            for &(j, a) in &c.coeffs {
                if a != 0.0 {
                    cols[j].push((i, a));
                }
            }
        }
        // merge duplicate (row, var) entries
        for col in cols.iter_mut() {
            col.sort_by_key(|e| e.0);
            col.dedup_by(|b, a| {
                if a.0 == b.0 {
                    a.1 += b.1;
                    true
                } else {
                    false
                }
            });
        }
        let mut lo: Vec<f64> = lp.bounds.iter().map(|b| b.0).collect();
        let mut hi: Vec<f64> = lp.bounds.iter().map(|b| b.1).collect();
        let mut slack_of = vec![None; m];
        for (i, c) in lp.constraints.iter().enumerate() {
            let coef = match c.relation {
                Relation::Le => 1.0,
                Relation::Ge => -1.0,
                Relation::Eq => continue,
            };
            slack_of[i] = Some(cols.len());
            cols.push(vec![(i, coef)]);
            lo.push(0.0);
            hi.push(f64::INFINITY);
        }
        let art0 = cols.len();
        let ncols = art0 + m;

        let start = |j: usize, lo: &[f64], hi: &[f64]| -> (State, f64) {
            if lo[j].is_finite() {
                (State::Lower, lo[j])
            } else if hi[j].is_finite() {
                (State::Upper, hi[j])
            } else {
                (State::Zero, 0.0)
            }
        };
        let mut state = Vec::with_capacity(ncols);
        let mut resid: Vec<f64> = lp.constraints.iter().map(|c| c.rhs).collect();
        for j in 0..art0 {
            let (s, v) = start(j, &lo, &hi);
            state.push(s);
            if v != 0.0 {
                for &(i, a) in &cols[j] {
                    resid[i] -= a * v;
                }
            }
        }
        let mut basis = vec![0; m];
        let mut sign = vec![1.0; m];
        let mut beta = vec![0.0; m];
        let mut cost1 = vec![0.0; ncols];
        for i in 0..m {
            let slack_ok = slack_of[i].map(|s| {
                let coef = cols[s][0].1;
                (s, coef, resid[i] / coef)
            });
            match slack_ok {
                Some((s, coef, v)) if v >= 0.0 => {
                    basis[i] = s;
                    sign[i] = coef;
                    beta[i] = v;
                    state[s] = State::Basic;
                }
                _ => {
                    sign[i] = if resid[i] < 0.0 { -1.0 } else { 1.0 };
                    basis[i] = art0 + i;
                    beta[i] = resid[i].abs();
                    cost1[art0 + i] = 1.0;
                }
            }
        }
        for i in 0..m {
            cols.push(vec![(i, sign[i])]);
            lo.push(0.0);
            hi.push(f64::INFINITY);
            state.push(if basis[i] == art0 + i { State::Basic } else { State::Lower });
        }
        let mut t = vec![0.0; m * ncols];
        for (j, col) in cols.iter().enumerate() {
            for &(i, a) in col {
                t[i * ncols + j] = a * sign[i];
            }
        }
        let mut cost2 = lp.objective.clone();
        cost2.resize(ncols, 0.0);
        let mut d1 = cost1.clone();
        for i in 0..m {
            let cb = cost1[basis[i]];
            if cb != 0.0 {
                for j in 0..ncols {
                    d1[j] -= cb * t[i * ncols + j];
                }
            }
        }
        let d2 = cost2.clone();
        Self {
            m,
            ncols,
            n,
            art0,
            t,
            beta,
            basis,
            state,
            lo,
            hi,
            cost1,
            cost2,
            d1,
            d2,
            cols,
            rhs: lp.constraints.iter().map(|c| c.rhs).collect(),
            iterations: 0,
            since_refactor: 0,
        }
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.state[j] {
            State::Lower => self.lo[j],
            State::Upper => self.hi[j],
            State::Zero | State::Basic => 0.0,
        }
    }

    fn price(&self, phase1: bool, bland: bool) -> Option<(usize, f64)> {
        let d = if phase1 { &self.d1 } else { &self.d2 };
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.ncols {
            if self.lo[j] == self.hi[j] {
                continue;
            }
            let dir = match self.state[j] {
                State::Basic => continue,
                State::Lower if d[j] < -COST_TOL => 1.0,
                State::Upper if d[j] > COST_TOL => -1.0,
                State::Zero if d[j].abs() > COST_TOL => -d[j].signum(),
                _ => continue,
            };
            if bland {
                return Some((j, dir));
            }
            let score = d[j].abs();
            if score > best_score {
                best_score = score;
                best = Some((j, dir));
            }
        }
        best
    }

    fn step(&mut self, phase1: bool, bland: bool) -> (Step, bool) {
        let Some((q, dir)) = self.price(phase1, bland) else {
            return (Step::Optimal, false);
        };
        let nc = self.ncols;
        // ratio test
        let mut theta = if self.lo[q].is_finite() && self.hi[q].is_finite() {
            self.hi[q] - self.lo[q]
        } else {
            f64::INFINITY
        };
        let mut leave: Option<usize> = None;
        let mut leave_alpha = 0.0f64;
        for i in 0..self.m {
            let alpha = dir * self.t[i * nc + q];
            if alpha.abs() <= PIVOT_TOL {
                continue;
            }
            let b = self.basis[i];
            let limit = if alpha > 0.0 {
                if !self.lo[b].is_finite() {
                    continue;
                }
                ((self.beta[i] - self.lo[b]) / alpha).max(0.0)
            } else {
                if !self.hi[b].is_finite() {
                    continue;
                }
                ((self.hi[b] - self.beta[i]) / -alpha).max(0.0)
            };
            let better = match leave {
                _ if limit < theta - 1e-12 => true,
                Some(r) if limit <= theta + 1e-12 => {
                    if bland {
                        b < self.basis[r]
                    } else {
                        alpha.abs() > leave_alpha.abs()
                    }
                }
                None if limit <= theta + 1e-12 && theta.is_finite() => {
                    // prefer a real pivot over an equal-length bound flip
                    true
                }
                _ => false,
            };
            if better {
                theta = limit;
                leave = Some(i);
                leave_alpha = alpha;
            }
        }
        if theta.is_infinite() {
            return (Step::Unbounded, false);
        }
        self.iterations += 1;
        let degenerate = theta <= 1e-12;
        // move basics along the edge
        if theta > 0.0 {
            for i in 0..self.m {
                let a = self.t[i * nc + q];
                if a != 0.0 {
                    self.beta[i] -= dir * theta * a;
                }
            }
        }
        let entering_value = self.nonbasic_value(q) + dir * theta;
        match leave {
            None => {
                self.state[q] = if dir > 0.0 { State::Upper } else { State::Lower };
            }
            Some(r) => {
                let b = self.basis[r];
                let alpha = dir * self.t[r * nc + q];
                self.state[b] = if alpha > 0.0 { State::Lower } else { State::Upper };
                if !self.lo[b].is_finite() && !self.hi[b].is_finite() {
                    self.state[b] = State::Zero;
                }
                self.pivot(r, q);
                self.beta[r] = entering_value;
                self.basis[r] = q;
                self.state[q] = State::Basic;
                self.since_refactor += 1;
            }
        }
        (Step::Moved, degenerate)
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let nc = self.ncols;
        let piv = self.t[r * nc + q];
        let inv = 1.0 / piv;
        let row_r: Vec<(usize, f64)> = (0..nc)
            .filter_map(|j| {
                let v = self.t[r * nc + j];
                (v != 0.0).then_some((j, v * inv))
            })
            .collect();
        for j in 0..nc {
            self.t[r * nc + j] = 0.0;
        }
        for &(j, v) in &row_r {
            self.t[r * nc + j] = v;
        }
        self.t[r * nc + q] = 1.0;
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * nc + q];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.t[i * nc..(i + 1) * nc];
            for &(j, v) in &row_r {
                row[j] -= f * v;
            }
            row[q] = 0.0;
        }
        for d in [&mut self.d1, &mut self.d2] {
            let f = d[q];
            if f != 0.0 {
                for &(j, v) in &row_r {
                    d[j] -= f * v;
                }
                d[q] = 0.0;
            }
        }
    }

    /// Rebuilds tableau, basic values and reduced costs from the original data.
    fn refactor(&mut self) -> Result<DMatrix<f64>> {
        let m = self.m;
        let nc = self.ncols;
        let mut b = DMatrix::<f64>::zeros(m, m);
        for (i, &j) in self.basis.iter().enumerate() {
            for &(r, a) in &self.cols[j] {
                b[(r, i)] = a;
            }
        }
        let binv = b
            .clone()
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::Solver("simplex basis became singular".into()))?;
        for j in 0..nc {
            let mut col = vec![0.0; m];
            for &(r, a) in &self.cols[j] {
                for i in 0..m {
                    col[i] += binv[(i, r)] * a;
                }
            }
            for i in 0..m {
                self.t[i * nc + j] = if col[i].abs() < 1e-14 { 0.0 } else { col[i] };
            }
        }
        let mut resid = self.rhs.clone();
        for j in 0..nc {
            if self.state[j] != State::Basic {
                let v = self.nonbasic_value(j);
                if v != 0.0 {
                    for &(r, a) in &self.cols[j] {
                        resid[r] -= a * v;
                    }
                }
            }
        }
        for i in 0..m {
            self.beta[i] = (0..m).map(|r| binv[(i, r)] * resid[r]).sum();
        }
        for (d, c) in [(&mut self.d1, &self.cost1), (&mut self.d2, &self.cost2)] {
            d.copy_from_slice(c);
            for i in 0..m {
                let cb = c[self.basis[i]];
                if cb != 0.0 {
                    for j in 0..nc {
                        d[j] -= cb * self.t[i * nc + j];
                    }
                }
            }
            for &j in &self.basis {
                d[j] = 0.0;
            }
        }
        self.since_refactor = 0;
        Ok(binv)
    }

    fn run(&mut self, phase1: bool, max_iter: usize) -> Result<Option<SolveStatus>> {
        let mut degenerate_run = 0;
        loop {
            if self.iterations >= max_iter {
                return Ok(Some(SolveStatus::MaxIter));
            }
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
            let (step, degenerate) = self.step(phase1, degenerate_run >= DEGENERATE_SWITCH);
            match step {
                Step::Optimal => return Ok(None),
                Step::Unbounded => return Ok(Some(SolveStatus::Unbounded)),
                Step::Moved => {
                    degenerate_run = if degenerate { degenerate_run + 1 } else { 0 };
                }
            }
        }
    }

    fn values(&self) -> Vec<f64> {
        let mut x: Vec<f64> = (0..self.n).map(|j| self.nonbasic_value(j)).collect();
        for (i, &j) in self.basis.iter().enumerate() {
            if j < self.n {
                x[j] = self.beta[i].clamp(self.lo[j], self.hi[j]);
            }
        }
        x
    }

    fn infeasibility(&self) -> f64 {
        self.basis
            .iter()
            .zip(&self.beta)
            .filter(|(&j, _)| j >= self.art0)
            .map(|(_, &v)| v.max(0.0))
            .sum()
    }
}

/// Solves `lp` to optimality; failure modes are reported through the status.
pub fn solve_lp(lp: &LinearProgram, tol: f64, max_iter: usize) -> Result<SolveReport> {
    lp.validate()?;
    maybe_dump("lp", || lp.to_canonical_text());
    let n = lp.num_vars();
    let m = lp.constraints.len();
    for &(lo, hi) in &lp.bounds {
        if lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
            return Ok(failed(lp, SolveStatus::Infeasible, vec![0.0; n], 0));
        }
    }
    let mut tab = Tableau::build(lp);
    let bscale = 1.0 + lp.constraints.iter().map(|c| c.rhs.abs()).fold(0.0, f64::max);

    if tab.cost1.iter().any(|&c| c != 0.0) {
        if let Some(status) = tab.run(true, max_iter)? {
            if status == SolveStatus::MaxIter {
                let x = tab.values();
                return Ok(failed(lp, status, x, tab.iterations));
            }
        }
        tab.refactor()?;
        if tab.infeasibility() > tol * bscale {
            // one more pass from a clean factorization
            tab.run(true, max_iter)?;
            tab.refactor()?;
            if tab.infeasibility() > tol * bscale {
                let x = tab.values();
                return Ok(failed(lp, SolveStatus::Infeasible, x, tab.iterations));
            }
        }
    }
    for j in tab.art0..tab.ncols {
        tab.hi[j] = 0.0;
        if tab.state[j] == State::Upper {
            tab.state[j] = State::Lower;
        }
    }
    for i in 0..m {
        if tab.basis[i] >= tab.art0 {
            tab.beta[i] = tab.beta[i].clamp(0.0, 0.0);
        }
    }

    let mut binv;
    let mut rounds = 0;
    loop {
        if let Some(status) = tab.run(false, max_iter)? {
            let x = tab.values();
            return Ok(failed(lp, status, x, tab.iterations));
        }
        binv = tab.refactor()?;
        rounds += 1;
        if tab.price(false, false).is_none() || rounds >= 5 {
            break;
        }
    }

    let x = tab.values();
    // y = B^{-T} c_B
    let cb: Vec<f64> = tab.basis.iter().map(|&j| tab.cost2[j]).collect();
    let y: Vec<f64> = (0..m).map(|r| (0..m).map(|i| binv[(i, r)] * cb[i]).sum()).collect();
    let objective: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    let (dual_resid, dual_objective) = lp_dual_check(lp, &y);
    let residuals = KktResiduals {
        primal: lp_primal_violation(lp, &x),
        dual: dual_resid,
        gap: (objective - dual_objective).abs(),
    };
    let cscale = 1.0 + lp.objective.iter().map(|c| c.abs()).fold(0.0, f64::max);
    let ok = residuals.primal <= tol
        && residuals.dual <= tol * cscale
        && residuals.gap <= tol * (1.0 + objective.abs());
    Ok(SolveReport {
        status: if ok { SolveStatus::Optimal } else { SolveStatus::MaxIter },
        x,
        objective,
        dual_objective,
        duals: y,
        residuals,
        iterations: tab.iterations,
    })
}

fn failed(lp: &LinearProgram, status: SolveStatus, x: Vec<f64>, iterations: usize) -> SolveReport {
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    SolveReport {
        status,
        residuals: KktResiduals {
            primal: lp_primal_violation(lp, &x),
            dual: f64::NAN,
            gap: f64::NAN,
        },
        objective,
        dual_objective: f64::NAN,
        duals: vec![0.0; lp.constraints.len()],
        x,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = 1e-7;

    #[test]
    fn single_lower_bound() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.set_free(0);
        lp.add_row(&[1.0], Relation::Ge, 1.0).unwrap();
        let r = solve_lp(&lp, TOL, 1000).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.x[0] - 1.0).abs() < 1e-9 && (r.objective - 1.0).abs() < 1e-9);
        assert!((r.duals[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_segment() {
        let mut lp = LinearProgram::new(vec![-1.0, -1.0]);
        lp.add_row(&[1.0, 1.0], Relation::Le, 1.0).unwrap();
        let r = solve_lp(&lp, TOL, 1000).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective + 1.0).abs() < TOL);
        assert!(r.dual_objective <= r.objective + TOL);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add_row(&[1.0], Relation::Le, -1.0).unwrap();
        assert_eq!(solve_lp(&lp, TOL, 100).unwrap().status, SolveStatus::Infeasible);
        let mut lp = LinearProgram::new(vec![-1.0, 0.0]);
        lp.add_row(&[1.0, -1.0], Relation::Le, 1.0).unwrap();
        assert_eq!(solve_lp(&lp, TOL, 100).unwrap().status, SolveStatus::Unbounded);
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.set_bounds(0, 2.0, 1.0);
        assert_eq!(solve_lp(&lp, TOL, 100).unwrap().status, SolveStatus::Infeasible);
    }

    #[test]
    fn bounded_and_free_variables() {
        // min -x + y, -2 <= x <= 3, y free, y >= x - 1, y >= -x - 1
        let mut lp = LinearProgram::new(vec![-1.0, 1.0]);
        lp.set_bounds(0, -2.0, 3.0);
        lp.set_free(1);
        lp.add_row(&[-1.0, 1.0], Relation::Ge, -1.0).unwrap();
        lp.add_row(&[1.0, 1.0], Relation::Ge, -1.0).unwrap();
        let r = solve_lp(&lp, TOL, 100).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        // y = x - 1 on the right, objective -x + x - 1 = -1 for x >= 0
        assert!((r.objective + 1.0).abs() < 1e-9, "{r:?}");
    }

    #[test]
    fn equality_rows_and_max_iter() {
        let mut lp = LinearProgram::new(vec![1.0, 2.0, 3.0]);
        lp.add_row(&[1.0, 1.0, 1.0], Relation::Eq, 6.0).unwrap();
        lp.add_row(&[1.0, -1.0, 0.0], Relation::Eq, 0.0).unwrap();
        let r = solve_lp(&lp, TOL, 100).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 9.0).abs() < 1e-9);
        assert_eq!(solve_lp(&lp, TOL, 0).unwrap().status, SolveStatus::MaxIter);
    }

    fn random_lp(rng: &mut ChaCha8Rng) -> LinearProgram {
        let n = rng.random_range(1..=6);
        let m = rng.random_range(1..=10);
        let obj = (0..n).map(|_| rng.random_range(-5i32..=5) as f64).collect();
        let mut lp = LinearProgram::new(obj);
        for j in 0..n {
            let hi = if rng.random_bool(0.5) { rng.random_range(1..=8) as f64 } else { 10.0 };
            lp.set_bounds(j, 0.0, hi);
        }
        for _ in 0..m {
            let row: Vec<f64> = (0..n).map(|_| rng.random_range(-4i32..=4) as f64).collect();
            let rel = match rng.random_range(0..5) {
                0 => Relation::Eq,
                1 | 2 => Relation::Ge,
                _ => Relation::Le,
            };
            lp.add_row(&row, rel, rng.random_range(-6i32..=10) as f64).unwrap();
        }
        lp
    }

    // Vertex enumeration: every vertex of the (bounded) feasible set is the
    // solution of n linearly independent active constraints.
    fn brute_force(lp: &LinearProgram) -> Option<f64> {
        let n = lp.num_vars();
        let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
        for c in &lp.constraints {
            let mut r = vec![0.0; n];
            for &(j, a) in &c.coeffs {
                r[j] += a;
            }
            rows.push((r, c.rhs));
        }
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            rows.push((e.clone(), lp.bounds[j].0));
            rows.push((e, lp.bounds[j].1));
        }
        let mut best: Option<f64> = None;
        let mut pick = Vec::new();
        fn rec(
            start: usize,
            n: usize,
            rows: &[(Vec<f64>, f64)],
            pick: &mut Vec<usize>,
            lp: &LinearProgram,
            best: &mut Option<f64>,
        ) {
            if pick.len() == n {
                let a = DMatrix::from_fn(n, n, |i, j| rows[pick[i]].0[j]);
                let b = nalgebra::DVector::from_fn(n, |i, _| rows[pick[i]].1);
                if a.determinant().abs() < 1e-9 {
                    return;
                }
                if let Some(x) = a.lu().solve(&b) {
                    let x: Vec<f64> = x.iter().copied().collect();
                    if lp_primal_violation(lp, &x) <= 1e-9 {
                        let v: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
                        if best.map_or(true, |b| v < b) {
                            *best = Some(v);
                        }
                    }
                }
                return;
            }
            for i in start..rows.len() {
                pick.push(i);
                rec(i + 1, n, rows, pick, lp, best);
                pick.pop();
            }
        }
        rec(0, n, &rows, &mut pick, lp, &mut best);
        best
    }

    #[test]
    fn random_lps_match_vertex_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut feasible = 0;
        for _ in 0..100 {
            let lp = random_lp(&mut rng);
            let oracle = brute_force(&lp);
            let r = solve_lp(&lp, TOL, 10_000).unwrap();
            match oracle {
                Some(v) => {
                    feasible += 1;
                    assert_eq!(r.status, SolveStatus::Optimal, "{}", lp.to_canonical_text());
                    assert!((r.objective - v).abs() <= 1e-6, "{} vs {v}", r.objective);
                    assert!(r.dual_objective <= r.objective + TOL);
                    assert!(r.residuals.primal <= TOL);
                }
                None => assert_eq!(r.status, SolveStatus::Infeasible),
            }
        }
        assert!(feasible > 30);
    }

    #[test]
    fn determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lp = random_lp(&mut rng);
        let a = format!("{:?}", solve_lp(&lp, TOL, 1000).unwrap());
        assert_eq!(a, format!("{:?}", solve_lp(&lp, TOL, 1000).unwrap()));
    }

    #[test]
    fn highly_degenerate_problem_terminates() {
        // many redundant rows through the optimal vertex
        let n = 4;
        let mut lp = LinearProgram::new(vec![-1.0; n]);
        for k in 0..40 {
            let row: Vec<f64> = (0..n).map(|j| 1.0 + ((j + k) % 3) as f64).collect();
            let s: f64 = row.iter().sum();
            lp.add_row(&row, Relation::Le, s).unwrap();
        }
        for j in 0..n {
            lp.set_bounds(j, 0.0, 1.0);
        }
        let r = solve_lp(&lp, TOL, 10_000).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective + n as f64).abs() < 1e-9);
    }
}
