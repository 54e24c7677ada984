//! Dense linear and small-block semidefinite programming.

mod lp;
mod sdp;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use lp::solve_lp;
pub use sdp::{solve_sdp, PsdBlock, SmallSdp, MAX_BLOCK_SIZE};

pub const DEFAULT_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }
}

/// Sparse row `Σ coeffs[k].1 · x[coeffs[k].0]  (relation)  rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.dot(x);
        match self.relation {
            Relation::Le => (lhs - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - lhs).max(0.0),
            Relation::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// `min cᵀx` subject to linear rows and per-variable bounds.
///
/// Variables default to `[0, +inf)`; use [`set_free`](Self::set_free) or
/// [`set_bounds`](Self::set_bounds) to change that.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            constraints: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    /// Adds a dense row; its length must equal the number of variables.
    pub fn add_row(&mut self, row: &[f64], relation: Relation, rhs: f64) -> Result<()> {
        if row.len() != self.num_vars() {
            return Err(Error::DimensionMismatch {
                expected: self.num_vars(),
                got: row.len(),
            });
        }
        let coeffs = row
            .iter()
            .enumerate()
            .filter(|(_, &a)| a != 0.0)
            .map(|(j, &a)| (j, a))
            .collect();
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
        Ok(())
    }

    pub fn add_sparse_row(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> Result<()> {
        if let Some(&(j, _)) = coeffs.iter().find(|(j, _)| *j >= self.num_vars()) {
            return Err(Error::DimensionMismatch {
                expected: self.num_vars(),
                got: j + 1,
            });
        }
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
        Ok(())
    }

    pub fn set_bounds(&mut self, var: usize, lo: f64, hi: f64) {
        self.bounds[var] = (lo, hi);
    }

    pub fn set_free(&mut self, var: usize) {
        self.bounds[var] = (f64::NEG_INFINITY, f64::INFINITY);
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.bounds.len() != self.num_vars() {
            return Err(Error::DimensionMismatch {
                expected: self.num_vars(),
                got: self.bounds.len(),
            });
        }
        for c in &self.constraints {
            if let Some(&(j, _)) = c.coeffs.iter().find(|(j, _)| *j >= self.num_vars()) {
                return Err(Error::DimensionMismatch {
                    expected: self.num_vars(),
                    got: j + 1,
                });
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|(_, a)| !a.is_finite()) {
                return Err(Error::config("LP data must be finite"));
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::config("LP objective must be finite"));
        }
        Ok(())
    }

    /// Plain-text canonical form, one item per line.
    pub fn to_canonical_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "lp vars {} rows {}", self.num_vars(), self.constraints.len());
        let _ = writeln!(out, "min {}", fmt_dense(&self.objective));
        for c in &self.constraints {
            let _ = writeln!(out, "row {} {} {:e}", fmt_sparse(&c.coeffs), c.relation.symbol(), c.rhs);
        }
        for (j, (lo, hi)) in self.bounds.iter().enumerate() {
            let _ = writeln!(out, "bound {j} {lo:e} {hi:e}");
        }
        out
    }
}

fn fmt_dense(v: &[f64]) -> String {
    v.iter().map(|a| format!("{a:e}")).collect::<Vec<_>>().join(" ")
}

fn fmt_sparse(v: &[(usize, f64)]) -> String {
    v.iter().map(|(j, a)| format!("{j}:{a:e}")).collect::<Vec<_>>().join(" ")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    /// Largest violation of rows, bounds and (for SDPs) block positivity.
    pub primal: f64,
    /// Largest violation of dual feasibility.
    pub dual: f64,
    /// `|primal objective - dual objective|`.
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    /// One multiplier per linear constraint, for `L = cᵀx - yᵀ(Ax - b)`:
    /// `<=` rows have `y <= 0`, `>=` rows `y >= 0`.
    pub duals: Vec<f64>,
    pub residuals: KktResiduals,
    pub iterations: usize,
}

impl SolveReport {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

static DUMP_DIR: RwLock<Option<PathBuf>> = RwLock::new(None);
static DUMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// When set, every solve writes its problem in canonical text form into `dir`.
pub fn set_dump_dir(dir: Option<PathBuf>) {
    *DUMP_DIR.write().unwrap_or_else(|e| e.into_inner()) = dir;
}

pub(crate) fn maybe_dump(kind: &str, text: impl FnOnce() -> String) {
    let dir = DUMP_DIR.read().unwrap_or_else(|e| e.into_inner()).clone();
    if let Some(dir) = dir {
        let id = DUMP_COUNTER.fetch_add(1, Ordering::Relaxed);
        let path = dir.join(format!("{kind}-{id:08}.txt"));
        if let Err(e) = crate::io::write_atomic(&path, text().as_bytes()) {
            log::warn!("could not dump {kind} problem to {}: {e}", path.display());
        }
    }
}

/// Dual residual and dual objective of an LP given multipliers `y`.
pub(crate) fn lp_dual_check(lp: &LinearProgram, y: &[f64]) -> (f64, f64) {
    let mut d = lp.objective.clone();
    let mut dobj = 0.0;
    let mut resid: f64 = 0.0;
    for (c, &yi) in lp.constraints.iter().zip(y) {
        for &(j, a) in &c.coeffs {
            d[j] -= a * yi;
        }
        dobj += c.rhs * yi;
        resid = resid.max(match c.relation {
            Relation::Le => yi.max(0.0),
            Relation::Ge => (-yi).max(0.0),
            Relation::Eq => 0.0,
        });
    }
    for (dj, &(lo, hi)) in d.iter().zip(&lp.bounds) {
        if *dj > 0.0 {
            if lo.is_finite() {
                dobj += lo * dj;
            } else {
                resid = resid.max(*dj);
            }
        } else if *dj < 0.0 {
            if hi.is_finite() {
                dobj += hi * dj;
            } else {
                resid = resid.max(-dj);
            }
        }
    }
    (resid, dobj)
}

pub(crate) fn lp_primal_violation(lp: &LinearProgram, x: &[f64]) -> f64 {
    let rows = lp.constraints.iter().map(|c| c.violation(x)).fold(0.0, f64::max);
    let bounds = x
        .iter()
        .zip(&lp.bounds)
        .map(|(&v, &(lo, hi))| (lo - v).max(v - hi).max(0.0))
        .fold(0.0, f64::max);
    rows.max(bounds)
}
