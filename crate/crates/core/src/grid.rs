//! Uniform cubical grids over a rectangular domain.
//!
//! Cells are addressed either by a multi-index or by a row-major linear
//! index (last axis varies fastest). All realizations are closed boxes, so
//! cells sharing a face both intersect a query touching that face.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed axis-aligned box `[lower, upper]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cuboid {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Cuboid {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::config(format!(
                "box lower {lower:?} must not exceed upper {upper:?}"
            )));
        }
        Ok(Self { lower, upper })
    }

    /// Degenerate box holding one point.
    pub fn point(x: &[f64]) -> Self {
        Self {
            lower: x.to_vec(),
            upper: x.to_vec(),
        }
    }

    /// Smallest box enclosing all `points`. Returns `None` for an empty set.
    pub fn enclosing<'a, I>(points: I) -> Option<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut iter = points.into_iter();
        let first = iter.next()?;
        let mut lower = first.to_vec();
        let mut upper = first.to_vec();
        for p in iter {
            for d in 0..lower.len() {
                lower[d] = lower[d].min(p[d]);
                upper[d] = upper[d].max(p[d]);
            }
        }
        Some(Self { lower, upper })
    }

    pub fn square(lo: f64, hi: f64, dim: usize) -> Self {
        Self {
            lower: vec![lo; dim],
            upper: vec![hi; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn width(&self, d: usize) -> f64 {
        self.upper[d] - self.lower[d]
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    /// Grow by `eps` on every side (sup-metric neighbourhood).
    pub fn inflated(&self, eps: f64) -> Self {
        Self {
            lower: self.lower.iter().map(|l| l - eps).collect(),
            upper: self.upper.iter().map(|u| u + eps).collect(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(d, v)| self.lower[d] <= *v && *v <= self.upper[d])
    }

    pub fn contains_box(&self, other: &Cuboid) -> bool {
        (0..self.dim()).all(|d| self.lower[d] <= other.lower[d] && other.upper[d] <= self.upper[d])
    }

    /// Closed-set overlap test.
    pub fn intersects(&self, other: &Cuboid) -> bool {
        (0..self.dim()).all(|d| self.lower[d] <= other.upper[d] && other.lower[d] <= self.upper[d])
    }

    pub fn union(&self, other: &Cuboid) -> Cuboid {
        Cuboid {
            lower: self.lower.iter().zip(&other.lower).map(|(a, b)| a.min(*b)).collect(),
            upper: self.upper.iter().zip(&other.upper).map(|(a, b)| a.max(*b)).collect(),
        }
    }

    /// Euclidean distance from `x` to the box (zero inside).
    pub fn distance_to(&self, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .map(|(d, v)| {
                let c = v.clamp(self.lower[d], self.upper[d]);
                (v - c) * (v - c)
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Multi-index of a grid cell.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex(pub Vec<usize>);

impl CellIndex {
    pub fn new(idx: Vec<usize>) -> Self {
        Self(idx)
    }
}

/// Result of a box (or ball) query against the grid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CellQuery {
    /// Linear indices of intersected in-domain cells, ascending.
    pub cells: Vec<usize>,
    /// The query region reaches outside the domain.
    pub query_escapes_domain: bool,
}

/// Uniform cubical grid on a box domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubicalGrid {
    pub domain: Cuboid,
    pub subdivisions: Vec<usize>,
}

impl CubicalGrid {
    pub fn new(domain: Cuboid, subdivisions: Vec<usize>) -> Result<Self> {
        if domain.dim() == 0 {
            return Err(Error::config("grid dimension must be positive"));
        }
        if subdivisions.len() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                got: subdivisions.len(),
            });
        }
        if subdivisions.iter().any(|&s| s == 0) {
            return Err(Error::config("subdivisions must be positive"));
        }
        if domain.lower.iter().zip(&domain.upper).any(|(l, u)| !(l < u)) {
            return Err(Error::config("grid domain must have positive width on every axis"));
        }
        Ok(Self {
            domain,
            subdivisions,
        })
    }

    /// `2^exponent` cells along every axis.
    pub fn dyadic(domain: Cuboid, exponent: u32) -> Result<Self> {
        let n = domain.dim();
        Self::new(domain, vec![1usize << exponent; n])
    }

    pub fn dim(&self) -> usize {
        self.subdivisions.len()
    }

    pub fn num_cells(&self) -> usize {
        self.subdivisions.iter().product()
    }

    pub fn cell_width(&self, d: usize) -> f64 {
        self.domain.width(d) / self.subdivisions[d] as f64
    }

    pub fn min_cell_width(&self) -> f64 {
        (0..self.dim())
            .map(|d| self.cell_width(d))
            .fold(f64::INFINITY, f64::min)
    }

    /// Coordinate of the `k`-th grid plane on axis `d` (`k = subdivisions[d]`
    /// lands exactly on the upper domain bound).
    #[inline]
    pub fn plane(&self, d: usize, k: usize) -> f64 {
        let s = self.subdivisions[d];
        if k == s {
            return self.domain.upper[d];
        }
        self.domain.lower[d] + self.domain.width(d) * (k as f64) / (s as f64)
    }

    pub fn check(&self, cell: &CellIndex) -> Result<()> {
        if cell.0.len() != self.dim() || cell.0.iter().zip(&self.subdivisions).any(|(i, s)| i >= s) {
            return Err(Error::IndexOutOfRange {
                index: cell.0.clone(),
                subdivisions: self.subdivisions.clone(),
            });
        }
        Ok(())
    }

    pub fn linear_index(&self, cell: &CellIndex) -> Result<usize> {
        self.check(cell)?;
        Ok(cell
            .0
            .iter()
            .zip(&self.subdivisions)
            .fold(0, |acc, (i, s)| acc * s + i))
    }

    pub fn multi_index(&self, linear: usize) -> Result<CellIndex> {
        if linear >= self.num_cells() {
            return Err(Error::IndexOutOfRange {
                index: vec![linear],
                subdivisions: self.subdivisions.clone(),
            });
        }
        let mut rest = linear;
        let mut idx = vec![0; self.dim()];
        for d in (0..self.dim()).rev() {
            idx[d] = rest % self.subdivisions[d];
            rest /= self.subdivisions[d];
        }
        Ok(CellIndex(idx))
    }

    pub fn cell_realization(&self, cell: &CellIndex) -> Result<Cuboid> {
        self.check(cell)?;
        Ok(self.realization_unchecked(&cell.0))
    }

    pub(crate) fn realization_unchecked(&self, idx: &[usize]) -> Cuboid {
        Cuboid {
            lower: idx.iter().enumerate().map(|(d, &k)| self.plane(d, k)).collect(),
            upper: idx.iter().enumerate().map(|(d, &k)| self.plane(d, k + 1)).collect(),
        }
    }

    pub fn realization_of(&self, linear: usize) -> Cuboid {
        let idx = self.multi_index(linear).expect("linear index in range");
        self.realization_unchecked(&idx.0)
    }

    pub fn cell_center(&self, linear: usize) -> Vec<f64> {
        self.realization_of(linear).center()
    }

    /// The `2^n` corners, ordered by corner-selection bits (bit `d` picks the
    /// upper bound on axis `d`).
    pub fn cell_vertices(&self, cell: &CellIndex) -> Result<Vec<Vec<f64>>> {
        let b = self.cell_realization(cell)?;
        let n = self.dim();
        Ok((0..1usize << n)
            .map(|mask| {
                (0..n)
                    .map(|d| if mask >> d & 1 == 1 { b.upper[d] } else { b.lower[d] })
                    .collect()
            })
            .collect())
    }

    /// Largest cell diagonal; for a uniform grid, the diagonal of any cell.
    pub fn diameter(&self) -> f64 {
        (0..self.dim())
            .map(|d| self.cell_width(d).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Range of cells on axis `d` whose closed extent meets `[a, b]`.
    fn axis_range(&self, d: usize, a: f64, b: f64) -> Option<(usize, usize)> {
        let s = self.subdivisions[d];
        if b < self.domain.lower[d] || a > self.domain.upper[d] {
            return None;
        }
        let w = self.cell_width(d);
        let guess = |v: f64| -> usize {
            let k = ((v - self.domain.lower[d]) / w).floor();
            k.clamp(0.0, (s - 1) as f64) as usize
        };
        // lowest k with plane(k + 1) >= a
        let mut lo = guess(a);
        while lo > 0 && self.plane(d, lo) >= a {
            lo -= 1;
        }
        while lo < s && self.plane(d, lo + 1) < a {
            lo += 1;
        }
        // highest k with plane(k) <= b
        let mut hi = guess(b);
        while hi + 1 < s && self.plane(d, hi + 1) <= b {
            hi += 1;
        }
        while hi > 0 && self.plane(d, hi) > b {
            hi -= 1;
        }
        if lo >= s || lo > hi || self.plane(d, hi) > b || self.plane(d, lo + 1) < a {
            return None;
        }
        Some((lo, hi))
    }

    fn for_each_in_ranges(&self, ranges: &[(usize, usize)], mut f: impl FnMut(usize, &[usize])) {
        let n = self.dim();
        let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
        loop {
            let lin = idx
                .iter()
                .zip(&self.subdivisions)
                .fold(0, |acc, (i, s)| acc * s + i);
            f(lin, &idx);
            let mut d = n;
            loop {
                if d == 0 {
                    return;
                }
                d -= 1;
                if idx[d] < ranges[d].1 {
                    idx[d] += 1;
                    break;
                }
                idx[d] = ranges[d].0;
            }
        }
    }

    /// All cells whose closed realization meets the closed `query` box.
    pub fn cells_intersecting(&self, query: &Cuboid) -> CellQuery {
        let escapes = (0..self.dim()).any(|d| {
            query.lower[d] < self.domain.lower[d] || query.upper[d] > self.domain.upper[d]
        });
        let mut ranges = Vec::with_capacity(self.dim());
        for d in 0..self.dim() {
            match self.axis_range(d, query.lower[d], query.upper[d]) {
                Some(r) => ranges.push(r),
                None => {
                    return CellQuery {
                        cells: Vec::new(),
                        query_escapes_domain: escapes,
                    }
                }
            }
        }
        let mut cells = Vec::new();
        self.for_each_in_ranges(&ranges, |lin, _| cells.push(lin));
        CellQuery {
            cells,
            query_escapes_domain: escapes,
        }
    }

    /// All cells meeting the closed Euclidean ball `B(center, radius)`.
    pub fn cells_intersecting_ball(&self, center: &[f64], radius: f64) -> CellQuery {
        let bbox = Cuboid::point(center).inflated(radius);
        let escapes = (0..self.dim()).any(|d| {
            bbox.lower[d] < self.domain.lower[d] || bbox.upper[d] > self.domain.upper[d]
        });
        let mut ranges = Vec::with_capacity(self.dim());
        for d in 0..self.dim() {
            match self.axis_range(d, bbox.lower[d], bbox.upper[d]) {
                Some(r) => ranges.push(r),
                None => {
                    return CellQuery {
                        cells: Vec::new(),
                        query_escapes_domain: escapes,
                    }
                }
            }
        }
        let mut cells = Vec::new();
        self.for_each_in_ranges(&ranges, |lin, idx| {
            if self.realization_unchecked(idx).distance_to(center) <= radius {
                cells.push(lin);
            }
        });
        CellQuery {
            cells,
            query_escapes_domain: escapes,
        }
    }

    /// A cell containing `x` (lowest index on shared faces), if `x` is in the domain.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        self.cells_intersecting(&Cuboid::point(x)).cells.first().copied()
    }

    /// Number of lattice vertices along each axis (`subdivisions + 1`).
    pub fn vertex_shape(&self) -> Vec<usize> {
        self.subdivisions.iter().map(|s| s + 1).collect()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertex_shape().iter().product()
    }

    /// Coordinates of lattice vertex `v` (row-major over `vertex_shape`).
    pub fn vertex_point(&self, v: usize) -> Vec<f64> {
        let shape = self.vertex_shape();
        let mut rest = v;
        let mut x = vec![0.0; self.dim()];
        for d in (0..self.dim()).rev() {
            x[d] = self.plane(d, rest % shape[d]);
            rest /= shape[d];
        }
        x
    }

    /// Lattice ids of the corners of cell `linear`, in the same order as
    /// [`cell_vertices`](Self::cell_vertices).
    pub fn cell_vertex_ids(&self, linear: usize) -> Vec<usize> {
        let idx = self.multi_index(linear).expect("linear index in range").0;
        let shape = self.vertex_shape();
        let n = self.dim();
        (0..1usize << n)
            .map(|mask| {
                (0..n).fold(0, |acc, d| acc * shape[d] + idx[d] + (mask >> d & 1))
            })
            .collect()
    }
}
