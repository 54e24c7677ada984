//! Fixtures shared by the benchmarks in `benches/`.

use switchmorse::benchmarks::{ground_truth_map, Benchmark, MethodParams};
use switchmorse::grid::CubicalGrid;
use switchmorse::outer::CellMap;

/// Toggle-switch benchmark on a `2^exponent` grid per axis.
pub fn toggle_grid(exponent: u32) -> (Benchmark, CubicalGrid) {
    let b = Benchmark::toggle_switch();
    let g = CubicalGrid::dyadic(b.domain.clone(), exponent).expect("valid grid");
    (b, g)
}

pub fn toggle_map(exponent: u32) -> CellMap {
    let (b, g) = toggle_grid(exponent);
    ground_truth_map(&g, &b.field, b.tau, b.h, &MethodParams::default()).expect("toggle map")
}

/// Per-sample mode predictions and target for a `k`-mode assignment problem.
pub fn mode_problem(k: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let preds: Vec<Vec<f64>> = (0..k).map(|j| vec![j as f64 - 1.0, 2.0 - 0.5 * j as f64]).collect();
    let xdot = preds[k - 1].clone();
    (preds, xdot)
}
