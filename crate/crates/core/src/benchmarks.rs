//! The two planar benchmark systems, their expected Morse decompositions,
//! and the four map-construction methods compared on them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::{simulate_trajectories, SimulationConfig, SwitchingModel, TrajectoryDataset, VectorField};
use crate::error::{Error, Result};
use crate::eval::{TargetNode, TargetStructure};
use crate::grid::{Cuboid, CubicalGrid};
use crate::outer::{self, BoxParams, CellMap, LipschitzEstimate};
use crate::sysid::{alternate, IdentConfig, IdentResult};

#[derive(Clone, Debug, PartialEq)]
pub struct Benchmark {
    pub name: &'static str,
    pub field: VectorField,
    pub domain: Cuboid,
    pub target: TargetStructure,
    pub ident: IdentConfig,
    pub simulation: SimulationConfig,
    pub grid_exponent: u32,
    pub tau: f64,
    pub h: f64,
}

fn node(label: &str, minimal: bool, anchor: [f64; 2]) -> TargetNode {
    TargetNode {
        label: label.into(),
        minimal,
        anchor: anchor.to_vec(),
    }
}

impl Benchmark {
    pub const NAMES: [&'static str; 2] = ["toggle_switch", "van_der_pol"];

    /// Bistable toggle switch on `[0,6]²`: a saddle region above two attractors.
    pub fn toggle_switch() -> Self {
        Self {
            name: "toggle_switch",
            field: VectorField::toggle_switch(),
            domain: Cuboid::square(0.0, 6.0, 2),
            target: TargetStructure {
                nodes: vec![
                    node("1", true, [1.0, 5.0]),
                    node("2", true, [5.0, 1.0]),
                    node("3", false, [3.0, 3.0]),
                ],
                edges: vec![(2, 0), (2, 1)],
            },
            ident: IdentConfig {
                k: 4,
                degree: 1,
                classifier_degree: 1,
                ..IdentConfig::default()
            },
            simulation: SimulationConfig::default(),
            grid_exponent: 7,
            tau: 1.0,
            h: 0.01,
        }
    }

    /// Piecewise Van der Pol on `[-3,3]²`: a limit cycle around a repelling
    /// equilibrium.
    pub fn van_der_pol() -> Self {
        Self {
            name: "van_der_pol",
            field: VectorField::PiecewiseVanDerPol,
            domain: Cuboid::square(-3.0, 3.0, 2),
            target: TargetStructure {
                nodes: vec![node("1", true, [0.0, 2.0]), node("2", false, [0.0, 0.0])],
                edges: vec![(1, 0)],
            },
            ident: IdentConfig {
                k: 2,
                degree: 3,
                classifier_degree: 2,
                ..IdentConfig::default()
            },
            simulation: SimulationConfig::default(),
            grid_exponent: 7,
            tau: 1.0,
            h: 0.01,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "toggle_switch" | "toggle" => Ok(Self::toggle_switch()),
            "van_der_pol" | "vdp" => Ok(Self::van_der_pol()),
            _ => Err(Error::config(format!(
                "unknown system {name:?}; expected one of {:?}",
                Self::NAMES
            ))),
        }
    }

    pub fn grid(&self) -> CubicalGrid {
        CubicalGrid::dyadic(self.domain.clone(), self.grid_exponent).expect("benchmark grid is valid")
    }

    pub fn simulate(&self, seed: u64) -> Result<TrajectoryDataset> {
        simulate_trajectories(&self.field, &self.simulation, &self.domain, seed)
    }

    pub fn identify(&self, data: &TrajectoryDataset) -> Result<IdentResult> {
        alternate(data, &self.ident)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    GroundTruth,
    Lipschitz,
    Gp,
    Identified,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::GroundTruth, Method::Lipschitz, Method::Gp, Method::Identified];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::GroundTruth => "ground_truth",
            Method::Lipschitz => "lipschitz",
            Method::Gp => "gp",
            Method::Identified => "identified",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown method {s:?}; expected ground_truth, lipschitz, gp or identified")))
    }
}

/// Knobs of the map-construction methods.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodParams {
    /// Bounding-box inflation; `None` means one cell width.
    pub inflation: Option<f64>,
    pub include_center: bool,
    pub lipschitz_pairs: usize,
    pub confidence: f64,
    pub gp_max_points: usize,
}

impl Default for MethodParams {
    fn default() -> Self {
        Self {
            inflation: None,
            include_center: true,
            lipschitz_pairs: 10_000,
            confidence: 0.95,
            gp_max_points: outer::GP_MAX_POINTS,
        }
    }
}

impl MethodParams {
    pub fn box_params(&self, grid: &CubicalGrid, tau: f64, h: f64) -> BoxParams {
        BoxParams {
            tau,
            h,
            inflation: self.inflation.unwrap_or_else(|| grid.min_cell_width()),
            include_center: self.include_center,
        }
    }
}

/// Bounding-box map of the known field.
pub fn ground_truth_map(grid: &CubicalGrid, field: &VectorField, tau: f64, h: f64, params: &MethodParams) -> Result<CellMap> {
    let mut m = outer::bounding_box_map(grid, field, &params.box_params(grid, tau, h))?;
    m.method = Method::GroundTruth.to_string();
    Ok(m)
}

/// Bounding-box map of an identified switching model.
pub fn identified_map(grid: &CubicalGrid, model: &SwitchingModel, tau: f64, h: f64, params: &MethodParams) -> Result<CellMap> {
    let field = VectorField::Identified(model.clone());
    let mut m = outer::bounding_box_map(grid, &field, &params.box_params(grid, tau, h))?;
    m.method = Method::Identified.to_string();
    Ok(m)
}

/// Global-Lipschitz map with the constant estimated from the known field over the grid domain.
pub fn lipschitz_baseline(grid: &CubicalGrid, field: &VectorField, tau: f64, h: f64, params: &MethodParams, seed: u64) -> Result<(CellMap, LipschitzEstimate)> {
    let est = outer::estimate_lipschitz(field, &grid.domain, tau, h, params.lipschitz_pairs, seed)?;
    let mut m = outer::lipschitz_map(grid, field, tau, h, est.l_tau)?;
    m.method = Method::Lipschitz.to_string();
    Ok((m, est))
}

/// GP map learned from trajectory samples `tau` apart.
pub fn gp_baseline(grid: &CubicalGrid, data: &TrajectoryDataset, tau: f64, params: &MethodParams) -> Result<CellMap> {
    let pairs = outer::gp_training_pairs(data, tau);
    let gp = outer::fit_gp(&pairs, params.gp_max_points)?;
    let mut m = outer::gp_map(grid, &gp, params.confidence)?;
    m.method = Method::Gp.to_string();
    if let serde_json::Value::Object(o) = &mut m.params {
        o.insert("tau".into(), tau.into());
        o.insert("training_pairs".into(), pairs.len().into());
        o.insert("hyperparameters".into(), serde_json::to_value(gp.hyperparameters())?);
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_and_methods_parse() {
        for n in Benchmark::NAMES {
            assert_eq!(Benchmark::by_name(n).unwrap().name, n);
        }
        assert!(Benchmark::by_name("lorenz").is_err());
        for m in Method::ALL {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert!("exact".parse::<Method>().is_err());
        assert_eq!(serde_json::to_string(&Method::GroundTruth).unwrap(), "\"ground_truth\"");
    }

    #[test]
    fn grids_have_expected_resolution() {
        let g = Benchmark::toggle_switch().grid();
        assert_eq!(g.subdivisions, vec![128, 128]);
        assert_eq!(Benchmark::van_der_pol().grid().num_cells(), 1 << 14);
    }
}
