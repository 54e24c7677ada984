use std::path::{Path, PathBuf};

use log::{info, warn};
use switchmorse::benchmarks::{gp_baseline, ground_truth_map, identified_map, lipschitz_baseline, Method};
use switchmorse::dynamics::{simulate_trajectories, SwitchingModel, TrajectoryDataset};
use switchmorse::eval::{compare, default_radius, MethodRun};
use switchmorse::morse::MorseAnalysis;
use switchmorse::outer::CellMap;
use switchmorse::sysid::alternate;

use crate::config::{RunConfig, System};
use crate::error::{CliError, CliResult};
use crate::files::{self, ModelFile};
use crate::svg;

pub const CELLMAP_FILE: &str = "cellmap.json";
pub const MORSE_FILE: &str = "morse.json";
pub const SVG_FILE: &str = "morse.svg";

pub fn simulate(cfg: &RunConfig, sys: &System) -> CliResult<PathBuf> {
    let sim = cfg.simulation.as_ref().expect("resolved config");
    let domain = cfg.domain.as_ref().expect("resolved config");
    let data = simulate_trajectories(&sys.field, sim, domain, cfg.seed)?;
    let path = cfg.out.join("dataset.csv");
    let mut header = cfg.header("simulate");
    header["trajectories"] = data.num_trajectories().into();
    header["samples"] = data.len().into();
    header["dim"] = data.dim.into();
    files::write_csv(&path, &data.to_csv(), &header)?;
    info!("wrote {} samples from {} trajectories", data.len(), data.num_trajectories());
    Ok(path)
}

fn load_dataset(cfg: &RunConfig) -> CliResult<TrajectoryDataset> {
    let path = cfg.dataset_path();
    if !path.exists() {
        return Err(CliError::io(&path, "dataset not found; run `simulate` first or pass --data"));
    }
    TrajectoryDataset::from_csv(&files::read(&path, "dataset")?).map_err(|e| CliError::io(&path, e))
}

pub fn identify(cfg: &RunConfig) -> CliResult<PathBuf> {
    let data = load_dataset(cfg)?;
    let ident = cfg.ident();
    let res = alternate(&data, ident).map_err(|e| CliError::from(e).context(format!("identification (K={}, degree {})", ident.k, ident.degree)))?;
    let header = cfg.header("identify");
    let path = cfg.model_path();
    let file = ModelFile {
        header: Some(header.clone()),
        model: res.model,
    };
    files::write(&path, &serde_json::to_string_pretty(&file).expect("model serializes"))?;
    let mut csv = String::from("iteration,objective\n");
    for (i, v) in res.objective_history.iter().enumerate() {
        csv.push_str(&format!("{i},{v}\n"));
    }
    files::write_csv(&path.with_file_name("objective_history.csv"), &csv, &header)?;
    info!(
        "identified {} modes, final objective {:.3e} after {} iterations, classifier accuracy {:.3}",
        ident.k,
        res.objective_history.last().copied().unwrap_or(f64::NAN),
        res.objective_history.len(),
        res.classifier_accuracy
    );
    Ok(path)
}

fn load_model(cfg: &RunConfig) -> CliResult<SwitchingModel> {
    let path = cfg.model_path();
    if !path.exists() {
        return Err(CliError::io(&path, "model not found; run `identify` first or pass --model"));
    }
    files::read_model(&path)
}

pub fn build_map(cfg: &RunConfig, sys: &System) -> CliResult<CellMap> {
    let grid = cfg.grid()?;
    let (tau, h, p) = (cfg.tau(), cfg.h(), &cfg.method_params);
    let map = match cfg.method {
        Method::GroundTruth => ground_truth_map(&grid, &sys.field, tau, h, p)?,
        Method::Lipschitz => {
            let (m, est) = lipschitz_baseline(&grid, &sys.field, tau, h, p, cfg.seed)?;
            info!("Lipschitz constant {:.4} from {} pairs", est.l_tau, est.pairs);
            m
        }
        Method::Gp => gp_baseline(&grid, &load_dataset(cfg)?, tau, p)?,
        Method::Identified => identified_map(&grid, &load_model(cfg)?, tau, h, p)?,
    };
    Ok(map)
}

/// Builds the configured map, its Morse graph and RoAs, and the figure.
pub fn morse(cfg: &RunConfig, sys: &System) -> CliResult<PathBuf> {
    let mut map = build_map(cfg, sys)?;
    let header = cfg.header("morse");
    map.header = Some(header.clone());
    let analysis = MorseAnalysis::compute(&map)?;
    let dir = cfg.run_dir(cfg.method);
    files::write(&dir.join(CELLMAP_FILE), &map.to_json()?)?;
    files::write(&dir.join(MORSE_FILE), &analysis.to_json(Some(header))?)?;
    let title = format!("{} / {} (tau = {})", cfg.system, cfg.method, cfg.tau());
    match svg::render(&map.grid, &analysis, &title) {
        Some(s) => files::write(&dir.join(SVG_FILE), &s)?,
        None => warn!("state dimension {} is not 2; skipping the figure", map.grid.dim()),
    }
    info!(
        "{}: {} Morse nodes, {} Hasse edges",
        cfg.method,
        analysis.graph.num_nodes(),
        analysis.graph.hasse_edges.len()
    );
    Ok(dir)
}

/// Loads the map and Morse graph written by `morse` into `dir`.
pub fn load_run(dir: &Path) -> CliResult<MethodRun> {
    let map_path = dir.join(CELLMAP_FILE);
    let morse_path = dir.join(MORSE_FILE);
    for p in [&map_path, &morse_path] {
        if !p.exists() {
            return Err(CliError::io(p, "missing artifact of the `morse` stage"));
        }
    }
    let map = CellMap::from_json(&files::read(&map_path, "cell map")?).map_err(|e| CliError::io(&map_path, e))?;
    let (analysis, _) = MorseAnalysis::from_json(&files::read(&morse_path, "Morse graph")?).map_err(|e| CliError::io(&morse_path, e))?;
    if analysis.roas.len() != analysis.graph.num_nodes() || map.num_cells() != map.grid.num_cells() {
        return Err(CliError::io(&morse_path, "Morse graph does not belong to the cell map"));
    }
    let tau = map
        .header
        .as_ref()
        .and_then(|h| h["config"]["tau"].as_f64())
        .ok_or_else(|| CliError::io(&map_path, "cell map header lacks config.tau"))?;
    Ok(MethodRun {
        name: map.method.clone(),
        tau,
        map,
        analysis,
    })
}

/// Compares stored runs; the first is the reference. With no runs given, uses
/// the ground-truth run under `out` against every other method present.
pub fn compare_runs(cfg: &RunConfig, runs: &[PathBuf]) -> CliResult<PathBuf> {
    let dirs: Vec<PathBuf> = if runs.is_empty() {
        let mut v = vec![cfg.run_dir(Method::GroundTruth)];
        v.extend(
            Method::ALL[1..]
                .iter()
                .map(|&m| cfg.run_dir(m))
                .filter(|d| d.join(CELLMAP_FILE).exists()),
        );
        v
    } else {
        runs.to_vec()
    };
    let loaded = dirs.iter().map(|d| load_run(d)).collect::<CliResult<Vec<_>>>()?;
    let target = cfg
        .target
        .as_ref()
        .ok_or_else(|| CliError::Config("comparison needs a target structure".into()))?;
    let (reference, candidates) = loaded.split_first().expect("at least one run");
    let cmp = compare(reference, candidates, target, default_radius(&reference.map.grid))?;
    let path = cfg.out.join("metrics.csv");
    let mut header = cfg.header("compare");
    header["runs"] = dirs.iter().map(|d| d.display().to_string()).collect::<Vec<_>>().into();
    files::write_csv(&path, &cmp.to_csv(), &header)?;
    let table = cmp.to_table();
    files::write(&cfg.out.join("metrics.txt"), &table)?;
    print!("{table}");
    Ok(path)
}
