use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use switchmorse::benchmarks::{Benchmark, Method, MethodParams};
use switchmorse::dynamics::{SimulationConfig, VectorField};
use switchmorse::eval::TargetStructure;
use switchmorse::grid::{Cuboid, CubicalGrid};
use switchmorse::sysid::IdentConfig;

use crate::error::{CliError, CliResult};
use crate::files;

/// One run, as read from `--config`. Unset fields take the values of the
/// built-in system; [`RunConfig::resolve`] fills them in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Built-in system name, or a path to a switching-model JSON file.
    pub system: String,
    pub domain: Option<Cuboid>,
    pub subdivisions: Option<Vec<usize>>,
    pub tau: Option<f64>,
    pub h: Option<f64>,
    pub method: Method,
    pub method_params: MethodParams,
    pub ident: Option<IdentConfig>,
    pub simulation: Option<SimulationConfig>,
    pub target: Option<TargetStructure>,
    pub seed: u64,
    pub out: PathBuf,
    /// Trajectory CSV; defaults to `<out>/dataset.csv`.
    pub dataset: Option<PathBuf>,
    /// Identified model; defaults to `<out>/model.json`.
    pub model: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            system: "toggle_switch".into(),
            domain: None,
            subdivisions: None,
            tau: None,
            h: None,
            method: Method::GroundTruth,
            method_params: MethodParams::default(),
            ident: None,
            simulation: None,
            target: None,
            seed: 0,
            out: PathBuf::from("out"),
            dataset: None,
            model: None,
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub method: Option<Method>,
    pub grid: Option<u32>,
    pub tau: Option<f64>,
    pub dataset: Option<PathBuf>,
    pub model: Option<PathBuf>,
}

/// The system a run integrates.
pub struct System {
    pub field: VectorField,
    pub benchmark: Option<Benchmark>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = files::read(p, "config")?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
        if let Some(s) = o.seed {
            self.seed = s;
            if let Some(id) = &mut self.ident {
                id.seed = s;
            }
        }
        if let Some(m) = o.method {
            self.method = m;
        }
        if let Some(t) = o.tau {
            self.tau = Some(t);
        }
        if let Some(k) = o.grid {
            let dim = self.domain.as_ref().map_or(2, Cuboid::dim);
            self.subdivisions = Some(vec![1usize << k; dim]);
        }
        if let Some(d) = &o.dataset {
            self.dataset = Some(d.clone());
        }
        if let Some(m) = &o.model {
            self.model = Some(m.clone());
        }
    }

    fn system(&self) -> CliResult<System> {
        match Benchmark::by_name(&self.system) {
            Ok(b) => Ok(System {
                field: b.field.clone(),
                benchmark: Some(b),
            }),
            Err(_) if self.system.ends_with(".json") => {
                let model = files::read_model(Path::new(&self.system))?;
                Ok(System {
                    field: VectorField::Identified(model),
                    benchmark: None,
                })
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Fills every unset field from the built-in system and validates the result.
    pub fn resolve(mut self) -> CliResult<(Self, System)> {
        let sys = self.system()?;
        if let Some(b) = &sys.benchmark {
            self.domain.get_or_insert_with(|| b.domain.clone());
            if self.subdivisions.is_none() {
                self.subdivisions = Some(b.grid().subdivisions);
            }
            self.tau.get_or_insert(b.tau);
            self.h.get_or_insert(b.h);
            let seed = self.seed;
            self.ident.get_or_insert_with(|| IdentConfig { seed, ..b.ident.clone() });
            self.simulation.get_or_insert_with(|| b.simulation.clone());
            self.target.get_or_insert_with(|| b.target.clone());
        } else {
            self.h.get_or_insert(0.01);
            self.tau.get_or_insert(1.0);
            let seed = self.seed;
            self.ident.get_or_insert_with(|| IdentConfig { seed, ..IdentConfig::default() });
            self.simulation.get_or_insert_with(SimulationConfig::default);
        }
        let domain = self
            .domain
            .as_ref()
            .ok_or_else(|| CliError::Config("a model-file system needs an explicit domain".into()))?;
        if domain.dim() != sys.field.dim() {
            return Err(CliError::Config(format!(
                "domain has dimension {} but the system has dimension {}",
                domain.dim(),
                sys.field.dim()
            )));
        }
        if self.subdivisions.is_none() {
            self.subdivisions = Some(vec![128; domain.dim()]);
        }
        let tau = self.tau.unwrap_or_default();
        let h = self.h.unwrap_or_default();
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(CliError::Config(format!("tau must be positive, got {tau}")));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(CliError::Config(format!("integrator step must be positive, got {h}")));
        }
        self.ident.as_ref().map(IdentConfig::validate).transpose()?;
        self.grid()?;
        Ok((self, sys))
    }

    pub fn grid(&self) -> CliResult<CubicalGrid> {
        let domain = self.domain.clone().ok_or_else(|| CliError::Config("domain is not set".into()))?;
        let subs = self.subdivisions.clone().ok_or_else(|| CliError::Config("grid is not set".into()))?;
        Ok(CubicalGrid::new(domain, subs)?)
    }

    pub fn tau(&self) -> f64 {
        self.tau.expect("resolved config")
    }

    pub fn h(&self) -> f64 {
        self.h.expect("resolved config")
    }

    pub fn ident(&self) -> &IdentConfig {
        self.ident.as_ref().expect("resolved config")
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.dataset.clone().unwrap_or_else(|| self.out.join("dataset.csv"))
    }

    pub fn model_path(&self) -> PathBuf {
        self.model.clone().unwrap_or_else(|| self.out.join("model.json"))
    }

    pub fn run_dir(&self, method: Method) -> PathBuf {
        self.out.join(method.as_str())
    }

    /// Reproducibility header embedded in every artifact.
    pub fn header(&self, command: &str) -> serde_json::Value {
        serde_json::json!({
            "tool": "switchmorse",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "config": self,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let mut c: RunConfig = serde_json::from_str(r#"{"system":"van_der_pol","tau":2.0,"seed":3,"ident":{"K":2}}"#).unwrap();
        c.apply(&Overrides {
            seed: Some(9),
            grid: Some(4),
            tau: Some(0.5),
            method: Some(Method::Lipschitz),
            ..Overrides::default()
        });
        let (c, _) = c.resolve().unwrap();
        assert_eq!(c.tau, Some(0.5));
        assert_eq!(c.seed, 9);
        assert_eq!(c.ident().seed, 9);
        assert_eq!(c.subdivisions, Some(vec![16, 16]));
        assert_eq!(c.method, Method::Lipschitz);
        assert_eq!(c.domain, Some(Cuboid::square(-3.0, 3.0, 2)));
    }

    #[test]
    fn rejects_bad_values() {
        let bad = |json: &str| RunConfig::resolve(serde_json::from_str(json).unwrap()).err().unwrap();
        assert!(matches!(bad(r#"{"tau":0.0}"#), CliError::Config(_)));
        assert!(matches!(bad(r#"{"system":"lorenz"}"#), CliError::Config(_)));
        assert!(matches!(bad(r#"{"ident":{"K":0}}"#), CliError::Config(_)));
        assert!(serde_json::from_str::<RunConfig>(r#"{"method":"exact"}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"sytem":"toggle"}"#).is_err());
    }

    #[test]
    fn header_carries_config_and_version() {
        let (c, _) = RunConfig::default().resolve().unwrap();
        let h = c.header("morse");
        assert_eq!(h["version"], env!("CARGO_PKG_VERSION"));
        let back: RunConfig = serde_json::from_value(h["config"].clone()).unwrap();
        assert_eq!(back, c);
    }
}
