use std::path::Path;
use std::process::{Command, Output};

use switchmorse::dynamics::SwitchingModel;
use switchmorse::eval::has_hole;
use switchmorse::morse::MorseAnalysis;
use switchmorse::outer::CellMap;
use tempfile::TempDir;

fn bin(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_switchmorse"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, json).unwrap();
    p.display().to_string()
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn simulate_is_deterministic_and_bounded() {
    let t = TempDir::new().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    ok(&bin(&["simulate", "--seed", "5"], &a));
    ok(&bin(&["simulate", "--seed", "5"], &b));
    let csv = read(a.join("dataset.csv"));
    assert_eq!(csv, read(b.join("dataset.csv")));
    let rows = csv.lines().count() - 1;
    assert!(rows > 0 && rows <= 50 * 51, "{rows}");
    let meta: serde_json::Value = serde_json::from_str(&read(a.join("dataset.meta.json"))).unwrap();
    assert_eq!(meta["config"]["seed"], 5);
    assert_eq!(meta["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(meta["samples"], rows);
}

#[test]
fn usage_and_config_errors_exit_with_2() {
    let t = TempDir::new().unwrap();
    let cfg = write_config(t.path(), "c.json", r#"{"system":"lorenz"}"#);
    assert_eq!(bin(&["simulate", "--config", &cfg], t.path()).status.code(), Some(2));
    assert_eq!(bin(&["morse", "--method", "exact"], t.path()).status.code(), Some(2));
    assert_eq!(bin(&["morse", "--tau", "-1"], t.path()).status.code(), Some(2));
    let k0 = write_config(t.path(), "k0.json", r#"{"ident":{"K":0}}"#);
    assert_eq!(bin(&["identify", "--config", &k0], t.path()).status.code(), Some(2));
}

#[test]
fn missing_artifacts_exit_with_4_and_name_the_stage() {
    let t = TempDir::new().unwrap();
    let o = bin(&["identify"], t.path());
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("simulate"));
    let o = bin(&["compare"], t.path());
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("morse"));
}

#[test]
fn identify_toggle_recovers_negative_identity() {
    let t = TempDir::new().unwrap();
    ok(&bin(&["simulate"], t.path()));
    ok(&bin(&["identify"], t.path()));
    let text = read(t.path().join("model.json"));
    let file: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(file["header"]["command"], "identify");
    let model: SwitchingModel = serde_json::from_value(file["model"].clone()).unwrap();
    assert_eq!(model.k, 4);
    // basis 1, x1, x2 per output row
    for c in &model.coeffs {
        for (got, want) in [(c[1], -1.0), (c[2], 0.0), (c[4], 0.0), (c[5], -1.0)] {
            assert!((got - want).abs() <= 0.05, "{c:?}");
        }
    }
    let hist = read(t.path().join("objective_history.csv"));
    assert!(hist.starts_with("iteration,objective\n"));
    assert!(t.path().join("objective_history.meta.json").exists());
}

#[test]
fn identify_vdp_uses_cubic_basis() {
    let t = TempDir::new().unwrap();
    let cfg = write_config(
        t.path(),
        "vdp.json",
        r#"{"system":"van_der_pol","simulation":{"trajectories":8,"horizon":4.0,"sample_dt":0.2,"h":0.01},
            "ident":{"K":2,"degree":3,"classifier_degree":2,"restarts":1,"max_outer_iters":5}}"#,
    );
    ok(&bin(&["simulate", "--config", &cfg], t.path()));
    ok(&bin(&["identify", "--config", &cfg], t.path()));
    let file: serde_json::Value = serde_json::from_str(&read(t.path().join("model.json"))).unwrap();
    let model: SwitchingModel = serde_json::from_value(file["model"].clone()).unwrap();
    assert_eq!(model.coeffs.len(), 2);
    assert!(model.coeffs.iter().all(|c| c.len() == 2 * 10));
}

#[test]
fn toggle_morse_artifacts_round_trip() {
    let t = TempDir::new().unwrap();
    ok(&bin(&["morse"], t.path()));
    let dir = t.path().join("ground_truth");
    let map_text = read(dir.join("cellmap.json"));
    let map = CellMap::from_json(&map_text).unwrap();
    assert_eq!(map.to_json().unwrap(), map_text);
    assert_eq!(map.header.as_ref().unwrap()["config"]["tau"], 1.0);
    let morse_text = read(dir.join("morse.json"));
    let (a, header) = MorseAnalysis::from_json(&morse_text).unwrap();
    assert_eq!(a.to_json(header).unwrap(), morse_text);
    assert!(a.graph.num_nodes() >= 3);
    assert!(read(dir.join("morse.svg")).starts_with("<svg"));

    let o = bin(&["compare"], t.path());
    ok(&o);
    let csv = read(t.path().join("metrics.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("ground_truth,"));
    assert!(lines[1].split(',').skip(2).all(|v| v == "1.000"), "{csv}");
}

#[test]
fn vdp_attractor_is_a_ring() {
    let t = TempDir::new().unwrap();
    let cfg = write_config(t.path(), "vdp.json", r#"{"system":"van_der_pol"}"#);
    ok(&bin(&["morse", "--config", &cfg], t.path()));
    let dir = t.path().join("ground_truth");
    let map = CellMap::from_json(&read(dir.join("cellmap.json"))).unwrap();
    let (a, _) = MorseAnalysis::from_json(&read(dir.join("morse.json"))).unwrap();
    let mins = a.graph.minimal_nodes();
    assert_eq!(mins.len(), 1);
    assert!(has_hole(&map.grid, &a.graph.nodes[mins[0]].cells));
}

#[test]
fn model_file_systems_work_in_any_dimension() {
    let t = TempDir::new().unwrap();
    let zero = SwitchingModel::affine(&[vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]], &[0.0; 3]);
    let model = t.path().join("zero.json");
    std::fs::write(&model, serde_json::to_string(&zero).unwrap()).unwrap();
    let cfg = write_config(
        t.path(),
        "c.json",
        &format!(
            r#"{{"system":"{}","domain":{{"lower":[0,0,0],"upper":[1,1,1]}},"subdivisions":[3,3,3]}}"#,
            model.display()
        ),
    );
    let o = bin(&["morse", "--config", &cfg], t.path());
    ok(&o);
    let dir = t.path().join("ground_truth");
    let (a, _) = MorseAnalysis::from_json(&read(dir.join("morse.json"))).unwrap();
    // identity map with one-cell inflation: one strongly connected block
    assert_eq!(a.graph.num_nodes(), 1);
    assert!(!dir.join("morse.svg").exists());
}

#[test]
fn compare_rejects_mismatched_tau() {
    let t = TempDir::new().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    ok(&bin(&["morse", "--grid", "4"], &a));
    ok(&bin(&["morse", "--grid", "4", "--tau", "0.5"], &b));
    let o = bin(
        &[
            "compare",
            a.join("ground_truth").to_str().unwrap(),
            b.join("ground_truth").to_str().unwrap(),
        ],
        t.path(),
    );
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn four_method_toggle_comparison_is_reproducible() {
    let t = TempDir::new().unwrap();
    let p = t.path();
    ok(&bin(&["simulate"], p));
    ok(&bin(&["identify"], p));
    for m in ["ground_truth", "lipschitz", "gp", "identified"] {
        ok(&bin(&["morse", "--method", m], p));
    }
    let o = bin(&["compare"], p);
    ok(&o);
    let csv = read(p.join("metrics.csv"));
    let methods: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(methods, ["ground_truth", "lipschitz", "gp", "identified"]);
    let table = String::from_utf8_lossy(&o.stdout).into_owned();
    assert!(table.contains("RoA(1)"));
    assert_eq!(table, read(p.join("metrics.txt")));
    ok(&bin(&["compare"], p));
    assert_eq!(read(p.join("metrics.csv")), csv);
}
