use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gridshare(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridshare"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn demo_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/demo.json")
}

fn demo_text() -> String {
    fs::read_to_string(demo_path()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn validate_accepts_the_demo() {
    let out = gridshare(&["validate", demo_path().to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("valid (3 members, 4 slots, 3 branches)"));
}

#[test]
fn invalid_scenarios_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let malformed = write(dir.path(), "malformed.json", "{ not json");
    let unknown = write(
        dir.path(),
        "unknown.json",
        &demo_text().replacen("\"horizon\"", "\"colour\": 1, \"horizon\"", 1),
    );
    let cyclic = {
        let mut v: serde_json::Value = serde_json::from_str(&demo_text()).unwrap();
        v["network"]["branches"][2]["from"] = 0.into();
        v["network"]["branches"][2]["to"] = 1.into();
        write(dir.path(), "cyclic.json", &v.to_string())
    };
    for path in [&malformed, &unknown, &cyclic] {
        let out = gridshare(&["validate", path]);
        assert_eq!(out.status.code(), Some(2), "{path}: {}", String::from_utf8_lossy(&out.stderr));
        let out = gridshare(&["run", path, "--out", dir.path().join("r").to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{path}");
    }
    // unknown keys pass in lax mode
    assert!(gridshare(&["validate", &unknown, "--lax"]).status.success());
    let out = gridshare(&["validate", &cyclic]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("not radial"));
}

#[test]
fn solver_failure_exits_with_code_3_and_keeps_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&demo_text()).unwrap();
    v["options"]["max_iter"] = 2.into();
    let path = write(dir.path(), "starved.json", &v.to_string());
    let out_dir = dir.path().join("report");
    let out = gridshare(&["run", &path, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["subproblems"]
        .as_array()
        .unwrap()
        .iter()
        .any(|p| p["status"] != "Optimal"));
}

#[test]
fn json_reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let demo = demo_path();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let out = gridshare(&[
            "run",
            demo.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--format",
            "json",
            "--allocation",
            "shapley",
            "--fixed-rate",
            "0.15",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(out_dir);
    }
    for f in ["bills.json", "costs.json", "schedules.json", "coalitions.json", "manifest.json"] {
        assert_eq!(fs::read(outputs[0].join(f)).unwrap(), fs::read(outputs[1].join(f)).unwrap(), "{f}");
    }
    let bills: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(outputs[0].join("bills.json")).unwrap()).unwrap();
    let rates: Vec<&serde_json::Value> = bills["schemes"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|s| s["scheme"] == "fixed_rate")
        .collect();
    assert_eq!(rates.len(), 1);
    assert_eq!(rates[0]["rate"], 0.15);
}

#[test]
fn iteration_trace_lists_every_solve() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("iterations.csv");
    let out = gridshare(&[
        "run",
        demo_path().to_str().unwrap(),
        "--out",
        dir.path().join("r").to_str().unwrap(),
        "--allocation",
        "nash",
        "--dump-iterations",
        trace.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let mut reader = csv::Reader::from_path(&trace).unwrap();
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        ["subproblem", "iteration", "primal_cost", "gap", "primal_residual", "dual_residual", "step", "sigma"]
    );
    let names: std::collections::BTreeSet<String> = reader.records().map(|r| r.unwrap()[0].to_string()).collect();
    assert!(names.contains("global"));
    assert!(names.contains("selfish par node3"));
}

#[test]
fn oracle_reports_the_gap() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "tiny.json",
        r#"{
            "schema_version": 1,
            "horizon": {"slots": 2, "delta_t_h": 1.0},
            "prosumers": [
                {"id": "a", "node": 1, "supplier": "s", "base_load_kw": [2.0, -1.0],
                 "appliances": [{"id": "w", "energy_kwh": 2.0, "max_power_kw": 2.0, "permitted": [true, true]}]},
                {"id": "b", "node": 2, "supplier": "s", "base_load_kw": [1.0, 1.5]}
            ],
            "network": {"node_count": 3, "voltage_base_v": 400, "power_base_kva": 100,
                        "branches": [{"from": 0, "to": 1, "r_ohm": 0.05, "x_ohm": 0.01, "length_km": 0.2},
                                     {"from": 1, "to": 2, "r_ohm": 0.08, "x_ohm": 0.02, "length_km": 0.3}]},
            "tariffs": {"suppliers": {"s": [0.2, 0.1]}, "gamma_up": 0.002, "gamma_loss": 0.3, "gamma_flow": 0.02}
        }"#,
    );
    let out = gridshare(&["oracle", &path, "--grid-steps", "21"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    let gap: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("relative gap"))
        .and_then(|g| g.trim().trim_end_matches('%').trim().parse().ok())
        .expect("gap line");
    assert!(gap.abs() < 2.0, "{text}");
}
