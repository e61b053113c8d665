use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_lhtraffic");

fn lhtraffic(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("LHTRAFFIC_OUT")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn small_config(sites: usize, steps: u64) -> String {
    format!(
        r#"
[scenario]
sites = {sites}
steps = {steps}

[scenario.params]
b = 1.6
c = 0.7
gamma = 0.4
rho0 = 0.2
rhoc = 0.2
a = 5.0

[scenario.initial]
kind = "perturbed"
rho0 = 0.2
delta_rho = 0.05

[scenario.noise]
sigma = 1e-4
seed = 9

[scenario.recorder]
sample_interval = 0.2
sites = "all"
full_field_every = 10
"#
    )
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn tiny_lattice_is_rejected_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, small_config(3, 10)).unwrap();
    let out = lhtraffic(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("3"), "{}", stderr(&out));
    let out = lhtraffic(&["simulate", "--config", cfg.to_str().unwrap(), "--validate"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn unknown_preset_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lhtraffic(&[
        "pipeline",
        "--preset",
        "fig9",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("fig3-chaotic"));
}

#[test]
fn malformed_csv_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("bad.csv");
    fs::write(&input, "t_seconds,value\n0,0.1\n20,abc\n").unwrap();
    let out = lhtraffic(&[
        "ews",
        "--input",
        input.to_str().unwrap(),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    fs::write(&input, "time,thing\n0,1\n").unwrap();
    let out = lhtraffic(&[
        "ews",
        "--input",
        input.to_str().unwrap(),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn constant_input_raises_no_alarm() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("flat.csv");
    let mut text = String::from("t_seconds,value\n");
    for i in 0..400 {
        text.push_str(&format!("{},0.05\n", 20 * i));
    }
    fs::write(&input, text).unwrap();
    let dir = tmp.path().join("o");
    let out = lhtraffic(&[
        "ews",
        "--input",
        input.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(dir.join("ews_summary.json")).unwrap()).unwrap();
    assert!(summary["alarm_time"].is_null());
    let report = fs::read_to_string(dir.join("ews_report.csv")).unwrap();
    assert!(report.starts_with("t_center,variance,ac1,skewness,kurtosis\n"));
    assert!(dir.join("indicators.svg").exists());
}

#[test]
fn same_seed_gives_identical_digests() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, small_config(20, 400)).unwrap();
    let run = |name: &str, seed: &str| {
        let dir = tmp.path().join(name);
        let out = lhtraffic(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            seed,
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        manifest(&dir)
    };
    let a = run("a", "4");
    let b = run("b", "4");
    let c = run("c", "5");
    assert_eq!(a["outputs"], b["outputs"]);
    assert_ne!(a["outputs"], c["outputs"]);
    assert_eq!(a["seed"], 4);
    let files: Vec<&str> = a["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["file"].as_str().unwrap())
        .collect();
    for expected in [
        "trajectory.csv",
        "snapshots.csv",
        "heatmap.svg",
        "summary.json",
    ] {
        assert!(files.contains(&expected), "{files:?}");
    }
    let trajectory = fs::read_to_string(tmp.path().join("a/trajectory.csv")).unwrap();
    assert!(trajectory.starts_with("t_seconds,site,rho_star\n"));
}

#[test]
fn printed_defaults_validate() {
    let tmp = tempfile::tempdir().unwrap();
    for cmd in ["simulate", "stability", "ews"] {
        let out = lhtraffic(&[cmd, "--print-defaults"]);
        assert_eq!(code(&out), 0);
        let path = tmp.path().join(format!("{cmd}.toml"));
        fs::write(&path, &out.stdout).unwrap();
        let out = lhtraffic(&[cmd, "--config", path.to_str().unwrap(), "--validate"]);
        assert_eq!(code(&out), 0, "{cmd}: {}", stderr(&out));
    }
}

#[test]
fn unknown_config_key_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("ews.toml");
    fs::write(&path, "strid = 2\n").unwrap();
    let out = lhtraffic(&["ews", "--config", path.to_str().unwrap(), "--validate"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn blow_up_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("huge.toml");
    let values = ["1e200"; 8].join(", ");
    let text = small_config(8, 10).replace(
        "kind = \"perturbed\"\nrho0 = 0.2\ndelta_rho = 0.05",
        &format!("kind = \"explicit\"\nvalues = [{values}]"),
    );
    fs::write(&cfg, text).unwrap();
    let out = lhtraffic(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("non-finite"));
}

#[test]
fn output_directory_comes_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("from-env");
    let out = Command::new(BIN)
        .args(["pipeline", "--preset", "fig2d"])
        .env("LHTRAFFIC_OUT", &dir)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let m = manifest(&dir);
    assert_eq!(m["preset"], "fig2d");
    let gamma = fs::read_to_string(dir.join("gamma_B1.6.csv")).unwrap();
    assert!(gamma.starts_with("gamma,a_neutral,a_c\n"));
    // passing rates at or above one half have no neutral point
    assert!(gamma.lines().last().unwrap().contains(",NA,"));
}

#[test]
fn fig2b_produces_one_coexisting_curve() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lhtraffic(&[
        "pipeline",
        "--preset",
        "fig2b",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let coexisting: Vec<String> = fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("coexisting_"))
        .collect();
    assert_eq!(coexisting, vec!["coexisting_gamma0.05.csv"]);
    let neutral = fs::read_dir(tmp.path()).unwrap().filter(|e| {
        e.as_ref()
            .unwrap()
            .file_name()
            .to_string_lossy()
            .starts_with("neutral_")
    });
    assert_eq!(neutral.count(), 3);
}

#[test]
fn single_point_stability_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("point.toml");
    fs::write(
        &cfg,
        "[point]\nb = 1.6\nc = 0.7\ngamma = 0.4\nrho0 = 0.2\nrhoc = 0.2\na = 3.93\n",
    )
    .unwrap();
    let dir = tmp.path().join("o");
    let out = lhtraffic(&[
        "stability",
        "--sweep",
        cfg.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = fs::read_to_string(dir.join("report.txt")).unwrap();
    assert!(report.contains("rho_star_c1") && report.contains("0.1573"));
    let point: Value =
        serde_json::from_str(&fs::read_to_string(dir.join("point.json")).unwrap()).unwrap();
    assert!(point["neutral_a"].as_f64().unwrap() > 0.0);
}

#[test]
fn half_passing_rate_flags_neutral_curve_undefined() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("half.toml");
    fs::write(
        &cfg,
        r#"
[[curves]]
label = "half"
[curves.params]
b = 1.6
c = 0.7
gamma = 0.5
rho0 = 0.2
rhoc = 0.2
a = 1.0
[curves.rho_star]
start = 0.1
stop = 0.3
points = 5
"#,
    )
    .unwrap();
    let dir = tmp.path().join("o");
    let out = lhtraffic(&[
        "stability",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["items"][0]["status"], "undefined");
    assert!(!dir.join("neutral_half.csv").exists());
}
