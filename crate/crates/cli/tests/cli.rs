use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn mobias(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mobias")).args(args).env_remove("MOBIAS_PORT").output().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    names
}

const FAST_R1: &[&str] = &["run", "reactance-scenario-1", "--replications", "2", "--set", "population_size=40", "--quiet"];

#[test]
fn run_writes_artifacts_named_by_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("r1");
    let out = mobias(&[FAST_R1, &["--seed", "7", "--out", out_dir.to_str().unwrap()]].concat());
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(
        files(&out_dir),
        ["reactance-scenario-1_seed7.csv", "reactance-scenario-1_seed7_summary.json", "reactance-scenario-1_seed8.csv"]
    );
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("reactance-scenario-1_seed7_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["base_seed"], 7);
    assert_eq!(summary["replications"], 2);
    assert!(stdout(&out).contains("wrote"));
}

#[test]
fn seed_fully_determines_output() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let path = dir.path().join(name);
        let out = mobias(&[FAST_R1, &["--seed", seed, "--format", "json", "--out", path.to_str().unwrap()]].concat());
        assert!(out.status.success(), "{}", stderr(&out));
        std::fs::read(path.join(format!("reactance-scenario-1_seed{seed}.json"))).unwrap()
    };
    let a = run("a", "3");
    let b = run("b", "3");
    let c = run("c", "4");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn final_state_table_lists_every_metric() {
    let dir = tempfile::tempdir().unwrap();
    let out = mobias(&["run", "halo-planning", "--replications", "1", "--set", "population_size=30", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.starts_with("halo-planning (halo) replications=1 base_seed=1 final_ticks=[60]"), "{text}");
    assert!(text.lines().any(|l| l.starts_with("halo_agents ")), "{text}");
}

#[test]
fn config_file_and_sets_layer_over_the_script() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("small.toml");
    std::fs::write(&config, "population_size = 30\nurban_planning = 90\n[habits]\nwindow = 4\n").unwrap();
    let out_dir = dir.path().join("out");
    let args = [
        "run",
        "habits-baseline",
        "--replications",
        "1",
        "--max-ticks",
        "3",
        "--config",
        config.to_str().unwrap(),
        "--set",
        "population_size=12",
        "--quiet",
        "--out",
        out_dir.to_str().unwrap(),
    ];
    let out = mobias(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(out_dir.join("habits-baseline_seed1.csv")).unwrap();
    let mut lines = csv.lines().skip(1);
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 3);
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    for row in &rows {
        assert_eq!(row[col("car_count")] + row[col("bike_count")], 12.0);
    }
}

#[test]
fn unknown_scenario_is_a_validation_error() {
    let out = mobias(&["run", "nosuch"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("unknown scenario `nosuch`"), "{}", stderr(&out));
}

#[test]
fn bad_overrides_name_the_path() {
    let out = mobias(&["run", "halo-ecology", "--set", "score.car.flight=3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("score.car.flight"), "{}", stderr(&out));
    let out = mobias(&["run", "halo-ecology", "--set", "population_size"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn validate_names_the_unknown_path() {
    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.scn");
    std::fs::write(&broken, "name = \"broken\"\nmodel = \"habits\"\n[overrides]\nurban_plan = 40\n[stop]\nmax_ticks = 10\n").unwrap();
    let out = mobias(&["validate", broken.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("urban_plan") && err.contains("broken.scn"), "{err}");

    let good = dir.path().join("good.toml");
    std::fs::write(&good, "name = \"good\"\nmodel = \"habits\"\n[overrides]\nurban_planning = 40\n[stop]\nmax_ticks = 10\n").unwrap();
    let out = mobias(&["validate", good.to_str().unwrap(), "reactance-scenario-3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).lines().count(), 2);
}

#[test]
fn list_is_sorted_and_stable() {
    let a = stdout(&mobias(&["list"]));
    let b = stdout(&mobias(&["list"]));
    assert_eq!(a, b);
    let names: Vec<&str> = a.lines().map(|l| l.split_whitespace().next().unwrap()).collect();
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);
    assert_eq!(names.len(), 9);
    let params = stdout(&mobias(&["list", "--params", "reactance"]));
    assert!(params.lines().any(|l| l.starts_with("message ") && l.contains("runtime")), "{params}");
    let metrics = stdout(&mobias(&["list", "--metrics", "habits"]));
    assert_eq!(metrics.lines().take(3).collect::<Vec<_>>(), ["urban_planning", "bike_share", "car_share"]);
    assert_eq!(mobias(&["list", "--metrics", "bus"]).status.code(), Some(1));
}

#[test]
fn usage_errors_exit_with_one_and_help_with_zero() {
    assert_eq!(mobias(&["run", "halo-ecology", "--bogus"]).status.code(), Some(1));
    assert_eq!(mobias(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(mobias(&["run", "halo-ecology", "--format", "xml"]).status.code(), Some(1));
    assert_eq!(mobias(&["run", "halo-ecology", "--replications", "0"]).status.code(), Some(1));
    let help = mobias(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(stdout(&help).contains("serve"));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let out = mobias(&["run", "halo-ecology", "--replications", "1", "--set", "population_size=10", "--out", blocker.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn serve_answers_http_and_rejects_a_bad_port_env() {
    let assets = tempfile::tempdir().unwrap();
    std::fs::write(assets.path().join("index.html"), "hello ui").unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_mobias"))
        .args(["serve", "--port", "0", "--static-dir", assets.path().to_str().unwrap()])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on http://").unwrap_or_else(|| panic!("{line}")).to_string();
    let get = |path: &str| {
        let mut stream = TcpStream::connect(&addr).unwrap();
        write!(stream, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").unwrap();
        let mut response = String::new();
        stream.read_to_string(&mut response).unwrap();
        response
    };
    let models = get("/api/models");
    assert!(models.starts_with("HTTP/1.1 200"), "{models}");
    assert!(models.contains("\"reactance\""));
    assert!(get("/").ends_with("hello ui"));
    child.kill().unwrap();
    child.wait().unwrap();

    let out = Command::new(env!("CARGO_BIN_EXE_mobias")).arg("serve").env("MOBIAS_PORT", "eighty").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("MOBIAS_PORT"));
}
