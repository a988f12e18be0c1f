use mobias_core::scenario::export::{self, replication_file_name, summary_file_name};
use mobias_core::scenario::{self, Format, ScenarioError, ScenarioScript, StopReason};
use mobias_core::{metric_names, ModelKind};

fn compile(text: &str) -> Result<scenario::CompiledScript, ScenarioError> {
    ScenarioScript::parse(text)?.compile()
}

const SMALL: &str = r#"
name = "small"
model = "reactance"
replications = 3
base_seed = 9
[overrides]
population_size = 30
[stop]
max_ticks = 40
"#;

#[test]
fn builtins_are_listed_sorted_and_all_compile() {
    let names = scenario::builtin_names();
    assert_eq!(names.len(), 9);
    assert!(names.windows(2).all(|w| w[0] < w[1]));
    for name in names {
        let script = scenario::builtin(name).unwrap();
        assert_eq!(script.name, name);
        script.compile().unwrap();
    }
}

#[test]
fn resolve_accepts_a_file_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("small.toml");
    std::fs::write(&path, SMALL).unwrap();
    assert_eq!(scenario::resolve(path.to_str().unwrap()).unwrap().name, "small");
    assert!(matches!(scenario::resolve("nosuch"), Err(ScenarioError::UnknownScenario(_))));
}

#[test]
fn scripts_survive_a_toml_round_trip() {
    for name in scenario::builtin_names() {
        let script = scenario::builtin(name).unwrap();
        assert_eq!(ScenarioScript::parse(&script.to_toml()).unwrap(), script, "{name}");
    }
}

#[test]
fn zero_tick_run_exports_headers_only() {
    let script = compile(&SMALL.replace("max_ticks = 40", "max_ticks = 0")).unwrap();
    let run = scenario::run_scenario(&script).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = export::export(&run, dir.path(), Format::Csv).unwrap();
    assert_eq!(written.len(), 4);
    let text = std::fs::read_to_string(&written[0]).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("# mobias metrics schema_version=1 model=reactance scenario=small seed=9"));
    let header: Vec<String> = lines[1].split(',').map(str::to_string).collect();
    assert_eq!(header[0], "tick");
    assert_eq!(&header[1..], metric_names(ModelKind::Reactance).as_slice());
    let (_, frames) = export::read_csv(&written[0]).unwrap();
    assert!(frames.is_empty());
}

#[test]
fn csv_header_follows_documented_metric_order() {
    for kind in ModelKind::ALL {
        let text = SMALL.replace("\"reactance\"", &format!("\"{kind}\"")).replace("max_ticks = 40", "max_ticks = 3");
        let run = scenario::run_scenario(&compile(&text).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let written = export::export(&run, dir.path(), Format::Csv).unwrap();
        let (names, frames) = export::read_csv(&written[0]).unwrap();
        assert_eq!(names, metric_names(kind));
        assert_eq!(frames.iter().map(|f| f.tick).collect::<Vec<_>>(), [1, 2, 3]);
    }
}

#[test]
fn file_names_embed_scenario_and_seed() {
    let run = scenario::run_scenario(&compile(SMALL).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = export::export(&run, dir.path(), Format::Json).unwrap();
    let names: Vec<String> = written.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["small_seed9.json", "small_seed10.json", "small_seed11.json", "small_seed9_summary.json"]);
    assert_eq!(replication_file_name("x", 3, Format::Csv), "x_seed3.csv");
    assert_eq!(summary_file_name("x", 3), "x_seed3_summary.json");
}

#[test]
fn same_script_same_artifacts() {
    let script = compile(SMALL).unwrap();
    let a = scenario::run_scenario(&script).unwrap();
    let b = scenario::run_scenario(&script).unwrap();
    assert_eq!(a, b);
    let one = scenario::run_replication(&script, 10).unwrap();
    assert_eq!(a.replications[1], one);
}

#[test]
fn summary_counts_replications_per_tick() {
    let text = SMALL.replace("[stop]\nmax_ticks = 40", "[stop]\nmax_ticks = 40\nuntil = \"tick >= 7\"");
    let run = scenario::run_scenario(&compile(&text).unwrap()).unwrap();
    assert_eq!(run.summary.ticks.len(), 8);
    assert!(run.summary.n.iter().all(|n| *n == 3));
    assert!(run.summary.stop_reasons.iter().all(|r| *r == StopReason::Condition));
    let mean = &run.summary.series["opinion_mean_all"].mean;
    let by_hand: f64 = run.replications.iter().map(|r| r.frames[4].values[2]).sum::<f64>() / 3.0;
    assert_eq!(metric_names(ModelKind::Reactance)[2], "opinion_mean_all");
    assert!((mean[5] - by_hand).abs() < 1e-12);
}

#[test]
fn stepped_messages_fire_in_order_and_never_regress() {
    let mut script = scenario::builtin("reactance-scenario-3").unwrap();
    script.replications = 2;
    script.overrides.insert("population_size".into(), toml::Value::Integer(60));
    let run = scenario::run_scenario(&script.compile().unwrap()).unwrap();
    for rep in &run.replications {
        let applied: Vec<f64> = rep.commands.iter().filter(|c| c.target == "message").filter_map(|c| c.value.as_f64()).collect();
        assert!(applied.len() <= 3);
        assert_eq!(applied, [0.4, 0.3, 0.25][..applied.len()]);
        let message = metric_names(ModelKind::Reactance).iter().position(|n| n == "message").unwrap();
        let series: Vec<f64> = rep.frames.iter().map(|f| f.values[message]).collect();
        assert!(series.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn ramps_expand_to_one_command_per_tick() {
    let text = r#"
name = "ramp"
model = "habits"
[overrides]
population_size = 10
[[ramps]]
path = "urban_planning"
from = 10
to = 20
start = 5
ticks = 4
[stop]
max_ticks = 10
"#;
    let rep = scenario::run_replication(&compile(text).unwrap(), 0).unwrap();
    let got: Vec<(u64, f64)> = rep.commands.iter().map(|c| (c.tick, c.value.as_f64().unwrap())).collect();
    assert_eq!(got, [(5, 12.5), (6, 15.0), (7, 17.5), (8, 20.0)]);
}

#[test]
fn invalid_scripts_name_the_fault() {
    let cases = [
        (SMALL.replace("population_size = 30", "nosuch.path = 1"), Some("nosuch.path")),
        (SMALL.replace("population_size = 30", "message = 3.0"), Some("message")),
        (format!("{SMALL}\n[[commands]]\ntick = 3\nset = \"bogus\"\nvalue = 1\n"), Some("bogus")),
        (format!("{SMALL}\n[[commands]]\nwhen = \"nobody > 1\"\nset = \"message\"\nvalue = 0.1\n"), None),
        (SMALL.replace("max_ticks = 40", "max_ticks = 40\nuntil = \"1 > 2\""), None),
    ];
    for (text, path) in cases {
        let err = ScenarioScript::parse(&text).and_then(|s| s.compile()).expect_err(&text);
        assert!(err.is_validation(), "{err}");
        if let Some(p) = path {
            assert_eq!(err.path(), Some(p), "{err}");
        }
    }
    let unknown_field = format!("{SMALL}\nbogus = 1\n");
    assert!(matches!(ScenarioScript::parse(&unknown_field), Err(ScenarioError::Parse(_))));
}

#[test]
fn positive_target_empty_needs_the_reactance_model() {
    let text = "name = \"x\"\nmodel = \"halo\"\n[overrides]\npopulation_size = 10\n[stop]\nmax_ticks = 5\npositive_target_empty = true\n";
    assert!(matches!(compile(text), Err(ScenarioError::InvalidScript { .. })));
}
