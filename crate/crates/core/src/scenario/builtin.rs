//! Scenarios shipped with the engine. The scripts live as files under
//! `scenarios/` in the repository and are embedded at build time.

use std::path::Path;

use super::script::ScenarioScript;
use super::ScenarioError;

const BUILTINS: &[(&str, &str)] = &[
    ("habits-baseline", include_str!("../../../../scenarios/habits-baseline.toml")),
    ("habits-crisis", include_str!("../../../../scenarios/habits-crisis.toml")),
    ("habits-inertia", include_str!("../../../../scenarios/habits-inertia.toml")),
    ("halo-ecology", include_str!("../../../../scenarios/halo-ecology.toml")),
    ("halo-planning", include_str!("../../../../scenarios/halo-planning.toml")),
    ("reactance-scenario-1", include_str!("../../../../scenarios/reactance-scenario-1.toml")),
    ("reactance-scenario-2", include_str!("../../../../scenarios/reactance-scenario-2.toml")),
    ("reactance-scenario-3", include_str!("../../../../scenarios/reactance-scenario-3.toml")),
    ("reactance-scenario-4", include_str!("../../../../scenarios/reactance-scenario-4.toml")),
];

/// Built-in scenario names, sorted.
pub fn builtin_names() -> Vec<&'static str> {
    BUILTINS.iter().map(|(name, _)| *name).collect()
}

/// Source text of a built-in scenario.
pub fn builtin_source(name: &str) -> Option<&'static str> {
    BUILTINS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

pub fn builtin(name: &str) -> Result<ScenarioScript, ScenarioError> {
    let text = builtin_source(name).ok_or_else(|| ScenarioError::UnknownScenario(name.to_string()))?;
    ScenarioScript::parse(text)
}

/// A built-in name, or else a path to a scenario file.
pub fn resolve(name_or_path: &str) -> Result<ScenarioScript, ScenarioError> {
    if let Some(text) = builtin_source(name_or_path) {
        return ScenarioScript::parse(text);
    }
    let path = Path::new(name_or_path);
    if path.is_file() {
        ScenarioScript::load(path)
    } else {
        Err(ScenarioError::UnknownScenario(name_or_path.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_compiles_under_its_own_name() {
        let names = builtin_names();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
        for name in names {
            let script = builtin(name).unwrap();
            assert_eq!(script.name, name);
            script.compile().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn unknown_names_are_reported() {
        assert_eq!(resolve("nosuch"), Err(ScenarioError::UnknownScenario("nosuch".into())));
    }
}
