//! Shared fixtures for the criterion benches.

use std::path::PathBuf;

use pdq_core::ScenarioConfig;

/// Loads one of the bundled scenarios by file name.
pub fn bundled(name: &str) -> ScenarioConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    ScenarioConfig::load(&path, &[]).unwrap_or_else(|e| panic!("{name}: {e}"))
}
