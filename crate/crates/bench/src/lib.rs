//! Shared fixtures for the benchmarks.

use risguard::config::ScenarioConfig;

/// Desk-scale scenario with `n` RIS elements.
pub fn desk_config(n: usize, seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::desk();
    cfg.set_ris_elements(n);
    cfg.seed = seed;
    cfg
}
