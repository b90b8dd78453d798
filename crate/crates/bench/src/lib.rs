//! Shared fixtures for the benchmarks.

use hystloop_core::{JaParams, JaState, LoopConfig};

const STATIC_SINE: &str = include_str!("../../../configs/static_sine.toml");
const DYNAMIC_SQUARE: &str = include_str!("../../../configs/dynamic_square.toml");

fn loop_config(text: &str) -> LoopConfig {
    let mut table: toml::Table = text.parse().expect("bundled config parses");
    table.remove("name");
    table.remove("tune");
    toml::Value::Table(table)
        .try_into()
        .expect("bundled config is a loop configuration")
}

/// Closed-loop sine on the static plant.
pub fn static_sine() -> LoopConfig {
    loop_config(STATIC_SINE)
}

/// Closed-loop square on the dynamic plant.
pub fn dynamic_square() -> LoopConfig {
    loop_config(DYNAMIC_SQUARE)
}

/// One quasi-static period of field values at `n` samples, peaking at `h_max`.
pub fn field_sweep(n: usize, h_max: f64) -> Vec<f64> {
    (0..n)
        .map(|i| h_max * (std::f64::consts::TAU * i as f64 / n as f64).sin())
        .collect()
}

pub fn ja_start() -> (JaParams, JaState) {
    (JaParams::default(), JaState::default())
}
