#![allow(dead_code)]

use gridgame_core::attack::{AttackContext, AttackerConfig, Noise};
use gridgame_core::grid::{build_measurement_model, build_shift_factors, load_case};
use gridgame_core::market::solve_da_dcopf;
use gridgame_core::GridCase;

pub const CASE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../cases/ieee30.case");

pub fn ieee30() -> GridCase {
    load_case(CASE).unwrap()
}

/// The three attackers of the bundled scenarios, in order.
pub fn attackers() -> Vec<AttackerConfig> {
    let raw = r#"[
        {"k_indices":["line:3","line:4","line:7"],"i_bus":4,"j_bus":3,"P":100,"kappa":0.25},
        {"k_indices":["line:14","line:15","line:16"],"i_bus":12,"j_bus":4,"P":100,"kappa":0.25},
        {"k_indices":["line:5","line:9","line:11"],"i_bus":7,"j_bus":6,"P":100,"kappa":0.25}
    ]"#;
    serde_json::from_str(raw).unwrap()
}

pub fn context_with(which: &[usize]) -> AttackContext<f64> {
    let case = ieee30();
    let x = build_shift_factors(&case).unwrap();
    let model = build_measurement_model(&case, 0.975).unwrap();
    let da = solve_da_dcopf(&case, &x).unwrap();
    let all = attackers();
    let specs = which
        .iter()
        .enumerate()
        .map(|(m, &a)| all[a].resolve(m + 1, &model).unwrap())
        .collect();
    AttackContext::new(case, x, model, da, specs, Noise::None).unwrap()
}

pub fn context() -> AttackContext<f64> {
    context_with(&[0, 1, 2])
}
