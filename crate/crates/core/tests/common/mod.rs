#![allow(dead_code)]

pub mod criteria;
pub mod grid;
pub mod instances;
pub mod replay;

use tgasched::config::ProjectConfig;

pub fn exp1_config() -> ProjectConfig {
    ProjectConfig::from_toml(include_str!("../../../../configs/exp1.toml")).expect("exp1 config")
}

pub fn exp2_config() -> ProjectConfig {
    ProjectConfig::from_toml(include_str!("../../../../configs/exp2.toml")).expect("exp2 config")
}

/// The first configured loop alone on the network.
pub fn single_loop_config() -> ProjectConfig {
    let mut c = exp1_config();
    c.name = "single".into();
    c.loops.truncate(1);
    c
}
