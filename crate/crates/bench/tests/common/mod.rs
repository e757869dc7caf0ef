#![allow(dead_code)]

use pathdisc_bench::RunConfig;

/// A small two-sensor mission that solves in well under a second.
pub const SMALL: &str = r#"{
  "scenario": { "generator": { "count": 2, "side_m": 60.0, "seed": 4 } },
  "physics": {
    "period_s": 20.0,
    "v_max_mps": 20.0,
    "h_min_m": 100.0,
    "beta0_db": -60.0,
    "noise_dbw": -90.0,
    "tx_power_w": 0.2,
    "e_u_max": 0.05,
    "q_start": [0.0, 0.0]
  },
  "scheme": { "type": "fpd", "l": 4, "j": 2 },
  "solver": { "bcd_max_iters": 20 },
  "repetitions": 2
}"#;

pub fn small() -> RunConfig {
    RunConfig::from_json(SMALL, "small").unwrap()
}

pub fn with(edit: impl FnOnce(&mut serde_json::Value)) -> String {
    let mut v: serde_json::Value = serde_json::from_str(SMALL).unwrap();
    edit(&mut v);
    serde_json::to_string_pretty(&v).unwrap()
}
