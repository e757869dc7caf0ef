//! Run configuration: one JSON file that fully determines a run.

use std::fs;
use std::path::{Path, PathBuf};

use pathdisc_core::basis::{BasisKind, Selection};
use pathdisc_core::model::db_to_linear;
use pathdisc_core::solver::{Scheme, SolverConfig};
use pathdisc_core::{Position3, Scenario};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::BenchError;

/// How generated sensor layouts are drawn; stored in every run record.
pub const GENERATOR_ALGORITHM: &str =
    "ChaCha8Rng::seed_from_u64(seed) on stream `repetition`; x then y of each sensor uniform on [0, side_m)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub count: usize,
    pub side_m: f64,
    pub seed: u64,
}

/// Exactly one of an explicit sensor list or a generator.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSource {
    /// Ground sensor positions `[x, y]` in meters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensors: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<Generator>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Physics {
    pub period_s: f64,
    pub v_max_mps: f64,
    pub h_min_m: f64,
    pub beta0_db: f64,
    pub noise_dbw: f64,
    pub tx_power_w: f64,
    /// Tolerated finite-sum utility error, bps/Hz.
    pub e_u_max: f64,
    #[serde(default)]
    pub q_start: [f64; 2],
    /// Defaults to `q_start`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_end: Option<[f64; 2]>,
    /// Segment-length cap; at most the derived value, which is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_max_m: Option<f64>,
    #[serde(default)]
    pub epsilon_robust: f64,
}

impl Physics {
    /// Reference setup: T = 100 s, 20 m/s, 100 m, -60 dB, -90 dBW, 0.2 W.
    pub fn reference() -> Self {
        Self {
            period_s: 100.0,
            v_max_mps: 20.0,
            h_min_m: 100.0,
            beta0_db: -60.0,
            noise_dbw: -90.0,
            tx_power_w: 0.2,
            e_u_max: 0.05,
            q_start: [0.0, 0.0],
            q_end: None,
            delta_max_m: None,
            epsilon_robust: 0.0,
        }
    }

    pub fn scenario(&self, sensors: &[[f64; 2]]) -> Scenario {
        let end = self.q_end.unwrap_or(self.q_start);
        Scenario {
            sensors: sensors.iter().map(|s| Position3::new(s[0], s[1], 0.0)).collect(),
            tx_powers: vec![self.tx_power_w; sensors.len()],
            beta0: db_to_linear(self.beta0_db),
            noise_power: db_to_linear(self.noise_dbw),
            h_min: self.h_min_m,
            v_max: self.v_max_mps,
            period: self.period_s,
            q_start: Position3::new(self.q_start[0], self.q_start[1], self.h_min_m),
            q_end: Position3::new(end[0], end[1], self.h_min_m),
            epsilon_robust: self.epsilon_robust,
        }
    }

    fn validate(&self) -> Result<(), BenchError> {
        let positive = [
            ("physics.period_s", self.period_s),
            ("physics.v_max_mps", self.v_max_mps),
            ("physics.h_min_m", self.h_min_m),
            ("physics.tx_power_w", self.tx_power_w),
            ("physics.e_u_max", self.e_u_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(BenchError::Config(format!("{name} = {v} must be positive")));
            }
        }
        for (name, v) in [("physics.beta0_db", self.beta0_db), ("physics.noise_dbw", self.noise_dbw)] {
            if !v.is_finite() {
                return Err(BenchError::Config(format!("{name} must be finite")));
            }
        }
        if let Some(d) = self.delta_max_m {
            if !(d > 0.0 && d.is_finite()) {
                return Err(BenchError::Config(format!("physics.delta_max_m = {d} must be positive")));
            }
        }
        if !(self.epsilon_robust >= 0.0 && self.epsilon_robust.is_finite()) {
            return Err(BenchError::Config("physics.epsilon_robust must be nonnegative".into()));
        }
        Ok(())
    }
}

fn fourier() -> BasisKind {
    BasisKind::Fourier
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SchemeConfig {
    /// `m` defaults to the smallest slot count meeting the length cap.
    Td {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        m: Option<usize>,
    },
    Cpd { n: usize },
    Fpd { l: usize, j: usize },
    FpdPc {
        l: usize,
        j: usize,
        k: usize,
        #[serde(default = "fourier")]
        basis: BasisKind,
        /// Defaults to `lowest` for Fourier and `first-k` otherwise.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        selection: Option<Selection>,
    },
}

impl SchemeConfig {
    /// The core scheme, with `td_m` filling an absent TD slot count.
    pub fn resolve(&self, td_m: usize) -> Scheme {
        match *self {
            SchemeConfig::Td { m } => Scheme::Td { m: m.unwrap_or(td_m) },
            SchemeConfig::Cpd { n } => Scheme::Cpd { n },
            SchemeConfig::Fpd { l, j } => Scheme::Fpd { l, j },
            SchemeConfig::FpdPc {
                l,
                j,
                k,
                basis,
                selection,
            } => Scheme::FpdPc {
                l,
                j,
                k,
                basis,
                selection: selection.unwrap_or(match basis {
                    BasisKind::Fourier => Selection::Lowest,
                    _ => Selection::FirstK,
                }),
            },
        }
    }

    fn validate(&self) -> Result<(), BenchError> {
        let bad = |msg: String| Err(BenchError::Config(msg));
        match *self {
            SchemeConfig::Td { m: Some(0) } => bad("scheme.m must be at least 1".into()),
            SchemeConfig::Td { .. } => Ok(()),
            SchemeConfig::Cpd { n: 0 } => bad("scheme.n must be at least 1".into()),
            SchemeConfig::Cpd { .. } => Ok(()),
            SchemeConfig::Fpd { l, j } | SchemeConfig::FpdPc { l, j, .. } if l == 0 || j == 0 => {
                bad("scheme.l and scheme.j must be at least 1".into())
            }
            SchemeConfig::FpdPc { l, k, .. } if k == 0 || k > l + 1 => {
                bad(format!("scheme.k = {k} must lie in 1..={}", l + 1))
            }
            SchemeConfig::FpdPc {
                basis: BasisKind::Custom,
                ..
            } => bad("scheme.basis must be fourier or shifted-sine".into()),
            SchemeConfig::FpdPc {
                l,
                basis: BasisKind::ShiftedSine,
                ..
            } if l % 2 != 0 => bad(format!("the shifted-sine basis needs an even L, got {l}")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    /// Total short-segments `L J` (or `N`, `M`), keeping `J`.
    NFpd,
    /// Short-segments per long-segment, keeping `L J`.
    J,
    K,
    Scheme,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisValue {
    Count(usize),
    Name(String),
}

impl std::fmt::Display for AxisValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AxisValue::Count(v) => write!(f, "{v}"),
            AxisValue::Name(v) => f.write_str(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: Axis,
    pub values: Vec<AxisValue>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioSource,
    pub physics: Physics,
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Output directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default = "one")]
    pub repetitions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

impl RunConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self, BenchError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." { String::new() } else { format!(" field `{path}`:") };
            BenchError::Config(format!("{origin}:{field} {}", e.inner()))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self, BenchError> {
        let text = fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        match (&self.scenario.sensors, &self.scenario.generator) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(BenchError::Config(
                    "scenario needs exactly one of `sensors` and `generator`".into(),
                ))
            }
            (Some(s), None) => {
                if s.is_empty() || s.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(BenchError::Config(
                        "scenario.sensors must be a nonempty list of finite [x, y]".into(),
                    ));
                }
            }
            (None, Some(g)) => {
                if g.count == 0 || !(g.side_m > 0.0 && g.side_m.is_finite()) {
                    return Err(BenchError::Config(
                        "scenario.generator needs count >= 1 and a positive side_m".into(),
                    ));
                }
            }
        }
        if self.repetitions == 0 {
            return Err(BenchError::Config("repetitions must be at least 1".into()));
        }
        self.physics.validate()?;
        self.scheme.validate()?;
        self.solver
            .validate()
            .map_err(|e| BenchError::Config(format!("solver: {e}")))
    }

    /// Replaces the generator seed (and the recorded solver seed).
    pub fn set_seed(&mut self, seed: u64) {
        if let Some(g) = &mut self.scenario.generator {
            g.seed = seed;
        }
        self.solver.seed = seed;
    }

    /// The generator seed, else the solver seed.
    pub fn seed(&self) -> u64 {
        self.scenario.generator.as_ref().map_or(self.solver.seed, |g| g.seed)
    }

    /// Sensor positions for one repetition.
    pub fn sensors(&self, repetition: usize) -> Vec<[f64; 2]> {
        match (&self.scenario.sensors, &self.scenario.generator) {
            (Some(s), _) => s.clone(),
            (None, Some(g)) => generate_sensors(g, repetition as u64),
            (None, None) => Vec::new(),
        }
    }
}

pub fn generate_sensors(g: &Generator, stream: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    rng.set_stream(stream);
    (0..g.count)
        .map(|_| {
            let x = rng.random_range(0.0..g.side_m);
            let y = rng.random_range(0.0..g.side_m);
            [x, y]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "scenario": {"generator": {"count": 4, "side_m": 100.0, "seed": 9}},
        "physics": {"period_s": 50, "v_max_mps": 20, "h_min_m": 100, "beta0_db": -60,
                    "noise_dbw": -90, "tx_power_w": 0.2, "e_u_max": 0.05},
        "scheme": {"type": "fpd", "l": 10, "j": 2}
    }"#;

    #[test]
    fn parses_with_defaults() {
        let c = RunConfig::from_json(BASE, "base").unwrap();
        assert_eq!(c.repetitions, 1);
        assert_eq!(c.solver, SolverConfig::default());
        assert_eq!(c.scheme.resolve(0), Scheme::Fpd { l: 10, j: 2 });
        let sc = c.physics.scenario(&c.sensors(0));
        assert_eq!(sc.q_end, sc.q_start);
        assert!((sc.beta0 - 1e-6).abs() < 1e-20);
        assert!((sc.noise_power - 1e-9).abs() < 1e-23);
    }

    #[test]
    fn errors_name_the_field() {
        let text = BASE.replace("\"l\": 10", "\"l\": \"ten\"");
        let err = RunConfig::from_json(&text, "cfg.json").unwrap_err().to_string();
        assert!(err.contains("scheme") && err.contains("line"), "{err}");
        let text = BASE.replace("\"period_s\": 50", "\"period\": 50");
        let err = RunConfig::from_json(&text, "cfg.json").unwrap_err().to_string();
        assert!(err.contains("physics") && err.contains("period"), "{err}");
    }

    #[test]
    fn exactly_one_source() {
        let both = BASE.replace(
            r#""scenario": {"#,
            r#""scenario": {"sensors": [[1, 2]], "#,
        );
        assert!(matches!(RunConfig::from_json(&both, "x"), Err(BenchError::Config(_))));
        let none = BASE.replace(
            r#"{"generator": {"count": 4, "side_m": 100.0, "seed": 9}}"#,
            "{}",
        );
        assert!(matches!(RunConfig::from_json(&none, "x"), Err(BenchError::Config(_))));
    }

    #[test]
    fn scheme_counts_are_checked() {
        let text = BASE.replace(
            r#"{"type": "fpd", "l": 10, "j": 2}"#,
            r#"{"type": "fpd-pc", "l": 10, "j": 2, "k": 12}"#,
        );
        assert!(RunConfig::from_json(&text, "x").is_err());
        let text = BASE.replace(
            r#"{"type": "fpd", "l": 10, "j": 2}"#,
            r#"{"type": "fpd-pc", "l": 10, "j": 2, "k": 3, "basis": "shifted-sine"}"#,
        );
        let c = RunConfig::from_json(&text, "x").unwrap();
        assert!(matches!(
            c.scheme.resolve(0),
            Scheme::FpdPc { selection: Selection::FirstK, .. }
        ));
    }

    #[test]
    fn generator_is_seeded_per_stream() {
        let g = Generator {
            count: 5,
            side_m: 100.0,
            seed: 3,
        };
        assert_eq!(generate_sensors(&g, 0), generate_sensors(&g, 0));
        assert_ne!(generate_sensors(&g, 0), generate_sensors(&g, 1));
        assert!(generate_sensors(&g, 2).iter().flatten().all(|v| (0.0..100.0).contains(v)));
    }
}
