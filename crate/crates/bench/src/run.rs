//! Resolving a configuration into a solvable problem and recording the run.

use std::time::{SystemTime, UNIX_EPOCH};

use pathdisc_core::discretize::{compute_n_min, make_td_grid, ApproxBoundParams};
use pathdisc_core::solver::{bcd_solve, ProblemSpec, Scheme, Solution, SolveStatus};
use serde::{Deserialize, Serialize};

use crate::config::{Physics, RunConfig, GENERATOR_ALGORITHM};
use crate::BenchError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Quantities derived from the physics block and the scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub c1_m: f64,
    pub c2: f64,
    /// Peak rate gradient, bps/Hz per meter.
    pub d_u: f64,
    pub delta_max_derived_m: f64,
    /// The cap in force: the configured value, or the derived one.
    pub delta_max_m: f64,
    /// Slot length of the TD grid meeting the cap.
    pub dt_s: f64,
    /// Slot count of the TD grid meeting the cap.
    pub m: usize,
    pub n_min: usize,
    /// `K / (L+1)` for FPD-PC.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_comp: Option<f64>,
    pub design_variables: usize,
    pub short_segments: usize,
    /// `D_u Delta_max T / 2` at the cap in force.
    pub error_bound: f64,
}

impl Derived {
    /// Everything that depends only on the physics block.
    pub fn from_physics(physics: &Physics) -> Result<Self, BenchError> {
        let q = physics.q_start;
        let sc = physics.scenario(&[q]);
        sc.validate()?;
        let bounds = ApproxBoundParams::derive(&sc, physics.e_u_max)?;
        let delta_max = match physics.delta_max_m {
            Some(d) if d > bounds.delta_max => {
                return Err(BenchError::Config(format!(
                    "physics.delta_max_m = {d} exceeds the derived cap {:.6} m",
                    bounds.delta_max
                )))
            }
            Some(d) => d,
            None => bounds.delta_max,
        };
        let grid = make_td_grid(&sc, delta_max)?;
        Ok(Self {
            c1_m: bounds.c1,
            c2: bounds.c2,
            d_u: bounds.d_u,
            delta_max_derived_m: bounds.delta_max,
            delta_max_m: delta_max,
            dt_s: grid.dt,
            m: grid.m,
            n_min: compute_n_min(&sc.q_start, &sc.q_end, delta_max)?,
            rho_comp: None,
            design_variables: 0,
            short_segments: 0,
            error_bound: 0.5 * bounds.d_u * delta_max * sc.period,
        })
    }

    fn with_scheme(mut self, scheme: &Scheme) -> Self {
        self.rho_comp = match *scheme {
            Scheme::FpdPc { l, k, .. } => Some(k as f64 / (l + 1) as f64),
            _ => None,
        };
        self.design_variables = scheme.design_variables();
        self.short_segments = scheme.short_segments();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub repetition: usize,
    pub config: RunConfig,
    pub generator_algorithm: String,
    pub sensors: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derived: Option<Derived>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution: Option<Solution>,
    /// Failure of this run, when it produced no solution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Process exit code the failure maps to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_code: Option<i32>,
    pub version: String,
    pub timestamp_unix: u64,
}

impl RunRecord {
    pub fn status(&self) -> String {
        match &self.solution {
            Some(s) => s.status.to_string(),
            None => "failed".into(),
        }
    }

    pub fn degraded(&self) -> bool {
        self.solution
            .as_ref()
            .is_some_and(|s| s.status == SolveStatus::Degraded)
    }
}

/// A problem ready for the solver.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub spec: ProblemSpec,
    pub derived: Derived,
    pub sensors: Vec<[f64; 2]>,
}

pub fn resolve(config: &RunConfig, repetition: usize) -> Result<Resolved, BenchError> {
    config.validate()?;
    let derived = Derived::from_physics(&config.physics)?;
    let scheme = config.scheme.resolve(derived.m);
    let sensors = config.sensors(repetition);
    let scenario = config.physics.scenario(&sensors);
    let mut spec = ProblemSpec::new(scenario, scheme, derived.delta_max_m);
    spec.config = config.solver;
    spec.validate()?;
    Ok(Resolved {
        derived: derived.with_scheme(&scheme),
        spec,
        sensors,
    })
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// A record with the inputs of a run and no outcome yet.
pub fn blank_record(config: &RunConfig, repetition: usize, run_id: String) -> RunRecord {
    RunRecord {
        run_id,
        repetition,
        config: config.clone(),
        generator_algorithm: GENERATOR_ALGORITHM.into(),
        sensors: config.sensors(repetition),
        scheme: None,
        derived: None,
        solution: None,
        error: None,
        error_code: None,
        version: VERSION.into(),
        timestamp_unix: now(),
    }
}

/// Solves one repetition; any failure is kept in the record.
pub fn run_point(config: &RunConfig, repetition: usize, run_id: String) -> RunRecord {
    let mut record = blank_record(config, repetition, run_id);
    let outcome = resolve(config, repetition).and_then(|r| {
        record.scheme = Some(r.spec.scheme);
        record.derived = Some(r.derived);
        Ok(bcd_solve(&r.spec)?)
    });
    match outcome {
        Ok(sol) => record.solution = Some(sol),
        Err(e) => {
            record.error_code = Some(e.exit_code());
            record.error = Some(e.to_string());
        }
    }
    record
}

/// All repetitions of a configuration.
///
/// Configuration and feasibility problems are returned as errors before any
/// solve starts; solver failures end up in the records.
pub fn run(config: &RunConfig) -> Result<Vec<RunRecord>, BenchError> {
    for rep in 0..config.repetitions {
        resolve(config, rep)?;
    }
    Ok((0..config.repetitions)
        .map(|rep| run_point(config, rep, format!("run-s{}-r{rep}", config.seed())))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_physics_resolves_the_td_grid() {
        let mut physics = Physics::reference();
        let d = Derived::from_physics(&physics).unwrap();
        assert!((5.40..=5.43).contains(&d.delta_max_derived_m), "{}", d.delta_max_derived_m);
        physics.delta_max_m = Some(5.0);
        let d = Derived::from_physics(&physics).unwrap();
        assert_eq!((d.m, d.dt_s), (400, 0.25));
        assert_eq!(d.n_min, 0);
    }

    #[test]
    fn cap_above_the_derived_value_is_rejected() {
        let mut physics = Physics::reference();
        physics.delta_max_m = Some(6.0);
        assert!(matches!(Derived::from_physics(&physics), Err(BenchError::Config(_))));
    }
}
