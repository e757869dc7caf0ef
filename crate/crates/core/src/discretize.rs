//! Time and path discretization: TD grids, CPD/FPD trajectories, finite-sum
//! utilities, the segment-length error bound and waypoint-count reduction by
//! merging constant-velocity runs.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    rate_from_dist_sq, segment_velocities, within, PiecewiseTrajectory, Position3, Scenario,
    Schedule, REL_TOL,
};

/// Default number of quadrature points per segment for
/// [`oracle_integrate_rates`].
pub const DEFAULT_ORACLE_SUBSTEPS: usize = 1000;

/// Constants of the finite-sum error bound for the line-of-sight rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxBoundParams {
    /// Horizontal distance (m) at which the rate gradient peaks.
    pub c1: f64,
    /// SNR scale `P * beta0 / sigma^2`.
    pub c2: f64,
    /// Peak horizontal gradient norm of the rate, bps/Hz per meter.
    pub d_u: f64,
    /// Maximum segment length, meters.
    pub delta_max: f64,
    /// Tolerated utility error.
    pub e_u_max: f64,
}

impl ApproxBoundParams {
    /// Derives the bound constants of every sensor and keeps the most
    /// demanding one (largest gradient, hence smallest segment length).
    pub fn derive(scenario: &Scenario, e_u_max: f64) -> Result<Self> {
        if !(e_u_max > 0.0) {
            return Err(Error::InvalidInput(format!("e_u_max = {e_u_max} must be positive")));
        }
        if scenario.sensors.is_empty() {
            return Err(Error::InvalidInput("scenario has no sensors".into()));
        }
        let mut best: Option<Self> = None;
        for s in 0..scenario.num_sensors() {
            let (c1, c2) = compute_c1_c2(scenario, s)?;
            let d_u = compute_du(scenario, s)?;
            let delta_max = compute_delta_max(e_u_max, scenario.period, d_u)?;
            if best.is_none_or(|b| delta_max < b.delta_max) {
                best = Some(Self {
                    c1,
                    c2,
                    d_u,
                    delta_max,
                    e_u_max,
                });
            }
        }
        Ok(best.unwrap())
    }
}

/// Closed-form `(c1, c2)` for an SNR scale and a UAV-to-sensor height.
///
/// `c1^2 = [-(2H^2 + c2) + sqrt(16H^4 + 16 c2 H^2 + c2^2)] / 6`, evaluated in
/// the rationalized form `2H^2 (H^2 + c2) / (sqrt(..) + 2H^2 + c2)` which
/// does not cancel as `c2 -> 0`.
pub fn c1_c2_closed_form(snr_scale: f64, height: f64) -> (f64, f64) {
    let c2 = snr_scale;
    let h2 = height * height;
    let root = (16.0 * h2 * h2 + 16.0 * c2 * h2 + c2 * c2).sqrt();
    let c1_sq = 2.0 * h2 * (h2 + c2) / (root + 2.0 * h2 + c2);
    (c1_sq.sqrt(), c2)
}

/// Peak horizontal gradient norm of `log2(1 + c2 / (r^2 + H^2))` over `r`.
pub fn du_closed_form(snr_scale: f64, height: f64) -> f64 {
    let (c1, c2) = c1_c2_closed_form(snr_scale, height);
    let h2 = height * height;
    let d2 = c1 * c1 + h2;
    2.0 * c2 / LN_2 * c1 / (d2 * (d2 + c2))
}

fn sensor_height(scenario: &Scenario, sensor: usize) -> Result<f64> {
    let w = scenario
        .sensors
        .get(sensor)
        .ok_or_else(|| Error::InvalidInput(format!("no sensor {sensor}")))?;
    let h = scenario.h_min - w.z;
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!(
            "sensor {sensor} is not below the flight altitude"
        )));
    }
    Ok(h)
}

pub fn compute_c1_c2(scenario: &Scenario, sensor: usize) -> Result<(f64, f64)> {
    let h = sensor_height(scenario, sensor)?;
    Ok(c1_c2_closed_form(scenario.snr_scale(sensor), h))
}

pub fn compute_du(scenario: &Scenario, sensor: usize) -> Result<f64> {
    let h = sensor_height(scenario, sensor)?;
    Ok(du_closed_form(scenario.snr_scale(sensor), h))
}

/// Largest segment length keeping the finite-sum error below `e_u_max`:
/// `2 e_u_max / (T * D_u)`.
pub fn compute_delta_max(e_u_max: f64, period: f64, d_u: f64) -> Result<f64> {
    if !(e_u_max > 0.0 && period > 0.0 && d_u > 0.0) {
        return Err(Error::InvalidInput(format!(
            "delta_max needs positive inputs (E = {e_u_max}, T = {period}, D_u = {d_u})"
        )));
    }
    Ok(2.0 * e_u_max / (period * d_u))
}

/// Upper bound `D_u * delta * T / 2` on the finite-sum utility error.
pub fn lemma1_bound(d_u: f64, delta_max: f64, period: f64) -> f64 {
    0.5 * d_u * delta_max * period
}

/// Equal-time slots of the TD scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TdGrid {
    pub m: usize,
    pub dt: f64,
}

/// Smallest slot count `M` with `T / M <= delta_max / V_max`.
pub fn make_td_grid(scenario: &Scenario, delta_max: f64) -> Result<TdGrid> {
    if !(delta_max > 0.0) {
        return Err(Error::InvalidInput(format!("delta_max = {delta_max} must be positive")));
    }
    let ratio = scenario.period * scenario.v_max / delta_max;
    let mut m = ceil_tol(ratio).max(1);
    // Guard against the tolerance letting dt creep above the cap.
    while !within(scenario.period / m as f64, delta_max / scenario.v_max) {
        m += 1;
    }
    Ok(TdGrid {
        m,
        dt: scenario.period / m as f64,
    })
}

fn ceil_tol(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() <= REL_TOL * x.abs().max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// `ceil(|q_start - q_end| / delta_max)`.
pub fn compute_n_min(q_start: &Position3, q_end: &Position3, delta_max: f64) -> Result<usize> {
    if !(delta_max > 0.0) {
        return Err(Error::InvalidInput(format!("delta_max = {delta_max} must be positive")));
    }
    Ok(ceil_tol(q_start.distance(q_end) / delta_max))
}

/// FPD path: designable waypoints joined by long-segments, each split into
/// `j` equal short-segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpdPath {
    pub designable: Vec<Position3>,
    pub durations: Vec<f64>,
    pub j: usize,
}

impl FpdPath {
    pub fn num_long_segments(&self) -> usize {
        self.durations.len()
    }

    /// Short waypoint `j` (1..=J) of long-segment `l` (1..=L).
    pub fn short_waypoint(&self, l: usize, j: usize) -> Position3 {
        let a = &self.designable[l - 1];
        let b = &self.designable[l];
        a.lerp(b, j as f64 / self.j as f64)
    }

    fn check_shape(&self) -> Result<()> {
        if self.j == 0 {
            return Err(Error::InvalidInput("J must be at least 1".into()));
        }
        if self.designable.is_empty() || self.designable.len() != self.durations.len() + 1 {
            return Err(Error::DimensionMismatch(format!(
                "{} designable waypoints with {} long-segment durations",
                self.designable.len(),
                self.durations.len()
            )));
        }
        Ok(())
    }
}

/// Expands an FPD path into its `L*J` short-segments, inserting the `J-1`
/// interpolated waypoints of every long-segment.
pub fn expand_fpd(path: &FpdPath, delta_max: f64) -> Result<PiecewiseTrajectory> {
    path.check_shape()?;
    let j = path.j;
    let cap = j as f64 * delta_max;
    let mut waypoints = Vec::with_capacity(path.num_long_segments() * j + 1);
    let mut durations = Vec::with_capacity(path.num_long_segments() * j);
    waypoints.push(path.designable[0]);
    for l in 1..=path.num_long_segments() {
        let length = path.designable[l - 1].distance(&path.designable[l]);
        if !within(length, cap) {
            return Err(Error::DiscretizationAccuracy {
                segment: l - 1,
                length,
                cap,
            });
        }
        for k in 1..j {
            waypoints.push(path.short_waypoint(l, k));
        }
        waypoints.push(path.designable[l]);
        durations.extend(std::iter::repeat_n(path.durations[l - 1] / j as f64, j));
    }
    PiecewiseTrajectory::new(waypoints, durations)
}

fn check_schedule(scenario: &Scenario, schedule: &Schedule, segments: usize) -> Result<()> {
    if schedule.num_sensors() != scenario.num_sensors()
        || schedule.alpha.iter().any(|row| row.len() != segments)
    {
        return Err(Error::DimensionMismatch(format!(
            "schedule must be {} x {segments}",
            scenario.num_sensors()
        )));
    }
    Ok(())
}

fn rate_at(scenario: &Scenario, s: usize, q: &Position3) -> Result<f64> {
    let d2 = q.distance_sq(&scenario.sensors[s]);
    if d2 == 0.0 {
        return Err(Error::InfiniteRate);
    }
    Ok(rate_from_dist_sq(scenario.snr_scale(s), d2))
}

/// Finite-sum average rate of every sensor, each segment evaluated at its
/// terminal waypoint: `(1/T) sum_n alpha[s][n] t_n log2(1 + c2 / |q_n - w_s|^2)`.
pub fn finite_sum_rates(
    traj: &PiecewiseTrajectory,
    scenario: &Scenario,
    schedule: &Schedule,
) -> Result<Vec<f64>> {
    check_schedule(scenario, schedule, traj.num_segments())?;
    (0..scenario.num_sensors())
        .map(|s| {
            let mut acc = 0.0;
            for (n, &t) in traj.durations.iter().enumerate() {
                let a = schedule.alpha[s][n];
                if a != 0.0 {
                    acc += a * t * rate_at(scenario, s, &traj.waypoints[n + 1])?;
                }
            }
            Ok(acc / scenario.period)
        })
        .collect()
}

/// Finite-sum rates evaluated directly from the designable waypoints of an
/// FPD path; `schedule` has one column per short-segment.
pub fn fpd_rates(path: &FpdPath, scenario: &Scenario, schedule: &Schedule) -> Result<Vec<f64>> {
    path.check_shape()?;
    let j = path.j;
    check_schedule(scenario, schedule, path.num_long_segments() * j)?;
    (0..scenario.num_sensors())
        .map(|s| {
            let mut acc = 0.0;
            for l in 1..=path.num_long_segments() {
                let short = path.durations[l - 1] / j as f64;
                for k in 1..=j {
                    let a = schedule.alpha[s][(l - 1) * j + k - 1];
                    if a != 0.0 {
                        acc += a * short * rate_at(scenario, s, &path.short_waypoint(l, k))?;
                    }
                }
            }
            Ok(acc / scenario.period)
        })
        .collect()
}

/// Reference rates from composite midpoint quadrature of the continuous
/// trajectory, `substeps` points per segment.
pub fn oracle_integrate_rates(
    traj: &PiecewiseTrajectory,
    scenario: &Scenario,
    schedule: &Schedule,
    substeps: usize,
) -> Result<Vec<f64>> {
    if substeps < 100 {
        return Err(Error::InvalidInput(format!(
            "oracle quadrature needs at least 100 substeps, got {substeps}"
        )));
    }
    check_schedule(scenario, schedule, traj.num_segments())?;
    (0..scenario.num_sensors())
        .map(|s| {
            let mut acc = 0.0;
            for (n, &t) in traj.durations.iter().enumerate() {
                let a = schedule.alpha[s][n];
                if a == 0.0 {
                    continue;
                }
                let (p, q) = (&traj.waypoints[n], &traj.waypoints[n + 1]);
                let mut seg = 0.0;
                for k in 0..substeps {
                    let frac = (k as f64 + 0.5) / substeps as f64;
                    seg += rate_at(scenario, s, &p.lerp(q, frac))?;
                }
                acc += a * t * seg / substeps as f64;
            }
            Ok(acc / scenario.period)
        })
        .collect()
}

/// Length limit applied when merging constant-velocity runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MergeCap {
    /// Merged segments may not exceed this length (CPD segments: `delta_max`;
    /// FPD long-segments: `J * delta_max`).
    Length(f64),
    Unbounded,
}

fn same_velocity(a: &[f64; 3], b: &[f64; 3]) -> bool {
    a.iter()
        .zip(b)
        .all(|(x, y)| (x - y).abs() <= REL_TOL * x.abs().max(y.abs()) + 1e-12)
}

/// Merges maximal runs of consecutive equal-velocity segments whose combined
/// length stays within `cap`. The result traces the same `q(t)`.
///
/// On a TD grid with `dt = delta_max / V_max`, `MergeCap::Length(delta_max)`
/// merges `A` slots exactly when their speed is at most `V_max / A`.
pub fn compress_constant_velocity_runs(
    traj: &PiecewiseTrajectory,
    cap: MergeCap,
) -> Result<PiecewiseTrajectory> {
    let velocities = segment_velocities(traj)?;
    let limit = match cap {
        MergeCap::Length(c) => c,
        MergeCap::Unbounded => f64::INFINITY,
    };
    let mut waypoints = vec![traj.waypoints[0]];
    let mut durations = Vec::new();
    let mut n = 0;
    while n < traj.num_segments() {
        let start = traj.waypoints[n];
        let v = velocities[n];
        let mut duration = traj.durations[n];
        let mut end = n + 1;
        while end < traj.num_segments()
            && same_velocity(&velocities[end], &v)
            && within(start.distance(&traj.waypoints[end + 1]), limit)
        {
            duration += traj.durations[end];
            end += 1;
        }
        waypoints.push(traj.waypoints[end]);
        durations.push(duration);
        n = end;
    }
    PiecewiseTrajectory::new(waypoints, durations)
}
