//! Geometry, kinematics and line-of-sight channel physics shared by every
//! discretization scheme.
//!
//! All quantities are SI. Channel constants given in dB are converted with
//! [`db_to_linear`] before they reach a [`Scenario`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance of every feasibility check.
pub const REL_TOL: f64 = 1e-9;
/// Absolute tolerance of every feasibility check.
pub const ABS_TOL: f64 = 1e-12;

/// `value <= limit` up to the feasibility tolerances.
pub fn within(value: f64, limit: f64) -> bool {
    value <= limit + ABS_TOL + REL_TOL * limit.abs()
}

/// `a == b` up to the feasibility tolerances.
pub fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= ABS_TOL + REL_TOL * a.abs().max(b.abs())
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// A point in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn sub(&self, other: &Position3) -> [f64; 3] {
        [self.x - other.x, self.y - other.y, self.z - other.z]
    }

    pub fn distance(&self, other: &Position3) -> f64 {
        self.distance_sq(other).sqrt()
    }

    pub fn distance_sq(&self, other: &Position3) -> f64 {
        let [dx, dy, dz] = self.sub(other);
        dx * dx + dy * dy + dz * dz
    }

    pub fn horizontal_distance(&self, other: &Position3) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Point at fraction `frac` of the way from `self` to `other`.
    pub fn lerp(&self, other: &Position3, frac: f64) -> Position3 {
        Position3 {
            x: self.x + frac * (other.x - self.x),
            y: self.y + frac * (other.y - self.y),
            z: self.z + frac * (other.z - self.z),
        }
    }
}

impl fmt::Display for Position3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// Environment and physics of a data-harvesting mission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Ground sensor positions.
    pub sensors: Vec<Position3>,
    /// Transmit power per sensor, watts.
    pub tx_powers: Vec<f64>,
    /// Linear channel power gain at 1 m.
    pub beta0: f64,
    /// Receiver noise power, watts.
    pub noise_power: f64,
    /// Flight altitude, meters.
    pub h_min: f64,
    /// Maximum speed, m/s.
    pub v_max: f64,
    /// Mission period, seconds.
    pub period: f64,
    pub q_start: Position3,
    pub q_end: Position3,
    /// Multiplicative tightening of the segment-length constraints.
    #[serde(default)]
    pub epsilon_robust: f64,
}

impl Scenario {
    /// Checks the scenario invariants.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.sensors.len() != self.tx_powers.len() {
            return bad(format!(
                "{} sensors but {} transmit powers",
                self.sensors.len(),
                self.tx_powers.len()
            ));
        }
        if let Some(p) = self.tx_powers.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
            return bad(format!("transmit power {p} W is not positive"));
        }
        if let Some(w) = self.sensors.iter().find(|w| !w.is_finite() || w.z < 0.0) {
            return bad(format!("sensor position {w} is not finite with z >= 0"));
        }
        if !(self.beta0 > 0.0 && self.noise_power > 0.0) {
            return bad("beta0 and noise power must be positive".into());
        }
        if !(self.v_max > 0.0 && self.v_max.is_finite()) {
            return bad(format!("v_max = {} must be positive", self.v_max));
        }
        if !(self.h_min > 0.0 && self.h_min.is_finite()) {
            return bad(format!("h_min = {} must be positive", self.h_min));
        }
        if !(self.epsilon_robust >= 0.0) {
            return bad(format!("epsilon_robust = {} must be >= 0", self.epsilon_robust));
        }
        for q in [&self.q_start, &self.q_end] {
            if !q.is_finite() || q.z < 0.0 {
                return bad(format!("endpoint {q} is not finite with z >= 0"));
            }
        }
        let min_period = self.q_start.distance(&self.q_end) / self.v_max;
        if !(self.period > 0.0) || !within(min_period, self.period) {
            return bad(format!(
                "period {} s is shorter than the straight flight time {min_period} s",
                self.period
            ));
        }
        Ok(())
    }

    pub fn num_sensors(&self) -> usize {
        self.sensors.len()
    }

    /// Receive SNR scale `P_s * beta0 / sigma^2` of sensor `s` (SNR at 1 m).
    pub fn snr_scale(&self, s: usize) -> f64 {
        self.tx_powers[s] * self.beta0 / self.noise_power
    }

    /// Horizontal centroid of the sensors, lifted to `h_min`.
    pub fn sensor_centroid(&self) -> Position3 {
        let n = self.sensors.len().max(1) as f64;
        let (sx, sy) = self
            .sensors
            .iter()
            .fold((0.0, 0.0), |(ax, ay), w| (ax + w.x, ay + w.y));
        Position3::new(sx / n, sy / n, self.h_min)
    }
}

/// Ordered waypoints joined by constant-velocity segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseTrajectory {
    pub waypoints: Vec<Position3>,
    pub durations: Vec<f64>,
}

impl PiecewiseTrajectory {
    pub fn new(waypoints: Vec<Position3>, durations: Vec<f64>) -> Result<Self> {
        if waypoints.is_empty() || waypoints.len() != durations.len() + 1 {
            return Err(Error::DimensionMismatch(format!(
                "{} waypoints need {} durations, got {}",
                waypoints.len(),
                waypoints.len().saturating_sub(1),
                durations.len()
            )));
        }
        Ok(Self {
            waypoints,
            durations,
        })
    }

    pub fn num_segments(&self) -> usize {
        self.durations.len()
    }

    pub fn total_duration(&self) -> f64 {
        self.durations.iter().sum()
    }

    pub fn segment_length(&self, n: usize) -> f64 {
        self.waypoints[n].distance(&self.waypoints[n + 1])
    }

    pub fn segment_lengths(&self) -> Vec<f64> {
        (0..self.num_segments())
            .map(|n| self.segment_length(n))
            .collect()
    }

    pub fn max_segment_length(&self) -> f64 {
        self.segment_lengths().into_iter().fold(0.0, f64::max)
    }

    /// Position at time `t` (clamped to the trajectory's time span).
    pub fn position_at(&self, t: f64) -> Position3 {
        let mut start = 0.0;
        for (n, &d) in self.durations.iter().enumerate() {
            if t <= start + d || n + 1 == self.durations.len() {
                let frac = if d > 0.0 {
                    ((t - start) / d).clamp(0.0, 1.0)
                } else {
                    1.0
                };
                return self.waypoints[n].lerp(&self.waypoints[n + 1], frac);
            }
            start += d;
        }
        self.waypoints[0]
    }
}

/// Relaxed TDMA allocation: `alpha[s][n]` is the share of segment `n` given
/// to sensor `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub alpha: Vec<Vec<f64>>,
}

impl Schedule {
    pub fn uniform(sensors: usize, segments: usize) -> Self {
        let share = if sensors == 0 { 0.0 } else { 1.0 / sensors as f64 };
        Self {
            alpha: vec![vec![share; segments]; sensors],
        }
    }

    pub fn zeros(sensors: usize, segments: usize) -> Self {
        Self {
            alpha: vec![vec![0.0; segments]; sensors],
        }
    }

    pub fn full(sensors: usize, segments: usize) -> Self {
        Self {
            alpha: vec![vec![1.0; segments]; sensors],
        }
    }

    pub fn num_sensors(&self) -> usize {
        self.alpha.len()
    }

    pub fn num_segments(&self) -> usize {
        self.alpha.first().map_or(0, Vec::len)
    }

    /// Checks entry bounds and per-segment column sums.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_segments();
        if self.alpha.iter().any(|row| row.len() != n) {
            return Err(Error::DimensionMismatch("ragged schedule rows".into()));
        }
        for (s, row) in self.alpha.iter().enumerate() {
            if let Some((k, a)) = row
                .iter()
                .enumerate()
                .find(|(_, a)| !(**a >= -REL_TOL && **a <= 1.0 + REL_TOL))
            {
                return Err(Error::InvalidInput(format!(
                    "alpha[{s}][{k}] = {a} outside [0, 1]"
                )));
            }
        }
        for k in 0..n {
            let col: f64 = self.alpha.iter().map(|row| row[k]).sum();
            if col > 1.0 + REL_TOL {
                return Err(Error::InvalidInput(format!(
                    "segment {k} is over-allocated (sum of alpha = {col})"
                )));
            }
        }
        Ok(())
    }
}

/// Constant velocity of every segment, m/s.
pub fn segment_velocities(traj: &PiecewiseTrajectory) -> Result<Vec<[f64; 3]>> {
    traj.durations
        .iter()
        .enumerate()
        .map(|(n, &t)| {
            if !(t > 0.0) {
                return Err(Error::DegenerateSegment {
                    segment: n,
                    duration: t,
                });
            }
            let d = traj.waypoints[n + 1].sub(&traj.waypoints[n]);
            Ok([d[0] / t, d[1] / t, d[2] / t])
        })
        .collect()
}

/// `log2(1 + snr_scale / d^2)` for an SNR scale `p_tx * beta0 / noise`.
pub(crate) fn rate_from_dist_sq(snr_scale: f64, dist_sq: f64) -> f64 {
    (snr_scale / dist_sq).ln_1p() / std::f64::consts::LN_2
}

/// Achievable line-of-sight spectral efficiency (bps/Hz) between the UAV at
/// `q` and a sensor at `w`.
pub fn spectral_efficiency(
    q: &Position3,
    w: &Position3,
    p_tx: f64,
    beta0: f64,
    noise: f64,
) -> Result<f64> {
    if p_tx == 0.0 {
        return Ok(0.0);
    }
    let d2 = q.distance_sq(w);
    if d2 == 0.0 {
        return Err(Error::InfiniteRate);
    }
    Ok(rate_from_dist_sq(p_tx * beta0 / noise, d2))
}

/// A broken trajectory constraint.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Shape { waypoints: usize, durations: usize },
    NonFinite { index: usize },
    NonPositiveDuration { segment: usize, duration: f64 },
    PeriodExceeded { total: f64, period: f64 },
    Speed { segment: usize, speed: f64, limit: f64 },
    Altitude { index: usize, z: f64, required: f64 },
    Start { actual: Position3, required: Position3 },
    End { actual: Position3, required: Position3 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape { waypoints, durations } => {
                write!(f, "{waypoints} waypoints with {durations} durations")
            }
            Violation::NonFinite { index } => write!(f, "waypoint {index} is not finite"),
            Violation::NonPositiveDuration { segment, duration } => {
                write!(f, "segment {segment} has duration {duration} s")
            }
            Violation::PeriodExceeded { total, period } => {
                write!(f, "total duration {total} s exceeds the period {period} s")
            }
            Violation::Speed { segment, speed, limit } => {
                write!(f, "segment {segment} speed {speed} m/s exceeds {limit} m/s")
            }
            Violation::Altitude { index, z, required } => {
                write!(f, "waypoint {index} altitude {z} m differs from {required} m")
            }
            Violation::Start { actual, required } => {
                write!(f, "trajectory starts at {actual}, expected {required}")
            }
            Violation::End { actual, required } => {
                write!(f, "trajectory ends at {actual}, expected {required}")
            }
        }
    }
}

fn same_point(a: &Position3, b: &Position3) -> bool {
    approx_eq(a.x, b.x) && approx_eq(a.y, b.y) && approx_eq(a.z, b.z)
}

/// Lists every violated trajectory constraint: positive durations within the
/// period, the speed limit, the fixed altitude and both endpoints.
pub fn validate_trajectory(traj: &PiecewiseTrajectory, scenario: &Scenario) -> Vec<Violation> {
    let mut out = Vec::new();
    if traj.waypoints.is_empty() || traj.waypoints.len() != traj.durations.len() + 1 {
        out.push(Violation::Shape {
            waypoints: traj.waypoints.len(),
            durations: traj.durations.len(),
        });
        return out;
    }
    for (index, q) in traj.waypoints.iter().enumerate() {
        if !q.is_finite() {
            out.push(Violation::NonFinite { index });
        } else if !approx_eq(q.z, scenario.h_min) {
            out.push(Violation::Altitude {
                index,
                z: q.z,
                required: scenario.h_min,
            });
        }
    }
    for (segment, &duration) in traj.durations.iter().enumerate() {
        if !(duration > 0.0) {
            out.push(Violation::NonPositiveDuration { segment, duration });
            continue;
        }
        let length = traj.segment_length(segment);
        if !within(length, scenario.v_max * duration) {
            out.push(Violation::Speed {
                segment,
                speed: length / duration,
                limit: scenario.v_max,
            });
        }
    }
    let total = traj.total_duration();
    if !within(total, scenario.period) {
        out.push(Violation::PeriodExceeded {
            total,
            period: scenario.period,
        });
    }
    let first = traj.waypoints[0];
    let last = *traj.waypoints.last().unwrap();
    if !same_point(&first, &scenario.q_start) {
        out.push(Violation::Start {
            actual: first,
            required: scenario.q_start,
        });
    }
    if !same_point(&last, &scenario.q_end) {
        out.push(Violation::End {
            actual: last,
            required: scenario.q_end,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(v_max: f64) -> Scenario {
        Scenario {
            sensors: vec![Position3::new(0.0, 0.0, 0.0)],
            tx_powers: vec![0.2],
            beta0: 1e-6,
            noise_power: 1e-9,
            h_min: 100.0,
            v_max,
            period: 10.0,
            q_start: Position3::new(0.0, 0.0, 100.0),
            q_end: Position3::new(0.0, 0.0, 100.0),
            epsilon_robust: 0.0,
        }
    }

    #[test]
    fn velocity_examples() {
        let t = PiecewiseTrajectory::new(
            vec![Position3::new(0.0, 0.0, 100.0), Position3::new(15.0, 0.0, 100.0)],
            vec![1.5],
        )
        .unwrap();
        assert_eq!(segment_velocities(&t).unwrap(), vec![[10.0, 0.0, 0.0]]);

        let t = PiecewiseTrajectory::new(
            vec![Position3::new(0.0, 0.0, 100.0), Position3::new(0.0, 15.0, 100.0)],
            vec![3.0],
        )
        .unwrap();
        assert_eq!(segment_velocities(&t).unwrap(), vec![[0.0, 5.0, 0.0]]);

        let p = Position3::new(3.0, 4.0, 100.0);
        let t = PiecewiseTrajectory::new(vec![p, p], vec![2.0]).unwrap();
        assert_eq!(segment_velocities(&t).unwrap(), vec![[0.0, 0.0, 0.0]]);
    }

    #[test]
    fn zero_duration_is_degenerate() {
        let p = Position3::new(0.0, 0.0, 100.0);
        let t = PiecewiseTrajectory::new(vec![p, p], vec![0.0]).unwrap();
        assert!(matches!(
            segment_velocities(&t),
            Err(Error::DegenerateSegment { segment: 0, .. })
        ));
    }

    #[test]
    fn spectral_efficiency_examples() {
        let q = Position3::new(0.0, 0.0, 100.0);
        let w = Position3::default();
        let r = spectral_efficiency(&q, &w, 0.2, 1e-6, 1e-9).unwrap();
        assert!((r - 1.02f64.log2()).abs() < 1e-15);
        assert!((r - 0.028569).abs() < 1e-6);

        assert_eq!(spectral_efficiency(&q, &w, 0.0, 1e-6, 1e-9).unwrap(), 0.0);
        assert!(matches!(
            spectral_efficiency(&w, &w, 0.2, 1e-6, 1e-9),
            Err(Error::InfiniteRate)
        ));

        // High SNR: doubling the distance costs about 2 bps/Hz.
        let near = spectral_efficiency(&Position3::new(10.0, 0.0, 0.0), &w, 1.0, 1e-3, 1e-9);
        let far = spectral_efficiency(&Position3::new(20.0, 0.0, 0.0), &w, 1.0, 1e-3, 1e-9);
        assert!((near.unwrap() - far.unwrap() - 2.0).abs() < 0.1);
    }

    #[test]
    fn validate_examples() {
        let sc = scenario(20.0);
        let hover = PiecewiseTrajectory::new(vec![sc.q_start; 3], vec![5.0, 5.0]).unwrap();
        assert!(validate_trajectory(&hover, &sc).is_empty());

        let fast = PiecewiseTrajectory::new(
            vec![
                sc.q_start,
                Position3::new(6.0, 0.0, 100.0),
                Position3::new(6.0, 0.0, 100.0),
            ],
            vec![0.25, 1.0],
        )
        .unwrap();
        let v = validate_trajectory(&fast, &sc);
        assert!(v.contains(&Violation::Speed {
            segment: 0,
            speed: 24.0,
            limit: 20.0
        }));
        assert!(v.iter().any(|v| matches!(v, Violation::End { .. })));
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn schedule_bounds() {
        assert!(Schedule::uniform(3, 4).validate().is_ok());
        let bad = Schedule {
            alpha: vec![vec![0.7], vec![0.7]],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn db_conversion() {
        assert!((db_to_linear(-60.0) - 1e-6).abs() < 1e-20);
        assert!((db_to_linear(-90.0) - 1e-9).abs() < 1e-23);
    }
}
