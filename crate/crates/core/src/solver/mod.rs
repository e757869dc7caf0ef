//! Block coordinate descent over schedule, durations and waypoints (or path
//! coefficients), with successive convex approximation for the waypoint
//! block, for the max-min data-harvesting rate under TD, CPD, FPD and FPD-PC.

mod bcd;
mod blocks;
mod init;
mod sca;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{
    fourier_basis, least_squares_fit, orthonormal_span, reconstruct, select_indices,
    shifted_sine_basis, BasisKind, PathCoeffs, Selection,
};
use crate::conic::ClarabelBackend;
use crate::discretize::{fpd_rates, FpdPath};
use crate::error::{Error, Result};
use crate::model::{approx_eq, within, PiecewiseTrajectory, Position3, Scenario, Schedule};

pub use bcd::{bcd_solve, bcd_solve_with};
pub use blocks::{solve_durations, solve_schedule};
pub use init::{initialize, Iterate};
pub use sca::{rate_lower_bound, sca_coeff_step, sca_waypoint_step, surrogate_rates};

/// Trajectory discretization scheme and its counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Scheme {
    /// `m` equal time slots.
    Td { m: usize },
    /// `n` free segments.
    Cpd { n: usize },
    /// `l` long-segments of `j` short-segments each.
    Fpd { l: usize, j: usize },
    /// FPD whose designable waypoints are `k` selected basis paths.
    FpdPc {
        l: usize,
        j: usize,
        k: usize,
        basis: BasisKind,
        selection: Selection,
    },
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Td { .. } => "TD",
            Scheme::Cpd { .. } => "CPD",
            Scheme::Fpd { .. } => "FPD",
            Scheme::FpdPc { .. } => "FPD-PC",
        }
    }

    /// Number of long-segments (segments for TD and CPD).
    pub fn long_segments(&self) -> usize {
        match *self {
            Scheme::Td { m } => m,
            Scheme::Cpd { n } => n,
            Scheme::Fpd { l, .. } | Scheme::FpdPc { l, .. } => l,
        }
    }

    /// Short-segments per long-segment.
    pub fn j(&self) -> usize {
        match *self {
            Scheme::Td { .. } | Scheme::Cpd { .. } => 1,
            Scheme::Fpd { j, .. } | Scheme::FpdPc { j, .. } => j,
        }
    }

    /// Total number of short-segments.
    pub fn short_segments(&self) -> usize {
        self.long_segments() * self.j()
    }

    /// Horizontal path design variables: two per designable waypoint, or
    /// two per basis path.
    pub fn design_variables(&self) -> usize {
        match *self {
            Scheme::FpdPc { k, .. } => 2 * k,
            _ => 2 * (self.long_segments() + 1),
        }
    }

    pub fn k(&self) -> Option<usize> {
        match *self {
            Scheme::FpdPc { k, .. } => Some(k),
            _ => None,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Scheme::Td { m } => write!(f, "TD(M={m})"),
            Scheme::Cpd { n } => write!(f, "CPD(N={n})"),
            Scheme::Fpd { l, j } => write!(f, "FPD(L={l},J={j})"),
            Scheme::FpdPc {
                l,
                j,
                k,
                basis,
                selection,
            } => write!(f, "FPD-PC(L={l},J={j},K={k},{basis},{selection})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub bcd_max_iters: usize,
    pub bcd_rel_tol: f64,
    pub sca_max_iters: usize,
    pub sca_rel_tol: f64,
    pub conic_kkt_tol: f64,
    /// Seed of the scenario generator; the solver itself is deterministic.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            bcd_max_iters: 50,
            bcd_rel_tol: 1e-4,
            sca_max_iters: 20,
            sca_rel_tol: 1e-4,
            conic_kkt_tol: 1e-8,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !(positive(self.bcd_rel_tol) && positive(self.sca_rel_tol) && positive(self.conic_kkt_tol))
        {
            return Err(Error::InvalidInput("solver tolerances must be positive".into()));
        }
        if self.bcd_max_iters == 0 || self.sca_max_iters == 0 {
            return Err(Error::InvalidInput("iteration caps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn backend(&self) -> ClarabelBackend {
        ClarabelBackend::with_tolerance(self.conic_kkt_tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub scenario: Scenario,
    pub scheme: Scheme,
    /// Maximum short-segment length, meters.
    pub delta_max: f64,
    pub config: SolverConfig,
}

impl ProblemSpec {
    pub fn new(scenario: Scenario, scheme: Scheme, delta_max: f64) -> Self {
        Self {
            scenario,
            scheme,
            delta_max,
            config: SolverConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.config.validate()?;
        let sc = &self.scenario;
        if !(self.delta_max > 0.0 && self.delta_max.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "delta_max = {} must be positive",
                self.delta_max
            )));
        }
        for (name, q) in [("start", &sc.q_start), ("end", &sc.q_end)] {
            if !approx_eq(q.z, sc.h_min) {
                return Err(Error::InvalidInput(format!(
                    "{name} altitude {} m must equal h_min = {} m",
                    q.z, sc.h_min
                )));
            }
        }
        let l = self.scheme.long_segments();
        let j = self.scheme.j();
        if l == 0 || j == 0 {
            return Err(Error::InvalidInput(format!("{} has no segments", self.scheme)));
        }
        if let Scheme::Td { m } = self.scheme {
            let dt = sc.period / m as f64;
            if !within(dt * sc.v_max, self.delta_max) {
                return Err(Error::InvalidInput(format!(
                    "M = {m} slots allow {:.6} m per slot, above delta_max = {} m",
                    dt * sc.v_max,
                    self.delta_max
                )));
            }
        }
        let reach = (l * j) as f64 * self.delta_max;
        if !within(sc.q_start.distance(&sc.q_end), reach) {
            return Err(Error::InvalidInput(format!(
                "{} segments of at most {} m cannot join the endpoints",
                l * j,
                self.delta_max
            )));
        }
        if let Scheme::FpdPc { l, k, basis, .. } = self.scheme {
            if k == 0 || k > l + 1 {
                return Err(Error::InvalidInput(format!("K = {k} must lie in 1..={}", l + 1)));
            }
            if basis == BasisKind::Custom {
                return Err(Error::InvalidInput("FPD-PC needs a Fourier or shifted-sine basis".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    IterationCap,
    /// Conic failures persisted; the best point found is returned.
    Degraded,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveStatus::Converged => "converged",
            SolveStatus::IterationCap => "iteration-cap",
            SolveStatus::Degraded => "degraded",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub scheme: Scheme,
    /// Expanded trajectory over all short-segments.
    pub trajectory: PiecewiseTrajectory,
    pub designable: Vec<Position3>,
    /// Long-segment durations, seconds.
    pub durations: Vec<f64>,
    /// Path coefficients (x row, y row) for FPD-PC.
    pub coeffs: Option<Vec<Vec<f64>>>,
    pub schedule: Schedule,
    /// Finite-sum average rate per sensor, bps/Hz.
    pub rates: Vec<f64>,
    /// Minimum of `rates`.
    pub objective: f64,
    /// Objective at the initial point and after every BCD iteration.
    pub iteration_log: Vec<f64>,
    pub iterations: usize,
    pub status: SolveStatus,
    pub wall_time_s: f64,
    /// Time spent in the waypoint or coefficient block.
    pub waypoint_block_time_s: f64,
    /// Conic solves issued by the waypoint or coefficient block.
    pub waypoint_block_solves: usize,
    pub design_variables: usize,
}

impl Solution {
    /// Index of the sensor with the lowest rate.
    pub fn min_sensor(&self) -> usize {
        self.rates
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(s, _)| s)
    }
}

/// Maps the design variables (one row per horizontal coordinate) to the
/// designable waypoints `q_l = B_l . v`.
///
/// For FPD-PC the variables are coordinates in an orthonormal basis of the
/// span of the selected basis paths; path coefficients are recovered by a
/// least-squares fit only when reported.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub l: usize,
    pub j: usize,
    /// `(L+1) x nd`.
    pub b: DMatrix<f64>,
    pub coefficients: bool,
    /// Selected `K x (L+1)` basis rows for FPD-PC.
    pub rows: Option<DMatrix<f64>>,
    /// Fixed long-segment duration (TD).
    pub fixed_duration: Option<f64>,
    /// Length cap of a long-segment before the speed limit.
    pub seg_cap: f64,
    pub h: f64,
    pub v_max: f64,
    pub epsilon: f64,
    pub start: [f64; 2],
    pub end: [f64; 2],
}

/// Relative shrink applied to length caps inside conic subproblems.
pub(crate) const CAP_MARGIN: f64 = 1e-7;

impl Layout {
    pub fn new(spec: &ProblemSpec) -> Result<Self> {
        spec.validate()?;
        let sc = &spec.scenario;
        let l = spec.scheme.long_segments();
        let j = spec.scheme.j();
        let (b, rows) = match spec.scheme {
            Scheme::FpdPc {
                l,
                k,
                basis,
                selection,
                ..
            } => {
                let full = match basis {
                    BasisKind::Fourier => fourier_basis(l)?,
                    _ => shifted_sine_basis(l)?,
                };
                let rows = full.select(&select_indices(l, k, selection)?);
                let span = orthonormal_span(&rows)?;
                // Full rank over every waypoint: the span is the whole space.
                let b = if k == l + 1 { DMatrix::identity(l + 1, l + 1) } else { span };
                (b, Some(rows))
            }
            _ => (DMatrix::identity(l + 1, l + 1), None),
        };
        let (fixed_duration, seg_cap) = match spec.scheme {
            Scheme::Td { m } => {
                let dt = sc.period / m as f64;
                (Some(dt), dt * sc.v_max)
            }
            _ => (None, j as f64 * spec.delta_max),
        };
        Ok(Self {
            l,
            j,
            b,
            coefficients: rows.is_some(),
            rows,
            fixed_duration,
            seg_cap,
            h: sc.h_min,
            v_max: sc.v_max,
            epsilon: sc.epsilon_robust,
            start: [sc.q_start.x, sc.q_start.y],
            end: [sc.q_end.x, sc.q_end.y],
        })
    }

    pub fn nd(&self) -> usize {
        self.b.ncols()
    }

    /// Rows `nd x (L+1)` whose combinations are the representable paths.
    pub fn basis_rows(&self) -> DMatrix<f64> {
        self.b.transpose()
    }

    fn selected_rows(&self) -> Result<&DMatrix<f64>> {
        self.rows
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("path coefficients need an FPD-PC scheme".into()))
    }

    /// Path coefficients of the waypoints given by `vars`.
    pub fn to_coeffs(&self, vars: &DMatrix<f64>) -> Result<PathCoeffs> {
        least_squares_fit(&self.waypoint_xy(vars), self.selected_rows()?)
    }

    /// Variables for the path coefficients `coeffs` (`2 x K`).
    pub fn from_coeffs(&self, coeffs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let q = reconstruct(&PathCoeffs::from_matrix(coeffs), self.selected_rows()?)?;
        Ok(q * &self.b)
    }

    /// `2 x (L+1)` horizontal waypoint coordinates.
    pub fn waypoint_xy(&self, vars: &DMatrix<f64>) -> DMatrix<f64> {
        vars * self.b.transpose()
    }

    pub fn designable(&self, vars: &DMatrix<f64>) -> Vec<Position3> {
        let q = self.waypoint_xy(vars);
        (0..=self.l)
            .map(|i| Position3::new(q[(0, i)], q[(1, i)], self.h))
            .collect()
    }

    /// Row `(1 - j/J) B_{l-1} + (j/J) B_l` giving short waypoint `j` of
    /// long-segment `l`.
    pub fn short_row(&self, l: usize, j: usize) -> DVector<f64> {
        let f = j as f64 / self.j as f64;
        let a = self.b.row(l - 1).transpose();
        let b = self.b.row(l).transpose();
        a * (1.0 - f) + b * f
    }

    /// Length cap of long-segment `l` (1-based) with duration `t`, already
    /// divided by the robustness factor.
    pub fn cap(&self, t: f64) -> f64 {
        self.seg_cap.min(t * self.v_max) / (1.0 + self.epsilon)
    }

    pub fn durations_or_fixed(&self, durations: &[f64]) -> Vec<f64> {
        match self.fixed_duration {
            Some(dt) => vec![dt; self.l],
            None => durations.to_vec(),
        }
    }

    /// Caps, endpoints and shapes hold within the feasibility tolerance.
    pub fn feasible(&self, vars: &DMatrix<f64>, durations: &[f64]) -> bool {
        if vars.nrows() != 2 || vars.ncols() != self.nd() || durations.len() != self.l {
            return false;
        }
        if vars.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let q = self.waypoint_xy(vars);
        let ends = [(0, self.start), (self.l, self.end)];
        if ends
            .iter()
            .any(|&(i, p)| !approx_eq(q[(0, i)], p[0]) || !approx_eq(q[(1, i)], p[1]))
        {
            return false;
        }
        (1..=self.l).all(|i| {
            let len = (q[(0, i)] - q[(0, i - 1)]).hypot(q[(1, i)] - q[(1, i - 1)]);
            within(len, self.cap(durations[i - 1]))
        })
    }

    pub fn path(&self, vars: &DMatrix<f64>, durations: &[f64]) -> FpdPath {
        FpdPath {
            designable: self.designable(vars),
            durations: durations.to_vec(),
            j: self.j,
        }
    }

    pub fn rates(
        &self,
        scenario: &Scenario,
        vars: &DMatrix<f64>,
        durations: &[f64],
        schedule: &Schedule,
    ) -> Result<Vec<f64>> {
        fpd_rates(&self.path(vars, durations), scenario, schedule)
    }

    /// Per-sensor rate of every short-segment, `S x (L J)`.
    pub fn short_rates(
        &self,
        scenario: &Scenario,
        vars: &DMatrix<f64>,
    ) -> Result<Vec<Vec<f64>>> {
        let designable = self.designable(vars);
        let mut out = vec![Vec::with_capacity(self.l * self.j); scenario.num_sensors()];
        for l in 1..=self.l {
            for j in 1..=self.j {
                let q = designable[l - 1].lerp(&designable[l], j as f64 / self.j as f64);
                for (s, row) in out.iter_mut().enumerate() {
                    let w = &scenario.sensors[s];
                    let r = crate::model::spectral_efficiency(
                        &q,
                        w,
                        scenario.tx_powers[s],
                        scenario.beta0,
                        scenario.noise_power,
                    )?;
                    row.push(r);
                }
            }
        }
        Ok(out)
    }

    /// Endpoint equality rows `(B_0, start)` and `(B_L, end)`, dropping a
    /// row that is linearly dependent on the first.
    pub fn endpoint_rows(&self) -> Vec<(DVector<f64>, [f64; 2])> {
        let first = self.b.row(0).transpose();
        let last = self.b.row(self.l).transpose();
        let mut rows = Vec::new();
        if first.norm() > 1e-12 {
            rows.push((first.clone(), self.start));
        }
        let independent = match rows.first() {
            Some((f, _)) => {
                let proj = f.dot(&last) / f.norm_squared();
                (&last - f * proj).norm() > 1e-9 * last.norm().max(1e-300)
            }
            None => true,
        };
        if last.norm() > 1e-12 && independent {
            rows.push((last, self.end));
        }
        rows
    }

    /// Moves the variables onto the endpoint constraints: waypoints are
    /// snapped, coefficients get the least-norm correction.
    pub fn pin_endpoints(&self, vars: &mut DMatrix<f64>) {
        if !self.coefficients {
            for d in 0..2 {
                vars[(d, 0)] = self.start[d];
                vars[(d, self.l)] = self.end[d];
            }
            return;
        }
        let rows = self.endpoint_rows();
        if rows.is_empty() {
            return;
        }
        let e = DMatrix::from_columns(&rows.iter().map(|r| r.0.clone()).collect::<Vec<_>>());
        let Some(gram_inv) = (e.transpose() * &e).try_inverse() else {
            return;
        };
        for d in 0..2 {
            let c = vars.row(d).transpose();
            let target = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1[d]));
            let resid = e.transpose() * &c - target;
            let fixed = c - &e * (&gram_inv * resid);
            vars.row_mut(d).copy_from(&fixed.transpose());
        }
    }
}

pub(crate) fn min_rate(rates: &[f64]) -> f64 {
    rates.iter().copied().fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    pub fn scenario(sensors: &[(f64, f64)], period: f64) -> Scenario {
        Scenario {
            sensors: sensors.iter().map(|&(x, y)| Position3::new(x, y, 0.0)).collect(),
            tx_powers: vec![0.2; sensors.len()],
            beta0: 1e-6,
            noise_power: 1e-9,
            h_min: 100.0,
            v_max: 20.0,
            period,
            q_start: Position3::new(0.0, 0.0, 100.0),
            q_end: Position3::new(0.0, 0.0, 100.0),
            epsilon_robust: 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::scenario;
    use super::*;

    #[test]
    fn design_variable_counts() {
        assert_eq!(Scheme::Td { m: 400 }.design_variables(), 802);
        assert_eq!(Scheme::Cpd { n: 40 }.design_variables(), 82);
        assert_eq!(Scheme::Fpd { l: 20, j: 2 }.design_variables(), 42);
        let pc = Scheme::FpdPc {
            l: 20,
            j: 2,
            k: 6,
            basis: BasisKind::Fourier,
            selection: Selection::Lowest,
        };
        assert_eq!(pc.design_variables(), 12);
        assert_eq!(pc.short_segments(), 40);
    }

    #[test]
    fn spec_validation() {
        let sc = scenario(&[(10.0, 10.0)], 10.0);
        assert!(ProblemSpec::new(sc.clone(), Scheme::Td { m: 40 }, 5.0).validate().is_ok());
        assert!(ProblemSpec::new(sc.clone(), Scheme::Td { m: 39 }, 5.0).validate().is_err());
        assert!(ProblemSpec::new(sc.clone(), Scheme::Cpd { n: 0 }, 5.0).validate().is_err());
        let pc = |k| Scheme::FpdPc {
            l: 10,
            j: 1,
            k,
            basis: BasisKind::Fourier,
            selection: Selection::Lowest,
        };
        assert!(ProblemSpec::new(sc.clone(), pc(11), 5.0).validate().is_ok());
        assert!(ProblemSpec::new(sc.clone(), pc(12), 5.0).validate().is_err());
        let mut far = sc.clone();
        far.q_end = Position3::new(100.0, 0.0, 100.0);
        far.period = 10.0;
        assert!(ProblemSpec::new(far, Scheme::Cpd { n: 10 }, 5.0).validate().is_err());
        let mut low = sc;
        low.q_start.z = 50.0;
        assert!(ProblemSpec::new(low, Scheme::Cpd { n: 10 }, 5.0).validate().is_err());
    }

    #[test]
    fn coefficient_pinning() {
        let sc = scenario(&[(10.0, 10.0)], 10.0);
        let mut spec = ProblemSpec::new(
            sc,
            Scheme::FpdPc {
                l: 8,
                j: 1,
                k: 4,
                basis: BasisKind::Fourier,
                selection: Selection::Lowest,
            },
            5.0,
        );
        spec.scenario.q_end = Position3::new(3.0, -1.0, 100.0);
        let layout = Layout::new(&spec).unwrap();
        let mut vars = DMatrix::from_fn(2, 4, |r, c| (r + 2 * c) as f64 + 0.5);
        layout.pin_endpoints(&mut vars);
        let q = layout.waypoint_xy(&vars);
        assert!(q[(0, 0)].abs() < 1e-12 && q[(1, 0)].abs() < 1e-12);
        assert!((q[(0, 8)] - 3.0).abs() < 1e-12 && (q[(1, 8)] + 1.0).abs() < 1e-12);
    }
}
