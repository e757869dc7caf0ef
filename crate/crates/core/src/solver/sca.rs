//! Successive convex approximation step for the waypoint or coefficient
//! block.
//!
//! Each rate term `g(z) = log2(1 + gamma / z)` with `z = |q - w|^2` is
//! replaced by its tangent at the current `z0`, a global lower bound that is
//! concave in `q`. Summed over the segments of one sensor, the bound reads
//! `A - c_x' G c_x - c_y' G c_y + linear(c)`, which becomes one rotated
//! second-order cone per sensor.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};

use crate::conic::{Affine, ConicBackend, ConicProblem};
use crate::discretize::FpdPath;
use crate::error::{Error, Result};
use crate::model::{Position3, Scenario, Schedule};

use super::{min_rate, Layout, ProblemSpec, CAP_MARGIN};

/// Tangent lower bound of `log2(1 + gamma / z)` at `z0`, evaluated at `z`.
pub fn rate_lower_bound(gamma: f64, z0: f64, z: f64) -> f64 {
    (gamma / z0).ln_1p() / LN_2 - gamma * (z - z0) / (LN_2 * z0 * (z0 + gamma))
}

/// Per-sensor surrogate rates of the FPD path `at`, linearized around the
/// path `expansion` (same shape, same durations).
pub fn surrogate_rates(
    expansion: &FpdPath,
    at: &FpdPath,
    scenario: &Scenario,
    schedule: &Schedule,
) -> Result<Vec<f64>> {
    if expansion.designable.len() != at.designable.len() || expansion.j != at.j {
        return Err(Error::DimensionMismatch("paths differ in shape".into()));
    }
    let j = at.j;
    let l_count = at.num_long_segments();
    (0..scenario.num_sensors())
        .map(|s| {
            let w = &scenario.sensors[s];
            let gamma = scenario.snr_scale(s);
            let mut acc = 0.0;
            for l in 1..=l_count {
                let short = at.durations[l - 1] / j as f64;
                for k in 1..=j {
                    let a = schedule.alpha[s][(l - 1) * j + k - 1];
                    if a == 0.0 {
                        continue;
                    }
                    let z0 = expansion.short_waypoint(l, k).distance_sq(w);
                    let z = at.short_waypoint(l, k).distance_sq(w);
                    if z0 == 0.0 {
                        return Err(Error::InfiniteRate);
                    }
                    acc += a * short * rate_lower_bound(gamma, z0, z);
                }
            }
            Ok(acc / scenario.period)
        })
        .collect()
}

/// Concave quadratic surrogate of one sensor's rate in the design
/// variables: `A - (c_x' G c_x + c_y' G c_y) + 2 w_x g'c_x + 2 w_y g'c_y - kappa`.
struct SensorModel {
    a: f64,
    kappa: f64,
    g: DVector<f64>,
    w: [f64; 2],
    /// Rows `sqrt(omega) a'`, one per scheduled short-waypoint, so `R'R = G`.
    factor: DMatrix<f64>,
}

fn sensor_models(
    layout: &Layout,
    scenario: &Scenario,
    vars: &DMatrix<f64>,
    durations: &[f64],
    schedule: &Schedule,
) -> Result<Vec<SensorModel>> {
    let nd = layout.nd();
    let j = layout.j;
    let t = scenario.period;
    let rows: Vec<Vec<DVector<f64>>> = (1..=layout.l)
        .map(|l| (1..=j).map(|k| layout.short_row(l, k)).collect())
        .collect();
    let points: Vec<Vec<[f64; 2]>> = rows
        .iter()
        .map(|per_l| {
            per_l
                .iter()
                .map(|a| [vars.row(0).dot(&a.transpose()), vars.row(1).dot(&a.transpose())])
                .collect()
        })
        .collect();
    (0..scenario.num_sensors())
        .map(|s| {
            let w = &scenario.sensors[s];
            let gamma = scenario.snr_scale(s);
            let hz2 = (layout.h - w.z).powi(2);
            let mut a_total = 0.0;
            let mut kappa = 0.0;
            let mut g = DVector::zeros(nd);
            let mut factor_rows: Vec<DVector<f64>> = Vec::new();
            for l in 0..layout.l {
                let mu_base = durations[l] / (j as f64 * t);
                for k in 0..j {
                    let mu = schedule.alpha[s][l * j + k] * mu_base;
                    if mu <= 0.0 {
                        continue;
                    }
                    let p = points[l][k];
                    let z0 = (p[0] - w.x).powi(2) + (p[1] - w.y).powi(2) + hz2;
                    if z0 == 0.0 {
                        return Err(Error::InfiniteRate);
                    }
                    let slope = gamma / (LN_2 * z0 * (z0 + gamma));
                    let omega = mu * slope;
                    a_total += mu * ((gamma / z0).ln_1p() / LN_2 + slope * z0);
                    kappa += omega * (w.x * w.x + w.y * w.y + hz2);
                    let a = &rows[l][k];
                    g.axpy(omega, a, 1.0);
                    factor_rows.push(a * omega.sqrt());
                }
            }
            Ok(SensorModel {
                a: a_total,
                kappa,
                g,
                w: [w.x, w.y],
                factor: compact_factor(DMatrix::from_fn(factor_rows.len(), nd, |r, c| {
                    factor_rows[r][c]
                })),
            })
        })
        .collect()
}

/// Replaces `r` by the triangular factor of its QR when that has fewer
/// nonzeros; `R'R` is unchanged.
fn compact_factor(r: DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = r.shape();
    let k = m.min(n);
    let triangular = k * n - k * (k - 1) / 2;
    if r.iter().filter(|v| **v != 0.0).count() <= triangular {
        return r;
    }
    r.qr().r()
}

impl SensorModel {
    fn quadratic(&self, vars: &DMatrix<f64>) -> f64 {
        let rx = &self.factor * vars.row(0).transpose();
        let ry = &self.factor * vars.row(1).transpose();
        rx.norm_squared() + ry.norm_squared()
    }

    fn value(&self, vars: &DMatrix<f64>) -> f64 {
        let lin = 2.0
            * (self.w[0] * self.g.dot(&vars.row(0).transpose())
                + self.w[1] * self.g.dot(&vars.row(1).transpose()));
        self.a - self.kappa + lin - self.quadratic(vars)
    }
}

/// One convexified step. Returns the new design variables with endpoints
/// pinned; feasibility and improvement are checked by the caller.
pub(crate) fn sca_step_raw(
    layout: &Layout,
    scenario: &Scenario,
    vars: &DMatrix<f64>,
    durations: &[f64],
    schedule: &Schedule,
    backend: &dyn ConicBackend,
) -> Result<DMatrix<f64>> {
    let nd = layout.nd();
    let durations = layout.durations_or_fixed(durations);
    let q = layout.waypoint_xy(vars);
    let lengths: Vec<f64> = (1..=layout.l)
        .map(|i| (q[(0, i)] - q[(0, i - 1)]).hypot(q[(1, i)] - q[(1, i - 1)]))
        .collect();
    let caps: Vec<f64> = durations
        .iter()
        .zip(&lengths)
        .map(|(&t, &len)| {
            let cap = layout.cap(t);
            cap.min((cap * (1.0 - CAP_MARGIN)).max(len))
        })
        .collect();
    let length_scale = layout.seg_cap.max(1.0);
    let pinned = caps.iter().all(|&c| c <= 1e-12 * length_scale);
    if pinned {
        return Ok(vars.clone());
    }

    let models = sensor_models(layout, scenario, vars, &durations, schedule)?;
    let current: Vec<f64> = models.iter().map(|m| m.value(vars)).collect();
    let scale = {
        let m = min_rate(&current);
        if m > 0.0 && m.is_finite() {
            m
        } else {
            1.0
        }
    };

    // Step variables: vars = vars0 + ell * d, objective eta in units of the
    // current minimum rate.
    let ell = layout.h.max(length_scale);
    let eta = 2 * nd;
    let mut p = ConicProblem::new(2 * nd + 1);
    p.minimize_term(eta, -1.0);

    for (m, &v0) in models.iter().zip(&current) {
        // tau = v0 + grad . d - eta >= |R d|^2, all divided by `scale`.
        let mut tau = Affine::constant(v0 / scale).term(eta, -1.0);
        let rc: Vec<DVector<f64>> = (0..2)
            .map(|dim| &m.factor * vars.row(dim).transpose())
            .collect();
        for (dim, offset) in [(0, 0), (1, nd)] {
            let curv = m.factor.tr_mul(&rc[dim]);
            for i in 0..nd {
                let grad = 2.0 * (m.w[dim] * m.g[i] - curv[i]);
                tau = tau.term(offset + i, grad * ell / scale);
            }
        }
        if m.factor.nrows() == 0 {
            p.nonneg(tau);
            continue;
        }
        let mut cone = vec![tau.clone().plus(1.0), tau.plus(-1.0)];
        let f = 2.0 * ell / scale.sqrt();
        for offset in [0, nd] {
            for r in 0..m.factor.nrows() {
                let mut e = Affine::default();
                for c in 0..nd {
                    e = e.term(offset + c, f * m.factor[(r, c)]);
                }
                cone.push(e);
            }
        }
        p.second_order(cone);
    }

    for (i, &cap) in caps.iter().enumerate() {
        let diff = layout.b.row(i + 1) - layout.b.row(i);
        let base = [
            diff.dot(&vars.row(0)) / ell,
            diff.dot(&vars.row(1)) / ell,
        ];
        let axis = |dim: usize| {
            let offset = dim * nd;
            let mut e = Affine::constant(base[dim]);
            for c in 0..nd {
                e = e.term(offset + c, diff[c]);
            }
            e
        };
        if cap <= 1e-12 * length_scale {
            p.equal_zero(axis(0));
            p.equal_zero(axis(1));
        } else {
            p.second_order(vec![Affine::constant(cap / ell), axis(0), axis(1)]);
        }
    }

    for (row, target) in layout.endpoint_rows() {
        for (d, offset) in [(0, 0), (1, nd)] {
            let now = row.dot(&vars.row(d).transpose());
            let mut e = Affine::constant((now - target[d]) / ell);
            for c in 0..nd {
                e = e.term(offset + c, row[c]);
            }
            p.equal_zero(e);
        }
    }

    let sol = backend.solve(&p)?;
    let mut out = DMatrix::from_fn(2, nd, |d, c| vars[(d, c)] + ell * sol.x[d * nd + c]);
    layout.pin_endpoints(&mut out);
    Ok(out)
}

/// Step that keeps the current point unless the candidate is feasible and
/// does not lower the true objective.
pub(crate) fn sca_step_guarded(
    layout: &Layout,
    scenario: &Scenario,
    vars: &DMatrix<f64>,
    durations: &[f64],
    schedule: &Schedule,
    backend: &dyn ConicBackend,
) -> Result<(DMatrix<f64>, f64, bool)> {
    let durations = layout.durations_or_fixed(durations);
    let before = min_rate(&layout.rates(scenario, vars, &durations, schedule)?);
    let candidate = sca_step_raw(layout, scenario, vars, &durations, schedule, backend)?;
    if !layout.feasible(&candidate, &durations) {
        return Ok((vars.clone(), before, false));
    }
    let after = match layout.rates(scenario, &candidate, &durations, schedule) {
        Ok(r) => min_rate(&r),
        Err(_) => return Ok((vars.clone(), before, false)),
    };
    if after >= before {
        Ok((candidate, after, true))
    } else {
        Ok((vars.clone(), before, false))
    }
}

fn waypoint_vars(layout: &Layout, designable: &[Position3]) -> Result<DMatrix<f64>> {
    if designable.len() != layout.l + 1 {
        return Err(Error::DimensionMismatch(format!(
            "{} designable waypoints for {} long-segments",
            designable.len(),
            layout.l
        )));
    }
    Ok(DMatrix::from_fn(2, layout.l + 1, |d, i| {
        if d == 0 {
            designable[i].x
        } else {
            designable[i].y
        }
    }))
}

fn check_inputs(layout: &Layout, spec: &ProblemSpec, durations: &[f64], schedule: &Schedule) -> Result<()> {
    if layout.fixed_duration.is_none() && durations.len() != layout.l {
        return Err(Error::DimensionMismatch(format!(
            "{} durations for {} long-segments",
            durations.len(),
            layout.l
        )));
    }
    let shorts = layout.l * layout.j;
    if schedule.num_sensors() != spec.scenario.num_sensors()
        || schedule.alpha.iter().any(|r| r.len() != shorts)
    {
        return Err(Error::DimensionMismatch(format!(
            "schedule must be {} x {shorts}",
            spec.scenario.num_sensors()
        )));
    }
    Ok(())
}

/// SCA step on the designable waypoints of a TD, CPD or FPD problem. A step
/// that would break a constraint or lower the objective is rejected and the
/// input returned.
pub fn sca_waypoint_step(
    spec: &ProblemSpec,
    designable: &[Position3],
    durations: &[f64],
    schedule: &Schedule,
    backend: &dyn ConicBackend,
) -> Result<Vec<Position3>> {
    let layout = Layout::new(spec)?;
    if layout.coefficients {
        return Err(Error::InvalidInput("use sca_coeff_step for FPD-PC".into()));
    }
    check_inputs(&layout, spec, durations, schedule)?;
    let vars = waypoint_vars(&layout, designable)?;
    let (next, _, _) = sca_step_guarded(&layout, &spec.scenario, &vars, durations, schedule, backend)?;
    Ok(layout.designable(&next))
}

/// SCA step on the `2 x K` path coefficients of an FPD-PC problem.
pub fn sca_coeff_step(
    spec: &ProblemSpec,
    coeffs: &DMatrix<f64>,
    durations: &[f64],
    schedule: &Schedule,
    backend: &dyn ConicBackend,
) -> Result<DMatrix<f64>> {
    let layout = Layout::new(spec)?;
    if !layout.coefficients {
        return Err(Error::InvalidInput("sca_coeff_step needs an FPD-PC scheme".into()));
    }
    check_inputs(&layout, spec, durations, schedule)?;
    if coeffs.nrows() != 2 || coeffs.ncols() != layout.nd() {
        return Err(Error::DimensionMismatch(format!(
            "coefficients must be 2 x {}",
            layout.nd()
        )));
    }
    let vars = layout.from_coeffs(coeffs)?;
    let (next, _, accepted) = sca_step_guarded(&layout, &spec.scenario, &vars, durations, schedule, backend)?;
    if !accepted {
        return Ok(coeffs.clone());
    }
    Ok(layout.to_coeffs(&next)?.entries())
}
