//! Feasible starting point: a circle through the start toward the sensors
//! (or a straight line between distinct endpoints), uniform durations and a
//! uniform schedule.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::basis::fit_with_endpoints;
use crate::conic::{Affine, ConicBackend, ConicProblem};
use crate::error::{Error, Result};
use crate::model::{within, Position3, Schedule};

use super::{Layout, ProblemSpec, CAP_MARGIN};

/// A point of the BCD iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Iterate {
    pub designable: Vec<Position3>,
    /// `2 x K` path coefficients for FPD-PC.
    pub coeffs: Option<DMatrix<f64>>,
    /// Long-segment durations.
    pub durations: Vec<f64>,
    /// One column per short-segment.
    pub schedule: Schedule,
}

pub fn initialize(spec: &ProblemSpec) -> Result<Iterate> {
    let layout = Layout::new(spec)?;
    let (vars, durations) = initial_vars(&layout, spec, &spec.config.backend())?;
    Ok(Iterate {
        designable: layout.designable(&vars),
        coeffs: match layout.coefficients {
            true => Some(layout.to_coeffs(&vars)?.entries()),
            false => None,
        },
        durations,
        schedule: Schedule::uniform(spec.scenario.num_sensors(), layout.l * layout.j),
    })
}

/// Initial waypoints as a `2 x (L+1)` matrix.
fn initial_waypoints(layout: &Layout, spec: &ProblemSpec, cap: f64) -> Result<DMatrix<f64>> {
    let sc = &spec.scenario;
    let l = layout.l;
    let [sx, sy] = layout.start;
    let [ex, ey] = layout.end;
    let gap = (ex - sx).hypot(ey - sy);
    if gap > 0.0 {
        if !within(gap / l as f64, cap) {
            return Err(Error::Initialization(format!(
                "a straight flight needs {:.6} m per segment but the cap is {cap:.6} m",
                gap / l as f64
            )));
        }
        return Ok(DMatrix::from_fn(2, l + 1, |d, i| {
            let f = i as f64 / l as f64;
            if d == 0 {
                sx + (ex - sx) * f
            } else {
                sy + (ey - sy) * f
            }
        }));
    }

    let centroid = sc.sensor_centroid();
    let spread = sc
        .sensors
        .iter()
        .map(|w| w.horizontal_distance(&centroid))
        .fold(0.0, f64::max);
    let radius = spread.min(cap * l as f64 / (2.0 * PI) * (1.0 - 1e-3)).max(0.0);
    let (dx, dy) = (centroid.x - sx, centroid.y - sy);
    let norm = dx.hypot(dy);
    let dir = if norm > 1e-12 { [dx / norm, dy / norm] } else { [1.0, 0.0] };
    let center = [sx + radius * dir[0], sy + radius * dir[1]];
    let theta0 = (-dir[1]).atan2(-dir[0]);
    let mut q = DMatrix::from_fn(2, l + 1, |d, i| {
        let th = theta0 + 2.0 * PI * i as f64 / l as f64;
        if d == 0 {
            center[0] + radius * th.cos()
        } else {
            center[1] + radius * th.sin()
        }
    });
    for d in 0..2 {
        q[(d, 0)] = layout.start[d];
        q[(d, l)] = layout.end[d];
    }
    Ok(q)
}

pub(crate) fn initial_vars(
    layout: &Layout,
    spec: &ProblemSpec,
    backend: &dyn ConicBackend,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let l = layout.l;
    let durations = vec![spec.scenario.period / l as f64; l];
    let cap = layout.cap(durations[0]);
    let q = initial_waypoints(layout, spec, cap)?;
    if !layout.coefficients {
        if !layout.feasible(&q, &durations) {
            return Err(Error::Initialization("initial path breaks a length cap".into()));
        }
        return Ok((q, durations));
    }

    let rows = layout.basis_rows();
    let fitted = fit_with_endpoints(&q, &rows, &layout.start, &layout.end)
        .map_err(|e| Error::Initialization(e.to_string()))?
        .entries();
    if layout.feasible(&fitted, &durations) {
        return Ok((fitted, durations));
    }
    let projected = project_coefficients(layout, &q, cap, backend)?;
    if layout.feasible(&projected, &durations) {
        Ok((projected, durations))
    } else {
        Err(Error::Initialization(
            "no coefficient matrix reproduces a feasible initial path".into(),
        ))
    }
}

/// Coefficients closest to the path `q` (Frobenius) among those meeting the
/// length caps and endpoints.
fn project_coefficients(
    layout: &Layout,
    q: &DMatrix<f64>,
    cap: f64,
    backend: &dyn ConicBackend,
) -> Result<DMatrix<f64>> {
    let nd = layout.nd();
    let l = layout.l;
    let s = 2 * nd;
    let mut p = ConicProblem::new(s + 1);
    p.minimize_term(s, 1.0);
    let mut cone = vec![Affine::var(s)];
    for d in 0..2 {
        for i in 0..=l {
            let mut e = Affine::constant(-q[(d, i)]);
            for c in 0..nd {
                e = e.term(d * nd + c, layout.b[(i, c)]);
            }
            cone.push(e);
        }
    }
    p.second_order(cone);
    let cap = cap * (1.0 - CAP_MARGIN);
    for i in 1..=l {
        let diff = layout.b.row(i) - layout.b.row(i - 1);
        let axis = |offset: usize| {
            let mut e = Affine::default();
            for c in 0..nd {
                e = e.term(offset + c, diff[c]);
            }
            e
        };
        p.second_order(vec![Affine::constant(cap), axis(0), axis(nd)]);
    }
    for (row, target) in layout.endpoint_rows() {
        for d in 0..2 {
            let mut e = Affine::constant(-target[d]);
            for c in 0..nd {
                e = e.term(d * nd + c, row[c]);
            }
            p.equal_zero(e);
        }
    }
    let sol = backend
        .solve(&p)
        .map_err(|e| Error::Initialization(format!("coefficient projection failed: {e}")))?;
    let mut vars = DMatrix::from_fn(2, nd, |d, c| sol.x[d * nd + c]);
    layout.pin_endpoints(&mut vars);
    Ok(vars)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{BasisKind, Selection};
    use crate::model::validate_trajectory;
    use crate::solver::testutil::scenario;
    use crate::solver::Scheme;

    fn check(spec: &ProblemSpec) -> Iterate {
        let it = initialize(spec).unwrap();
        let traj = crate::discretize::expand_fpd(
            &crate::discretize::FpdPath {
                designable: it.designable.clone(),
                durations: it.durations.clone(),
                j: spec.scheme.j(),
            },
            spec.delta_max,
        )
        .unwrap();
        assert_eq!(validate_trajectory(&traj, &spec.scenario), vec![]);
        it.schedule.validate().unwrap();
        it
    }

    #[test]
    fn circle_through_start() {
        let sc = scenario(&[(30.0, 20.0), (60.0, 40.0), (10.0, 70.0)], 30.0);
        let it = check(&ProblemSpec::new(sc.clone(), Scheme::Fpd { l: 15, j: 2 }, 10.0));
        let centroid = sc.sensor_centroid();
        let mean = it.designable.iter().fold((0.0, 0.0), |a, q| (a.0 + q.x, a.1 + q.y));
        let mean = Position3::new(mean.0 / 16.0, mean.1 / 16.0, 100.0);
        assert!(mean.horizontal_distance(&centroid) < sc.q_start.horizontal_distance(&centroid));
        assert!(it.schedule.alpha.iter().flatten().all(|a| (a - 1.0 / 3.0).abs() < 1e-15));
        assert!(it.durations.iter().all(|t| (t - 2.0).abs() < 1e-12));
        check(&ProblemSpec::new(sc.clone(), Scheme::Td { m: 120 }, 5.0));
        check(&ProblemSpec::new(sc, Scheme::Cpd { n: 12 }, 10.0));
    }

    #[test]
    fn hover_when_sensor_below_start() {
        let sc = scenario(&[(0.0, 0.0)], 10.0);
        let it = check(&ProblemSpec::new(sc, Scheme::Cpd { n: 4 }, 10.0));
        assert!(it.designable.iter().all(|q| q.x.abs() < 1e-12 && q.y.abs() < 1e-12));
    }

    #[test]
    fn straight_line_at_full_speed() {
        let mut sc = scenario(&[(30.0, 20.0)], 5.0);
        sc.q_end = Position3::new(100.0, 0.0, 100.0);
        let it = check(&ProblemSpec::new(sc.clone(), Scheme::Cpd { n: 10 }, 10.0));
        assert!(it.designable.iter().all(|q| q.y == 0.0));
        let mut eps = sc;
        eps.epsilon_robust = 0.1;
        assert!(matches!(
            initialize(&ProblemSpec::new(eps, Scheme::Cpd { n: 10 }, 10.0)),
            Err(Error::Initialization(_))
        ));
    }

    #[test]
    fn compressed_starts() {
        let sc = scenario(&[(30.0, 20.0), (60.0, 40.0), (10.0, 70.0)], 30.0);
        for (basis, selection, k) in [
            (BasisKind::Fourier, Selection::Lowest, 16),
            (BasisKind::Fourier, Selection::Lowest, 3),
            (BasisKind::Fourier, Selection::Highest, 3),
            (BasisKind::ShiftedSine, Selection::FirstK, 5),
        ] {
            let spec = ProblemSpec::new(
                sc.clone(),
                Scheme::FpdPc { l: 16, j: 2, k, basis, selection },
                10.0,
            );
            let it = check(&spec);
            assert_eq!(it.coeffs.as_ref().unwrap().ncols(), k);
        }
        let fpd = check(&ProblemSpec::new(sc.clone(), Scheme::Fpd { l: 16, j: 2 }, 10.0));
        let full = check(&ProblemSpec::new(
            sc,
            Scheme::FpdPc { l: 16, j: 2, k: 17, basis: BasisKind::Fourier, selection: Selection::Lowest },
            10.0,
        ));
        for (a, b) in fpd.designable.iter().zip(&full.designable) {
            assert!(a.distance(b) < 1e-9);
        }
    }
}
