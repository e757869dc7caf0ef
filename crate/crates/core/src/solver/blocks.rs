//! Linear-programming blocks: TDMA schedule and segment durations.

use crate::conic::{Affine, ConicBackend, ConicProblem};
use crate::error::{Error, Result};
use crate::model::{within, Position3, Schedule};

use super::{min_rate, Layout, ProblemSpec};

/// Smallest duration assigned to a segment, seconds.
pub(crate) const MIN_DURATION: f64 = 1e-6;

/// Relaxed TDMA schedule maximizing `min_s sum_n alpha[s][n] t_n r[s][n] / T`
/// subject to `sum_s alpha[s][n] <= 1` and `alpha >= 0`. Returns the schedule
/// and the min rate it achieves.
pub fn solve_schedule(
    rates: &[Vec<f64>],
    durations: &[f64],
    period: f64,
    backend: &dyn ConicBackend,
) -> Result<(Schedule, f64)> {
    if rates.is_empty() {
        return Err(Error::InvalidInput("no sensors to schedule".into()));
    }
    if !(period > 0.0) {
        return Err(Error::InvalidInput(format!("period {period} must be positive")));
    }
    let n = durations.len();
    if rates.iter().any(|row| row.len() != n) {
        return Err(Error::DimensionMismatch(format!(
            "rates must have {n} columns, one per duration"
        )));
    }
    if rates.iter().flatten().any(|r| !(*r >= 0.0 && r.is_finite())) {
        return Err(Error::InvalidInput("rates must be finite and nonnegative".into()));
    }
    let coefs: Vec<Vec<f64>> = rates
        .iter()
        .map(|row| row.iter().zip(durations).map(|(r, t)| r * t / period).collect())
        .collect();
    let alpha = schedule_lp(&coefs, backend)?;
    let objective = schedule_value(&coefs, &alpha);
    Ok((Schedule { alpha }, objective))
}

pub(crate) fn schedule_value(coefs: &[Vec<f64>], alpha: &[Vec<f64>]) -> f64 {
    let per_sensor: Vec<f64> = coefs
        .iter()
        .zip(alpha)
        .map(|(c, a)| c.iter().zip(a).map(|(c, a)| c * a).sum())
        .collect();
    min_rate(&per_sensor)
}

/// LP over `alpha` with per-segment sensor weights `coefs[s][n]`.
pub(crate) fn schedule_lp(coefs: &[Vec<f64>], backend: &dyn ConicBackend) -> Result<Vec<Vec<f64>>> {
    let s_count = coefs.len();
    let n = coefs.first().map_or(0, Vec::len);
    let scale = coefs
        .iter()
        .map(|row| row.iter().sum::<f64>())
        .fold(0.0, f64::max);
    if scale == 0.0 || n == 0 {
        return Ok(Schedule::uniform(s_count, n).alpha);
    }
    let var = |s: usize, k: usize| s * n + k;
    let eta = s_count * n;
    let mut p = ConicProblem::new(eta + 1);
    p.minimize_term(eta, -1.0);
    for (s, row) in coefs.iter().enumerate() {
        let mut e = Affine::default().term(eta, -1.0);
        for (k, c) in row.iter().enumerate() {
            e = e.term(var(s, k), c / scale);
        }
        p.nonneg(e);
    }
    for k in 0..n {
        let mut e = Affine::constant(1.0);
        for s in 0..s_count {
            e = e.term(var(s, k), -1.0);
        }
        p.nonneg(e);
    }
    for v in 0..eta {
        p.nonneg(Affine::var(v));
    }
    let sol = backend.solve(&p)?;
    let mut alpha: Vec<Vec<f64>> = (0..s_count)
        .map(|s| (0..n).map(|k| sol.x[var(s, k)].clamp(0.0, 1.0)).collect())
        .collect();
    for k in 0..n {
        let col: f64 = alpha.iter().map(|row| row[k]).sum();
        if col > 1.0 {
            for row in alpha.iter_mut() {
                row[k] /= col;
            }
        }
    }
    Ok(alpha)
}

/// Duration lower bounds `max(len (1 + eps) / V, MIN_DURATION)`.
pub(crate) fn duration_lower_bounds(layout: &Layout, designable: &[Position3]) -> Vec<f64> {
    designable
        .windows(2)
        .map(|w| (w[0].distance(&w[1]) * (1.0 + layout.epsilon) / layout.v_max).max(MIN_DURATION))
        .collect()
}

/// Long-segment durations maximizing the min rate with waypoints and
/// schedule fixed. Returns the durations and the min rate they achieve.
pub fn solve_durations(
    spec: &ProblemSpec,
    designable: &[Position3],
    schedule: &Schedule,
    backend: &dyn ConicBackend,
) -> Result<(Vec<f64>, f64)> {
    let layout = Layout::new(spec)?;
    if layout.fixed_duration.is_some() {
        return Err(Error::InvalidInput("TD durations are fixed".into()));
    }
    if designable.len() != layout.l + 1 {
        return Err(Error::DimensionMismatch(format!(
            "{} designable waypoints for {} long-segments",
            designable.len(),
            layout.l
        )));
    }
    let shorts = layout.l * layout.j;
    if schedule.num_sensors() != spec.scenario.num_sensors()
        || schedule.alpha.iter().any(|row| row.len() != shorts)
    {
        return Err(Error::DimensionMismatch(format!(
            "schedule must be {} x {shorts}",
            spec.scenario.num_sensors()
        )));
    }
    let rates = designable_short_rates(&layout, spec, designable)?;
    let coefs = duration_coefs(&layout, spec.scenario.period, &rates, schedule);
    let lb = duration_lower_bounds(&layout, designable);
    let t = duration_lp(&coefs, &lb, spec.scenario.period, backend)?;
    let objective = duration_value(&coefs, &t);
    Ok((t, objective))
}

fn designable_short_rates(
    layout: &Layout,
    spec: &ProblemSpec,
    designable: &[Position3],
) -> Result<Vec<Vec<f64>>> {
    let sc = &spec.scenario;
    let mut out = vec![Vec::with_capacity(layout.l * layout.j); sc.num_sensors()];
    for l in 1..=layout.l {
        for j in 1..=layout.j {
            let q = designable[l - 1].lerp(&designable[l], j as f64 / layout.j as f64);
            for (s, row) in out.iter_mut().enumerate() {
                row.push(crate::model::spectral_efficiency(
                    &q,
                    &sc.sensors[s],
                    sc.tx_powers[s],
                    sc.beta0,
                    sc.noise_power,
                )?);
            }
        }
    }
    Ok(out)
}

/// `coef[s][l] = sum_j alpha r / (J T)`, the rate of sensor `s` per second
/// spent on long-segment `l`.
pub(crate) fn duration_coefs(
    layout: &Layout,
    period: f64,
    short_rates: &[Vec<f64>],
    schedule: &Schedule,
) -> Vec<Vec<f64>> {
    let j = layout.j;
    short_rates
        .iter()
        .zip(&schedule.alpha)
        .map(|(r, a)| {
            (0..layout.l)
                .map(|l| {
                    (0..j).map(|k| a[l * j + k] * r[l * j + k]).sum::<f64>() / (j as f64 * period)
                })
                .collect()
        })
        .collect()
}

pub(crate) fn duration_value(coefs: &[Vec<f64>], t: &[f64]) -> f64 {
    let per_sensor: Vec<f64> = coefs
        .iter()
        .map(|c| c.iter().zip(t).map(|(c, t)| c * t).sum())
        .collect();
    min_rate(&per_sensor)
}

pub(crate) fn duration_lp(
    coefs: &[Vec<f64>],
    lb: &[f64],
    period: f64,
    backend: &dyn ConicBackend,
) -> Result<Vec<f64>> {
    let l = lb.len();
    let total: f64 = lb.iter().sum();
    if total > period {
        if !within(total, period) {
            return Err(Error::InfeasibleDurations { total, period });
        }
        return Ok(lb.iter().map(|t| t * period / total).collect());
    }
    let slack = period - total;
    if slack <= 1e-12 * period {
        return Ok(lb.to_vec());
    }
    let scale = coefs
        .iter()
        .map(|row| row.iter().fold(0.0, |m: f64, c| m.max(*c)) * period)
        .fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(lb.iter().map(|t| t + slack / l as f64).collect());
    }
    // Variables: durations as fractions of the period, then the epigraph.
    let eta = l;
    let mut p = ConicProblem::new(l + 1);
    p.minimize_term(eta, -1.0);
    for row in coefs {
        let mut e = Affine::default().term(eta, -1.0);
        for (i, c) in row.iter().enumerate() {
            e = e.term(i, c * period / scale);
        }
        p.nonneg(e);
    }
    let mut sum = Affine::constant(1.0);
    for (i, b) in lb.iter().enumerate() {
        sum = sum.term(i, -1.0);
        p.nonneg(Affine::var(i).plus(-b / period));
    }
    p.nonneg(sum);
    let sol = backend.solve(&p)?;
    let mut t: Vec<f64> = (0..l).map(|i| (sol.x[i] * period).max(lb[i])).collect();
    let extra: f64 = t.iter().zip(lb).map(|(t, b)| t - b).sum();
    let over = t.iter().sum::<f64>() - period;
    if over > 0.0 && extra > 0.0 {
        let keep = (1.0 - over / extra).max(0.0);
        for (t, b) in t.iter_mut().zip(lb) {
            *t = b + (*t - b) * keep;
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::ClarabelBackend;
    use crate::solver::testutil::scenario;
    use crate::solver::Scheme;

    fn backend() -> ClarabelBackend {
        ClarabelBackend::default()
    }

    fn brute_force_schedule(coefs: &[Vec<f64>]) -> f64 {
        // Enumerate alpha on a 0.01 grid with full columns; for two sensors
        // the second gets the complement, for three the remainder is split
        // over the 0.01 grid as well.
        let n = coefs[0].len();
        let s = coefs.len();
        let steps = 100usize;
        let mut best = 0.0f64;
        let mut shares = vec![Vec::new(); n];
        for shares_col in shares.iter_mut() {
            if s == 2 {
                for a in 0..=steps {
                    let a = a as f64 / steps as f64;
                    shares_col.push(vec![a, 1.0 - a]);
                }
            } else {
                for a in 0..=steps {
                    for b in 0..=(steps - a) {
                        let (a, b) = (a as f64 / steps as f64, b as f64 / steps as f64);
                        shares_col.push(vec![a, b, 1.0 - a - b]);
                    }
                }
            }
        }
        let mut idx = vec![0usize; n];
        loop {
            let mut totals = vec![0.0; s];
            for k in 0..n {
                for (i, t) in totals.iter_mut().enumerate() {
                    *t += shares[k][idx[k]][i] * coefs[i][k];
                }
            }
            best = best.max(min_rate(&totals));
            let mut k = 0;
            loop {
                if k == n {
                    return best;
                }
                idx[k] += 1;
                if idx[k] < shares[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    #[test]
    fn single_sensor_takes_everything() {
        let rates = vec![vec![0.3, 0.5, 0.2]];
        let (sched, obj) = solve_schedule(&rates, &[1.0, 2.0, 1.0], 4.0, &backend()).unwrap();
        assert!(sched.alpha[0].iter().all(|a| (a - 1.0).abs() < 1e-6));
        assert!((obj - (0.3 + 1.0 + 0.2) / 4.0).abs() < 1e-8);
    }

    #[test]
    fn symmetric_sensors_split() {
        let rates = vec![vec![0.4, 0.7, 0.1]; 2];
        let (sched, obj) = solve_schedule(&rates, &[1.0; 3], 3.0, &backend()).unwrap();
        sched.validate().unwrap();
        let full = (0.4 + 0.7 + 0.1) / 3.0;
        assert!((obj - full / 2.0).abs() < 1e-7);
        let coefs: Vec<Vec<f64>> = rates.iter().map(|r| r.iter().map(|v| v / 3.0).collect()).collect();
        assert!((brute_force_schedule(&coefs) - obj).abs() < 0.01);
    }

    #[test]
    fn zero_rate_sensor_gives_zero() {
        let rates = vec![vec![0.4, 0.7], vec![0.0, 0.0]];
        let (_, obj) = solve_schedule(&rates, &[1.0, 1.0], 2.0, &backend()).unwrap();
        assert!(obj.abs() < 1e-12);
        assert!(solve_schedule(&[vec![-1.0]], &[1.0], 1.0, &backend()).is_err());
    }

    #[test]
    fn schedule_matches_grid_oracle() {
        let cases = [
            vec![vec![0.9, 0.1, 0.4], vec![0.2, 0.8, 0.5]],
            vec![vec![0.5, 0.05], vec![0.1, 0.6], vec![0.3, 0.3]],
            vec![vec![1.0, 0.3], vec![0.7, 0.2], vec![0.05, 0.9]],
        ];
        for rates in cases {
            let n = rates[0].len();
            let t = vec![1.0; n];
            let (sched, obj) = solve_schedule(&rates, &t, n as f64, &backend()).unwrap();
            sched.validate().unwrap();
            let coefs: Vec<Vec<f64>> =
                rates.iter().map(|r| r.iter().map(|v| v / n as f64).collect()).collect();
            let oracle = brute_force_schedule(&coefs);
            assert!(obj >= oracle - 1e-9, "{obj} < {oracle}");
            assert!(obj - oracle < 0.01, "{obj} vs {oracle}");
        }
    }

    fn cpd_spec(sensors: &[(f64, f64)], period: f64, n: usize) -> ProblemSpec {
        ProblemSpec::new(scenario(sensors, period), Scheme::Cpd { n }, 50.0)
    }

    #[test]
    fn durations_follow_rate_profile() {
        let spec = cpd_spec(&[(40.0, 0.0)], 10.0, 2);
        let wp = [
            Position3::new(0.0, 0.0, 100.0),
            Position3::new(40.0, 0.0, 100.0),
            Position3::new(0.0, 0.0, 100.0),
        ];
        // Two sensors: the second sits away from the path so its rate is
        // low and roughly equal on both segments.
        let mut spec2 = spec.clone();
        spec2.scenario.sensors.push(Position3::new(-30.0, 30.0, 0.0));
        spec2.scenario.tx_powers.push(0.2);
        let sched = Schedule {
            alpha: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
        };
        let (t, obj) = solve_durations(&spec2, &wp, &sched, &backend()).unwrap();
        assert!((t.iter().sum::<f64>() - 10.0).abs() < 1e-6);

        let sc = &spec2.scenario;
        let rate = |q: &Position3, s: usize| {
            crate::model::spectral_efficiency(q, &sc.sensors[s], 0.2, 1e-6, 1e-9).unwrap()
        };
        let value = |t1: f64, t2: f64| {
            (0..2)
                .map(|s| 0.5 * (t1 * rate(&wp[1], s) + t2 * rate(&wp[2], s)) / 10.0)
                .fold(f64::INFINITY, f64::min)
        };
        let lb = 2.0;
        let mut best = f64::NEG_INFINITY;
        let mut t2 = lb;
        while t2 <= 10.0 - lb + 1e-12 {
            best = best.max(value(10.0 - t2, t2));
            t2 += 1e-3;
        }
        assert!((obj - best).abs() < 1e-3, "{obj} vs {best}");
        assert!(obj >= best - 1e-9);
    }

    #[test]
    fn single_sensor_durations() {
        let spec = cpd_spec(&[(5.0, 0.0)], 10.0, 2);
        let wp = [Position3::new(0.0, 0.0, 100.0); 3];
        let (t, obj) = solve_durations(&spec, &wp, &Schedule::full(1, 2), &backend()).unwrap();
        assert!((t.iter().sum::<f64>() - 10.0).abs() < 1e-6);
        let r = crate::model::spectral_efficiency(&wp[0], &spec.scenario.sensors[0], 0.2, 1e-6, 1e-9)
            .unwrap();
        assert!((obj - r).abs() < 1e-7);
    }

    #[test]
    fn tight_and_infeasible_bounds() {
        let spec = cpd_spec(&[(5.0, 0.0)], 2.0, 2);
        let wp = [
            Position3::new(0.0, 0.0, 100.0),
            Position3::new(20.0, 0.0, 100.0),
            Position3::new(0.0, 0.0, 100.0),
        ];
        let (t, _) = solve_durations(&spec, &wp, &Schedule::full(1, 2), &backend()).unwrap();
        assert_eq!(t, vec![1.0, 1.0]);

        let mut short = spec.clone();
        short.scenario.period = 1.5;
        assert!(matches!(
            solve_durations(&short, &wp, &Schedule::full(1, 2), &backend()),
            Err(Error::InfeasibleDurations { .. }) | Err(Error::InvalidInput(_))
        ));
        let lb = [1.0, 1.0];
        assert!(matches!(
            duration_lp(&[vec![0.1, 0.1]], &lb, 1.5, &backend()),
            Err(Error::InfeasibleDurations { .. })
        ));
        let td = ProblemSpec::new(scenario(&[(5.0, 0.0)], 10.0), Scheme::Td { m: 40 }, 5.0);
        assert!(solve_durations(&td, &wp, &Schedule::full(1, 2), &backend()).is_err());
    }
}
