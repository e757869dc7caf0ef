//! One-axis parameter sweeps over a base configuration.

use rayon::prelude::*;

use crate::config::{Axis, AxisValue, RunConfig, SchemeConfig, SweepConfig};
use crate::run::{blank_record, resolve, run_point, RunRecord};
use crate::BenchError;

/// One sweep value applied to the base configuration.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub index: usize,
    pub value: AxisValue,
    pub config: RunConfig,
    /// Why the point cannot be solved, found before solving.
    pub problem: Option<(String, i32)>,
}

fn count(value: &AxisValue) -> Result<usize, String> {
    match value {
        AxisValue::Count(v) if *v > 0 => Ok(*v),
        other => Err(format!("expected a positive count, got `{other}`")),
    }
}

fn split(total: usize, j: usize) -> Result<usize, String> {
    if !total.is_multiple_of(j) {
        return Err(format!("{total} short-segments do not split into long-segments of J = {j}"));
    }
    Ok(total / j)
}

fn apply(base: &SchemeConfig, axis: Axis, value: &AxisValue) -> Result<SchemeConfig, String> {
    use SchemeConfig::*;
    let mut scheme = *base;
    match (axis, &mut scheme) {
        (Axis::NFpd, Td { m }) => *m = Some(count(value)?),
        (Axis::NFpd, Cpd { n }) => *n = count(value)?,
        (Axis::NFpd, Fpd { l, j }) | (Axis::NFpd, FpdPc { l, j, .. }) => {
            *l = split(count(value)?, *j)?
        }
        (Axis::J, Fpd { l, j }) | (Axis::J, FpdPc { l, j, .. }) => {
            let total = *l * *j;
            *j = count(value)?;
            *l = split(total, *j)?;
        }
        (Axis::K, FpdPc { k, .. }) => *k = count(value)?,
        (Axis::Scheme, _) => {
            let (l, j, k) = match *base {
                Fpd { l, j } => (l, j, None),
                FpdPc { l, j, k, .. } => (l, j, Some(k)),
                _ => return Err("a scheme sweep needs an fpd or fpd-pc base scheme".into()),
            };
            scheme = match value {
                AxisValue::Name(n) if n == "td" => Td { m: None },
                AxisValue::Name(n) if n == "cpd" => Cpd { n: l * j },
                AxisValue::Name(n) if n == "fpd" => Fpd { l, j },
                AxisValue::Name(n) if n == "fpd-pc" => match (k, *base) {
                    (Some(_), b) => b,
                    _ => return Err("the fpd-pc point needs an fpd-pc base scheme".into()),
                },
                other => return Err(format!("unknown scheme `{other}`")),
            };
        }
        (axis, _) => {
            return Err(format!("axis {axis:?} does not apply to the base scheme"));
        }
    }
    Ok(scheme)
}

/// Expands the sweep into one configuration per value, checking each.
pub fn points(base: &RunConfig, sweep: &SweepConfig) -> Result<Vec<SweepPoint>, BenchError> {
    if sweep.values.is_empty() {
        return Err(BenchError::Config("sweep.values is empty".into()));
    }
    sweep
        .values
        .iter()
        .enumerate()
        .map(|(index, value)| {
            let scheme = apply(&base.scheme, sweep.axis, value)
                .map_err(|e| BenchError::Config(format!("sweep value `{value}`: {e}")))?;
            let mut config = base.clone();
            config.scheme = scheme;
            config.sweep = None;
            // Problems that cannot be solved are recorded, not fatal.
            let problem = match config.validate().and_then(|_| resolve(&config, 0)) {
                Err(e @ BenchError::Config(_)) if config.validate().is_ok() => return Err(e),
                Err(e) => Some((e.to_string(), e.exit_code())),
                Ok(_) => None,
            };
            Ok(SweepPoint {
                index,
                value: value.clone(),
                config,
                problem,
            })
        })
        .collect()
}

fn axis_name(axis: Axis) -> &'static str {
    match axis {
        Axis::NFpd => "n-fpd",
        Axis::J => "j",
        Axis::K => "k",
        Axis::Scheme => "scheme",
    }
}

fn failed(point: &SweepPoint, rep: usize, run_id: String, msg: &str, code: i32) -> RunRecord {
    let mut record = blank_record(&point.config, rep, run_id);
    record.error = Some(format!("sweep value `{}`: {msg}", point.value));
    record.error_code = Some(code);
    record
}

/// Runs every point and repetition with at most `parallel` threads. Records
/// come back in axis order, repetitions innermost; the sensor layout of a
/// repetition is shared by all points.
pub fn sweep(
    base: &RunConfig,
    sweep: &SweepConfig,
    parallel: usize,
) -> Result<Vec<(AxisValue, RunRecord)>, BenchError> {
    let points = points(base, sweep)?;
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..base.repetitions).map(move |r| (p, r)))
        .collect();
    let axis = axis_name(sweep.axis);
    let work = |&(p, rep): &(usize, usize)| {
        let point = &points[p];
        let run_id = format!("{axis}-{}-s{}-r{rep}", point.value, base.seed());
        let record = match &point.problem {
            None => run_point(&point.config, rep, run_id),
            Some((msg, code)) => failed(point, rep, run_id, msg, *code),
        };
        (point.value.clone(), record)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
        .map_err(|e| BenchError::Config(format!("cannot start {parallel} threads: {e}")))?;
    Ok(pool.install(|| jobs.par_iter().map(work).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fpd(l: usize, j: usize) -> SchemeConfig {
        SchemeConfig::Fpd { l, j }
    }

    #[test]
    fn axes_keep_the_other_counts() {
        let c = AxisValue::Count;
        assert_eq!(apply(&fpd(10, 2), Axis::NFpd, &c(40)).unwrap(), fpd(20, 2));
        assert_eq!(apply(&fpd(10, 4), Axis::J, &c(1)).unwrap(), fpd(40, 1));
        assert!(apply(&fpd(10, 4), Axis::J, &c(3)).is_err());
        assert!(apply(&fpd(10, 4), Axis::K, &c(3)).is_err());
        assert_eq!(
            apply(&fpd(10, 4), Axis::Scheme, &AxisValue::Name("cpd".into())).unwrap(),
            SchemeConfig::Cpd { n: 40 }
        );
    }
}
