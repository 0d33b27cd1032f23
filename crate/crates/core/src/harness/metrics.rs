//! Mission metrics: violation rate, success rate, mission delay and
//! time to recovery.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::record::EpisodeRecord;
use crate::error::{Error, Result};

/// Final-waypoint error under which a mission counts as successful, m.
pub const SUCCESS_RADIUS_M: f64 = 5.0;

/// `100 * observed / intended`.
pub fn svr_percent(observed: usize, intended: usize) -> Result<f64> {
    if intended == 0 {
        return Err(Error::UndefinedMetric(
            "violation rate with zero intended violations".into(),
        ));
    }
    Ok(100.0 * observed as f64 / intended as f64)
}

/// Each record stands for one intended violation (its attack was confirmed
/// to violate a specification without protection).
pub fn compute_svr(records: &[EpisodeRecord]) -> Result<f64> {
    let observed = records.iter().filter(|r| !r.verdict.is_compliant()).count();
    svr_percent(observed, records.len())
}

pub fn rsr_percent(successes: usize, attacked: usize) -> Result<f64> {
    if attacked == 0 {
        return Err(Error::UndefinedMetric(
            "success rate over zero missions".into(),
        ));
    }
    Ok(100.0 * successes as f64 / attacked as f64)
}

/// Crashed or stalled missions fail whatever their final error.
pub fn compute_rsr(records: &[EpisodeRecord]) -> Result<f64> {
    let ok = records
        .iter()
        .filter(|r| r.is_success(SUCCESS_RADIUS_M))
        .count();
    rsr_percent(ok, records.len())
}

/// `100 * (t_sg - t_gt) / t_b` with `t_b` the midpoint of the baseline
/// range. Negative when the attacked mission finished sooner.
pub fn md_percent(t_sg: f64, t_gt: f64, t_min: f64, t_max: f64) -> Result<f64> {
    let tb = 0.5 * (t_min + t_max);
    if !(tb > 0.0 && tb.is_finite()) || !t_sg.is_finite() || !t_gt.is_finite() {
        return Err(Error::UndefinedMetric(format!(
            "mission delay with baseline time {tb}"
        )));
    }
    Ok(100.0 * (t_sg - t_gt) / tb)
}

pub fn compute_md(
    record: &EpisodeRecord,
    ground_truth: &EpisodeRecord,
    t_min: f64,
    t_max: f64,
) -> Result<f64> {
    md_percent(
        record.completion_time_s,
        ground_truth.completion_time_s,
        t_min,
        t_max,
    )
}

/// Share of records violating each specification group, percent.
pub fn per_spec_svr(records: &[EpisodeRecord]) -> Result<BTreeMap<String, f64>> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in records {
        for id in r.verdict.violated() {
            *counts.entry(id.clone()).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .map(|(k, n)| Ok((k, svr_percent(n, records.len())?)))
        .collect()
}

/// Mean time to recovery over records that recovered.
pub fn mean_t2r(records: &[EpisodeRecord]) -> Option<f64> {
    let v: Vec<f64> = records.iter().filter_map(|r| r.t2r_s).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    pub missions: usize,
    pub svr_percent: f64,
    pub rsr_percent: f64,
    pub md_mean_percent: Option<f64>,
    pub t2r_mean_s: Option<f64>,
    /// Missions with at least one critical specification violated.
    pub critical_missions: usize,
    pub collisions: usize,
    pub per_spec_svr: BTreeMap<String, f64>,
}

impl MetricsReport {
    /// `md` holds the per-record mission delays, when known.
    pub fn new(label: &str, records: &[EpisodeRecord], md: &[f64]) -> Result<Self> {
        Ok(Self {
            label: label.into(),
            missions: records.len(),
            svr_percent: compute_svr(records)?,
            rsr_percent: compute_rsr(records)?,
            md_mean_percent: (!md.is_empty()).then(|| md.iter().sum::<f64>() / md.len() as f64),
            t2r_mean_s: mean_t2r(records),
            critical_missions: records
                .iter()
                .filter(|r| !r.critical_violations.is_empty())
                .count(),
            collisions: records.iter().filter(|r| r.collision).count(),
            per_spec_svr: per_spec_svr(records)?,
        })
    }

    pub fn summary(&self) -> String {
        let opt = |v: Option<f64>, unit: &str| {
            v.map_or_else(|| "n/a".into(), |x| format!("{x:.2}{unit}"))
        };
        format!(
            "{}: missions={} SVR={:.2}% RSR={:.2}% MD={} T2R={} critical={} collisions={}",
            self.label,
            self.missions,
            self.svr_percent,
            self.rsr_percent,
            opt(self.md_mean_percent, "%"),
            opt(self.t2r_mean_s, " s"),
            self.critical_missions,
            self.collisions
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_examples() {
        assert_eq!(svr_percent(3, 12).unwrap(), 25.0);
        assert_eq!(svr_percent(0, 12).unwrap(), 0.0);
        assert!(matches!(svr_percent(0, 0), Err(Error::UndefinedMetric(_))));
        assert!((rsr_percent(11, 12).unwrap() - 91.67).abs() < 5e-3);
        assert_eq!(md_percent(110.0, 100.0, 95.0, 105.0).unwrap(), 10.0);
        assert_eq!(md_percent(100.0, 100.0, 95.0, 105.0).unwrap(), 0.0);
        assert!(md_percent(90.0, 100.0, 95.0, 105.0).unwrap() < 0.0);
    }
}
