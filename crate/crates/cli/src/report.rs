//! CSV and JSON outputs of evaluation commands.

use std::fs;
use std::path::Path;

use rav_recover::harness::metrics::{md_percent, MetricsReport, SUCCESS_RADIUS_M};
use rav_recover::harness::record::{write_summary_csv, SummaryRow, SUMMARY_SCHEMA};
use rav_recover::harness::{AttackSource, EpisodeRecord, ScenarioConfig, Suite};
use rav_recover::sensors::Sensor;
use rav_recover::{Error, Result};

fn csv_err(e: csv::Error) -> Error {
    Error::Serde(e.to_string())
}

pub fn write_rejections(suite: &Suite, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "id",
        "sensor",
        "pattern",
        "direction",
        "magnitude",
        "start_s",
        "duration_s",
        "reason",
    ])
    .map_err(csv_err)?;
    for r in &suite.rejected {
        let s = &r.script;
        w.write_record([
            r.id.clone(),
            s.sensor.name().to_string(),
            format!("{:?}", s.pattern).to_lowercase(),
            format!("{:?}", s.direction).to_lowercase(),
            s.magnitude.to_string(),
            s.start_s.to_string(),
            s.duration_s.to_string(),
            r.reason.clone(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per report: `schema,label,missions,svr,rsr,md,t2r,critical,collisions`.
pub fn write_aggregate(path: &Path, reports: &[MetricsReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "schema",
        "label",
        "missions",
        "svr_percent",
        "rsr_percent",
        "md_mean_percent",
        "t2r_mean_s",
        "critical_missions",
        "collisions",
    ])
    .map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    for r in reports {
        w.write_record([
            SUMMARY_SCHEMA.to_string(),
            r.label.clone(),
            r.missions.to_string(),
            r.svr_percent.to_string(),
            r.rsr_percent.to_string(),
            opt(r.md_mean_percent),
            opt(r.t2r_mean_s),
            r.critical_missions.to_string(),
            r.collisions.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn write_per_spec(path: &Path, report: &MetricsReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["spec", "svr_percent"]).map_err(csv_err)?;
    for (id, v) in &report.per_spec_svr {
        w.write_record([id.clone(), v.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn write_common(dir: &Path, report: &MetricsReport, rows: &[SummaryRow]) -> Result<()> {
    write_summary_csv(rows, fs::File::create(dir.join("summary.csv"))?)?;
    write_per_spec(&dir.join("per_spec.csv"), report)?;
    fs::write(
        dir.join("metrics.json"),
        serde_json::to_string_pretty(report)?,
    )?;
    Ok(())
}

/// Metrics over the whole suite plus one aggregate row per attacked sensor.
pub fn write_suite_report(
    dir: &Path,
    suite: &Suite,
    label: &str,
    records: &[EpisodeRecord],
) -> Result<MetricsReport> {
    let md: Vec<Option<f64>> = records
        .iter()
        .zip(&suite.entries)
        .map(|(r, e)| {
            r.is_success(SUCCESS_RADIUS_M)
                .then(|| {
                    md_percent(
                        r.completion_time_s,
                        e.ground_truth_time_s,
                        suite.t_min_s,
                        suite.t_max_s,
                    )
                })
                .transpose()
        })
        .collect::<Result<_>>()?;
    let known = |idx: &[usize]| -> Vec<f64> { idx.iter().filter_map(|&i| md[i]).collect() };
    let all: Vec<usize> = (0..records.len()).collect();
    let report = MetricsReport::new(label, records, &known(&all))?;
    let mut table = vec![report.clone()];
    for sensor in Sensor::ALL {
        let idx: Vec<usize> = all
            .iter()
            .copied()
            .filter(|&i| suite.entries[i].script.sensor == sensor)
            .collect();
        if idx.is_empty() {
            continue;
        }
        let subset: Vec<EpisodeRecord> = idx.iter().map(|&i| records[i].clone()).collect();
        table.push(MetricsReport::new(
            &format!("{label}/{}", sensor.name()),
            &subset,
            &known(&idx),
        )?);
    }
    let rows: Vec<SummaryRow> = records
        .iter()
        .zip(&md)
        .map(|(r, m)| SummaryRow::new(r, SUCCESS_RADIUS_M, *m))
        .collect();
    write_common(dir, &report, &rows)?;
    write_aggregate(&dir.join("aggregate.csv"), &table)?;
    Ok(report)
}

/// Metrics for missions without a ground-truth pairing.
pub fn write_plain_report(
    dir: &Path,
    label: &str,
    records: &[EpisodeRecord],
) -> Result<MetricsReport> {
    let report = MetricsReport::new(label, records, &[])?;
    let rows: Vec<SummaryRow> = records
        .iter()
        .map(|r| SummaryRow::new(r, SUCCESS_RADIUS_M, None))
        .collect();
    write_common(dir, &report, &rows)?;
    write_aggregate(&dir.join("aggregate.csv"), std::slice::from_ref(&report))?;
    Ok(report)
}

/// One replayable JSON-lines file per mission.
pub fn write_records(
    dir: &Path,
    scenario: &ScenarioConfig,
    records: &[EpisodeRecord],
) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, r) in records.iter().enumerate() {
        let mut cfg = scenario.clone();
        cfg.seed = r.seed;
        cfg.recovery = r.recovery;
        cfg.attack = r
            .script
            .map_or(AttackSource::None, |script| AttackSource::Script { script });
        cfg.harness.record_steps = !r.steps.is_empty();
        r.write_jsonl(&cfg, fs::File::create(dir.join(format!("{i:04}.jsonl")))?)?;
    }
    Ok(())
}
