//! Episode traces and their line-delimited and CSV serializations.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::config::{RecoveryMode, ScenarioConfig};
use crate::error::{Error, Result};
use crate::sensors::{AttackScript, Sensor, SensorFrame};
use crate::stl::Verdict;
use crate::vehicle::{RecoveryAction, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Controller {
    Tracker,
    Policy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Reached the goal.
    Arrived,
    Crash,
    Stall,
    TimeLimit,
    ReconstructionExpired,
    /// Training rollout cut at the end of its handover window.
    Truncated,
}

/// One simulation step: the decision made at `t` and the state reached at `t + dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub truth: VehicleState,
    /// State the controller acted on.
    pub estimate: VehicleState,
    pub frame: SensorFrame,
    pub controller: Controller,
    pub action: Option<RecoveryAction>,
    /// Reward of the state reached, evaluated on the true state.
    pub reward: f64,
    pub alarm: bool,
    /// Signed margin per instantiated specification (positive = satisfied).
    pub margins: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlarmEvent {
    pub t: f64,
    pub raised: bool,
    pub onset_s: Option<f64>,
    pub sensor: Option<Sensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub scenario_id: String,
    pub seed: u64,
    pub recovery: RecoveryMode,
    pub script: Option<AttackScript>,
    /// Hash of the policy checkpoint that flew, if any.
    pub policy_hash: Option<String>,
    pub steps: Vec<StepRecord>,
    pub events: Vec<AlarmEvent>,
    pub verdict: Verdict,
    /// Violated specifications flagged critical.
    pub critical_violations: Vec<String>,
    pub outcome: Outcome,
    pub completion_time_s: f64,
    pub final_error_m: f64,
    pub collision: bool,
    pub stalled: bool,
    pub t2r_s: Option<f64>,
    pub total_reward: f64,
    pub step_count: usize,
    pub policy_steps: usize,
    /// Squared position errors accumulated while reconstruction was active.
    pub reconstructed_sq_error: f64,
    pub raw_sq_error: f64,
    pub reconstructed_samples: usize,
    /// Position error of the raw estimate against the truth, worst case, m.
    pub max_raw_error_m: f64,
    /// Closest approach to any obstacle surface, m.
    pub min_obstacle_distance_m: f64,
    /// Closest approach while the attack was active.
    #[serde(default)]
    pub attack_min_obstacle_m: Option<f64>,
    /// Distinct specification groups monitored.
    #[serde(default)]
    pub spec_groups: usize,
}

impl EpisodeRecord {
    pub fn is_success(&self, radius_m: f64) -> bool {
        self.outcome == Outcome::Arrived
            && !self.collision
            && !self.stalled
            && self.final_error_m < radius_m
    }

    pub fn alarm_occurred(&self) -> bool {
        self.events.iter().any(|e| e.raised)
    }

    /// Time of the first raised alarm.
    pub fn first_alarm_s(&self) -> Option<f64> {
        self.events.iter().find(|e| e.raised).map(|e| e.t)
    }

    pub fn mean_reward(&self) -> f64 {
        if self.step_count == 0 {
            0.0
        } else {
            self.total_reward / self.step_count as f64
        }
    }

    /// Writes the record as JSON lines: a header with the episode summary,
    /// then one line per step.
    pub fn write_jsonl<W: Write>(&self, cfg: &ScenarioConfig, mut w: W) -> Result<()> {
        let mut header = self.clone();
        header.steps.clear();
        let head = serde_json::json!({ "config": cfg, "episode": header });
        writeln!(w, "{}", serde_json::to_string(&head)?)?;
        for s in &self.steps {
            writeln!(w, "{}", serde_json::to_string(s)?)?;
        }
        Ok(())
    }

    /// Reads a record written by [`EpisodeRecord::write_jsonl`].
    pub fn read_jsonl<R: BufRead>(r: R) -> Result<(ScenarioConfig, EpisodeRecord)> {
        let mut lines = r.lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::Serde("empty episode log".into()))??;
        let head: serde_json::Value = serde_json::from_str(&first)?;
        let cfg: ScenarioConfig = serde_json::from_value(head["config"].clone())?;
        let mut record: EpisodeRecord = serde_json::from_value(head["episode"].clone())?;
        for line in lines {
            let line = line?;
            if !line.trim().is_empty() {
                record.steps.push(serde_json::from_str(&line)?);
            }
        }
        Ok((cfg, record))
    }
}

/// Schema version of the summary CSV.
pub const SUMMARY_SCHEMA: u32 = 1;

/// One CSV summary row per episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub schema: u32,
    pub scenario_id: String,
    pub seed: u64,
    pub recovery: String,
    pub sensor: String,
    pub verdict: String,
    /// Semicolon-separated violated specification ids.
    pub violated: String,
    pub success: bool,
    pub outcome: String,
    pub t2r_s: Option<f64>,
    pub md_percent: Option<f64>,
    pub final_error_m: f64,
}

impl SummaryRow {
    pub fn new(record: &EpisodeRecord, success_radius_m: f64, md_percent: Option<f64>) -> Self {
        Self {
            schema: SUMMARY_SCHEMA,
            scenario_id: record.scenario_id.clone(),
            seed: record.seed,
            recovery: record.recovery.label().into(),
            sensor: record
                .script
                .map_or_else(|| "none".into(), |s| s.sensor.name().into()),
            verdict: if record.verdict.is_compliant() {
                "compliant".into()
            } else {
                "violated".into()
            },
            violated: record.verdict.violated().join(";"),
            success: record.is_success(success_radius_m),
            outcome: format!("{:?}", record.outcome).to_lowercase(),
            t2r_s: record.t2r_s,
            md_percent,
            final_error_m: record.final_error_m,
        }
    }
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(|e| Error::Serde(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}
