//! Attack evaluation suites built by paired-run validation, and their
//! evaluation under each recovery mode.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AttackSource, RecoveryMode, ScenarioConfig};
use super::metrics::{md_percent, MetricsReport};
use super::record::EpisodeRecord;
use super::runner::{mix_seed, run_mission};
use crate::error::{Error, Result};
use crate::policy::{sha256_hex, PolicyParams};
use crate::sensors::{AttackClass, AttackScript, BiasDirection, BiasPattern, Sensor};

pub const SUITE_VERSION: u32 = 1;

/// Seed stream of suite missions, kept apart from training episode seeds.
const SUITE_STREAM: u64 = 0x5_0173;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub scenario: ScenarioConfig,
    pub seed: u64,
    /// Fractions of each sensor's bias range tried per direction.
    pub magnitude_fractions: Vec<f64>,
    pub start_times_s: Vec<f64>,
    pub overt_duration_s: f64,
    pub stealthy_duration_s: f64,
    pub calibration_runs: usize,
    /// Smallest accepted suite.
    pub min_scripts: usize,
    pub sequential: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            seed: 0,
            magnitude_fractions: vec![0.5, 1.0],
            start_times_s: vec![2.0, 3.5],
            overt_duration_s: 5.0,
            stealthy_duration_s: 6.0,
            calibration_runs: 20,
            min_scripts: 60,
            sequential: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub id: String,
    pub seed: u64,
    pub script: AttackScript,
    /// Completion time of the attack-free mission with the same seed, s.
    pub ground_truth_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub id: String,
    pub script: AttackScript,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suite {
    pub version: u32,
    pub scenario: ScenarioConfig,
    pub entries: Vec<SuiteEntry>,
    pub rejected: Vec<Rejection>,
    /// Shortest and longest attack-free completion time, s.
    pub t_min_s: f64,
    pub t_max_s: f64,
}

impl Suite {
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(serde_json::to_string(self)?.as_bytes()))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let s: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if s.version != SUITE_VERSION {
            return Err(Error::Config(format!(
                "suite version {} not supported",
                s.version
            )));
        }
        Ok(s)
    }

    pub fn sensors(&self) -> Vec<Sensor> {
        let mut v: Vec<Sensor> = self.entries.iter().map(|e| e.script.sensor).collect();
        v.sort_by_key(|s| s.index());
        v.dedup();
        v
    }
}

fn map_jobs<T, U, F>(items: &[T], sequential: bool, f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync + Send,
{
    if sequential {
        items.iter().map(f).collect()
    } else {
        items.par_iter().map(f).collect()
    }
}

/// Overt constant-bias and stealthy ramp candidates for every sensor,
/// applicable direction, magnitude and start time.
pub fn candidate_scripts(cfg: &SuiteConfig) -> Vec<AttackScript> {
    let mut out = Vec::new();
    for sensor in Sensor::ALL {
        let (lo, hi) = sensor.bias_range();
        for &direction in BiasDirection::allowed(sensor) {
            for &f in &cfg.magnitude_fractions {
                for &start_s in &cfg.start_times_s {
                    for (class, pattern, duration_s) in [
                        (
                            AttackClass::Overt,
                            BiasPattern::Constant,
                            cfg.overt_duration_s,
                        ),
                        (
                            AttackClass::Stealthy,
                            BiasPattern::RampUp,
                            cfg.stealthy_duration_s,
                        ),
                    ] {
                        out.push(AttackScript {
                            sensor,
                            pattern,
                            magnitude: lo + f * (hi - lo),
                            start_s,
                            duration_s,
                            class,
                            direction,
                        });
                    }
                }
            }
        }
    }
    out
}

fn script_id(i: usize, s: &AttackScript) -> String {
    format!(
        "{i:03}-{}-{}-{:?}",
        s.sensor.name(),
        match s.class {
            AttackClass::Overt => "overt",
            AttackClass::Stealthy => "stealthy",
        },
        s.direction
    )
    .to_lowercase()
}

fn unprotected(
    base: &ScenarioConfig,
    seed: u64,
    script: Option<AttackScript>,
) -> Result<EpisodeRecord> {
    let mut cfg = base.clone();
    cfg.seed = seed;
    cfg.recovery = RecoveryMode::None;
    cfg.harness.record_steps = false;
    cfg.attack = script.map_or(AttackSource::None, |script| AttackSource::Script { script });
    run_mission(&cfg, None, None)
}

/// Builds a suite: candidates must pass range and class checks, then
/// violate at least one specification when flown without protection.
pub fn build_suite(cfg: &SuiteConfig) -> Result<Suite> {
    cfg.scenario.validate()?;
    if cfg.calibration_runs == 0 {
        return Err(Error::Config(
            "suite calibration needs at least one run".into(),
        ));
    }
    let calibration: Vec<u64> = (0..cfg.calibration_runs as u64)
        .map(|i| mix_seed(cfg.seed, 1_000_000 + i))
        .collect();
    let times = map_jobs(&calibration, cfg.sequential, |&s| {
        let r = unprotected(&cfg.scenario, s, None)?;
        if !r.verdict.is_compliant() {
            return Err(Error::SuiteValidation(format!(
                "attack-free calibration mission (seed {s}) violates {:?}",
                r.verdict.violated()
            )));
        }
        Ok(r.completion_time_s)
    })?;
    let t_min_s = times.iter().copied().fold(f64::INFINITY, f64::min);
    let t_max_s = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let thresholds = cfg
        .scenario
        .detector
        .nominal_thresholds(&cfg.scenario.profile);
    let dt = cfg.scenario.profile.dt_s;
    let candidates: Vec<(usize, AttackScript)> =
        candidate_scripts(cfg).into_iter().enumerate().collect();
    let judged = map_jobs(&candidates, cfg.sequential, |(i, script)| {
        let id = script_id(*i, script);
        let seed = mix_seed(mix_seed(cfg.seed, SUITE_STREAM), *i as u64);
        let reject = |reason: String| {
            Ok(Err(Rejection {
                id: id.clone(),
                script: *script,
                reason,
            }))
        };
        if let Err(e) = script.validate() {
            return reject(e.to_string());
        }
        if let Err(e) = script.validate_class(thresholds[script.sensor.index()], dt) {
            return reject(e.to_string());
        }
        let attacked = unprotected(&cfg.scenario, seed, Some(*script))?;
        if attacked.verdict.is_compliant() {
            return reject("no specification violated without protection".into());
        }
        let clean = unprotected(&cfg.scenario, seed, None)?;
        Ok(Ok(SuiteEntry {
            id,
            seed,
            script: *script,
            ground_truth_time_s: clean.completion_time_s,
        }))
    })?;
    let (mut entries, mut rejected) = (Vec::new(), Vec::new());
    for j in judged {
        match j {
            Ok(e) => entries.push(e),
            Err(r) => rejected.push(r),
        }
    }
    let suite = Suite {
        version: SUITE_VERSION,
        scenario: cfg.scenario.clone(),
        entries,
        rejected,
        t_min_s,
        t_max_s,
    };
    if suite.entries.len() < cfg.min_scripts {
        return Err(Error::SuiteValidation(format!(
            "{} scripts accepted, need {}",
            suite.entries.len(),
            cfg.min_scripts
        )));
    }
    Ok(suite)
}

/// Flies every suite entry under `mode` with the entry's seed.
pub fn evaluate_suite(
    suite: &Suite,
    mode: RecoveryMode,
    policy: Option<&PolicyParams>,
    sequential: bool,
) -> Result<Vec<EpisodeRecord>> {
    map_jobs(&suite.entries, sequential, |e| {
        let mut cfg = suite.scenario.clone();
        cfg.seed = e.seed;
        cfg.recovery = mode;
        cfg.attack = AttackSource::Script { script: e.script };
        cfg.harness.record_steps = false;
        run_mission(&cfg, policy, None)
    })
}

/// Metrics of one evaluated arm.
pub fn suite_report(
    suite: &Suite,
    label: &str,
    records: &[EpisodeRecord],
) -> Result<MetricsReport> {
    if records.len() != suite.entries.len() {
        return Err(Error::Config(format!(
            "{} records for a suite of {} entries",
            records.len(),
            suite.entries.len()
        )));
    }
    let md = records
        .iter()
        .zip(&suite.entries)
        .filter(|(r, _)| r.is_success(super::metrics::SUCCESS_RADIUS_M))
        .map(|(r, e)| {
            md_percent(
                r.completion_time_s,
                e.ground_truth_time_s,
                suite.t_min_s,
                suite.t_max_s,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    MetricsReport::new(label, records, &md)
}
