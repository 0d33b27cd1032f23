//! WebAssembly bindings for the demo page. Every entry point takes plain
//! numbers or JSON text and returns JSON text; the `*_json` functions hold
//! the logic so they can be tested natively.

use rav_recover::harness::runner::simulate;
use rav_recover::harness::{Pilot, RecoveryMode, ScenarioConfig};
use rav_recover::policy::PolicyParams;
use rav_recover::reward::{rho, ConditionValue, RewardShape};
use rav_recover::sensors::AttackScript;
use rav_recover::stl::SpecCatalog;
use rav_recover::{Error, Result};
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

fn to_js(r: Result<String>) -> std::result::Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e.to_string()))
}

/// Reward of one quadcopter specification over a window around its threshold.
#[wasm_bindgen]
pub fn reward_curve(spec_id: &str, k: f64, points: usize) -> std::result::Result<String, JsValue> {
    to_js(reward_curve_json(spec_id, k, points))
}

/// Bias and channel offset of an attack script sampled every `dt_s`.
#[wasm_bindgen]
pub fn attack_preview(script_json: &str, dt_s: f64) -> std::result::Result<String, JsValue> {
    to_js(attack_preview_json(script_json, dt_s))
}

/// Flies the corridor mission under an attack script. `policy_json` may be
/// empty for the tracker-only modes.
#[wasm_bindgen]
pub fn fly_mission(
    script_json: &str,
    mode: &str,
    seed: u64,
    policy_json: &str,
) -> std::result::Result<String, JsValue> {
    to_js(fly_mission_json(script_json, mode, seed, policy_json))
}

pub fn reward_curve_json(spec_id: &str, k: f64, points: usize) -> Result<String> {
    let catalog = SpecCatalog::quadcopter();
    let entry = catalog
        .specs
        .iter()
        .find(|e| e.id == spec_id)
        .ok_or_else(|| Error::InvalidInput(format!("unknown specification `{spec_id}`")))?;
    let shape = RewardShape::new(entry.family, k, entry.threshold);
    shape.validate()?;
    let n = points.clamp(2, 2000);
    let (lo, hi) = (entry.threshold - 15.0, entry.threshold + 15.0);
    let x: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect();
    let y: Vec<f64> = x
        .iter()
        .map(|&f| {
            let v = if entry.family.is_two_factor() {
                ConditionValue::pair(f, f)
            } else {
                ConditionValue::single(f)
            };
            rho(&shape, v)
        })
        .collect();
    Ok(json!({
        "id": entry.id,
        "condition": entry.condition,
        "threshold": entry.threshold,
        "family": entry.family,
        "critical": entry.critical,
        "x": x,
        "y": y,
    })
    .to_string())
}

fn parse_script(script_json: &str) -> Result<AttackScript> {
    let script: AttackScript = serde_json::from_str(script_json)?;
    script.validate()?;
    Ok(script)
}

pub fn attack_preview_json(script_json: &str, dt_s: f64) -> Result<String> {
    let script = parse_script(script_json)?;
    if !(dt_s > 0.0) {
        return Err(Error::InvalidInput(format!(
            "sample period must be > 0, got {dt_s}"
        )));
    }
    let horizon = script.end_s() + 2.0;
    let n = ((horizon / dt_s).ceil() as usize).min(10_000);
    let t: Vec<f64> = (0..=n).map(|i| i as f64 * dt_s).collect();
    Ok(json!({
        "unit": script.sensor.bias_unit(),
        "t": t,
        "bias": t.iter().map(|&s| script.bias_at(s)).collect::<Vec<_>>(),
        "offset": t.iter().map(|&s| script.channel_offset(s)).collect::<Vec<_>>(),
    })
    .to_string())
}

#[derive(Serialize)]
struct Trace {
    truth: Vec<[f64; 3]>,
    estimate: Vec<[f64; 3]>,
    alarm: Vec<bool>,
    policy: Vec<bool>,
    obstacles: Vec<[f64; 3]>,
    waypoints: Vec<[f64; 3]>,
    outcome: String,
    violated: Vec<String>,
    final_error_m: f64,
    completion_time_s: f64,
    collision: bool,
}

pub fn fly_mission_json(
    script_json: &str,
    mode: &str,
    seed: u64,
    policy_json: &str,
) -> Result<String> {
    let mut cfg = ScenarioConfig::default();
    cfg.seed = seed;
    cfg.recovery = mode.parse()?;
    let script = if script_json.trim().is_empty() {
        None
    } else {
        Some(parse_script(script_json)?)
    };
    let policy = if policy_json.trim().is_empty() {
        None
    } else {
        Some(PolicyParams::from_json(policy_json)?)
    };
    if cfg.recovery.needs_policy() && policy.is_none() {
        return Err(Error::Config(format!(
            "mode `{}` needs a policy checkpoint",
            cfg.recovery
        )));
    }
    if cfg.recovery == RecoveryMode::Proactive && script.is_none() && policy.is_none() {
        return Err(Error::Config("nothing to fly".into()));
    }
    let env = cfg.build_environment()?;
    let record = simulate(&cfg, script.as_ref(), &Pilot::evaluate(policy.as_ref()))?.record;
    let p = |v: rav_recover::geometry::Vec3| [v.x, v.y, v.z];
    let trace = Trace {
        truth: record.steps.iter().map(|s| p(s.truth.position)).collect(),
        estimate: record
            .steps
            .iter()
            .map(|s| p(s.estimate.position))
            .collect(),
        alarm: record.steps.iter().map(|s| s.alarm).collect(),
        policy: record.steps.iter().map(|s| s.action.is_some()).collect(),
        obstacles: env
            .obstacles
            .iter()
            .map(|o| [o.x, o.y, o.radius_m])
            .collect(),
        waypoints: env.plan.waypoints.iter().map(|&w| p(w)).collect(),
        outcome: format!("{:?}", record.outcome).to_lowercase(),
        violated: record.verdict.violated().to_vec(),
        final_error_m: record.final_error_m,
        completion_time_s: record.completion_time_s,
        collision: record.collision,
    };
    Ok(serde_json::to_string(&trace)?)
}
