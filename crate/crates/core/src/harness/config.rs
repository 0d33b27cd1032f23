//! Scenario configuration: one TOML file per scenario with explicit units
//! in the key names.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detection::DetectorConfig;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::policy::SelectionRule;
use crate::reconstruction::ReconstructionConfig;
use crate::reward::RewardKind;
use crate::sensors::AttackScript;
use crate::stl::{SpecCatalog, StlSpec};
use crate::vehicle::{VehicleKind, VehicleProfile};
use crate::world::{Environment, EnvironmentPreset, Geofence, MissionPlan, Obstacle};

/// Who flies the mission and whether compromised channels are reconstructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryMode {
    /// Nominal tracker on raw estimates.
    #[default]
    None,
    /// Tracker until an alarm, then the policy on reconstructed state until it clears.
    Reactive,
    /// Policy throughout, on reconstructed state while an alarm is active.
    Proactive,
    /// Reconstruction feeds the nominal tracker.
    NoRcp,
    /// Reactive switching, but the policy sees raw estimates.
    NoSr,
}

impl RecoveryMode {
    pub const ALL: [RecoveryMode; 5] = [
        RecoveryMode::None,
        RecoveryMode::Reactive,
        RecoveryMode::Proactive,
        RecoveryMode::NoRcp,
        RecoveryMode::NoSr,
    ];

    pub fn needs_policy(self) -> bool {
        matches!(
            self,
            RecoveryMode::Reactive | RecoveryMode::Proactive | RecoveryMode::NoSr
        )
    }

    pub fn reconstructs(self) -> bool {
        matches!(
            self,
            RecoveryMode::Reactive | RecoveryMode::Proactive | RecoveryMode::NoRcp
        )
    }

    pub fn label(self) -> &'static str {
        match self {
            RecoveryMode::None => "none",
            RecoveryMode::Reactive => "reactive",
            RecoveryMode::Proactive => "proactive",
            RecoveryMode::NoRcp => "no-rcp",
            RecoveryMode::NoSr => "no-sr",
        }
    }
}

impl fmt::Display for RecoveryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for RecoveryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('_', "-").as_str() {
            "none" => Ok(RecoveryMode::None),
            "reactive" => Ok(RecoveryMode::Reactive),
            "proactive" => Ok(RecoveryMode::Proactive),
            "no-rcp" | "ablation-no-rcp" => Ok(RecoveryMode::NoRcp),
            "no-sr" | "ablation-no-sr" => Ok(RecoveryMode::NoSr),
            _ => Err(Error::Config(format!("unknown recovery mode `{s}`"))),
        }
    }
}

fn default_gap() -> f64 {
    7.5
}

fn default_corridor_length() -> f64 {
    80.0
}

fn default_altitude() -> f64 {
    15.0
}

fn default_cruise() -> f64 {
    8.0
}

fn default_fence_h() -> f64 {
    50.0
}

fn default_fence_v() -> f64 {
    10.0
}

/// Where the mission takes place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentSpec {
    /// Straight route with three obstacles staggered on alternating sides.
    Corridor {
        #[serde(default = "default_gap")]
        surface_gap_m: f64,
        #[serde(default = "default_corridor_length")]
        length_m: f64,
        #[serde(default = "default_altitude")]
        altitude_m: f64,
        #[serde(default = "default_cruise")]
        cruise_speed_mps: f64,
    },
    /// Procedural obstacle field along a waypoint route.
    Preset {
        preset: EnvironmentPreset,
        waypoints_m: Vec<[f64; 3]>,
        #[serde(default = "default_cruise")]
        cruise_speed_mps: f64,
        #[serde(default)]
        seed: u64,
    },
    Explicit {
        waypoints_m: Vec<[f64; 3]>,
        #[serde(default = "default_cruise")]
        cruise_speed_mps: f64,
        #[serde(default)]
        obstacles: Vec<Obstacle>,
        #[serde(default = "default_fence_h")]
        geofence_horizontal_m: f64,
        #[serde(default = "default_fence_v")]
        geofence_vertical_m: f64,
    },
}

impl Default for EnvironmentSpec {
    fn default() -> Self {
        EnvironmentSpec::Corridor {
            surface_gap_m: default_gap(),
            length_m: default_corridor_length(),
            altitude_m: default_altitude(),
            cruise_speed_mps: default_cruise(),
        }
    }
}

fn to_points(w: &[[f64; 3]], planar: bool) -> Vec<Vec3> {
    w.iter()
        .map(|p| Vec3::new(p[0], p[1], if planar { 0.0 } else { p[2] }))
        .collect()
}

impl EnvironmentSpec {
    pub fn build(&self, kind: VehicleKind) -> Result<Environment> {
        let planar = kind == VehicleKind::Rover;
        let mut env = match self {
            EnvironmentSpec::Corridor {
                surface_gap_m,
                length_m,
                altitude_m,
                cruise_speed_mps,
            } => corridor(*surface_gap_m, *length_m, *altitude_m, *cruise_speed_mps)?,
            EnvironmentSpec::Preset {
                preset,
                waypoints_m,
                cruise_speed_mps,
                seed,
            } => {
                let plan = MissionPlan::new(to_points(waypoints_m, planar), *cruise_speed_mps)?;
                Environment::procedural(*preset, plan, *seed)
            }
            EnvironmentSpec::Explicit {
                waypoints_m,
                cruise_speed_mps,
                obstacles,
                geofence_horizontal_m,
                geofence_vertical_m,
            } => {
                let plan = MissionPlan::new(to_points(waypoints_m, planar), *cruise_speed_mps)?;
                Environment::new(
                    plan,
                    obstacles.clone(),
                    *geofence_horizontal_m,
                    *geofence_vertical_m,
                )
            }
        };
        if planar {
            for w in &mut env.plan.waypoints {
                w.z = 0.0;
            }
            env.geofence.center.z = 0.0;
        }
        Ok(env)
    }
}

/// Corridor of `length_m` with waypoints every 20 m and obstacles at 5/16,
/// 9/16 and 13/16 of the way, `surface_gap_m` from the route.
pub fn corridor(
    surface_gap_m: f64,
    length_m: f64,
    altitude_m: f64,
    cruise_speed_mps: f64,
) -> Result<Environment> {
    if !(length_m >= 20.0) || !(surface_gap_m > 0.0) {
        return Err(Error::Config(
            "corridor needs length >= 20 m and a positive gap".into(),
        ));
    }
    let legs = (length_m / 20.0).round().max(1.0) as usize;
    let step = length_m / legs as f64;
    let waypoints = (0..=legs)
        .map(|i| Vec3::new(step * i as f64, 0.0, altitude_m))
        .collect();
    let plan = MissionPlan::new(waypoints, cruise_speed_mps)?;
    let offset = surface_gap_m + 1.0;
    let obstacles = [(5.0, 1.0), (9.0, -1.0), (13.0, 1.0)]
        .iter()
        .map(|&(f, side)| Obstacle::new(length_m * f / 16.0, side * offset, 1.0, 30.0))
        .collect();
    Ok(Environment::new(plan, obstacles, 50.0, 10.0))
}

/// Where attacks come from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum AttackSource {
    #[default]
    None,
    Script {
        script: AttackScript,
    },
    /// Script drawn from an attack agent at mission start.
    Agent,
}

/// Mission-loop constants of the harness itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    /// Hard time limit; defaults to three times the planned duration plus 20 s.
    pub time_limit_s: Option<f64>,
    /// Proportional gains of the nominal tracker per axis, 1/s.
    pub tracker_gain: [f64; 3],
    pub tracker_max_speed_mps: f64,
    /// Arrival radius around the goal, m.
    pub success_radius_m: f64,
    /// No route progress for this long counts as a stall, s.
    pub stall_timeout_s: f64,
    /// Gain from an acceleration or tilt estimate error to the velocity
    /// the autopilot actually flies, s.
    pub acceleration_coupling_s: f64,
    /// Time constant over which the inner loop averages acceleration errors, s.
    pub acceleration_filter_s: f64,
    /// Discount on the critic in the lookahead score; 0 ranks by the
    /// immediate reward of the predicted state.
    pub lookahead_discount: f64,
    /// Cross-track distance under which the vehicle counts as back on route, m.
    pub recovered_cross_track_m: f64,
    /// The estimate must stay at the goal this long before the mission ends, s.
    pub arrival_settle_s: f64,
    /// Keep per-step traces in the record.
    pub record_steps: bool,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            time_limit_s: None,
            tracker_gain: [0.5, 0.5, 1.0],
            tracker_max_speed_mps: 11.0,
            success_radius_m: 5.0,
            stall_timeout_s: 30.0,
            acceleration_coupling_s: 1.0,
            acceleration_filter_s: 1.0,
            lookahead_discount: 0.0,
            recovered_cross_track_m: 5.0,
            arrival_settle_s: 0.5,
            record_steps: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub id: String,
    pub seed: u64,
    pub profile: VehicleProfile,
    pub environment: EnvironmentSpec,
    /// Specification catalog; the vehicle's default catalog when absent.
    pub catalog: Option<SpecCatalog>,
    pub attack: AttackSource,
    pub detector: DetectorConfig,
    pub recovery: RecoveryMode,
    pub reward: RewardKind,
    pub selection: SelectionRule,
    pub reconstruction: ReconstructionConfig,
    pub harness: HarnessConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            id: "corridor".into(),
            seed: 0,
            profile: VehicleProfile::quadcopter(),
            environment: EnvironmentSpec::default(),
            catalog: None,
            attack: AttackSource::None,
            detector: DetectorConfig::default(),
            recovery: RecoveryMode::None,
            reward: RewardKind::Compliance,
            selection: SelectionRule::Weighted,
            reconstruction: ReconstructionConfig::default(),
            harness: HarnessConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn catalog(&self) -> SpecCatalog {
        self.catalog
            .clone()
            .unwrap_or_else(|| SpecCatalog::for_vehicle(self.profile.kind))
    }

    pub fn build_environment(&self) -> Result<Environment> {
        self.environment.build(self.profile.kind)
    }

    pub fn specs(&self, env: &Environment) -> Result<Vec<StlSpec>> {
        self.catalog().instantiate(env)
    }

    pub fn script(&self) -> Option<&AttackScript> {
        match &self.attack {
            AttackSource::Script { script } => Some(script),
            _ => None,
        }
    }

    pub fn time_limit(&self, env: &Environment) -> f64 {
        self.harness
            .time_limit_s
            .unwrap_or(3.0 * env.plan.planned_duration() + 20.0)
    }

    /// Checks every part and that a specification-compliant path exists.
    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        self.detector.validate()?;
        let catalog = self.catalog();
        if catalog.vehicle != self.profile.kind {
            return Err(Error::Config(format!(
                "catalog is for a {} but the profile is a {}",
                catalog.vehicle, self.profile.kind
            )));
        }
        catalog.validate()?;
        let env = self.build_environment()?;
        validate_fence(&env.geofence)?;
        env.validate_reachable(5.0, 1.0, 10.0)?;
        if let Some(script) = self.script() {
            script.validate()?;
        }
        if self.harness.tracker_gain.iter().any(|g| !(*g >= 0.0))
            || !(self.harness.tracker_max_speed_mps > 0.0)
        {
            return Err(Error::Config(
                "tracker gains must be >= 0 and its speed limit > 0".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.harness.lookahead_discount) {
            return Err(Error::Config("lookahead discount must be in [0, 1)".into()));
        }
        if !(self.harness.arrival_settle_s >= 0.0 && self.harness.arrival_settle_s.is_finite()) {
            return Err(Error::Config("arrival settle time must be >= 0".into()));
        }
        Ok(())
    }
}

fn validate_fence(fence: &Geofence) -> Result<()> {
    if fence.horizontal_m > 0.0 && fence.vertical_m > 0.0 {
        Ok(())
    } else {
        Err(Error::Config("geofence radii must be > 0".into()))
    }
}
