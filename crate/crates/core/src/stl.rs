//! Flat G/F temporal specifications over named vehicle conditions, their
//! runtime monitor and the catalog file format.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reward::{ConditionValue, RewardFamily, RewardShape, RewardTerm};
use crate::vehicle::{VehicleKind, VehicleState};
use crate::world::{Environment, Phase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TemporalOp {
    /// Always within scope.
    G,
    /// At least once within the time bound.
    F,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
}

impl Comparator {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Lt => value < threshold,
            Comparator::Gt => value > threshold,
            Comparator::Le => value <= threshold,
            Comparator::Ge => value >= threshold,
        }
    }

    /// Signed distance to the threshold, positive when satisfied.
    pub fn margin(self, value: f64, threshold: f64) -> f64 {
        match self {
            Comparator::Lt | Comparator::Le => threshold - value,
            Comparator::Gt | Comparator::Ge => value - threshold,
        }
    }
}

/// Named condition evaluators. Autopilot API names from both PX4 and
/// ArduPilot style catalogs map onto the same evaluators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Distance to the nearest obstacle surface, m.
    ObstacleDistance,
    /// Distance from the time-indexed planned position, m.
    CheckCurrentPosition,
    Altitude,
    /// Distance to route waypoint `index` (1-based; 0 is the launch point), m.
    DistToWaypoint {
        index: usize,
    },
    VelocityXy,
    /// Vertical speed magnitude, m/s.
    VelocityZ,
    /// Climb rate, m/s.
    UpdateRamp,
    /// Horizontal distance from the loiter centre, m.
    AllowsPosition,
    /// Horizontal and vertical clearance to the geofence, m.
    IsCloserThanMaxDist,
    /// Horizontal clearance to the geofence, m.
    CheckFence,
}

impl Condition {
    pub fn parse(name: &str) -> Result<Condition> {
        let c = match name {
            "obstacle_distance" | "get_proximity" => Condition::ObstacleDistance,
            "checkCurrentPosition" | "input_pos_xyz" => Condition::CheckCurrentPosition,
            "altitude" => Condition::Altitude,
            "dist_to_waypoint" | "wp_distance_to_destination" => {
                Condition::DistToWaypoint { index: 0 }
            }
            "velocity_xy" | "input_vel_accel_xy" => Condition::VelocityXy,
            "velocity_z" => Condition::VelocityZ,
            "updateRamp" => Condition::UpdateRamp,
            "allows_position" => Condition::AllowsPosition,
            "isCloserThanMaxDist" => Condition::IsCloserThanMaxDist,
            "check_fence" => Condition::CheckFence,
            other => return Err(Error::Config(format!("unknown condition `{other}`"))),
        };
        Ok(c)
    }

    pub fn name(self) -> &'static str {
        match self {
            Condition::ObstacleDistance => "obstacle_distance",
            Condition::CheckCurrentPosition => "checkCurrentPosition",
            Condition::Altitude => "altitude",
            Condition::DistToWaypoint { .. } => "dist_to_waypoint",
            Condition::VelocityXy => "velocity_xy",
            Condition::VelocityZ => "velocity_z",
            Condition::UpdateRamp => "updateRamp",
            Condition::AllowsPosition => "allows_position",
            Condition::IsCloserThanMaxDist => "isCloserThanMaxDist",
            Condition::CheckFence => "check_fence",
        }
    }
}

/// When a specification is monitored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Always,
    Window {
        start: f64,
        end: f64,
    },
    /// The mission has no phase this specification applies to.
    Never,
}

impl Scope {
    pub fn contains(self, t: f64) -> bool {
        match self {
            Scope::Always => true,
            Scope::Window { start, end } => t >= start && t <= end,
            Scope::Never => false,
        }
    }
}

/// One instantiated mission specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StlSpec {
    pub id: String,
    /// Specifications sharing a group (the per-waypoint expansion of S5)
    /// contribute a single reward term.
    pub group: String,
    pub operator: TemporalOp,
    pub condition: Condition,
    pub comparator: Comparator,
    pub threshold: f64,
    pub scope: Scope,
    pub critical: bool,
    pub shape: RewardShape,
    pub weight: f64,
}

impl StlSpec {
    pub fn holds(&self, value: ConditionValue) -> bool {
        let ok = self.comparator.holds(value.primary, self.threshold);
        match value.secondary {
            Some(v) => ok && self.comparator.holds(v, self.threshold),
            None => ok,
        }
    }

    pub fn margin(&self, value: ConditionValue) -> f64 {
        let m = self.comparator.margin(value.primary, self.threshold);
        match value.secondary {
            Some(v) => m.min(self.comparator.margin(v, self.threshold)),
            None => m,
        }
    }
}

/// Evaluates the raw condition value f(c) for a state.
pub fn evaluate_condition(
    spec: &StlSpec,
    state: &VehicleState,
    env: &Environment,
) -> Result<ConditionValue> {
    let p = state.position;
    let v = match spec.condition {
        Condition::ObstacleDistance => ConditionValue::single(env.obstacle_distance(p)),
        Condition::CheckCurrentPosition => {
            ConditionValue::single((p - env.plan.reference_position(state.time)).norm())
        }
        Condition::Altitude => ConditionValue::single(p.z),
        Condition::DistToWaypoint { index } => {
            let w = env.plan.waypoints.get(index).ok_or_else(|| {
                Error::Config(format!(
                    "{}: waypoint index {index} outside the route",
                    spec.id
                ))
            })?;
            ConditionValue::single((p - *w).norm())
        }
        Condition::VelocityXy => ConditionValue::single(state.velocity.norm_xy()),
        Condition::VelocityZ => ConditionValue::single(state.velocity.z.abs()),
        Condition::UpdateRamp => ConditionValue::single(state.velocity.z),
        Condition::AllowsPosition => {
            let loiter = env.plan.loiter.ok_or_else(|| {
                Error::Config(format!("{}: mission has no loiter centre", spec.id))
            })?;
            ConditionValue::single((p.x - loiter.center.x).hypot(p.y - loiter.center.y))
        }
        Condition::IsCloserThanMaxDist => {
            let (h, v) = env.geofence.margins(p);
            ConditionValue::pair(h, v)
        }
        Condition::CheckFence => ConditionValue::single(env.geofence.margins(p).0),
    };
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SpecStatus {
    pub value: Option<ConditionValue>,
    pub margin: Option<f64>,
    pub satisfied_now: bool,
    pub violated_ever: bool,
    pub satisfied_once: bool,
    pub first_violation_s: Option<f64>,
    pub first_satisfaction_s: Option<f64>,
}

/// Updates statuses with one sample; returns the new statuses.
pub fn monitor_step(
    statuses: &[SpecStatus],
    specs: &[StlSpec],
    state: &VehicleState,
    env: &Environment,
    t: f64,
) -> Result<Vec<SpecStatus>> {
    let mut out = statuses.to_vec();
    for (spec, status) in specs.iter().zip(out.iter_mut()) {
        if !spec.scope.contains(t) {
            continue;
        }
        let value = evaluate_condition(spec, state, env)?;
        let holds = spec.holds(value);
        status.value = Some(value);
        status.margin = Some(spec.margin(value));
        status.satisfied_now = holds;
        match spec.operator {
            TemporalOp::G if !holds && !status.violated_ever => {
                status.violated_ever = true;
                status.first_violation_s = Some(t);
            }
            TemporalOp::F if holds && !status.satisfied_once => {
                status.satisfied_once = true;
                status.first_satisfaction_s = Some(t);
            }
            _ => {}
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Compliant,
    Violated(Vec<String>),
}

impl Verdict {
    pub fn is_compliant(&self) -> bool {
        matches!(self, Verdict::Compliant)
    }

    pub fn violated(&self) -> &[String] {
        match self {
            Verdict::Compliant => &[],
            Verdict::Violated(ids) => ids,
        }
    }
}

/// Compliant iff no G-specification was violated and every F-specification
/// was satisfied within its bound.
pub fn mission_verdict(specs: &[StlSpec], statuses: &[SpecStatus]) -> Verdict {
    let mut ids: Vec<String> = Vec::new();
    for (spec, status) in specs.iter().zip(statuses) {
        let failed = match spec.operator {
            TemporalOp::G => status.violated_ever,
            TemporalOp::F => spec.scope != Scope::Never && !status.satisfied_once,
        };
        if failed && !ids.contains(&spec.group) {
            ids.push(spec.group.clone());
        }
    }
    if ids.is_empty() {
        Verdict::Compliant
    } else {
        Verdict::Violated(ids)
    }
}

/// Per-episode monitor owning the instantiated specifications and their statuses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monitor {
    specs: Vec<StlSpec>,
    statuses: Vec<SpecStatus>,
    last_t: Option<f64>,
}

impl Monitor {
    pub fn new(specs: Vec<StlSpec>) -> Self {
        let statuses = vec![SpecStatus::default(); specs.len()];
        Self {
            specs,
            statuses,
            last_t: None,
        }
    }

    pub fn specs(&self) -> &[StlSpec] {
        &self.specs
    }

    pub fn statuses(&self) -> &[SpecStatus] {
        &self.statuses
    }

    pub fn step(&mut self, state: &VehicleState, env: &Environment) -> Result<()> {
        let t = state.time;
        if let Some(last) = self.last_t {
            if t < last {
                return Err(Error::InvalidInput(format!(
                    "monitor time went backwards: {t} < {last}"
                )));
            }
        }
        self.statuses = monitor_step(&self.statuses, &self.specs, state, env, t)?;
        self.last_t = Some(t);
        Ok(())
    }

    pub fn verdict(&self) -> Verdict {
        mission_verdict(&self.specs, &self.statuses)
    }

    /// Reward terms for a (possibly hypothetical) state. Grouped
    /// F-specifications contribute only their first unsatisfied member.
    pub fn reward_terms(&self, state: &VehicleState, env: &Environment) -> Result<Vec<RewardTerm>> {
        let t = state.time;
        let mut terms = Vec::with_capacity(self.specs.len());
        let mut seen_groups: Vec<&str> = Vec::new();
        for (i, spec) in self.specs.iter().enumerate() {
            if spec.group != spec.id {
                if seen_groups.contains(&spec.group.as_str()) {
                    continue;
                }
                let members: Vec<usize> = (i..self.specs.len())
                    .filter(|&j| self.specs[j].group == spec.group)
                    .collect();
                seen_groups.push(&spec.group);
                let pending = members
                    .iter()
                    .copied()
                    .find(|&j| !self.statuses[j].satisfied_once);
                let Some(j) = pending else {
                    // Every member already satisfied.
                    terms.push(RewardTerm {
                        shape: spec.shape,
                        value: ConditionValue::single(0.0),
                        weight: spec.weight,
                        satisfied: true,
                        active: false,
                    });
                    continue;
                };
                terms.push(self.term(&self.specs[j], state, env)?);
                continue;
            }
            let mut term = self.term(spec, state, env)?;
            if !spec.scope.contains(t) {
                term.active = false;
            }
            terms.push(term);
        }
        Ok(terms)
    }

    fn term(&self, spec: &StlSpec, state: &VehicleState, env: &Environment) -> Result<RewardTerm> {
        if spec.scope == Scope::Never {
            return Ok(RewardTerm {
                shape: spec.shape,
                value: ConditionValue::single(0.0),
                weight: spec.weight,
                satisfied: true,
                active: false,
            });
        }
        let value = evaluate_condition(spec, state, env)?;
        Ok(RewardTerm {
            shape: spec.shape,
            value,
            weight: spec.weight,
            satisfied: spec.holds(value),
            active: true,
        })
    }
}

/// One catalog row as written in the catalog file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogEntry {
    pub id: String,
    pub operator: TemporalOp,
    pub condition: String,
    pub comparator: Comparator,
    pub threshold: f64,
    #[serde(default)]
    pub bound: Option<[f64; 2]>,
    #[serde(default)]
    pub phase: Option<Phase>,
    /// `"waypoints"` expands the row into one F-specification per route waypoint.
    #[serde(default)]
    pub expand: Option<String>,
    #[serde(default)]
    pub critical: bool,
    pub family: RewardFamily,
    #[serde(default = "default_k")]
    pub k: f64,
    #[serde(default)]
    pub weight: Option<f64>,
}

fn default_k() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecCatalog {
    pub vehicle: VehicleKind,
    /// Weight of critical specifications in the reward mean.
    #[serde(default = "default_critical_weight")]
    pub critical_weight: f64,
    /// Minimum half-width of each waypoint window, s.
    #[serde(default = "default_window_floor")]
    pub waypoint_window_min_s: f64,
    /// Waypoint window half-width as a fraction of the incoming segment time.
    #[serde(default = "default_window_fraction")]
    pub waypoint_window_fraction: f64,
    #[serde(rename = "spec")]
    pub specs: Vec<CatalogEntry>,
}

fn default_critical_weight() -> f64 {
    2.0
}
fn default_window_floor() -> f64 {
    3.0
}
fn default_window_fraction() -> f64 {
    0.5
}

#[allow(clippy::too_many_arguments)]
fn entry(
    id: &str,
    operator: TemporalOp,
    condition: &str,
    comparator: Comparator,
    threshold: f64,
    critical: bool,
    family: RewardFamily,
) -> CatalogEntry {
    CatalogEntry {
        id: id.into(),
        operator,
        condition: condition.into(),
        comparator,
        threshold,
        bound: None,
        phase: None,
        expand: None,
        critical,
        family,
        k: 1.0,
        weight: None,
    }
}

impl SpecCatalog {
    /// The twelve multicopter specifications with their default parameters.
    pub fn quadcopter() -> Self {
        use Comparator::*;
        use RewardFamily::*;
        use TemporalOp::*;
        let mut specs = vec![
            entry(
                "S1",
                G,
                "obstacle_distance",
                Gt,
                5.0,
                true,
                SignedSaturateHigh,
            ),
            entry(
                "S2",
                G,
                "checkCurrentPosition",
                Lt,
                10.0,
                true,
                FallingBelow,
            ),
            entry("S3", G, "altitude", Gt, 10.0, false, RisingAbove),
            entry("S4", G, "altitude", Lt, 20.0, false, FallingBelow),
            entry("S5", F, "dist_to_waypoint", Lt, 5.0, false, FallingBelow),
            entry("S6", G, "obstacle_distance", Gt, 5.0, false, SaturateHigh),
            entry("S7", G, "velocity_xy", Gt, 5.0, false, RisingAbove),
            entry("S8", G, "velocity_xy", Lt, 12.0, false, FallingBelow),
            entry("S9", G, "velocity_z", Le, 0.5, false, FallingBelow),
            entry("S10", G, "updateRamp", Ge, 2.0, false, RisingAbove),
            entry("S11", G, "allows_position", Lt, 8.0, false, FallingBelow),
            entry(
                "S12",
                G,
                "isCloserThanMaxDist",
                Gt,
                1.0,
                true,
                TwoFactorRising,
            ),
        ];
        specs[4].expand = Some("waypoints".into());
        specs[8].phase = Some(Phase::Landing);
        specs[9].phase = Some(Phase::Takeoff);
        specs[10].phase = Some(Phase::Loiter);
        Self {
            vehicle: VehicleKind::Quadcopter,
            critical_weight: 2.0,
            waypoint_window_min_s: 3.0,
            waypoint_window_fraction: 0.5,
            specs,
        }
    }

    /// The seven ground-rover specifications.
    pub fn rover() -> Self {
        use Comparator::*;
        use RewardFamily::*;
        use TemporalOp::*;
        let mut specs = vec![
            entry("S1", G, "get_proximity", Gt, 5.0, true, SignedSaturateHigh),
            entry("S2", G, "input_pos_xyz", Lt, 10.0, true, FallingBelow),
            entry(
                "S5",
                F,
                "wp_distance_to_destination",
                Lt,
                5.0,
                false,
                FallingBelow,
            ),
            entry("S6", G, "get_proximity", Gt, 5.0, false, SaturateHigh),
            entry("S7", G, "input_vel_accel_xy", Gt, 5.0, false, RisingAbove),
            entry("S8", G, "input_vel_accel_xy", Lt, 12.0, false, FallingBelow),
            entry("S12", G, "check_fence", Gt, 1.0, true, RisingAbove),
        ];
        specs[2].expand = Some("waypoints".into());
        Self {
            vehicle: VehicleKind::Rover,
            critical_weight: 2.0,
            waypoint_window_min_s: 3.0,
            waypoint_window_fraction: 0.5,
            specs,
        }
    }

    pub fn for_vehicle(kind: VehicleKind) -> Self {
        match kind {
            VehicleKind::Quadcopter => Self::quadcopter(),
            VehicleKind::Rover => Self::rover(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let catalog: SpecCatalog = toml::from_str(text)?;
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.specs.is_empty() {
            return Err(Error::Config("catalog has no specifications".into()));
        }
        for e in &self.specs {
            Condition::parse(&e.condition)?;
            if !(e.threshold > 0.0 && e.threshold.is_finite()) {
                return Err(Error::Config(format!("{}: threshold must be > 0", e.id)));
            }
            RewardShape::new(e.family, e.k, e.threshold).validate()?;
            if e.operator == TemporalOp::F && e.bound.is_none() && e.expand.is_none() {
                return Err(Error::Config(format!(
                    "{}: F-specifications need a time bound",
                    e.id
                )));
            }
            if let Some(x) = &e.expand {
                if x != "waypoints" {
                    return Err(Error::Config(format!("{}: unknown expansion `{x}`", e.id)));
                }
            }
            if let Some([a, b]) = e.bound {
                if !(a <= b) {
                    return Err(Error::Config(format!("{}: empty time bound", e.id)));
                }
            }
        }
        Ok(())
    }

    /// Instantiates the catalog for a concrete mission.
    pub fn instantiate(&self, env: &Environment) -> Result<Vec<StlSpec>> {
        self.validate()?;
        let plan = &env.plan;
        let mut out = Vec::new();
        for e in &self.specs {
            let condition = Condition::parse(&e.condition)?;
            let weight = e.weight.unwrap_or(if e.critical {
                self.critical_weight
            } else {
                1.0
            });
            let shape = RewardShape::new(e.family, e.k, e.threshold);
            let mut scope = match e.bound {
                Some([a, b]) => Scope::Window { start: a, end: b },
                None => Scope::Always,
            };
            if let Some(phase) = e.phase {
                let window = match phase {
                    Phase::Takeoff => plan.takeoff_window(),
                    Phase::Landing => plan.landing_window(),
                    Phase::Loiter => plan.loiter.map(|l| (l.start_s, l.end_s)),
                    Phase::Cruise => Some((0.0, f64::INFINITY)),
                };
                scope = match window {
                    Some((start, end)) => Scope::Window { start, end },
                    None => Scope::Never,
                };
            }
            if e.expand.is_some() {
                let times = plan.arrival_times();
                for index in 1..plan.waypoints.len() {
                    let seg = times[index] - times[index - 1];
                    let w = self
                        .waypoint_window_min_s
                        .max(self.waypoint_window_fraction * seg);
                    out.push(StlSpec {
                        id: format!("{}.{index}", e.id),
                        group: e.id.clone(),
                        operator: e.operator,
                        condition: Condition::DistToWaypoint { index },
                        comparator: e.comparator,
                        threshold: e.threshold,
                        scope: Scope::Window {
                            start: (times[index] - w).max(0.0),
                            end: times[index] + w,
                        },
                        critical: e.critical,
                        shape,
                        weight,
                    });
                }
                continue;
            }
            out.push(StlSpec {
                id: e.id.clone(),
                group: e.id.clone(),
                operator: e.operator,
                condition,
                comparator: e.comparator,
                threshold: e.threshold,
                scope,
                critical: e.critical,
                shape,
                weight,
            });
        }
        Ok(out)
    }
}

impl fmt::Display for TemporalOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TemporalOp::G => "G",
            TemporalOp::F => "F",
        })
    }
}

impl FromStr for Comparator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "<" => Ok(Comparator::Lt),
            ">" => Ok(Comparator::Gt),
            "<=" => Ok(Comparator::Le),
            ">=" => Ok(Comparator::Ge),
            _ => Err(Error::Config(format!("unknown comparator `{s}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::world::{MissionPlan, Obstacle};

    fn simple_spec(
        condition: Condition,
        op: TemporalOp,
        cmp: Comparator,
        threshold: f64,
        scope: Scope,
    ) -> StlSpec {
        StlSpec {
            id: "T".into(),
            group: "T".into(),
            operator: op,
            condition,
            comparator: cmp,
            threshold,
            scope,
            critical: false,
            shape: RewardShape::new(RewardFamily::FallingBelow, 1.0, threshold),
            weight: 1.0,
        }
    }

    fn env_with_obstacle() -> Environment {
        let plan = MissionPlan::new(vec![Vec3::ZERO, Vec3::new(3.0, 4.0, 0.0)], 1.0).unwrap();
        Environment::new(plan, vec![Obstacle::new(10.0, 0.0, 0.0, 5.0)], 50.0, 10.0)
    }

    #[test]
    fn condition_examples() {
        let env = env_with_obstacle();
        let origin = VehicleState::default();
        let s = simple_spec(
            Condition::ObstacleDistance,
            TemporalOp::G,
            Comparator::Gt,
            5.0,
            Scope::Always,
        );
        assert_eq!(evaluate_condition(&s, &origin, &env).unwrap().primary, 10.0);
        let s = simple_spec(
            Condition::CheckCurrentPosition,
            TemporalOp::G,
            Comparator::Lt,
            10.0,
            Scope::Always,
        );
        assert_eq!(evaluate_condition(&s, &origin, &env).unwrap().primary, 0.0);
        let s = simple_spec(
            Condition::DistToWaypoint { index: 1 },
            TemporalOp::F,
            Comparator::Lt,
            5.0,
            Scope::Always,
        );
        assert_eq!(evaluate_condition(&s, &origin, &env).unwrap().primary, 5.0);
    }

    #[test]
    fn unknown_condition_is_config_error() {
        assert!(matches!(
            Condition::parse("warp_drive"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn g_altitude_satisfied() {
        let env = env_with_obstacle();
        let spec = simple_spec(
            Condition::Altitude,
            TemporalOp::G,
            Comparator::Gt,
            10.0,
            Scope::Always,
        );
        let mut m = Monitor::new(vec![spec]);
        for k in 0..100 {
            m.step(
                &VehicleState::at(Vec3::new(0.0, 0.0, 15.0), Vec3::ZERO, k as f64 * 0.1),
                &env,
            )
            .unwrap();
        }
        assert!(m.verdict().is_compliant());
    }

    #[test]
    fn f_satisfied_once() {
        let env = env_with_obstacle();
        let spec = simple_spec(
            Condition::DistToWaypoint { index: 1 },
            TemporalOp::F,
            Comparator::Lt,
            5.0,
            Scope::Window {
                start: 0.0,
                end: 30.0,
            },
        );
        let mut m = Monitor::new(vec![spec]);
        for t in 0..=30 {
            let p = if t == 12 {
                Vec3::new(3.0, 4.0, 0.0)
            } else {
                Vec3::new(100.0, 0.0, 0.0)
            };
            m.step(&VehicleState::at(p, Vec3::ZERO, t as f64), &env)
                .unwrap();
        }
        assert!(m.statuses()[0].satisfied_once);
        assert_eq!(m.statuses()[0].first_satisfaction_s, Some(12.0));
        assert!(m.verdict().is_compliant());
    }

    #[test]
    fn g_velocity_latches() {
        let env = env_with_obstacle();
        let spec = simple_spec(
            Condition::VelocityXy,
            TemporalOp::G,
            Comparator::Lt,
            12.0,
            Scope::Always,
        );
        let mut m = Monitor::new(vec![spec]);
        for k in 0..50 {
            let v = if k == 10 { 13.0 } else { 8.0 };
            m.step(
                &VehicleState::at(Vec3::ZERO, Vec3::new(v, 0.0, 0.0), k as f64),
                &env,
            )
            .unwrap();
            if k >= 10 {
                assert!(m.statuses()[0].violated_ever);
            }
        }
        assert_eq!(m.verdict(), Verdict::Violated(vec!["T".into()]));
    }

    #[test]
    fn violation_outside_window_ignored() {
        let env = env_with_obstacle();
        let spec = simple_spec(
            Condition::Altitude,
            TemporalOp::G,
            Comparator::Gt,
            10.0,
            Scope::Window {
                start: 5.0,
                end: 10.0,
            },
        );
        let mut m = Monitor::new(vec![spec]);
        m.step(&VehicleState::at(Vec3::ZERO, Vec3::ZERO, 4.9), &env)
            .unwrap();
        m.step(
            &VehicleState::at(Vec3::new(0.0, 0.0, 11.0), Vec3::ZERO, 5.0),
            &env,
        )
        .unwrap();
        m.step(&VehicleState::at(Vec3::ZERO, Vec3::ZERO, 10.1), &env)
            .unwrap();
        assert!(m.verdict().is_compliant());
    }

    #[test]
    fn elapsed_f_bound_violates() {
        let env = Environment::corridor();
        let specs = SpecCatalog::quadcopter().instantiate(&env).unwrap();
        let mut m = Monitor::new(specs);
        // Hover at the start for the whole mission: every waypoint window elapses.
        for k in 0..200 {
            m.step(
                &VehicleState::at(
                    Vec3::new(0.0, 0.0, 12.0),
                    Vec3::new(6.0, 0.0, 0.0),
                    k as f64 * 0.1,
                ),
                &env,
            )
            .unwrap();
        }
        let v = m.verdict();
        assert!(v.violated().contains(&"S5".to_string()), "{v:?}");
    }

    #[test]
    fn catalogs_complete() {
        let env = Environment::corridor();
        let q = SpecCatalog::quadcopter();
        assert_eq!(q.specs.len(), 12);
        let specs = q.instantiate(&env).unwrap();
        // S5 expands into one specification per route waypoint after launch.
        assert_eq!(specs.len(), 11 + 4);
        let critical: Vec<_> = specs
            .iter()
            .filter(|s| s.critical)
            .map(|s| s.id.as_str())
            .collect();
        assert_eq!(critical, ["S1", "S2", "S12"]);
        let r = SpecCatalog::rover();
        assert_eq!(r.specs.len(), 7);
        r.instantiate(&env).unwrap();
    }

    #[test]
    fn catalog_round_trips_through_toml() {
        let q = SpecCatalog::quadcopter();
        let text = q.to_toml().unwrap();
        assert_eq!(SpecCatalog::from_toml(&text).unwrap(), q);
    }

    #[test]
    fn f_without_bound_rejected() {
        let mut q = SpecCatalog::quadcopter();
        q.specs[4].expand = None;
        assert!(q.validate().is_err());
    }
}
