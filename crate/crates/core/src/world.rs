//! Mission plans, obstacle worlds and procedural environment presets.

use std::collections::VecDeque;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Distances are capped so that records stay finite when there are no obstacles.
pub const FAR_DISTANCE_M: f64 = 1_000.0;

/// Vertical cylinder standing on the ground.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub x: f64,
    pub y: f64,
    pub radius_m: f64,
    pub height_m: f64,
}

impl Obstacle {
    pub fn new(x: f64, y: f64, radius_m: f64, height_m: f64) -> Self {
        Self {
            x,
            y,
            radius_m,
            height_m,
        }
    }

    /// Distance from `p` to the obstacle surface; negative inside.
    pub fn distance(&self, p: Vec3) -> f64 {
        let horizontal = (p.x - self.x).hypot(p.y - self.y) - self.radius_m;
        if p.z <= self.height_m {
            horizontal
        } else {
            horizontal.max(0.0).hypot(p.z - self.height_m)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geofence {
    /// Fence centre; `z` is the reference altitude for the vertical limit.
    pub center: Vec3,
    pub horizontal_m: f64,
    pub vertical_m: f64,
}

impl Geofence {
    /// Remaining horizontal and vertical clearance to the fence.
    pub fn margins(&self, p: Vec3) -> (f64, f64) {
        let h = self.horizontal_m - (p.x - self.center.x).hypot(p.y - self.center.y);
        let v = self.vertical_m - (p.z - self.center.z).abs();
        (h, v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Loiter {
    pub center: Vec3,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Takeoff,
    Cruise,
    Landing,
    Loiter,
}

/// Waypoint route flown at a constant planned speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionPlan {
    /// Route vertices; the first is the launch point.
    pub waypoints: Vec<Vec3>,
    pub cruise_speed_mps: f64,
    #[serde(default)]
    pub loiter: Option<Loiter>,
}

impl MissionPlan {
    pub fn new(waypoints: Vec<Vec3>, cruise_speed_mps: f64) -> Result<Self> {
        let plan = Self {
            waypoints,
            cruise_speed_mps,
            loiter: None,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.waypoints.len() < 2 {
            return Err(Error::Config(
                "a mission needs at least two waypoints".into(),
            ));
        }
        if !(self.cruise_speed_mps > 0.0) {
            return Err(Error::Config("cruise speed must be > 0".into()));
        }
        if self.waypoints.iter().any(|w| !w.is_finite()) {
            return Err(Error::Config("non-finite waypoint".into()));
        }
        if self
            .waypoints
            .windows(2)
            .any(|w| (w[1] - w[0]).norm() == 0.0)
        {
            return Err(Error::Config("repeated waypoint".into()));
        }
        Ok(())
    }

    pub fn start(&self) -> Vec3 {
        self.waypoints[0]
    }

    pub fn goal(&self) -> Vec3 {
        *self.waypoints.last().expect("validated plan")
    }

    /// Planned arrival time at every waypoint, starting with 0 for the launch point.
    pub fn arrival_times(&self) -> Vec<f64> {
        let mut t = 0.0;
        let mut out = vec![0.0];
        for w in self.waypoints.windows(2) {
            t += (w[1] - w[0]).norm() / self.cruise_speed_mps;
            out.push(t);
        }
        out
    }

    pub fn planned_duration(&self) -> f64 {
        *self.arrival_times().last().expect("validated plan")
    }

    pub fn length(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| (w[1] - w[0]).norm())
            .sum()
    }

    fn segment_at(&self, t: f64) -> (usize, f64) {
        let times = self.arrival_times();
        let last = self.waypoints.len() - 2;
        for i in 0..=last {
            if t <= times[i + 1] || i == last {
                let span = times[i + 1] - times[i];
                let s = ((t - times[i]) / span).clamp(0.0, 1.0);
                return (i, s);
            }
        }
        unreachable!()
    }

    /// Planned position at time `t`; holds the goal after the planned end.
    pub fn reference_position(&self, t: f64) -> Vec3 {
        let (i, s) = self.segment_at(t.max(0.0));
        let a = self.waypoints[i];
        let b = self.waypoints[i + 1];
        a + (b - a) * s
    }

    /// Planned velocity at time `t`; the final segment's velocity is held
    /// after the planned end so that reference tracking does not brake.
    pub fn reference_velocity(&self, t: f64) -> Vec3 {
        let (i, _) = self.segment_at(t.max(0.0));
        let d = self.waypoints[i + 1] - self.waypoints[i];
        d * (self.cruise_speed_mps / d.norm())
    }

    /// Shortest distance from `p` to the route polyline.
    pub fn cross_track(&self, p: Vec3) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| {
                let d = w[1] - w[0];
                let s = ((p - w[0]).dot(&d) / d.dot(&d)).clamp(0.0, 1.0);
                (p - (w[0] + d * s)).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Arc-length position of the closest point on the route.
    pub fn progress(&self, p: Vec3) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        let mut acc = 0.0;
        for w in self.waypoints.windows(2) {
            let d = w[1] - w[0];
            let len = d.norm();
            let s = ((p - w[0]).dot(&d) / d.dot(&d)).clamp(0.0, 1.0);
            let dist = (p - (w[0] + d * s)).norm();
            if dist < best.0 {
                best = (dist, acc + s * len);
            }
            acc += len;
        }
        best.1
    }

    /// Cruise altitude: the highest waypoint altitude.
    pub fn cruise_altitude(&self) -> f64 {
        self.waypoints
            .iter()
            .map(|w| w.z)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Time span of the takeoff leg, if the route starts on the ground with a climb.
    pub fn takeoff_window(&self) -> Option<(f64, f64)> {
        let (a, b) = (self.waypoints[0], self.waypoints[1]);
        (a.z <= 0.5 && b.z > a.z).then(|| (0.0, self.arrival_times()[1]))
    }

    /// Time span of the landing leg, if the route ends on the ground with a descent.
    pub fn landing_window(&self) -> Option<(f64, f64)> {
        let n = self.waypoints.len();
        let (a, b) = (self.waypoints[n - 2], self.waypoints[n - 1]);
        let times = self.arrival_times();
        (b.z <= 0.5 && a.z > b.z).then(|| (times[n - 2], times[n - 1]))
    }

    pub fn phase_at(&self, t: f64) -> Phase {
        if let Some(l) = self.loiter {
            if t >= l.start_s && t <= l.end_s {
                return Phase::Loiter;
            }
        }
        if let Some((a, b)) = self.takeoff_window() {
            if t >= a && t < b {
                return Phase::Takeoff;
            }
        }
        if let Some((a, _)) = self.landing_window() {
            if t >= a {
                return Phase::Landing;
            }
        }
        Phase::Cruise
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvironmentPreset {
    Open,
    Suburban,
    Urban,
    HighRise,
    Indoor,
    /// Straight route past three staggered obstacles.
    Corridor,
}

impl EnvironmentPreset {
    pub const ALL: [EnvironmentPreset; 6] = [
        EnvironmentPreset::Open,
        EnvironmentPreset::Suburban,
        EnvironmentPreset::Urban,
        EnvironmentPreset::HighRise,
        EnvironmentPreset::Indoor,
        EnvironmentPreset::Corridor,
    ];

    /// (obstacles per 100 m of route, radius range, height range, lateral clearance beyond the radius)
    fn clutter(self) -> (f64, (f64, f64), (f64, f64), f64) {
        match self {
            EnvironmentPreset::Open => (0.0, (1.0, 1.0), (5.0, 5.0), 8.0),
            EnvironmentPreset::Suburban => (4.0, (1.0, 3.0), (6.0, 12.0), 8.0),
            EnvironmentPreset::Urban => (8.0, (2.0, 5.0), (15.0, 40.0), 7.5),
            EnvironmentPreset::HighRise => (6.0, (4.0, 8.0), (40.0, 120.0), 7.5),
            EnvironmentPreset::Indoor => (10.0, (0.3, 0.8), (3.0, 4.0), 7.0),
            EnvironmentPreset::Corridor => (3.75, (1.0, 1.0), (30.0, 30.0), 7.5),
        }
    }
}

impl fmt::Display for EnvironmentPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EnvironmentPreset::Open => "open",
            EnvironmentPreset::Suburban => "suburban",
            EnvironmentPreset::Urban => "urban",
            EnvironmentPreset::HighRise => "high_rise",
            EnvironmentPreset::Indoor => "indoor",
            EnvironmentPreset::Corridor => "corridor",
        };
        f.write_str(s)
    }
}

/// Everything outside the vehicle that the monitor and harness need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub plan: MissionPlan,
    pub obstacles: Vec<Obstacle>,
    pub geofence: Geofence,
}

impl Environment {
    /// Builds an environment with a fence centred on the route midpoint at cruise altitude.
    pub fn new(
        plan: MissionPlan,
        obstacles: Vec<Obstacle>,
        horizontal_m: f64,
        vertical_m: f64,
    ) -> Self {
        let (a, b) = (plan.start(), plan.goal());
        let center = Vec3::new((a.x + b.x) / 2.0, (a.y + b.y) / 2.0, plan.cruise_altitude());
        Self {
            plan,
            obstacles,
            geofence: Geofence {
                center,
                horizontal_m,
                vertical_m,
            },
        }
    }

    pub fn obstacle_distance(&self, p: Vec3) -> f64 {
        self.obstacles
            .iter()
            .map(|o| o.distance(p))
            .fold(FAR_DISTANCE_M, f64::min)
    }

    pub fn collides(&self, p: Vec3) -> bool {
        self.obstacles.iter().any(|o| o.distance(p) <= 0.0)
    }

    /// The 3-obstacle corridor: 80 m east at 15 m altitude and 8 m/s, with
    /// obstacles staggered on alternating sides of the route.
    pub fn corridor() -> Self {
        Self::corridor_with(7.5)
    }

    /// Corridor variant with a chosen lateral gap between the route and the
    /// obstacle surfaces.
    pub fn corridor_with(surface_gap_m: f64) -> Self {
        let waypoints = (0..=4)
            .map(|i| Vec3::new(20.0 * i as f64, 0.0, 15.0))
            .collect();
        let plan = MissionPlan::new(waypoints, 8.0).expect("static corridor plan");
        let offset = surface_gap_m + 1.0;
        let obstacles = vec![
            Obstacle::new(25.0, offset, 1.0, 30.0),
            Obstacle::new(45.0, -offset, 1.0, 30.0),
            Obstacle::new(65.0, offset, 1.0, 30.0),
        ];
        Self::new(plan, obstacles, 50.0, 10.0)
    }

    /// Procedural obstacle field along `plan`, deterministic in `seed`.
    pub fn procedural(preset: EnvironmentPreset, plan: MissionPlan, seed: u64) -> Self {
        if preset == EnvironmentPreset::Corridor {
            let mut env = Self::corridor();
            env.plan = plan;
            return env;
        }
        let (density, radius, height, gap) = preset.clutter();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let length = plan.length();
        let count = (density * length / 100.0).round() as usize;
        let mut obstacles = Vec::with_capacity(count);
        for k in 0..count {
            let along = length * (k as f64 + 0.5) / count as f64;
            let (base, dir) = point_at_arc(&plan, along);
            let r = sample(&mut rng, radius);
            let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let lateral = side * (gap + r + rng.random_range(0.0..4.0));
            let normal = Vec3::new(-dir.y, dir.x, 0.0);
            let c = base + normal * lateral;
            obstacles.push(Obstacle::new(c.x, c.y, r, sample(&mut rng, height)));
        }
        Self::new(plan, obstacles, 50.0, 10.0)
    }

    /// Coarse grid search for a route from start to goal that keeps
    /// `clearance_m` from every obstacle, stays `fence_margin_m` inside the
    /// horizontal fence and within `corridor_m` of the planned route.
    pub fn validate_reachable(
        &self,
        clearance_m: f64,
        fence_margin_m: f64,
        corridor_m: f64,
    ) -> Result<()> {
        const CELL: f64 = 1.0;
        let z = self.plan.cruise_altitude();
        let pts = &self.plan.waypoints;
        let pad = corridor_m + 2.0;
        let min_x = pts.iter().map(|p| p.x).fold(f64::INFINITY, f64::min) - pad;
        let min_y = pts.iter().map(|p| p.y).fold(f64::INFINITY, f64::min) - pad;
        let max_x = pts.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max) + pad;
        let max_y = pts.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max) + pad;
        let nx = ((max_x - min_x) / CELL).ceil() as usize + 1;
        let ny = ((max_y - min_y) / CELL).ceil() as usize + 1;
        let cell_point =
            |i: usize, j: usize| Vec3::new(min_x + i as f64 * CELL, min_y + j as f64 * CELL, z);
        let free = |p: Vec3| {
            self.obstacle_distance(p) > clearance_m
                && self.geofence.margins(p).0 > fence_margin_m
                && self.plan.cross_track(p) < corridor_m
        };
        let to_cell = |p: Vec3| {
            (
                (((p.x - min_x) / CELL).round() as usize).min(nx - 1),
                (((p.y - min_y) / CELL).round() as usize).min(ny - 1),
            )
        };
        let start = to_cell(self.plan.start());
        let goal = to_cell(self.plan.goal());
        if !free(cell_point(start.0, start.1)) || !free(cell_point(goal.0, goal.1)) {
            return Err(Error::Config("start or goal violates clearance".into()));
        }
        let mut seen = vec![false; nx * ny];
        let mut queue = VecDeque::from([start]);
        seen[start.1 * nx + start.0] = true;
        while let Some((i, j)) = queue.pop_front() {
            if (i, j) == goal {
                return Ok(());
            }
            let neighbours = [
                (i.wrapping_sub(1), j),
                (i + 1, j),
                (i, j.wrapping_sub(1)),
                (i, j + 1),
            ];
            for (a, b) in neighbours {
                if a >= nx || b >= ny || seen[b * nx + a] {
                    continue;
                }
                seen[b * nx + a] = true;
                if free(cell_point(a, b)) {
                    queue.push_back((a, b));
                }
            }
        }
        Err(Error::Config(
            "no specification-compliant path between start and goal".into(),
        ))
    }
}

fn sample<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn point_at_arc(plan: &MissionPlan, along: f64) -> (Vec3, Vec3) {
    let mut acc = 0.0;
    for w in plan.waypoints.windows(2) {
        let d = w[1] - w[0];
        let len = d.norm();
        if along <= acc + len {
            let dir = d * (1.0 / len);
            return (w[0] + dir * (along - acc), dir);
        }
        acc += len;
    }
    let n = plan.waypoints.len();
    let d = plan.waypoints[n - 1] - plan.waypoints[n - 2];
    (plan.waypoints[n - 1], d * (1.0 / d.norm()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn obstacle_distance_to_surface() {
        let env = Environment::new(
            MissionPlan::new(vec![Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0)], 1.0).unwrap(),
            vec![Obstacle::new(10.0, 0.0, 0.0, 10.0)],
            50.0,
            10.0,
        );
        assert_eq!(env.obstacle_distance(Vec3::ZERO), 10.0);
    }

    #[test]
    fn reference_follows_schedule() {
        let env = Environment::corridor();
        let plan = &env.plan;
        assert_eq!(plan.planned_duration(), 10.0);
        assert_eq!(plan.reference_position(5.0), Vec3::new(40.0, 0.0, 15.0));
        assert_eq!(plan.reference_position(50.0), plan.goal());
        assert_eq!(plan.reference_velocity(3.0), Vec3::new(8.0, 0.0, 0.0));
    }

    #[test]
    fn corridor_is_reachable() {
        let env = Environment::corridor();
        env.validate_reachable(5.0, 1.0, 10.0).unwrap();
    }

    #[test]
    fn blocked_route_rejected() {
        let mut env = Environment::corridor();
        env.obstacles.push(Obstacle::new(40.0, 0.0, 12.0, 30.0));
        assert!(env.validate_reachable(5.0, 1.0, 10.0).is_err());
    }

    #[test]
    fn presets_are_deterministic_and_reachable() {
        let plan = Environment::corridor().plan;
        for preset in EnvironmentPreset::ALL {
            let a = Environment::procedural(preset, plan.clone(), 7);
            let b = Environment::procedural(preset, plan.clone(), 7);
            assert_eq!(a, b);
            a.validate_reachable(5.0, 1.0, 10.0).unwrap();
        }
    }

    #[test]
    fn phases_from_route_shape() {
        let plan = MissionPlan::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(0.0, 0.0, 12.0),
                Vec3::new(40.0, 0.0, 12.0),
                Vec3::new(40.0, 0.0, 0.0),
            ],
            4.0,
        )
        .unwrap();
        assert_eq!(plan.phase_at(1.0), Phase::Takeoff);
        assert_eq!(plan.phase_at(5.0), Phase::Cruise);
        assert_eq!(plan.phase_at(14.0), Phase::Landing);
    }
}
