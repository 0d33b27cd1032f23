//! Discrete-time vehicle models and the translation of recovery actions
//! into earth-frame setpoints.
//!
//! The quadcopter is a double integrator whose velocity tracks the setpoint
//! through a first-order lag. The rover is a planar unicycle. Both add a
//! bounded, zero-mean velocity disturbance that lumps wind, drag and
//! friction together.

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Vec3};

pub const INPUT_WIDTH: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Attitude {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Attitude {
    pub const fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self { roll, pitch, yaw }
    }

    pub fn is_finite(&self) -> bool {
        self.roll.is_finite() && self.pitch.is_finite() && self.yaw.is_finite()
    }

    pub fn wrapped(&self) -> Attitude {
        Attitude::new(
            wrap_angle(self.roll),
            wrap_angle(self.pitch),
            wrap_angle(self.yaw),
        )
    }
}

/// Physical state of the vehicle at one timestep.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
    pub attitude: Attitude,
    /// Body angular rates (roll, pitch, yaw) over the last step, rad/s.
    pub angular_rate: Vec3,
    pub time: f64,
}

impl VehicleState {
    pub fn at(position: Vec3, velocity: Vec3, time: f64) -> Self {
        Self {
            position,
            velocity,
            time,
            ..Default::default()
        }
    }

    /// The 12-element policy input: position, velocity, acceleration, attitude.
    pub fn to_input(&self) -> [f64; INPUT_WIDTH] {
        [
            self.position.x,
            self.position.y,
            self.position.z,
            self.velocity.x,
            self.velocity.y,
            self.velocity.z,
            self.acceleration.x,
            self.acceleration.y,
            self.acceleration.z,
            self.attitude.roll,
            self.attitude.pitch,
            self.attitude.yaw,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite()
            && self.velocity.is_finite()
            && self.acceleration.is_finite()
            && self.attitude.is_finite()
            && self.angular_rate.is_finite()
            && self.time.is_finite()
    }

    pub fn check_invariants(&self, profile: &VehicleProfile) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::InvalidInput("non-finite vehicle state".into()));
        }
        let a = self.attitude;
        for angle in [a.roll, a.pitch, a.yaw] {
            if !(angle > -PI && angle <= PI) {
                return Err(Error::InvalidInput(format!(
                    "attitude angle {angle} outside (-pi, pi]"
                )));
            }
        }
        if self.velocity.norm() > profile.max_speed_mps + 1e-9 {
            return Err(Error::InvalidInput(format!(
                "speed {} exceeds limit {}",
                self.velocity.norm(),
                profile.max_speed_mps
            )));
        }
        if profile.kind == VehicleKind::Rover
            && (self.position.z != 0.0
                || self.velocity.z != 0.0
                || self.acceleration.z != 0.0
                || a.roll != 0.0
                || a.pitch != 0.0)
        {
            return Err(Error::InvalidInput("rover state must be planar".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActuatorSetpoint {
    /// Earth-frame velocity setpoint, m/s.
    pub velocity: Vec3,
    /// Attitude setpoint, rad. `yaw` is the course of the velocity setpoint.
    pub attitude: Attitude,
}

impl ActuatorSetpoint {
    pub fn is_finite(&self) -> bool {
        self.velocity.is_finite() && self.attitude.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleKind {
    Quadcopter,
    Rover,
}

impl fmt::Display for VehicleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VehicleKind::Quadcopter => f.write_str("quadcopter"),
            VehicleKind::Rover => f.write_str("rover"),
        }
    }
}

/// Half-widths of the uniform velocity disturbance added every step, m/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProcessNoise {
    pub wind_mps: f64,
    pub drag_mps: f64,
    pub friction_mps: f64,
    /// Scale applied to the vertical component.
    pub vertical_scale: f64,
}

impl Default for ProcessNoise {
    fn default() -> Self {
        Self {
            wind_mps: 0.25,
            drag_mps: 0.05,
            friction_mps: 0.0,
            vertical_scale: 0.5,
        }
    }
}

impl ProcessNoise {
    pub fn none() -> Self {
        Self {
            wind_mps: 0.0,
            drag_mps: 0.0,
            friction_mps: 0.0,
            vertical_scale: 0.0,
        }
    }

    pub fn horizontal_half_width(&self) -> f64 {
        self.wind_mps + self.drag_mps + self.friction_mps
    }
}

/// One-sigma sensor noise per channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorNoise {
    pub gps_m: f64,
    pub optical_flow_px: f64,
    pub gyro_radps: f64,
    pub accel_mps2: f64,
    pub magnetometer_rad: f64,
    pub baro_m: f64,
    pub baro_climb_mps: f64,
}

impl Default for SensorNoise {
    fn default() -> Self {
        Self {
            gps_m: 0.3,
            optical_flow_px: 0.05,
            gyro_radps: 0.01,
            accel_mps2: 0.1,
            magnetometer_rad: 0.01,
            baro_m: 0.1,
            baro_climb_mps: 0.05,
        }
    }
}

impl SensorNoise {
    pub fn none() -> Self {
        Self {
            gps_m: 0.0,
            optical_flow_px: 0.0,
            gyro_radps: 0.0,
            accel_mps2: 0.0,
            magnetometer_rad: 0.0,
            baro_m: 0.0,
            baro_climb_mps: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleProfile {
    pub kind: VehicleKind,
    pub dt_s: f64,
    /// Movement resolution per body axis, m.
    pub resolution_m: Vec3,
    pub max_speed_mps: f64,
    /// First-order velocity lag time constant; 0 disables the lag.
    pub lag_s: f64,
    /// Rover heading rate limit, rad/s.
    pub max_yaw_rate_radps: f64,
    /// Quadcopter yaw follows the course of the setpoint when set.
    pub yaw_tracking: bool,
    /// Use the sign of the published ydot rotation instead of the standard rotation.
    pub appendix_c_literal: bool,
    /// Optical-flow scale, m/s per px/frame.
    pub flow_scale_mps_per_px: f64,
    pub process_noise: ProcessNoise,
    pub sensor_noise: SensorNoise,
}

impl Default for VehicleProfile {
    fn default() -> Self {
        Self::quadcopter()
    }
}

impl VehicleProfile {
    pub fn quadcopter() -> Self {
        Self {
            kind: VehicleKind::Quadcopter,
            dt_s: 0.1,
            resolution_m: Vec3::new(0.8, 0.8, 0.2),
            max_speed_mps: 12.0,
            lag_s: 0.3,
            max_yaw_rate_radps: 1.5,
            yaw_tracking: false,
            appendix_c_literal: false,
            flow_scale_mps_per_px: 1.0,
            process_noise: ProcessNoise::default(),
            sensor_noise: SensorNoise::default(),
        }
    }

    pub fn rover() -> Self {
        Self {
            kind: VehicleKind::Rover,
            resolution_m: Vec3::new(0.8, 0.8, 0.0),
            yaw_tracking: true,
            ..Self::quadcopter()
        }
    }

    pub fn noise_free(mut self) -> Self {
        self.process_noise = ProcessNoise::none();
        self.sensor_noise = SensorNoise::none();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_s > 0.0 && self.dt_s.is_finite()) {
            return Err(Error::Config(format!(
                "dt_s must be > 0, got {}",
                self.dt_s
            )));
        }
        let horizontal_ok = self.resolution_m.x > 0.0 && self.resolution_m.y > 0.0;
        let vertical_ok = self.kind == VehicleKind::Rover || self.resolution_m.z > 0.0;
        if !(horizontal_ok && vertical_ok) {
            return Err(Error::Config("movement resolutions must be > 0".into()));
        }
        if !(self.max_speed_mps > 0.0) || self.lag_s < 0.0 || self.flow_scale_mps_per_px <= 0.0 {
            return Err(Error::Config(
                "speed limit, lag and flow scale must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Fraction of the setpoint error removed per step.
    pub fn lag_gain(&self) -> f64 {
        if self.lag_s > 0.0 {
            (self.dt_s / self.lag_s).min(1.0)
        } else {
            1.0
        }
    }
}

/// The discrete recovery action set, in fixed tie-breaking order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RecoveryAction {
    #[serde(rename = "+x")]
    PosX,
    #[serde(rename = "-x")]
    NegX,
    #[serde(rename = "+y")]
    PosY,
    #[serde(rename = "-y")]
    NegY,
    #[serde(rename = "+z")]
    PosZ,
    #[serde(rename = "-z")]
    NegZ,
}

impl RecoveryAction {
    pub const ALL: [RecoveryAction; 6] = [
        RecoveryAction::PosX,
        RecoveryAction::NegX,
        RecoveryAction::PosY,
        RecoveryAction::NegY,
        RecoveryAction::PosZ,
        RecoveryAction::NegZ,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Unit vector of the action in the body frame.
    pub fn body_axis(self) -> Vec3 {
        match self {
            RecoveryAction::PosX => Vec3::new(1.0, 0.0, 0.0),
            RecoveryAction::NegX => Vec3::new(-1.0, 0.0, 0.0),
            RecoveryAction::PosY => Vec3::new(0.0, 1.0, 0.0),
            RecoveryAction::NegY => Vec3::new(0.0, -1.0, 0.0),
            RecoveryAction::PosZ => Vec3::new(0.0, 0.0, 1.0),
            RecoveryAction::NegZ => Vec3::new(0.0, 0.0, -1.0),
        }
    }

    pub fn is_vertical(self) -> bool {
        matches!(self, RecoveryAction::PosZ | RecoveryAction::NegZ)
    }

    /// Actions available to a vehicle kind.
    pub fn available(kind: VehicleKind) -> &'static [RecoveryAction] {
        match kind {
            VehicleKind::Quadcopter => &Self::ALL,
            VehicleKind::Rover => &Self::ALL[..4],
        }
    }
}

impl fmt::Display for RecoveryAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RecoveryAction::PosX => "+x",
            RecoveryAction::NegX => "-x",
            RecoveryAction::PosY => "+y",
            RecoveryAction::NegY => "-y",
            RecoveryAction::PosZ => "+z",
            RecoveryAction::NegZ => "-z",
        };
        f.write_str(s)
    }
}

/// Body-to-earth rotation of a horizontal body velocity.
///
/// The published second row reads `ydot = x' sin(psi) - y' cos(psi)`; the
/// standard rotation has `+`. `literal` selects the published sign.
pub fn body_to_earth(body: Vec3, yaw: f64, literal: bool) -> Vec3 {
    let (s, c) = yaw.sin_cos();
    let x = body.x * c - body.y * s;
    let y = if literal {
        body.x * s - body.y * c
    } else {
        body.x * s + body.y * c
    };
    Vec3::new(x, y, body.z)
}

fn clamped_asin(arg: f64) -> f64 {
    let arg = if arg.is_nan() {
        0.0
    } else {
        arg.clamp(-1.0, 1.0)
    };
    arg.asin()
}

/// Pitch and roll from a commanded acceleration using the published
/// arcsine expressions. Returns `(roll, pitch)`.
pub fn attitude_from_acceleration(acc: Vec3) -> (f64, f64) {
    let (ax2, ay2, az2) = (acc.x * acc.x, acc.y * acc.y, acc.z * acc.z);
    let pitch = clamped_asin((ay2 + az2) / ((ax2 + ay2).sqrt() + az2));
    let roll = clamped_asin((ax2 + az2) / acc.y);
    (roll, pitch)
}

/// Course angle of an earth-frame velocity; `fallback` when the velocity is zero.
pub fn course_of(velocity: Vec3, fallback: f64) -> f64 {
    if velocity.x == 0.0 && velocity.y == 0.0 {
        fallback
    } else {
        velocity.y.atan2(velocity.x)
    }
}

/// Builds an attitude-complete setpoint from an earth-frame velocity command.
pub fn setpoint_from_velocity(
    velocity: Vec3,
    state: &VehicleState,
    profile: &VehicleProfile,
) -> ActuatorSetpoint {
    let accel = (velocity - state.velocity) * (1.0 / profile.dt_s);
    let (roll, pitch) = attitude_from_acceleration(accel);
    let yaw = course_of(velocity, state.attitude.yaw);
    let (roll, pitch) = match profile.kind {
        VehicleKind::Quadcopter => (roll, pitch),
        VehicleKind::Rover => (0.0, 0.0),
    };
    ActuatorSetpoint {
        velocity,
        attitude: Attitude::new(roll, pitch, yaw),
    }
}

/// Translates a discrete action into an earth-frame setpoint.
///
/// A horizontal action commands one movement resolution per step along the
/// body axis, rotated by the current yaw, with zero vertical speed. A
/// vertical action commands one vertical resolution per step and keeps the
/// current horizontal velocity.
pub fn action_to_setpoint(
    action: RecoveryAction,
    state: &VehicleState,
    profile: &VehicleProfile,
) -> Result<ActuatorSetpoint> {
    if profile.kind == VehicleKind::Rover && action.is_vertical() {
        return Err(Error::UnsupportedAction {
            action: action.to_string(),
            kind: profile.kind.to_string(),
        });
    }
    let axis = action.body_axis();
    let body = Vec3::new(
        axis.x * profile.resolution_m.x,
        axis.y * profile.resolution_m.y,
        axis.z * profile.resolution_m.z,
    ) * (1.0 / profile.dt_s);
    // Vertical actions climb or descend while cruising forward.
    let velocity = if action.is_vertical() {
        let forward = Vec3::new(profile.resolution_m.x / profile.dt_s, 0.0, 0.0);
        let h = body_to_earth(forward, state.attitude.yaw, profile.appendix_c_literal);
        Vec3::new(h.x, h.y, body.z)
    } else {
        body_to_earth(body, state.attitude.yaw, profile.appendix_c_literal)
    };
    let setpoint = setpoint_from_velocity(velocity, state, profile);
    if !setpoint.is_finite() {
        return Err(Error::InvalidInput("non-finite setpoint".into()));
    }
    Ok(setpoint)
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, half_width: f64) -> f64 {
    if half_width > 0.0 {
        rng.random_range(-half_width..=half_width)
    } else {
        0.0
    }
}

fn clamp_speed(v: Vec3, max: f64) -> Vec3 {
    let n = v.norm();
    if n > max {
        v * (max / n)
    } else {
        v
    }
}

/// Advances the vehicle by one timestep.
///
/// Draws exactly three uniform samples from `rng` when noise is enabled, so
/// identical inputs and RNG state give bit-identical results.
pub fn step_dynamics<R: Rng + ?Sized>(
    state: &VehicleState,
    setpoint: &ActuatorSetpoint,
    profile: &VehicleProfile,
    rng: &mut R,
) -> Result<VehicleState> {
    if !setpoint.is_finite() {
        return Err(Error::InvalidInput("non-finite setpoint".into()));
    }
    if !state.is_finite() {
        return Err(Error::InvalidInput("non-finite state".into()));
    }
    let noise = &profile.process_noise;
    let h = noise.horizontal_half_width();
    let w = Vec3::new(
        uniform(rng, h),
        uniform(rng, h),
        uniform(rng, h * noise.vertical_scale),
    );
    match profile.kind {
        VehicleKind::Quadcopter => Ok(step_quadcopter(state, setpoint, profile, w)),
        VehicleKind::Rover => Ok(step_rover(state, setpoint, profile, w)),
    }
}

fn step_quadcopter(
    state: &VehicleState,
    sp: &ActuatorSetpoint,
    profile: &VehicleProfile,
    w: Vec3,
) -> VehicleState {
    let dt = profile.dt_s;
    let gain = profile.lag_gain();
    let target = clamp_speed(sp.velocity, profile.max_speed_mps);
    let mut velocity = clamp_speed(
        state.velocity + (target - state.velocity) * gain + w,
        profile.max_speed_mps,
    );
    let mut position = state.position + velocity * dt;
    if position.z < 0.0 {
        position.z = 0.0;
        velocity.z = velocity.z.max(0.0);
    }
    let acceleration = (velocity - state.velocity) * (1.0 / dt);

    let att = state.attitude;
    let yaw = if profile.yaw_tracking {
        wrap_angle(att.yaw + gain * wrap_angle(sp.attitude.yaw - att.yaw))
    } else {
        att.yaw
    };
    let attitude = Attitude::new(
        wrap_angle(att.roll + gain * wrap_angle(sp.attitude.roll - att.roll)),
        wrap_angle(att.pitch + gain * wrap_angle(sp.attitude.pitch - att.pitch)),
        yaw,
    );
    VehicleState {
        position,
        velocity,
        acceleration,
        angular_rate: angular_rate(&att, &attitude, dt),
        attitude,
        time: state.time + dt,
    }
}

fn step_rover(
    state: &VehicleState,
    sp: &ActuatorSetpoint,
    profile: &VehicleProfile,
    w: Vec3,
) -> VehicleState {
    let dt = profile.dt_s;
    let gain = profile.lag_gain();
    let heading = state.attitude.yaw;
    let target = Vec3::new(sp.velocity.x, sp.velocity.y, 0.0);

    // Reverse without turning around when the setpoint points behind.
    let (hs, hc) = heading.sin_cos();
    let ahead = target.x * hc + target.y * hs >= 0.0;
    let desired_heading = if target.norm_xy() == 0.0 {
        heading
    } else if ahead {
        target.y.atan2(target.x)
    } else {
        (-target.y).atan2(-target.x)
    };
    let max_turn = profile.max_yaw_rate_radps * dt;
    let turn = wrap_angle(desired_heading - heading).clamp(-max_turn, max_turn);
    let new_heading = wrap_angle(heading + turn);
    let (ns, nc) = new_heading.sin_cos();

    let speed = state.velocity.x * hc + state.velocity.y * hs;
    let desired_speed =
        (target.x * nc + target.y * ns).clamp(-profile.max_speed_mps, profile.max_speed_mps);
    let along = w.x * nc + w.y * ns;
    let new_speed = (speed + (desired_speed - speed) * gain + along)
        .clamp(-profile.max_speed_mps, profile.max_speed_mps);
    let velocity = Vec3::new(new_speed * nc, new_speed * ns, 0.0);
    let position = Vec3::new(
        state.position.x + velocity.x * dt,
        state.position.y + velocity.y * dt,
        0.0,
    );
    let acceleration = (velocity - state.velocity) * (1.0 / dt);
    let attitude = Attitude::new(0.0, 0.0, new_heading);
    VehicleState {
        position,
        velocity,
        acceleration,
        angular_rate: angular_rate(&state.attitude, &attitude, dt),
        attitude,
        time: state.time + dt,
    }
}

fn angular_rate(before: &Attitude, after: &Attitude, dt: f64) -> Vec3 {
    Vec3::new(
        wrap_angle(after.roll - before.roll) / dt,
        wrap_angle(after.pitch - before.pitch) / dt,
        wrap_angle(after.yaw - before.yaw) / dt,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn quiet() -> VehicleProfile {
        VehicleProfile::quadcopter().noise_free()
    }

    #[test]
    fn zero_setpoint_is_fixed_point() {
        let profile = quiet();
        let state = VehicleState::at(Vec3::new(1.0, 2.0, 15.0), Vec3::ZERO, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let next = step_dynamics(&state, &ActuatorSetpoint::default(), &profile, &mut rng).unwrap();
        assert_eq!(next.position, state.position);
        assert_eq!(next.velocity, Vec3::ZERO);
    }

    #[test]
    fn constant_velocity_without_lag_advances_exactly() {
        let mut profile = quiet();
        profile.lag_s = 0.0;
        let mut state = VehicleState::at(Vec3::new(0.0, 0.0, 15.0), Vec3::ZERO, 0.0);
        let sp = ActuatorSetpoint {
            velocity: Vec3::new(1.0, 0.0, 0.0),
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for k in 1..=10 {
            state = step_dynamics(&state, &sp, &profile, &mut rng).unwrap();
            assert!((state.position.x - 0.1 * k as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_setpoint_rejected() {
        let profile = quiet();
        let sp = ActuatorSetpoint {
            velocity: Vec3::new(f64::NAN, 0.0, 0.0),
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = step_dynamics(&VehicleState::default(), &sp, &profile, &mut rng);
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn identity_rotation_for_forward_action() {
        let mut profile = quiet();
        profile.resolution_m = Vec3::new(1.0, 1.0, 1.0);
        profile.dt_s = 1.0;
        let sp =
            action_to_setpoint(RecoveryAction::PosX, &VehicleState::default(), &profile).unwrap();
        assert_eq!(sp.velocity, Vec3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn quarter_turn_rotation_matches_closed_form() {
        for literal in [false, true] {
            let e = body_to_earth(Vec3::new(1.0, 0.0, 0.0), FRAC_PI_2, literal);
            assert!(e.x.abs() < 1e-15, "{literal}: {e:?}");
            assert!((e.y - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn literal_mode_flips_lateral_sign() {
        let body = Vec3::new(0.0, 1.0, 0.0);
        let std = body_to_earth(body, 0.0, false);
        let lit = body_to_earth(body, 0.0, true);
        assert_eq!(std.y, 1.0);
        assert_eq!(lit.y, -1.0);
    }

    #[test]
    fn course_of_axis_case() {
        assert!((course_of(Vec3::new(0.0, 1.0, 0.0), 0.0) - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn rover_rejects_vertical_actions() {
        let profile = VehicleProfile::rover();
        for action in [RecoveryAction::PosZ, RecoveryAction::NegZ] {
            let r = action_to_setpoint(action, &VehicleState::default(), &profile);
            assert!(matches!(r, Err(Error::UnsupportedAction { .. })));
        }
    }

    #[test]
    fn vertical_action_cruises_along_heading() {
        let profile = quiet();
        let state = VehicleState::at(Vec3::new(0.0, 0.0, 12.0), Vec3::new(8.0, 0.5, 0.0), 0.0);
        let sp = action_to_setpoint(RecoveryAction::PosZ, &state, &profile).unwrap();
        assert!((sp.velocity.x - profile.resolution_m.x / profile.dt_s).abs() < 1e-12);
        assert!(sp.velocity.y.abs() < 1e-12);
        assert!((sp.velocity.z - 2.0).abs() < 1e-12);
    }

    #[test]
    fn arcsine_arguments_are_clamped() {
        let (roll, pitch) = attitude_from_acceleration(Vec3::new(30.0, 0.0, 0.0));
        assert!((roll - FRAC_PI_2).abs() < 1e-12);
        assert_eq!(pitch, 0.0);
        let (roll, pitch) = attitude_from_acceleration(Vec3::ZERO);
        assert_eq!((roll, pitch), (0.0, 0.0));
    }

    #[test]
    fn rover_stays_planar() {
        let profile = VehicleProfile::rover();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut state = VehicleState::default();
        for k in 0..200 {
            let action = RecoveryAction::available(VehicleKind::Rover)[k % 4];
            let sp = action_to_setpoint(action, &state, &profile).unwrap();
            state = step_dynamics(&state, &sp, &profile, &mut rng).unwrap();
            state.check_invariants(&profile).unwrap();
        }
    }

    proptest! {
        #[test]
        fn standard_rotation_preserves_speed(yaw in -10.0f64..10.0, bx in -20.0f64..20.0, by in -20.0f64..20.0) {
            let e = body_to_earth(Vec3::new(bx, by, 0.0), yaw, false);
            prop_assert!((e.norm_xy() - bx.hypot(by)).abs() < 1e-9);
        }

        #[test]
        fn every_action_gives_finite_setpoint(
            vx in -12.0f64..12.0, vy in -12.0f64..12.0, yaw in -3.14f64..3.14, idx in 0usize..6
        ) {
            let profile = VehicleProfile::quadcopter();
            let v = clamp_speed(Vec3::new(vx, vy, 0.0), 11.9);
            let mut state = VehicleState::at(Vec3::new(0.0, 0.0, 10.0), v, 0.0);
            state.attitude.yaw = yaw;
            let sp = action_to_setpoint(RecoveryAction::ALL[idx], &state, &profile).unwrap();
            prop_assert!(sp.is_finite());
        }

        #[test]
        fn dynamics_deterministic_and_invariant(seed in 0u64..1000, idx in 0usize..6, steps in 1usize..40) {
            let profile = VehicleProfile::quadcopter();
            let run = || {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut s = VehicleState::at(Vec3::new(0.0, 0.0, 12.0), Vec3::new(8.0, 0.0, 0.0), 0.0);
                for k in 0..steps {
                    let a = RecoveryAction::ALL[(idx + k) % 6];
                    let sp = action_to_setpoint(a, &s, &profile).unwrap();
                    s = step_dynamics(&s, &sp, &profile, &mut rng).unwrap();
                }
                s
            };
            let a = run();
            let b = run();
            prop_assert_eq!(a, b);
            prop_assert!(a.check_invariants(&profile).is_ok());
        }
    }
}
