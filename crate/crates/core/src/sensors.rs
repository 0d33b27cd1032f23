//! Sensor channels, measurement sampling and attack injection.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Vec3};
use crate::vehicle::{SensorNoise, VehicleProfile, VehicleState};

/// Altitude change per kPa of static pressure near sea level.
pub const METERS_PER_KPA: f64 = 83.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sensor {
    Gps,
    OpticalFlow,
    Gyroscope,
    Accelerometer,
    Magnetometer,
    Barometer,
}

impl Sensor {
    pub const ALL: [Sensor; 6] = [
        Sensor::Gps,
        Sensor::OpticalFlow,
        Sensor::Gyroscope,
        Sensor::Accelerometer,
        Sensor::Magnetometer,
        Sensor::Barometer,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Sensor> {
        Self::ALL.get(index).copied()
    }

    /// Allowed attack magnitude range in the channel's attack units.
    pub fn bias_range(self) -> (f64, f64) {
        match self {
            Sensor::Gps => (1.0, 50.0),
            Sensor::OpticalFlow => (1.0, 7.07),
            Sensor::Gyroscope => (0.5, 9.47),
            Sensor::Accelerometer => (0.5, 6.2),
            Sensor::Magnetometer => (90.0, 180.0),
            Sensor::Barometer => (0.01, 0.1),
        }
    }

    pub fn bias_unit(self) -> &'static str {
        match self {
            Sensor::Gps => "m",
            Sensor::OpticalFlow => "px/frame",
            Sensor::Gyroscope => "rad",
            Sensor::Accelerometer => "m/s^2",
            Sensor::Magnetometer => "deg",
            Sensor::Barometer => "kPa",
        }
    }

    /// Whether the channel is a scalar, in which case only the sign of the
    /// bias direction is used.
    pub fn is_scalar(self) -> bool {
        matches!(self, Sensor::Magnetometer | Sensor::Barometer)
    }

    pub fn name(self) -> &'static str {
        match self {
            Sensor::Gps => "gps",
            Sensor::OpticalFlow => "optical_flow",
            Sensor::Gyroscope => "gyroscope",
            Sensor::Accelerometer => "accelerometer",
            Sensor::Magnetometer => "magnetometer",
            Sensor::Barometer => "barometer",
        }
    }

    /// One-sigma measurement noise of the channel in its measurement units.
    pub fn noise_sigma(self, noise: &SensorNoise) -> f64 {
        match self {
            Sensor::Gps => noise.gps_m,
            Sensor::OpticalFlow => noise.optical_flow_px,
            Sensor::Gyroscope => noise.gyro_radps,
            Sensor::Accelerometer => noise.accel_mps2,
            Sensor::Magnetometer => noise.magnetometer_rad,
            Sensor::Barometer => noise.baro_m,
        }
    }
}

impl fmt::Display for Sensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Sensor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Sensor::ALL
            .into_iter()
            .find(|sensor| sensor.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown sensor `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasPattern {
    Constant,
    RampUp,
    RampDown,
}

impl BiasPattern {
    pub const ALL: [BiasPattern; 3] = [
        BiasPattern::Constant,
        BiasPattern::RampUp,
        BiasPattern::RampDown,
    ];

    /// Fraction of the full magnitude applied at elapsed fraction `s` of the window.
    pub fn profile(self, s: f64) -> f64 {
        match self {
            BiasPattern::Constant => 1.0,
            BiasPattern::RampUp => s,
            BiasPattern::RampDown => 1.0 - s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackClass {
    Overt,
    Stealthy,
}

/// Axis and sign the bias is applied along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BiasDirection {
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

impl BiasDirection {
    pub const ALL: [BiasDirection; 6] = [
        BiasDirection::PosX,
        BiasDirection::NegX,
        BiasDirection::PosY,
        BiasDirection::NegY,
        BiasDirection::PosZ,
        BiasDirection::NegZ,
    ];

    pub fn axis(self) -> usize {
        match self {
            BiasDirection::PosX | BiasDirection::NegX => 0,
            BiasDirection::PosY | BiasDirection::NegY => 1,
            BiasDirection::PosZ | BiasDirection::NegZ => 2,
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            BiasDirection::PosX | BiasDirection::PosY | BiasDirection::PosZ => 1.0,
            _ => -1.0,
        }
    }

    pub fn unit(self) -> Vec3 {
        let mut v = Vec3::ZERO;
        v.set(self.axis(), self.sign());
        v
    }

    /// Directions that are meaningful for a sensor.
    pub fn allowed(sensor: Sensor) -> &'static [BiasDirection] {
        match sensor {
            Sensor::OpticalFlow => &Self::ALL[..4],
            Sensor::Magnetometer | Sensor::Barometer => &[BiasDirection::PosZ, BiasDirection::NegZ],
            _ => &Self::ALL,
        }
    }
}

/// A single-sensor physical attack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackScript {
    pub sensor: Sensor,
    pub pattern: BiasPattern,
    /// Bias magnitude in the sensor's attack units (see [`Sensor::bias_unit`]).
    pub magnitude: f64,
    pub start_s: f64,
    pub duration_s: f64,
    pub class: AttackClass,
    pub direction: BiasDirection,
}

impl AttackScript {
    pub fn end_s(&self) -> f64 {
        self.start_s + self.duration_s
    }

    pub fn is_active(&self, t: f64) -> bool {
        t >= self.start_s && t <= self.end_s()
    }

    /// Elapsed fraction of the window at `t`, clamped to [0, 1].
    pub fn elapsed_fraction(&self, t: f64) -> f64 {
        ((t - self.start_s) / self.duration_s).clamp(0.0, 1.0)
    }

    /// Scalar bias b_t in attack units; zero outside the window.
    pub fn bias_at(&self, t: f64) -> f64 {
        if !self.is_active(t) {
            return 0.0;
        }
        self.magnitude * self.pattern.profile(self.elapsed_fraction(t))
    }

    /// Checks range, window and direction invariants.
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.sensor.bias_range();
        if !(self.magnitude >= lo && self.magnitude <= hi) {
            return Err(Error::InvalidScript(format!(
                "{} magnitude {} {} outside [{lo}, {hi}]",
                self.sensor,
                self.magnitude,
                self.sensor.bias_unit()
            )));
        }
        if !(self.start_s >= 0.0 && self.start_s.is_finite()) {
            return Err(Error::InvalidScript(format!(
                "start time {} must be >= 0",
                self.start_s
            )));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::InvalidScript(format!(
                "duration {} must be > 0",
                self.duration_s
            )));
        }
        if !BiasDirection::allowed(self.sensor).contains(&self.direction) {
            return Err(Error::InvalidScript(format!(
                "direction {:?} not applicable to {}",
                self.direction, self.sensor
            )));
        }
        Ok(())
    }

    /// Perturbation added to the target channel at time `t`, in measurement
    /// units. Gyroscope biases are rate offsets whose integral over the
    /// window equals the scripted attitude magnitude.
    pub fn channel_offset(&self, t: f64) -> f64 {
        if !self.is_active(t) {
            return 0.0;
        }
        let sign = self.direction.sign();
        match self.sensor {
            Sensor::Gyroscope => {
                let s = self.elapsed_fraction(t);
                let rate = match self.pattern {
                    BiasPattern::Constant => self.magnitude / self.duration_s,
                    BiasPattern::RampUp => 2.0 * self.magnitude * s / self.duration_s,
                    BiasPattern::RampDown => 2.0 * self.magnitude * (1.0 - s) / self.duration_s,
                };
                sign * rate
            }
            Sensor::Magnetometer => sign * self.bias_at(t).to_radians(),
            // Higher pressure reads as lower altitude.
            Sensor::Barometer => -sign * self.bias_at(t) * METERS_PER_KPA,
            _ => sign * self.bias_at(t),
        }
    }

    /// Largest change of the channel offset between consecutive samples
    /// inside the window, excluding the onset and the removal at the end.
    pub fn max_step_increment(&self, dt: f64) -> f64 {
        let steps = (self.duration_s / dt).floor() as usize;
        let mut worst: f64 = 0.0;
        let mut prev = self.channel_offset(self.start_s);
        for k in 1..=steps {
            let t = self.start_s + k as f64 * dt;
            let cur = self.channel_offset(t);
            worst = worst.max((cur - prev).abs());
            prev = cur;
        }
        worst
    }

    /// Channel offset at the first sample of the window, plus one step for
    /// patterns that start at zero.
    pub fn onset_offset(&self, dt: f64) -> f64 {
        self.channel_offset(self.start_s).abs().max(
            self.channel_offset((self.start_s + dt).min(self.end_s()))
                .abs(),
        )
    }

    /// Checks the overt/stealthy class against a detector threshold given in
    /// measurement units for the target channel.
    pub fn validate_class(&self, threshold: f64, dt: f64) -> Result<()> {
        match self.class {
            AttackClass::Stealthy => {
                if self.pattern == BiasPattern::Constant {
                    return Err(Error::InvalidScript(
                        "stealthy attacks must use a ramp pattern".into(),
                    ));
                }
                let first = self.channel_offset(self.start_s).abs();
                let inc = self.max_step_increment(dt).max(first);
                if inc >= threshold {
                    return Err(Error::InvalidScript(format!(
                        "stealthy per-step increment {inc:.4} not below detector threshold {threshold:.4}"
                    )));
                }
            }
            AttackClass::Overt => {
                let onset = self.onset_offset(dt);
                if onset < threshold {
                    return Err(Error::InvalidScript(format!(
                        "overt onset bias {onset:.4} below detector threshold {threshold:.4}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One set of sensor measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub time: f64,
    pub gps: Vec3,
    /// Horizontal ground-speed flow, px/frame.
    pub optical_flow: [f64; 2],
    /// Roll, pitch and yaw rates, rad/s.
    pub gyro: Vec3,
    pub accel: Vec3,
    pub magnetometer: f64,
    pub baro_altitude: f64,
    pub baro_climb: f64,
    /// False for channels isolated by diagnosis.
    pub valid: [bool; 6],
}

impl Default for SensorFrame {
    fn default() -> Self {
        Self {
            time: 0.0,
            gps: Vec3::ZERO,
            optical_flow: [0.0; 2],
            gyro: Vec3::ZERO,
            accel: Vec3::ZERO,
            magnetometer: 0.0,
            baro_altitude: 0.0,
            baro_climb: 0.0,
            valid: [true; 6],
        }
    }
}

impl SensorFrame {
    pub fn is_finite(&self) -> bool {
        self.gps.is_finite()
            && self.optical_flow.iter().all(|v| v.is_finite())
            && self.gyro.is_finite()
            && self.accel.is_finite()
            && self.magnetometer.is_finite()
            && self.baro_altitude.is_finite()
            && self.baro_climb.is_finite()
    }

    /// Values of one sensor's channel as a flat list.
    pub fn channel(&self, sensor: Sensor) -> Vec<f64> {
        match sensor {
            Sensor::Gps => self.gps.to_array().to_vec(),
            Sensor::OpticalFlow => self.optical_flow.to_vec(),
            Sensor::Gyroscope => self.gyro.to_array().to_vec(),
            Sensor::Accelerometer => self.accel.to_array().to_vec(),
            Sensor::Magnetometer => vec![self.magnetometer],
            Sensor::Barometer => vec![self.baro_altitude],
        }
    }

    pub fn is_valid(&self, sensor: Sensor) -> bool {
        self.valid[sensor.index()]
    }
}

fn noisy<R: Rng + ?Sized>(rng: &mut R, value: f64, sigma: f64) -> f64 {
    if sigma > 0.0 {
        // Uniform noise with the requested standard deviation.
        let half = sigma * 3f64.sqrt();
        value + rng.random_range(-half..=half)
    } else {
        value
    }
}

/// Noise-free projection of a state onto the sensor channels.
pub fn ideal_frame(state: &VehicleState, profile: &VehicleProfile) -> SensorFrame {
    let scale = profile.flow_scale_mps_per_px;
    SensorFrame {
        time: state.time,
        gps: state.position,
        optical_flow: [state.velocity.x / scale, state.velocity.y / scale],
        gyro: state.angular_rate,
        accel: state.acceleration,
        magnetometer: state.attitude.yaw,
        baro_altitude: state.position.z,
        baro_climb: state.velocity.z,
        valid: [true; 6],
    }
}

/// Samples all channels with bounded zero-mean noise. Draws a fixed number
/// of values from `rng` when noise is enabled.
pub fn sample_sensors<R: Rng + ?Sized>(
    state: &VehicleState,
    profile: &VehicleProfile,
    rng: &mut R,
) -> SensorFrame {
    let n = &profile.sensor_noise;
    let mut f = ideal_frame(state, profile);
    f.gps = Vec3::new(
        noisy(rng, f.gps.x, n.gps_m),
        noisy(rng, f.gps.y, n.gps_m),
        noisy(rng, f.gps.z, n.gps_m),
    );
    f.optical_flow = [
        noisy(rng, f.optical_flow[0], n.optical_flow_px),
        noisy(rng, f.optical_flow[1], n.optical_flow_px),
    ];
    f.gyro = Vec3::new(
        noisy(rng, f.gyro.x, n.gyro_radps),
        noisy(rng, f.gyro.y, n.gyro_radps),
        noisy(rng, f.gyro.z, n.gyro_radps),
    );
    f.accel = Vec3::new(
        noisy(rng, f.accel.x, n.accel_mps2),
        noisy(rng, f.accel.y, n.accel_mps2),
        noisy(rng, f.accel.z, n.accel_mps2),
    );
    f.magnetometer = wrap_angle(noisy(rng, f.magnetometer, n.magnetometer_rad));
    f.baro_altitude = noisy(rng, f.baro_altitude, n.baro_m);
    f.baro_climb = noisy(rng, f.baro_climb, n.baro_climb_mps);
    f
}

/// Applies the script's bias to its target channel when `t` is inside the
/// attack window; returns the frame unchanged otherwise.
pub fn inject_attack(frame: &SensorFrame, script: &AttackScript, t: f64) -> Result<SensorFrame> {
    script.validate()?;
    let mut out = *frame;
    if !script.is_active(t) {
        return Ok(out);
    }
    let offset = script.channel_offset(t);
    let axis = script.direction.axis();
    match script.sensor {
        Sensor::Gps => out.gps.set(axis, out.gps.get(axis) + offset),
        Sensor::OpticalFlow => out.optical_flow[axis] += offset,
        Sensor::Gyroscope => out.gyro.set(axis, out.gyro.get(axis) + offset),
        Sensor::Accelerometer => out.accel.set(axis, out.accel.get(axis) + offset),
        Sensor::Magnetometer => out.magnetometer = wrap_angle(out.magnetometer + offset),
        Sensor::Barometer => out.baro_altitude += offset,
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehicle::Attitude;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_4;

    fn gps_script(pattern: BiasPattern, magnitude: f64) -> AttackScript {
        AttackScript {
            sensor: Sensor::Gps,
            pattern,
            magnitude,
            start_s: 10.0,
            duration_s: 10.0,
            class: AttackClass::Overt,
            direction: BiasDirection::PosX,
        }
    }

    #[test]
    fn noise_free_projection() {
        let profile = VehicleProfile::quadcopter().noise_free();
        let mut state = VehicleState::at(Vec3::new(1.0, 2.0, 3.0), Vec3::ZERO, 0.0);
        state.attitude = Attitude::new(0.0, 0.0, FRAC_PI_4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = sample_sensors(&state, &profile, &mut rng);
        assert_eq!(f.gps, state.position);
        assert_eq!(f.magnetometer, FRAC_PI_4);
    }

    #[test]
    fn constant_bias_adds() {
        let mut frame = SensorFrame::default();
        frame.gps.x = 100.0;
        let out = inject_attack(&frame, &gps_script(BiasPattern::Constant, 20.0), 12.0).unwrap();
        assert_eq!(out.gps.x, 120.0);
        assert_eq!(out.gps.y, frame.gps.y);
    }

    #[test]
    fn ramp_up_midpoint() {
        let script = gps_script(BiasPattern::RampUp, 50.0);
        assert!((script.bias_at(15.0) - 25.0).abs() < 1e-12);
    }

    #[test]
    fn ramp_down_profile() {
        let script = gps_script(BiasPattern::RampDown, 40.0);
        assert_eq!(script.bias_at(10.0), 40.0);
        assert!((script.bias_at(17.5) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_gps_rejected() {
        let r = inject_attack(
            &SensorFrame::default(),
            &gps_script(BiasPattern::Constant, 60.0),
            12.0,
        );
        assert!(matches!(r, Err(Error::InvalidScript(_))));
    }

    #[test]
    fn outside_window_is_identity() {
        let mut frame = SensorFrame::default();
        frame.gps = Vec3::new(3.0, 4.0, 5.0);
        let script = gps_script(BiasPattern::Constant, 20.0);
        for t in [0.0, 9.99, 20.01, 100.0] {
            assert_eq!(inject_attack(&frame, &script, t).unwrap(), frame);
        }
    }

    #[test]
    fn gyro_rate_integrates_to_magnitude() {
        for pattern in BiasPattern::ALL {
            let script = AttackScript {
                sensor: Sensor::Gyroscope,
                pattern,
                magnitude: 2.0,
                start_s: 1.0,
                duration_s: 4.0,
                class: AttackClass::Overt,
                direction: BiasDirection::PosZ,
            };
            let n = 40_000;
            let h = script.duration_s / n as f64;
            let integral: f64 = (0..n)
                .map(|k| script.channel_offset(1.0 + (k as f64 + 0.5) * h) * h)
                .sum();
            assert!((integral - 2.0).abs() < 1e-6, "{pattern:?}: {integral}");
        }
    }

    #[test]
    fn barometer_positive_pressure_lowers_altitude() {
        let script = AttackScript {
            sensor: Sensor::Barometer,
            pattern: BiasPattern::Constant,
            magnitude: 0.1,
            start_s: 0.0,
            duration_s: 5.0,
            class: AttackClass::Overt,
            direction: BiasDirection::PosZ,
        };
        let mut frame = SensorFrame::default();
        frame.baro_altitude = 12.0;
        let out = inject_attack(&frame, &script, 1.0).unwrap();
        assert!((out.baro_altitude - (12.0 - 8.3)).abs() < 1e-12);
    }

    #[test]
    fn class_validation() {
        let mut script = gps_script(BiasPattern::RampUp, 5.0);
        script.class = AttackClass::Stealthy;
        // 5 m over 10 s at 0.1 s steps is 0.05 m per step.
        assert!(script.validate_class(1.5, 0.1).is_ok());
        script.class = AttackClass::Overt;
        assert!(script.validate_class(1.5, 0.1).is_err());
        let overt = gps_script(BiasPattern::Constant, 20.0);
        assert!(overt.validate_class(1.5, 0.1).is_ok());
        let mut bad = overt;
        bad.class = AttackClass::Stealthy;
        assert!(bad.validate_class(1.5, 0.1).is_err());
    }

    #[test]
    fn direction_applicability() {
        let mut script = gps_script(BiasPattern::Constant, 10.0);
        script.sensor = Sensor::OpticalFlow;
        script.magnitude = 3.0;
        script.direction = BiasDirection::PosZ;
        assert!(script.validate().is_err());
    }
}
