//! Attack detection and diagnosis stand-ins: a model-based residual
//! detector and a ground-truth oracle with configurable latency.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::wrap_angle;
use crate::reconstruction::{ChannelMask, EstimatorModel};
use crate::sensors::{AttackScript, Sensor, SensorFrame};
use crate::vehicle::{ActuatorSetpoint, VehicleProfile, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorMode {
    Residual,
    #[default]
    Oracle,
}

impl std::str::FromStr for DetectorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "residual" => Ok(DetectorMode::Residual),
            "oracle" => Ok(DetectorMode::Oracle),
            _ => Err(Error::Config(format!("unknown detector mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub mode: DetectorMode,
    /// Alarm threshold in multiples of the channel noise level.
    pub threshold_multiplier: f64,
    /// Consecutive exceeding steps before an alarm (and quiet steps before it clears).
    pub window: usize,
    pub oracle_delay_s: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            mode: DetectorMode::Oracle,
            threshold_multiplier: 5.0,
            window: 3,
            oracle_delay_s: 0.2,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.oracle_delay_s >= 0.0 && self.oracle_delay_s.is_finite()) {
            return Err(Error::Config(format!(
                "oracle delay must be >= 0, got {}",
                self.oracle_delay_s
            )));
        }
        if self.window == 0 || !(self.threshold_multiplier > 0.0) {
            return Err(Error::Config(
                "detector window and threshold multiplier must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Nominal per-sensor thresholds from the sensor noise alone.
    pub fn nominal_thresholds(&self, profile: &VehicleProfile) -> [f64; 6] {
        Sensor::ALL.map(|s| self.threshold_multiplier * s.noise_sigma(&profile.sensor_noise))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorEvent {
    pub alarm: bool,
    pub onset_s: Option<f64>,
    pub diagnosed: Option<Sensor>,
    pub mode: DetectorMode,
}

impl DetectorEvent {
    pub fn quiet(mode: DetectorMode) -> Self {
        Self {
            alarm: false,
            onset_s: None,
            diagnosed: None,
            mode,
        }
    }
}

/// Ground-truth detection: alarm from `start + delay` until the attack window ends.
pub fn oracle_detect(script: &AttackScript, t: f64, delay: f64) -> Result<DetectorEvent> {
    if !(delay >= 0.0) {
        return Err(Error::Config(format!(
            "oracle delay must be >= 0, got {delay}"
        )));
    }
    const EPS: f64 = 1e-9;
    let raise = script.start_s + delay;
    let clear = script.end_s().max(raise);
    if t + EPS >= raise && t <= clear + EPS {
        Ok(DetectorEvent {
            alarm: true,
            onset_s: Some(script.start_s),
            diagnosed: Some(script.sensor),
            mode: DetectorMode::Oracle,
        })
    } else {
        Ok(DetectorEvent::quiet(DetectorMode::Oracle))
    }
}

/// Per-sensor absolute residuals between a frame and the sensor-space
/// projection of a predicted state.
pub fn sensor_residuals(
    frame: &SensorFrame,
    predicted: &VehicleState,
    profile: &VehicleProfile,
) -> [f64; 6] {
    let scale = profile.flow_scale_mps_per_px;
    let p = predicted;
    let gps = (frame.gps.x - p.position.x)
        .abs()
        .max((frame.gps.y - p.position.y).abs());
    let flow = (frame.optical_flow[0] - p.velocity.x / scale)
        .abs()
        .max((frame.optical_flow[1] - p.velocity.y / scale).abs());
    let d = frame.gyro - p.angular_rate;
    let gyro = d.x.abs().max(d.y.abs()).max(d.z.abs());
    let d = frame.accel - p.acceleration;
    let accel = d.x.abs().max(d.y.abs()).max(d.z.abs());
    let mag = wrap_angle(frame.magnetometer - p.attitude.yaw).abs();
    let baro = (frame.baro_altitude - p.position.z).abs();
    [gps, flow, gyro, accel, mag, baro]
}

/// Stateless residual check: which sensors exceed their thresholds and the
/// sensor with the largest normalized residual.
pub fn residual_detect(
    model: &EstimatorModel,
    frame: &SensorFrame,
    previous: &VehicleState,
    command: &ActuatorSetpoint,
    thresholds: &[f64; 6],
    profile: &VehicleProfile,
) -> ([bool; 6], Option<Sensor>) {
    let predicted = model.predict(previous, command);
    let r = sensor_residuals(frame, &predicted, profile);
    let mut exceeds = [false; 6];
    let mut best: Option<(f64, Sensor)> = None;
    for s in Sensor::ALL {
        let norm = r[s.index()] / thresholds[s.index()].max(f64::MIN_POSITIVE);
        if norm > 1.0 {
            exceeds[s.index()] = true;
            if best.is_none_or(|(b, _)| norm > b) {
                best = Some((norm, s));
            }
        }
    }
    (exceeds, best.map(|(_, s)| s))
}

/// Effective thresholds: multiplier times the larger of sensor noise and
/// the estimator's one-step fit error on the matching state channel.
pub fn residual_thresholds(
    cfg: &DetectorConfig,
    model: &EstimatorModel,
    profile: &VehicleProfile,
) -> [f64; 6] {
    let n = &profile.sensor_noise;
    let m = cfg.threshold_multiplier;
    let rms = |r: &[crate::reconstruction::Regression]| {
        r.iter().map(|x| x.residual_rms).fold(0.0, f64::max)
    };
    let dt = profile.dt_s;
    [
        m * n.gps_m.max(
            model.position[0]
                .residual_rms
                .max(model.position[1].residual_rms),
        ),
        m * n.optical_flow_px.max(
            model.velocity[0]
                .residual_rms
                .max(model.velocity[1].residual_rms)
                / profile.flow_scale_mps_per_px,
        ),
        m * n.gyro_radps.max(rms(&model.attitude) / dt),
        m * n.accel_mps2.max(rms(&model.acceleration)),
        m * n.magnetometer_rad.max(model.attitude[2].residual_rms),
        m * n.baro_m.max(model.position[2].residual_rms),
    ]
}

/// Stateful residual detector with innovation gating: channels of sensors
/// whose residual exceeds the threshold are propagated by the model instead
/// of being taken from the measurement, so a persistent bias keeps alarming.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualDetector {
    window: usize,
    counts: [usize; 6],
    quiet: usize,
    reference: Option<VehicleState>,
    alarm: Option<(f64, Sensor)>,
}

impl ResidualDetector {
    pub fn new(window: usize) -> Self {
        Self {
            window: window.max(1),
            counts: [0; 6],
            quiet: 0,
            reference: None,
            alarm: None,
        }
    }

    pub fn is_alarmed(&self) -> bool {
        self.alarm.is_some()
    }

    /// Feeds one step. `raw` is the navigation estimate built from `frame`;
    /// `command` is the command issued at the previous step.
    pub fn update(
        &mut self,
        model: Option<&EstimatorModel>,
        frame: &SensorFrame,
        raw: &VehicleState,
        command: &ActuatorSetpoint,
        thresholds: &[f64; 6],
        profile: &VehicleProfile,
    ) -> DetectorEvent {
        let (Some(model), Some(reference)) = (model, self.reference) else {
            self.reference = Some(*raw);
            return self.event();
        };
        let predicted = model.predict(&reference, command);
        let (exceeds, diagnosed) =
            residual_detect(model, frame, &reference, command, thresholds, profile);
        let mut next = *raw;
        for s in Sensor::ALL {
            if exceeds[s.index()] {
                self.counts[s.index()] += 1;
                next = ChannelMask::for_sensor(s).merge(&next, &predicted);
            } else {
                self.counts[s.index()] = 0;
            }
        }
        next.time = raw.time;
        self.reference = Some(next);
        match self.alarm {
            None => {
                if let Some(s) = diagnosed {
                    if self.counts[s.index()] >= self.window {
                        let onset = frame.time - (self.window - 1) as f64 * profile.dt_s;
                        self.alarm = Some((onset, s));
                        self.quiet = 0;
                    }
                }
            }
            Some((_, s)) => {
                if exceeds[s.index()] {
                    self.quiet = 0;
                } else {
                    self.quiet += 1;
                    if self.quiet >= self.window {
                        self.alarm = None;
                        self.counts = [0; 6];
                    }
                }
            }
        }
        self.event()
    }

    fn event(&self) -> DetectorEvent {
        match self.alarm {
            Some((onset, s)) => DetectorEvent {
                alarm: true,
                onset_s: Some(onset),
                diagnosed: Some(s),
                mode: DetectorMode::Residual,
            },
            None => DetectorEvent::quiet(DetectorMode::Residual),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::sensors::{ideal_frame, AttackClass, BiasDirection, BiasPattern};

    fn script(delay_start: f64) -> AttackScript {
        AttackScript {
            sensor: Sensor::Gps,
            pattern: BiasPattern::Constant,
            magnitude: 20.0,
            start_s: delay_start,
            duration_s: 5.0,
            class: AttackClass::Overt,
            direction: BiasDirection::PosY,
        }
    }

    #[test]
    fn oracle_timing() {
        let s = script(10.0);
        assert!(oracle_detect(&s, 10.0, 0.0).unwrap().alarm);
        assert!(!oracle_detect(&s, 9.9, 0.0).unwrap().alarm);
        assert!(!oracle_detect(&s, 10.4, 0.5).unwrap().alarm);
        let e = oracle_detect(&s, 10.5, 0.5).unwrap();
        assert!(e.alarm);
        assert_eq!(e.diagnosed, Some(Sensor::Gps));
        assert_eq!(e.onset_s, Some(10.0));
        assert!(!oracle_detect(&s, 15.1, 0.5).unwrap().alarm);
        assert!(matches!(
            oracle_detect(&s, 10.0, -0.1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn zero_residuals_no_alarm() {
        let profile = VehicleProfile::quadcopter().noise_free();
        let model = EstimatorModel::nominal(&profile);
        let state = VehicleState::at(Vec3::new(0.0, 0.0, 12.0), Vec3::new(8.0, 0.0, 0.0), 0.0);
        let cmd = ActuatorSetpoint {
            velocity: state.velocity,
            ..Default::default()
        };
        let next = model.predict(&state, &cmd);
        let frame = ideal_frame(&next, &profile);
        let th = DetectorConfig::default().nominal_thresholds(&VehicleProfile::quadcopter());
        let (exceeds, diag) = residual_detect(&model, &frame, &state, &cmd, &th, &profile);
        assert_eq!(exceeds, [false; 6]);
        assert_eq!(diag, None);
    }
}
