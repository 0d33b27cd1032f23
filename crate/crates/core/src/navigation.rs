//! Onboard state estimation from sensor frames.
//!
//! Position comes from GPS (horizontal) and the barometer (vertical),
//! velocity from optical flow and the barometric climb rate, roll and pitch
//! from integrated gyro rates, and yaw from a complementary blend of the
//! integrated yaw rate with the magnetometer heading.

use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, Vec3};
use crate::sensors::SensorFrame;
use crate::vehicle::{Attitude, VehicleKind, VehicleProfile, VehicleState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavEstimator {
    /// Weight of the magnetometer heading in the yaw blend per step.
    pub heading_gain: f64,
    last: Option<VehicleState>,
}

impl Default for NavEstimator {
    fn default() -> Self {
        Self::new(0.02)
    }
}

impl NavEstimator {
    pub fn new(heading_gain: f64) -> Self {
        Self {
            heading_gain,
            last: None,
        }
    }

    /// Seeds the estimator with a known state (e.g. the launch state).
    pub fn with_initial(heading_gain: f64, state: VehicleState) -> Self {
        Self {
            heading_gain,
            last: Some(state),
        }
    }

    pub fn last(&self) -> Option<&VehicleState> {
        self.last.as_ref()
    }

    /// Replaces the internal attitude memory, used when a reconstructed state
    /// takes over from the raw estimate.
    pub fn reset_to(&mut self, state: VehicleState) {
        self.last = Some(state);
    }

    pub fn update(&mut self, frame: &SensorFrame, profile: &VehicleProfile) -> VehicleState {
        let dt = profile.dt_s;
        let rover = profile.kind == VehicleKind::Rover;
        let scale = profile.flow_scale_mps_per_px;
        let position = if rover {
            Vec3::new(frame.gps.x, frame.gps.y, 0.0)
        } else {
            Vec3::new(frame.gps.x, frame.gps.y, frame.baro_altitude)
        };
        let velocity = Vec3::new(
            frame.optical_flow[0] * scale,
            frame.optical_flow[1] * scale,
            if rover { 0.0 } else { frame.baro_climb },
        );
        let acceleration = if rover {
            Vec3::new(frame.accel.x, frame.accel.y, 0.0)
        } else {
            frame.accel
        };
        let attitude = match self.last {
            None => Attitude::new(0.0, 0.0, frame.magnetometer),
            Some(prev) => {
                let a = prev.attitude;
                let predicted_yaw = a.yaw + frame.gyro.z * dt;
                let yaw = predicted_yaw
                    + self.heading_gain * wrap_angle(frame.magnetometer - predicted_yaw);
                if rover {
                    Attitude::new(0.0, 0.0, wrap_angle(yaw))
                } else {
                    Attitude::new(
                        wrap_angle(a.roll + frame.gyro.x * dt),
                        wrap_angle(a.pitch + frame.gyro.y * dt),
                        wrap_angle(yaw),
                    )
                }
            }
        };
        let angular_rate = if rover {
            Vec3::new(0.0, 0.0, frame.gyro.z)
        } else {
            frame.gyro
        };
        let state = VehicleState {
            position,
            velocity,
            acceleration,
            attitude,
            angular_rate,
            time: frame.time,
        };
        self.last = Some(state);
        state
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensors::ideal_frame;

    #[test]
    fn noise_free_frame_recovers_state() {
        let profile = VehicleProfile::quadcopter().noise_free();
        let mut truth =
            VehicleState::at(Vec3::new(5.0, -2.0, 12.0), Vec3::new(8.0, 0.5, -0.2), 1.0);
        truth.acceleration = Vec3::new(0.1, 0.2, 0.3);
        truth.attitude.yaw = 0.7;
        let mut nav = NavEstimator::with_initial(0.02, truth);
        let est = nav.update(&ideal_frame(&truth, &profile), &profile);
        assert_eq!(est.position, truth.position);
        assert_eq!(est.velocity, truth.velocity);
        assert_eq!(est.acceleration, truth.acceleration);
        assert!((est.attitude.yaw - 0.7).abs() < 1e-15);
    }

    #[test]
    fn heading_converges_to_magnetometer() {
        let profile = VehicleProfile::quadcopter().noise_free();
        let mut nav = NavEstimator::with_initial(0.02, VehicleState::default());
        let mut frame = SensorFrame::default();
        frame.magnetometer = 1.0;
        let mut yaw = 0.0;
        for _ in 0..500 {
            yaw = nav.update(&frame, &profile).attitude.yaw;
        }
        assert!((yaw - 1.0).abs() < 1e-3);
    }
}
