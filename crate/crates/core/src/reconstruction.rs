//! Trusted-history checkpointing, linear system identification of the
//! vehicle's transition, and reconstruction of compromised state channels.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Vec3};
use crate::sensors::{Sensor, SensorFrame};
use crate::vehicle::{ActuatorSetpoint, Attitude, VehicleKind, VehicleProfile, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub time: f64,
    pub state: VehicleState,
    pub frame: SensorFrame,
    /// Command issued after observing `state`.
    pub command: ActuatorSetpoint,
}

/// Sliding window of trusted entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    capacity: usize,
    entries: VecDeque<CheckpointEntry>,
}

impl Checkpoint {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            entries: VecDeque::with_capacity(capacity.max(1)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &CheckpointEntry> {
        self.entries.iter()
    }

    pub fn last(&self) -> Option<&CheckpointEntry> {
        self.entries.back()
    }

    /// Appends an entry recorded while no alarm is active; evicts the oldest
    /// entry beyond capacity.
    pub fn push(&mut self, entry: CheckpointEntry, alarm_active: bool) -> Result<()> {
        if alarm_active {
            return Err(Error::CheckpointRejected("detector alarm active".into()));
        }
        if let Some(last) = self.entries.back() {
            if entry.time <= last.time {
                return Err(Error::CheckpointRejected(format!(
                    "timestamp {} not after {}",
                    entry.time, last.time
                )));
            }
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(entry);
        Ok(())
    }

    /// Drops entries recorded at or after `onset`, which may have been
    /// corrupted before the alarm was raised.
    pub fn rollback(&mut self, onset: f64) {
        while self.entries.back().is_some_and(|e| e.time >= onset) {
            self.entries.pop_back();
        }
    }
}

/// Coefficients of one regression and the prior they were shrunk towards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub coefficients: Vec<f64>,
    pub rank_deficient: bool,
    pub residual_rms: f64,
}

impl Regression {
    fn predict(&self, features: &[f64]) -> f64 {
        self.coefficients
            .iter()
            .zip(features)
            .map(|(c, f)| c * f)
            .sum()
    }
}

/// Per-axis linear transition model:
/// `p' = [p, v, u, 1]·a`, `v' = [v, u, 1]·b`, `acc' = [v, u, 1]·c`, and for
/// each attitude angle `Δ = [angle, wrap(setpoint - angle), 1]·d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorModel {
    pub dt_s: f64,
    pub planar: bool,
    pub position: [Regression; 3],
    pub velocity: [Regression; 3],
    pub acceleration: [Regression; 3],
    pub attitude: [Regression; 3],
    /// Names of regressions where the window did not excite every direction
    /// and the nominal model filled in.
    pub flagged: Vec<String>,
}

fn nominal(profile: &VehicleProfile) -> ([f64; 4], [f64; 3], [f64; 3], [[f64; 3]; 3]) {
    let g = profile.lag_gain();
    let dt = profile.dt_s;
    let yaw_gain = if profile.kind == VehicleKind::Rover || profile.yaw_tracking {
        g
    } else {
        0.0
    };
    (
        [1.0, dt * (1.0 - g), dt * g, 0.0],
        [1.0 - g, g, 0.0],
        [-g / dt, g / dt, 0.0],
        [[0.0, g, 0.0], [0.0, g, 0.0], [0.0, yaw_gain, 0.0]],
    )
}

impl EstimatorModel {
    /// The nominal transition implied by the vehicle profile.
    pub fn nominal(profile: &VehicleProfile) -> Self {
        let (p, v, a, att) = nominal(profile);
        let reg = |c: &[f64]| Regression {
            coefficients: c.to_vec(),
            rank_deficient: true,
            residual_rms: 0.0,
        };
        Self {
            dt_s: profile.dt_s,
            planar: profile.kind == VehicleKind::Rover,
            position: [reg(&p), reg(&p), reg(&p)],
            velocity: [reg(&v), reg(&v), reg(&v)],
            acceleration: [reg(&a), reg(&a), reg(&a)],
            attitude: [reg(&att[0]), reg(&att[1]), reg(&att[2])],
            flagged: vec!["all".into()],
        }
    }

    /// One-step prediction.
    pub fn predict(&self, s: &VehicleState, u: &ActuatorSetpoint) -> VehicleState {
        let mut position = Vec3::ZERO;
        let mut velocity = Vec3::ZERO;
        let mut acceleration = Vec3::ZERO;
        for i in 0..3 {
            let (p, v, c) = (s.position.get(i), s.velocity.get(i), u.velocity.get(i));
            position.set(i, self.position[i].predict(&[p, v, c, 1.0]));
            velocity.set(i, self.velocity[i].predict(&[v, c, 1.0]));
            acceleration.set(i, self.acceleration[i].predict(&[v, c, 1.0]));
        }
        let angles = [s.attitude.roll, s.attitude.pitch, s.attitude.yaw];
        let targets = [u.attitude.roll, u.attitude.pitch, u.attitude.yaw];
        let mut next = [0.0; 3];
        let mut rate = Vec3::ZERO;
        for i in 0..3 {
            let delta =
                self.attitude[i].predict(&[angles[i], wrap_angle(targets[i] - angles[i]), 1.0]);
            next[i] = wrap_angle(angles[i] + delta);
            rate.set(i, delta / self.dt_s);
        }
        if self.planar {
            position.z = 0.0;
            velocity.z = 0.0;
            acceleration.z = 0.0;
            next[0] = 0.0;
            next[1] = 0.0;
            rate.x = 0.0;
            rate.y = 0.0;
        } else if position.z < 0.0 {
            position.z = 0.0;
            velocity.z = velocity.z.max(0.0);
        }
        VehicleState {
            position,
            velocity,
            acceleration,
            attitude: Attitude::new(next[0], next[1], next[2]),
            angular_rate: rate,
            time: s.time + self.dt_s,
        }
    }

    /// Largest residual RMS over the position regressions.
    pub fn position_rms(&self) -> f64 {
        self.position
            .iter()
            .map(|r| r.residual_rms)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconstructionConfig {
    /// Checkpoint window length, steps.
    pub window: usize,
    /// Minimum entries needed to fit the estimator.
    pub min_entries: usize,
    /// Longest reconstruction before giving up, steps.
    pub max_horizon: usize,
    /// Singular values below this fraction of the largest are treated as zero.
    pub rank_tolerance: f64,
    /// Translational regressor directions whose RMS spread over the window
    /// is below this are left at the nominal model, m/s.
    pub min_excitation_mps: f64,
    /// Same for the attitude regressions, rad.
    pub min_excitation_rad: f64,
    /// Target reconstruction error bounds over `epsilon_horizon_s`.
    pub epsilon_position_m: f64,
    pub epsilon_attitude_rad: f64,
    pub epsilon_horizon_s: f64,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self {
            window: 100,
            min_entries: 20,
            max_horizon: 300,
            rank_tolerance: 1e-7,
            min_excitation_mps: 1.0,
            min_excitation_rad: 0.05,
            epsilon_position_m: 1.0,
            epsilon_attitude_rad: 0.05,
            epsilon_horizon_s: 10.0,
        }
    }
}

fn fit_regression(
    rows: &[Vec<f64>],
    targets: &[f64],
    prior: &[f64],
    tol: f64,
    min_spread: f64,
) -> Regression {
    let n = rows.len();
    let m = prior.len();
    let x = DMatrix::from_fn(n, m, |i, j| rows[i][j]);
    let prior_v = DVector::from_column_slice(prior);
    let y = DVector::from_column_slice(targets);
    let r = &y - &x * &prior_v;
    let svd = x.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let eps = (tol * max_sv)
        .max(min_spread * (n as f64).sqrt())
        .max(f64::MIN_POSITIVE);
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let delta = svd.solve(&r, eps).unwrap_or_else(|_| DVector::zeros(m));
    let beta = prior_v + delta;
    let resid = &y - &x * &beta;
    let residual_rms = (resid.norm_squared() / n as f64).sqrt();
    Regression {
        coefficients: beta.iter().copied().collect(),
        rank_deficient: rank < m,
        residual_rms,
    }
}

/// Least-squares fit of the per-channel transition over consecutive
/// checkpoint entries, shrunk towards the nominal model in directions the
/// window does not excite.
pub fn fit_estimator(
    cp: &Checkpoint,
    profile: &VehicleProfile,
    cfg: &ReconstructionConfig,
) -> Result<EstimatorModel> {
    if cp.len() < cfg.min_entries {
        return Err(Error::InsufficientData {
            needed: cfg.min_entries,
            have: cp.len(),
        });
    }
    let dt = profile.dt_s;
    let pairs: Vec<(&CheckpointEntry, &CheckpointEntry)> = cp
        .entries
        .iter()
        .zip(cp.entries.iter().skip(1))
        .filter(|(a, b)| (b.time - a.time - dt).abs() < 0.5 * dt)
        .collect();
    if pairs.len() + 1 < cfg.min_entries {
        return Err(Error::InsufficientData {
            needed: cfg.min_entries,
            have: pairs.len() + 1,
        });
    }
    let (pp, vp, ap, attp) = nominal(profile);
    let mut model = EstimatorModel::nominal(profile);
    model.flagged.clear();
    let axes = if profile.kind == VehicleKind::Rover {
        2
    } else {
        3
    };
    let tol = cfg.rank_tolerance;
    let names = ["x", "y", "z"];
    for i in 0..axes {
        let rows: Vec<Vec<f64>> = pairs
            .iter()
            .map(|(a, _)| vec![a.state.velocity.get(i), a.command.velocity.get(i), 1.0])
            .collect();
        // Position keeps unit weight on itself; only the displacement is fitted.
        let step_y: Vec<f64> = pairs
            .iter()
            .map(|(a, b)| b.state.position.get(i) - a.state.position.get(i))
            .collect();
        let vel_y: Vec<f64> = pairs.iter().map(|(_, b)| b.state.velocity.get(i)).collect();
        let acc_y: Vec<f64> = pairs
            .iter()
            .map(|(_, b)| b.state.acceleration.get(i))
            .collect();
        let spread = cfg.min_excitation_mps;
        let step = fit_regression(&rows, &step_y, &pp[1..], tol, spread);
        model.position[i] = Regression {
            coefficients: std::iter::once(1.0)
                .chain(step.coefficients.iter().copied())
                .collect(),
            ..step
        };
        model.velocity[i] = fit_regression(&rows, &vel_y, &vp, tol, spread);
        model.acceleration[i] = fit_regression(&rows, &acc_y, &ap, tol, spread);
        for (kind, reg) in [
            ("position", &model.position[i]),
            ("velocity", &model.velocity[i]),
            ("acceleration", &model.acceleration[i]),
        ] {
            if reg.rank_deficient {
                model.flagged.push(format!("{kind}.{}", names[i]));
            }
        }
    }
    let angle_names = ["roll", "pitch", "yaw"];
    let first_angle = if profile.kind == VehicleKind::Rover {
        2
    } else {
        0
    };
    for i in first_angle..3 {
        let get = |s: &VehicleState| [s.attitude.roll, s.attitude.pitch, s.attitude.yaw][i];
        let get_sp = |u: &ActuatorSetpoint| [u.attitude.roll, u.attitude.pitch, u.attitude.yaw][i];
        let rows: Vec<Vec<f64>> = pairs
            .iter()
            .map(|(a, _)| {
                let ang = get(&a.state);
                vec![ang, wrap_angle(get_sp(&a.command) - ang), 1.0]
            })
            .collect();
        let y: Vec<f64> = pairs
            .iter()
            .map(|(a, b)| wrap_angle(get(&b.state) - get(&a.state)))
            .collect();
        model.attitude[i] = fit_regression(&rows, &y, &attp[i], tol, cfg.min_excitation_rad);
        if model.attitude[i].rank_deficient {
            model.flagged.push(format!("attitude.{}", angle_names[i]));
        }
    }
    let coeffs_finite = model
        .position
        .iter()
        .chain(&model.velocity)
        .chain(&model.acceleration)
        .chain(&model.attitude)
        .all(|r| r.coefficients.iter().all(|c| c.is_finite()));
    if !coeffs_finite {
        return Err(Error::InvalidInput(
            "estimator fit produced non-finite coefficients".into(),
        ));
    }
    Ok(model)
}

/// Which state channels are derived from a sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ChannelMask {
    pub position_xy: bool,
    pub position_z: bool,
    pub velocity_xy: bool,
    pub velocity_z: bool,
    pub acceleration: bool,
    pub roll_pitch: bool,
    pub yaw: bool,
}

impl ChannelMask {
    pub fn for_sensor(sensor: Sensor) -> Self {
        let mut m = ChannelMask::default();
        match sensor {
            Sensor::Gps => m.position_xy = true,
            Sensor::Barometer => {
                m.position_z = true;
                m.velocity_z = true;
            }
            Sensor::OpticalFlow => m.velocity_xy = true,
            Sensor::Accelerometer => m.acceleration = true,
            Sensor::Gyroscope => {
                m.roll_pitch = true;
                m.yaw = true;
            }
            Sensor::Magnetometer => m.yaw = true,
        }
        m
    }

    /// One reconstruction step. Compromised channels whose time derivative
    /// comes from a trusted sensor are dead-reckoned from `prev` with that
    /// derivative (position from velocity, velocity from acceleration, yaw
    /// from the yaw rate); a compromised acceleration is differentiated from
    /// trusted velocities. Everything else compromised comes from `model_state`.
    pub fn merge_step(
        &self,
        prev: &VehicleState,
        raw: &VehicleState,
        model_state: &VehicleState,
        dt: f64,
    ) -> VehicleState {
        let mut out = self.merge(raw, model_state);
        if self.velocity_xy {
            out.velocity.x = prev.velocity.x + dt * raw.acceleration.x;
            out.velocity.y = prev.velocity.y + dt * raw.acceleration.y;
        }
        if self.velocity_z {
            out.velocity.z = prev.velocity.z + dt * raw.acceleration.z;
        }
        if self.position_xy {
            out.position.x = prev.position.x + dt * out.velocity.x;
            out.position.y = prev.position.y + dt * out.velocity.y;
        }
        if self.position_z {
            out.position.z = (prev.position.z + dt * out.velocity.z).max(0.0);
        }
        if self.acceleration && !self.velocity_xy && !self.velocity_z {
            out.acceleration = (out.velocity - prev.velocity) * (1.0 / dt);
        }
        if self.yaw && !self.roll_pitch {
            out.attitude.yaw = wrap_angle(prev.attitude.yaw + dt * raw.angular_rate.z);
            out.angular_rate.z = raw.angular_rate.z;
        }
        out
    }

    /// Takes compromised channels from `model_state` and all others from `raw`.
    pub fn merge(&self, raw: &VehicleState, model_state: &VehicleState) -> VehicleState {
        let mut out = *raw;
        if self.position_xy {
            out.position.x = model_state.position.x;
            out.position.y = model_state.position.y;
        }
        if self.position_z {
            out.position.z = model_state.position.z;
        }
        if self.velocity_xy {
            out.velocity.x = model_state.velocity.x;
            out.velocity.y = model_state.velocity.y;
        }
        if self.velocity_z {
            out.velocity.z = model_state.velocity.z;
        }
        if self.acceleration {
            out.acceleration = model_state.acceleration;
        }
        if self.roll_pitch {
            out.attitude.roll = model_state.attitude.roll;
            out.attitude.pitch = model_state.attitude.pitch;
            out.angular_rate.x = model_state.angular_rate.x;
            out.angular_rate.y = model_state.angular_rate.y;
        }
        if self.yaw {
            out.attitude.yaw = model_state.attitude.yaw;
            out.angular_rate.z = model_state.angular_rate.z;
        }
        out
    }
}

/// Reconstructs the state `steps` steps after the last checkpoint entry.
///
/// The rollout starts from the last trusted state and applies its command,
/// then `commands` in order; at every step the channels of uncompromised
/// sensors are taken from `raw_history` (one raw estimate per rolled step,
/// most recent last), so only the compromised channels are model-driven.
pub fn reconstruct_state(
    model: &EstimatorModel,
    cp: &Checkpoint,
    commands: &[ActuatorSetpoint],
    raw_history: &[VehicleState],
    compromised: Sensor,
    steps: usize,
    cfg: &ReconstructionConfig,
) -> Result<VehicleState> {
    if steps > cfg.max_horizon {
        return Err(Error::ReconstructionExpired {
            steps,
            limit: cfg.max_horizon,
        });
    }
    let last = cp
        .last()
        .ok_or(Error::InsufficientData { needed: 1, have: 0 })?;
    if steps == 0 {
        return Ok(last.state);
    }
    if commands.len() + 1 < steps || raw_history.len() < steps {
        return Err(Error::InvalidInput(format!(
            "reconstruction over {steps} steps needs {} commands and {steps} raw states",
            steps - 1
        )));
    }
    let mask = ChannelMask::for_sensor(compromised);
    let raw = &raw_history[raw_history.len() - steps..];
    let mut state = last.state;
    let mut command = last.command;
    for k in 0..steps {
        let predicted = model.predict(&state, &command);
        state = mask.merge_step(&state, &raw[k], &predicted, model.dt_s);
        if k < commands.len() {
            command = commands[k];
        }
    }
    Ok(state)
}

/// Incremental reconstructor owned by one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstructor {
    pub cfg: ReconstructionConfig,
    mask: ChannelMask,
    sensor: Option<Sensor>,
    state: Option<VehicleState>,
    pending_command: Option<ActuatorSetpoint>,
    steps: usize,
}

impl Reconstructor {
    pub fn new(cfg: ReconstructionConfig) -> Self {
        Self {
            cfg,
            mask: ChannelMask::default(),
            sensor: None,
            state: None,
            pending_command: None,
            steps: 0,
        }
    }

    pub fn is_active(&self) -> bool {
        self.sensor.is_some()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn sensor(&self) -> Option<Sensor> {
        self.sensor
    }

    /// Starts reconstruction for a diagnosed sensor from the last trusted
    /// entry, replaying the commands and raw estimates logged since then.
    pub fn begin(
        &mut self,
        model: &EstimatorModel,
        cp: &Checkpoint,
        sensor: Sensor,
        log: &[(VehicleState, ActuatorSetpoint)],
    ) -> Result<VehicleState> {
        let last = cp
            .last()
            .ok_or(Error::InsufficientData { needed: 1, have: 0 })?;
        self.mask = ChannelMask::for_sensor(sensor);
        self.sensor = Some(sensor);
        self.steps = 0;
        let mut state = last.state;
        let mut command = last.command;
        let replay: Vec<&(VehicleState, ActuatorSetpoint)> = log
            .iter()
            .filter(|(s, _)| s.time > last.time + 1e-9)
            .collect();
        let n = replay.len();
        for (k, (raw, cmd)) in replay.into_iter().enumerate() {
            state = self
                .mask
                .merge_step(&state, raw, &model.predict(&state, &command), model.dt_s);
            self.steps += 1;
            if k + 1 < n {
                command = *cmd;
            }
        }
        self.state = Some(state);
        if self.steps > self.cfg.max_horizon {
            return Err(Error::ReconstructionExpired {
                steps: self.steps,
                limit: self.cfg.max_horizon,
            });
        }
        self.pending_command = None;
        Ok(state)
    }

    /// Records the command issued after the latest reconstruction.
    pub fn record_command(&mut self, command: ActuatorSetpoint) {
        self.pending_command = Some(command);
    }

    /// Advances one step given the latest raw estimate.
    pub fn advance(&mut self, model: &EstimatorModel, raw: &VehicleState) -> Result<VehicleState> {
        let prev = self
            .state
            .ok_or_else(|| Error::InvalidInput("reconstructor not started".into()))?;
        let command = self.pending_command.take().unwrap_or_default();
        self.steps += 1;
        if self.steps > self.cfg.max_horizon {
            return Err(Error::ReconstructionExpired {
                steps: self.steps,
                limit: self.cfg.max_horizon,
            });
        }
        let mut next =
            self.mask
                .merge_step(&prev, raw, &model.predict(&prev, &command), model.dt_s);
        next.time = raw.time;
        self.state = Some(next);
        Ok(next)
    }

    pub fn stop(&mut self) -> Option<VehicleState> {
        self.sensor = None;
        self.steps = 0;
        self.pending_command = None;
        self.state.take()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(t: f64, state: VehicleState, command: ActuatorSetpoint) -> CheckpointEntry {
        CheckpointEntry {
            time: t,
            state,
            frame: SensorFrame::default(),
            command,
        }
    }

    #[test]
    fn ring_keeps_last_w() {
        let mut cp = Checkpoint::new(5);
        for k in 0..6 {
            cp.push(
                entry(
                    k as f64,
                    VehicleState::default(),
                    ActuatorSetpoint::default(),
                ),
                false,
            )
            .unwrap();
        }
        assert_eq!(cp.len(), 5);
        assert_eq!(cp.entries().next().unwrap().time, 1.0);
    }

    #[test]
    fn push_during_alarm_rejected() {
        let mut cp = Checkpoint::new(5);
        let r = cp.push(
            entry(0.0, VehicleState::default(), ActuatorSetpoint::default()),
            true,
        );
        assert!(matches!(r, Err(Error::CheckpointRejected(_))));
        assert!(cp.is_empty());
    }

    #[test]
    fn out_of_order_rejected() {
        let mut cp = Checkpoint::new(5);
        cp.push(
            entry(1.0, VehicleState::default(), ActuatorSetpoint::default()),
            false,
        )
        .unwrap();
        let r = cp.push(
            entry(1.0, VehicleState::default(), ActuatorSetpoint::default()),
            false,
        );
        assert!(r.is_err());
        assert_eq!(cp.len(), 1);
    }

    #[test]
    fn small_window_insufficient() {
        let mut cp = Checkpoint::new(100);
        for k in 0..5 {
            cp.push(
                entry(
                    k as f64 * 0.1,
                    VehicleState::default(),
                    ActuatorSetpoint::default(),
                ),
                false,
            )
            .unwrap();
        }
        let r = fit_estimator(
            &cp,
            &VehicleProfile::quadcopter(),
            &ReconstructionConfig::default(),
        );
        assert!(matches!(
            r,
            Err(Error::InsufficientData {
                needed: 20,
                have: 5
            })
        ));
    }

    #[test]
    fn rollback_drops_entries_from_onset() {
        let mut cp = Checkpoint::new(100);
        for k in 0..10 {
            cp.push(
                entry(
                    k as f64,
                    VehicleState::default(),
                    ActuatorSetpoint::default(),
                ),
                false,
            )
            .unwrap();
        }
        cp.rollback(7.0);
        assert_eq!(cp.last().unwrap().time, 6.0);
    }

    #[test]
    fn stationary_window_is_flagged() {
        let mut cp = Checkpoint::new(100);
        for k in 0..30 {
            let s = VehicleState::at(Vec3::new(1.0, 2.0, 12.0), Vec3::ZERO, k as f64 * 0.1);
            cp.push(entry(s.time, s, ActuatorSetpoint::default()), false)
                .unwrap();
        }
        let model = fit_estimator(
            &cp,
            &VehicleProfile::quadcopter(),
            &ReconstructionConfig::default(),
        )
        .unwrap();
        assert!(!model.flagged.is_empty());
        let s = cp.last().unwrap().state;
        let p = model.predict(&s, &ActuatorSetpoint::default());
        assert_eq!(p.position, s.position);
    }
}
