//! The mission loop: true dynamics, sensing, attack injection, detection,
//! reconstruction, the recovery switch and monitoring.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{AttackSource, RecoveryMode, ScenarioConfig};
use super::record::{AlarmEvent, Controller, EpisodeRecord, Outcome, StepRecord};
use crate::adversarial::{attack_agent_act, AttackAgentParams, AttackObservation};
use crate::detection::{
    oracle_detect, residual_thresholds, DetectorEvent, DetectorMode, ResidualDetector,
};
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Vec3};
use crate::navigation::NavEstimator;
use crate::policy::ppo::Transition;
use crate::policy::{sample_index, select_with, PolicyParams, SelectionRule};
use crate::reconstruction::{
    fit_estimator, Checkpoint, CheckpointEntry, EstimatorModel, Reconstructor,
};
use crate::sensors::{inject_attack, sample_sensors, AttackScript, Sensor};
use crate::stl::{Monitor, Scope, TemporalOp};
use crate::vehicle::{
    action_to_setpoint, course_of, setpoint_from_velocity, step_dynamics, ActuatorSetpoint,
    RecoveryAction, VehicleKind, VehicleProfile, VehicleState, INPUT_WIDTH,
};
use crate::world::{Environment, FAR_DISTANCE_M};

const GRAVITY: f64 = 9.81;
/// Progress gain that resets the stall timer, m.
const PROGRESS_STEP_M: f64 = 0.5;
/// Distance to the goal at which the mission stops, m.
const ARRIVAL_RADIUS_M: f64 = 2.0;
/// Descent speed above which ground contact counts as a crash, m/s.
const IMPACT_SPEED_MPS: f64 = 0.5;

/// SplitMix64 step, used to derive independent stream seeds.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Policy input vector. Width 12 is the state vector. Width 24 is the
/// mission-relative form: the state vector with the position replaced by
/// the offset to the planned position, then the angular rates and the
/// offsets to the planned velocity, to the next waypoint and to the nearest
/// obstacle (xy plus surface distance).
pub fn policy_input(state: &VehicleState, env: &Environment, width: usize) -> Result<Vec<f64>> {
    let mut x = state.to_input().to_vec();
    match width {
        INPUT_WIDTH => Ok(x),
        24 => {
            let plan = &env.plan;
            let t = state.time;
            let dp = plan.reference_position(t) - state.position;
            let dv = plan.reference_velocity(t) - state.velocity;
            let times = plan.arrival_times();
            let next = times.iter().position(|&a| a > t).unwrap_or(times.len() - 1);
            let dw = plan.waypoints[next] - state.position;
            let nearest = env
                .obstacles
                .iter()
                .min_by(|a, b| {
                    a.distance(state.position)
                        .total_cmp(&b.distance(state.position))
                })
                .map_or([0.0, 0.0, FAR_DISTANCE_M], |o| {
                    [
                        o.x - state.position.x,
                        o.y - state.position.y,
                        o.distance(state.position),
                    ]
                });
            x[..3].copy_from_slice(&dp.to_array());
            x.extend(state.angular_rate.to_array());
            x.extend(dv.to_array());
            x.extend(dw.to_array());
            x.extend(nearest);
            Ok(x)
        }
        w => Err(Error::Config(format!(
            "unsupported policy input width {w} (use 12 or 24)"
        ))),
    }
}

/// Proportional tracker of the time-indexed plan: reference velocity plus a
/// position correction, speed-limited.
pub fn tracker_command(
    est: &VehicleState,
    env: &Environment,
    cfg: &ScenarioConfig,
) -> ActuatorSetpoint {
    let plan = &env.plan;
    let t = est.time;
    let k = cfg.harness.tracker_gain;
    let e = plan.reference_position(t) - est.position;
    let mut v = plan.reference_velocity(t) + Vec3::new(k[0] * e.x, k[1] * e.y, k[2] * e.z);
    if cfg.profile.kind == VehicleKind::Rover {
        v.z = 0.0;
    }
    let n = v.norm();
    let max = cfg.harness.tracker_max_speed_mps;
    if n > max {
        v = v * (max / n);
    }
    setpoint_from_velocity(v, est, &cfg.profile)
}

/// Inner-loop model: the setpoint the vehicle actually flies when its
/// controller believes it is in `est` while truly in `truth`. The command
/// is realized in the believed heading frame, the velocity loop closes on
/// the believed velocity, and a believed tilt error or a (low-passed)
/// acceleration error is compensated by the attitude loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerLoop {
    /// Velocity offset per unit acceleration error, s.
    pub coupling_s: f64,
    /// Time constant of the acceleration-error filter, s.
    pub time_constant_s: f64,
    filtered: Vec3,
}

impl InnerLoop {
    pub fn new(coupling_s: f64, time_constant_s: f64) -> Self {
        Self {
            coupling_s,
            time_constant_s,
            filtered: Vec3::ZERO,
        }
    }

    pub fn apply(
        &mut self,
        command: &ActuatorSetpoint,
        est: &VehicleState,
        truth: &VehicleState,
        profile: &VehicleProfile,
    ) -> ActuatorSetpoint {
        let dyaw = wrap_angle(est.attitude.yaw - truth.attitude.yaw);
        let mut v = command.velocity.rotate_z(-dyaw) - (est.velocity - truth.velocity);
        if profile.kind == VehicleKind::Quadcopter {
            let alpha = if self.time_constant_s > 0.0 {
                (profile.dt_s / self.time_constant_s).min(1.0)
            } else {
                1.0
            };
            let err = est.acceleration - truth.acceleration;
            self.filtered = self.filtered + (err - self.filtered) * alpha;
            let droll = wrap_angle(est.attitude.roll - truth.attitude.roll);
            let dpitch = wrap_angle(est.attitude.pitch - truth.attitude.pitch);
            let tilt = Vec3::new(dpitch.sin(), -droll.sin(), 0.0) * GRAVITY;
            v = v - (self.filtered + tilt) * self.coupling_s;
        } else {
            v.z = 0.0;
        }
        let mut attitude = command.attitude;
        attitude.yaw = wrap_angle(attitude.yaw - dyaw);
        ActuatorSetpoint {
            velocity: v,
            attitude,
        }
    }
}

/// How the policy is driven in a rollout.
#[derive(Debug, Clone, Copy)]
pub struct Pilot<'a> {
    pub policy: Option<&'a PolicyParams>,
    /// Sample actions from the policy instead of the deterministic rule.
    pub explore: bool,
    /// Record transitions for training.
    pub collect: bool,
    /// Forced policy control window `[start, end]` (attack-free reactive
    /// training); the rollout ends when it closes.
    pub handover: Option<(f64, f64)>,
    pub policy_seed: u64,
    /// End the rollout at the first violated specification.
    pub stop_on_violation: bool,
}

impl<'a> Pilot<'a> {
    pub fn evaluate(policy: Option<&'a PolicyParams>) -> Self {
        Self {
            policy,
            explore: false,
            collect: false,
            handover: None,
            policy_seed: 0,
            stop_on_violation: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutput {
    pub record: EpisodeRecord,
    pub transitions: Vec<Transition>,
    /// Raw policy inputs seen, for the input normalizer.
    pub inputs: Vec<Vec<f64>>,
}

struct Alarm {
    sensor: Sensor,
}

/// Scores every available action by the reward of the noise-free
/// predicted successor, plus an optional discounted critic estimate.
fn lookahead_scores(
    policy: &PolicyParams,
    est: &VehicleState,
    monitor: &Monitor,
    env: &Environment,
    cfg: &ScenarioConfig,
    nominal: &VehicleProfile,
) -> Result<[f64; 6]> {
    let mut scores = [f64::NEG_INFINITY; 6];
    let mut no_noise = ChaCha8Rng::seed_from_u64(0);
    for a in RecoveryAction::available(cfg.profile.kind) {
        let sp = action_to_setpoint(*a, est, &cfg.profile)?;
        let next = step_dynamics(est, &sp, nominal, &mut no_noise)?;
        let mut score = cfg.reward.evaluate(&monitor.reward_terms(&next, env)?)?;
        let gamma = cfg.harness.lookahead_discount;
        if gamma > 0.0 {
            score += gamma * policy.state_value(&policy_input(&next, env, policy.input_width)?)?;
        }
        scores[a.index()] = score;
    }
    Ok(scores)
}

/// State every mission starts in: on the first waypoint at the planned
/// velocity, heading along it.
pub fn initial_state(env: &Environment) -> VehicleState {
    let v0 = env.plan.reference_velocity(0.0);
    let mut s = VehicleState::at(env.plan.start(), v0, 0.0);
    s.attitude.yaw = course_of(v0, 0.0);
    s
}

/// Attack script a mission flies under. Agent scripts are drawn from the
/// initial state with a seed derived from the mission seed.
pub fn resolve_script(
    cfg: &ScenarioConfig,
    adversary: Option<&AttackAgentParams>,
) -> Result<Option<AttackScript>> {
    match &cfg.attack {
        AttackSource::None => Ok(None),
        AttackSource::Script { script } => Ok(Some(*script)),
        AttackSource::Agent => {
            let agent = adversary.ok_or_else(|| {
                Error::Config("attack source `agent` needs attack agent parameters".into())
            })?;
            agent.validate()?;
            let env = cfg.build_environment()?;
            let obs = AttackObservation::at_start(initial_state(&env));
            attack_agent_act(agent, &obs, mix_seed(cfg.seed, 11)).map(Some)
        }
    }
}

/// Flies one evaluation mission.
pub fn run_mission(
    cfg: &ScenarioConfig,
    policy: Option<&PolicyParams>,
    adversary: Option<&AttackAgentParams>,
) -> Result<EpisodeRecord> {
    let script = resolve_script(cfg, adversary)?;
    Ok(simulate(cfg, script.as_ref(), &Pilot::evaluate(policy))?.record)
}

/// Runs one mission with an explicit attack script (or none).
pub fn simulate(
    cfg: &ScenarioConfig,
    script: Option<&AttackScript>,
    pilot: &Pilot,
) -> Result<EpisodeOutput> {
    let env = cfg.build_environment()?;
    let specs = cfg.specs(&env)?;
    let profile = &cfg.profile;
    profile.validate()?;
    cfg.detector.validate()?;
    let mode = cfg.recovery;
    let policy = pilot.policy;
    if (mode.needs_policy() || pilot.handover.is_some()) && policy.is_none() {
        return Err(Error::Config(format!(
            "recovery mode {mode} needs a policy checkpoint"
        )));
    }
    if let Some(p) = policy {
        p.validate()?;
    }
    if let Some(s) = script {
        s.validate()?;
    }
    let nominal = profile.clone().noise_free();

    let mut rng_dyn = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 1));
    let mut rng_sensor = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 2));
    let mut rng_policy = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed ^ pilot.policy_seed, 3));

    let plan = &env.plan;
    let goal = plan.goal();
    let route_length = plan.length();
    let mut truth = initial_state(&env);
    let mut nav = NavEstimator::with_initial(0.02, truth);
    let mut est = truth;
    let mut raw = truth;

    let mut monitor = Monitor::new(specs);
    monitor.step(&truth, &env)?;

    let rcfg = cfg.reconstruction;
    let mut checkpoint = Checkpoint::new(rcfg.window);
    let log_cap = rcfg.window + rcfg.max_horizon + 2;
    let mut log: VecDeque<(VehicleState, ActuatorSetpoint)> = VecDeque::with_capacity(log_cap);
    let mut model = EstimatorModel::nominal(profile);
    let mut recon = Reconstructor::new(rcfg);
    let mut residual = ResidualDetector::new(cfg.detector.window);
    let mut thresholds = residual_thresholds(&cfg.detector, &model, profile);
    let mut alarm: Option<Alarm> = None;
    let mut first_alarm_s: Option<f64> = None;
    let mut cleared_s: Option<f64> = None;
    let mut t2r_s: Option<f64> = None;
    let mut prev_frame = crate::sensors::ideal_frame(&truth, profile);

    let time_limit = cfg.time_limit(&env);
    let mut best_progress = plan.progress(truth.position);
    let mut last_progress_t = 0.0;
    let mut at_goal_since: Option<f64> = None;

    let mut inner = InnerLoop::new(
        cfg.harness.acceleration_coupling_s,
        cfg.harness.acceleration_filter_s,
    );
    let mut steps = Vec::new();
    let mut events = Vec::new();
    let mut transitions = Vec::new();
    let mut inputs = Vec::new();
    let mut total_reward = 0.0;
    let mut step_count = 0usize;
    let mut policy_steps = 0usize;
    let mut rec_sq = 0.0;
    let mut raw_sq = 0.0;
    let mut rec_n = 0usize;
    let mut max_raw_error: f64 = 0.0;
    let mut min_obstacle = env.obstacle_distance(truth.position);
    let mut attack_min_obstacle: Option<f64> = None;
    let mut collision = false;
    let mut outcome = None;

    while outcome.is_none() {
        let t = truth.time;
        let in_handover = pilot
            .handover
            .is_some_and(|(a, b)| t >= a - 1e-9 && t < b - 1e-9);
        let policy_drives = match mode {
            RecoveryMode::Proactive => true,
            RecoveryMode::Reactive | RecoveryMode::NoSr => alarm.is_some() || in_handover,
            RecoveryMode::None | RecoveryMode::NoRcp => in_handover,
        };

        let (command, action) = if policy_drives {
            let p = policy.expect("checked above");
            let input = policy_input(&est, &env, p.input_width)?;
            let action = if pilot.explore {
                let features = p.features(&input)?;
                let probs = p.probabilities_of(&features);
                let index = sample_index(&probs, &mut rng_policy);
                if pilot.collect {
                    transitions.push(Transition {
                        features,
                        action: index,
                        log_prob: probs[index].ln(),
                        reward: 0.0,
                        trained: true,
                        bootstrap: false,
                    });
                }
                RecoveryAction::from_index(index).expect("six actions")
            } else {
                let probs = p.probabilities(&input)?;
                let scores = match cfg.selection {
                    SelectionRule::Weighted => {
                        lookahead_scores(p, &est, &monitor, &env, cfg, &nominal)?
                    }
                    SelectionRule::Argmax => [0.0; 6],
                };
                select_with(&probs, &scores, &p.action_mask, cfg.selection)
            };
            if pilot.collect {
                inputs.push(input);
            }
            policy_steps += 1;
            (action_to_setpoint(action, &est, profile)?, Some(action))
        } else {
            (tracker_command(&est, &env, cfg), None)
        };

        if recon.is_active() {
            recon.record_command(command);
        }
        if alarm.is_none() {
            let entry = CheckpointEntry {
                time: t,
                state: est,
                frame: prev_frame,
                command,
            };
            // Out-of-order pushes cannot happen here; alarms are handled below.
            let _ = checkpoint.push(entry, false);
        }
        if log.len() == log_cap {
            log.pop_front();
        }
        log.push_back((raw, command));

        let applied = inner.apply(&command, &est, &truth, profile);
        let next = step_dynamics(&truth, &applied, profile, &mut rng_dyn)?;
        let t1 = next.time;

        let mut frame = sample_sensors(&next, profile, &mut rng_sensor);
        if let Some(s) = script {
            frame = inject_attack(&frame, s, t1)?;
        }
        let new_raw = nav.update(&frame, profile);

        let event = match cfg.detector.mode {
            DetectorMode::Oracle => match script {
                Some(s) => oracle_detect(s, t1, cfg.detector.oracle_delay_s)?,
                None => DetectorEvent::quiet(DetectorMode::Oracle),
            },
            DetectorMode::Residual => residual.update(
                Some(&model),
                &frame,
                &new_raw,
                &command,
                &thresholds,
                profile,
            ),
        };

        let mut new_est = new_raw;
        let mut expired = false;
        match (&alarm, event.alarm) {
            (None, true) => {
                let sensor = event.diagnosed.unwrap_or(Sensor::Gps);
                let onset = event.onset_s.unwrap_or(t1);
                alarm = Some(Alarm { sensor });
                first_alarm_s.get_or_insert(t1);
                cleared_s = None;
                events.push(AlarmEvent {
                    t: t1,
                    raised: true,
                    onset_s: Some(onset),
                    sensor: Some(sensor),
                });
                if mode.reconstructs() {
                    checkpoint.rollback(onset);
                    model = fit_estimator(&checkpoint, profile, &rcfg)
                        .unwrap_or_else(|_| EstimatorModel::nominal(profile));
                    let mut replay: Vec<(VehicleState, ActuatorSetpoint)> =
                        log.iter().copied().collect();
                    replay.push((new_raw, ActuatorSetpoint::default()));
                    match recon.begin(&model, &checkpoint, sensor, &replay) {
                        Ok(s) => {
                            new_est = s;
                            new_est.time = t1;
                        }
                        Err(Error::ReconstructionExpired { .. })
                        | Err(Error::InsufficientData { .. }) => {
                            expired = true;
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
            (Some(_), true) => {
                if recon.is_active() {
                    match recon.advance(&model, &new_raw) {
                        Ok(s) => new_est = s,
                        Err(Error::ReconstructionExpired { .. }) => expired = true,
                        Err(e) => return Err(e),
                    }
                }
            }
            (Some(a), false) => {
                events.push(AlarmEvent {
                    t: t1,
                    raised: false,
                    onset_s: None,
                    sensor: Some(a.sensor),
                });
                if recon.is_active() {
                    match recon.advance(&model, &new_raw) {
                        Ok(s) => {
                            new_est = s;
                            nav.reset_to(s);
                        }
                        Err(Error::ReconstructionExpired { .. }) => expired = true,
                        Err(e) => return Err(e),
                    }
                    recon.stop();
                }
                alarm = None;
                cleared_s = Some(t1);
            }
            (None, false) => {
                if cfg.detector.mode == DetectorMode::Residual
                    && step_count % 50 == 49
                    && checkpoint.len() >= rcfg.min_entries
                {
                    if let Ok(m) = fit_estimator(&checkpoint, profile, &rcfg) {
                        model = m;
                        thresholds = residual_thresholds(&cfg.detector, &model, profile);
                    }
                }
            }
        }

        if recon.is_active() {
            let se = |s: &VehicleState| {
                let d = s.position - next.position;
                d.dot(&d)
            };
            rec_sq += se(&new_est);
            raw_sq += se(&new_raw);
            rec_n += 1;
        }
        max_raw_error = max_raw_error.max((new_raw.position - next.position).norm());

        let prev_truth = truth;
        truth = next;
        raw = new_raw;
        est = new_est;
        prev_frame = frame;
        monitor.step(&truth, &env)?;
        step_count += 1;

        let reward = cfg.reward.evaluate(&monitor.reward_terms(&truth, &env)?)?;
        total_reward += reward;
        if policy_drives && pilot.collect && pilot.explore {
            if let Some(last) = transitions.last_mut() {
                last.reward = reward;
            }
        }

        if let (Some(raised), Some(clear), None) = (first_alarm_s, cleared_s, t2r_s) {
            if t1 >= clear && alarm.is_none() && recovered(&monitor, &env, &truth, cfg) {
                t2r_s = Some(t1 - raised);
            }
        }

        let d_obs = env.obstacle_distance(truth.position);
        min_obstacle = min_obstacle.min(d_obs);
        if script.is_some_and(|s| s.is_active(t1)) {
            attack_min_obstacle = Some(attack_min_obstacle.map_or(d_obs, |m| m.min(d_obs)));
        }
        if env.collides(truth.position) {
            collision = true;
        }
        let ground_impact = profile.kind == VehicleKind::Quadcopter
            && truth.position.z <= 0.0
            && prev_truth.velocity.z < -IMPACT_SPEED_MPS;

        if cfg.harness.record_steps {
            steps.push(StepRecord {
                t,
                truth,
                estimate: est,
                frame,
                controller: if policy_drives {
                    Controller::Policy
                } else {
                    Controller::Tracker
                },
                action,
                reward,
                alarm: alarm.is_some(),
                margins: monitor.statuses().iter().map(|s| s.margin).collect(),
            });
        }

        let progress = plan.progress(est.position);
        if progress > best_progress + PROGRESS_STEP_M {
            best_progress = progress;
            last_progress_t = t1;
        }

        if (est.position - goal).norm() < ARRIVAL_RADIUS_M || progress >= route_length - 1e-9 {
            at_goal_since.get_or_insert(t1);
        } else {
            at_goal_since = None;
        }
        outcome = if collision || ground_impact {
            collision = true;
            Some(Outcome::Crash)
        } else if expired {
            Some(Outcome::ReconstructionExpired)
        } else if at_goal_since.is_some_and(|t0| t1 - t0 >= cfg.harness.arrival_settle_s - 1e-9) {
            Some(Outcome::Arrived)
        } else if pilot.handover.is_some_and(|(_, b)| t1 >= b - 1e-9)
            || (pilot.stop_on_violation && violated_so_far(&monitor, t1))
        {
            Some(Outcome::Truncated)
        } else if t1 - last_progress_t > cfg.harness.stall_timeout_s {
            Some(Outcome::Stall)
        } else if t1 >= time_limit - 1e-9 {
            Some(Outcome::TimeLimit)
        } else {
            None
        };
    }

    let outcome = outcome.expect("loop exits with an outcome");
    if !collision
        && !violated_so_far(&monitor, truth.time)
        && outcome != Outcome::ReconstructionExpired
    {
        if let Some(last) = transitions.last_mut() {
            last.bootstrap = true;
        }
    }
    let verdict = monitor.verdict();
    let critical_violations = monitor
        .specs()
        .iter()
        .filter(|s| s.critical && verdict.violated().contains(&s.group))
        .map(|s| s.group.clone())
        .fold(Vec::new(), |mut acc, g| {
            if !acc.contains(&g) {
                acc.push(g);
            }
            acc
        });
    let mut groups: Vec<&str> = monitor.specs().iter().map(|s| s.group.as_str()).collect();
    groups.sort_unstable();
    groups.dedup();
    let spec_groups = groups.len();
    let record = EpisodeRecord {
        scenario_id: cfg.id.clone(),
        seed: cfg.seed,
        recovery: mode,
        script: script.copied(),
        policy_hash: match policy {
            Some(p) if mode.needs_policy() => Some(p.hash()?),
            _ => None,
        },
        steps,
        events,
        verdict,
        critical_violations,
        outcome,
        completion_time_s: truth.time,
        final_error_m: (truth.position - goal).norm(),
        collision,
        stalled: matches!(outcome, Outcome::Stall | Outcome::ReconstructionExpired),
        t2r_s,
        total_reward,
        step_count,
        policy_steps,
        reconstructed_sq_error: rec_sq,
        raw_sq_error: raw_sq,
        reconstructed_samples: rec_n,
        max_raw_error_m: max_raw_error,
        min_obstacle_distance_m: min_obstacle,
        attack_min_obstacle_m: attack_min_obstacle,
        spec_groups,
    };
    Ok(EpisodeOutput {
        record,
        transitions,
        inputs,
    })
}

/// Whether a G-specification has failed or an F-specification's window
/// has closed unsatisfied by time `t`.
pub fn violated_so_far(monitor: &Monitor, t: f64) -> bool {
    monitor
        .specs()
        .iter()
        .zip(monitor.statuses())
        .any(|(spec, st)| match spec.operator {
            TemporalOp::G => st.violated_ever,
            TemporalOp::F => match spec.scope {
                Scope::Window { end, .. } => t > end && !st.satisfied_once,
                _ => false,
            },
        })
}

/// Every in-scope G-specification holds now and the vehicle is back near the route.
fn recovered(
    monitor: &Monitor,
    env: &Environment,
    truth: &VehicleState,
    cfg: &ScenarioConfig,
) -> bool {
    let specs_hold = monitor
        .specs()
        .iter()
        .zip(monitor.statuses())
        .filter(|(s, _)| s.operator == TemporalOp::G && s.scope.contains(truth.time))
        .all(|(_, st)| st.satisfied_now);
    specs_hold && env.plan.cross_track(truth.position) < cfg.harness.recovered_cross_track_m
}
