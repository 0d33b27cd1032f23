use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rav_recover::geometry::Vec3;
use rav_recover::harness::metrics::{md_percent, rsr_percent, svr_percent, MetricsReport};
use rav_recover::harness::runner::mix_seed;
use rav_recover::harness::{run_mission, EnvironmentSpec, ScenarioConfig};
use rav_recover::policy::ppo::{critic_grad, surrogate_grad, surrogate_loss, Sample};
use rav_recover::policy::PolicyParams;
use rav_recover::reconstruction::{
    reconstruct_state, Checkpoint, CheckpointEntry, EstimatorModel, ReconstructionConfig,
};
use rav_recover::sensors::{Sensor, SensorFrame};
use rav_recover::training::{train, TrainingConfig};
use rav_recover::vehicle::{ActuatorSetpoint, VehicleKind, VehicleProfile, VehicleState};
use rav_recover::Error;

#[test]
fn metric_arithmetic() {
    assert_eq!(svr_percent(3, 12).unwrap(), 25.0);
    assert_eq!(svr_percent(0, 12).unwrap(), 0.0);
    assert!(matches!(svr_percent(1, 0), Err(Error::UndefinedMetric(_))));
    assert_eq!(rsr_percent(11, 12).unwrap(), 1100.0 / 12.0);
    assert!(matches!(rsr_percent(0, 0), Err(Error::UndefinedMetric(_))));
    assert_eq!(md_percent(110.0, 100.0, 95.0, 105.0).unwrap(), 10.0);
    assert_eq!(md_percent(100.0, 100.0, 95.0, 105.0).unwrap(), 0.0);
    assert_eq!(md_percent(90.0, 100.0, 95.0, 105.0).unwrap(), -10.0);
    assert!(md_percent(1.0, 1.0, 0.0, 0.0).is_err());
}

fn corridor(length_m: f64, cruise_speed_mps: f64) -> ScenarioConfig {
    ScenarioConfig {
        environment: EnvironmentSpec::Corridor {
            surface_gap_m: 7.5,
            length_m,
            altitude_m: 15.0,
            cruise_speed_mps,
        },
        ..Default::default()
    }
}

#[test]
fn mission_delay_sign_on_delayed_and_shortcut_missions() {
    let baseline: Vec<f64> = (0..5)
        .map(|i| {
            let mut cfg = corridor(80.0, 8.0);
            cfg.seed = mix_seed(1, i);
            run_mission(&cfg, None, None).unwrap().completion_time_s
        })
        .collect();
    let t_min = baseline.iter().copied().fold(f64::INFINITY, f64::min);
    let t_max = baseline.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut slow = corridor(80.0, 6.0);
    slow.seed = mix_seed(1, 0);
    let delayed = run_mission(&slow, None, None).unwrap();
    let mut short = corridor(60.0, 8.0);
    short.seed = mix_seed(1, 0);
    let shortcut = run_mission(&short, None, None).unwrap();
    assert!(delayed.verdict.is_compliant() && shortcut.verdict.is_compliant());
    assert!(md_percent(delayed.completion_time_s, baseline[0], t_min, t_max).unwrap() > 0.0);
    assert!(md_percent(shortcut.completion_time_s, baseline[0], t_min, t_max).unwrap() < 0.0);
}

#[test]
fn attack_free_tracker_missions_report_clean_metrics() {
    let records: Vec<_> = (0..4)
        .map(|i| {
            let mut cfg = ScenarioConfig::default();
            cfg.seed = mix_seed(2, i);
            run_mission(&cfg, None, None).unwrap()
        })
        .collect();
    let report = MetricsReport::new("tracker", &records, &[]).unwrap();
    assert_eq!(report.svr_percent, 0.0);
    assert_eq!(report.rsr_percent, 100.0);
    assert_eq!(report.collisions, 0);
}

fn cruising_checkpoint(v: Vec3, n: usize, dt: f64) -> Checkpoint {
    let mut cp = Checkpoint::new(100);
    let p0 = Vec3::new(0.0, 0.0, 15.0);
    for k in 0..n {
        let t = k as f64 * dt;
        let s = VehicleState::at(p0 + v * t, v, t);
        let command = ActuatorSetpoint {
            velocity: v,
            ..Default::default()
        };
        cp.push(
            CheckpointEntry {
                time: t,
                state: s,
                frame: SensorFrame::default(),
                command,
            },
            false,
        )
        .unwrap();
    }
    cp
}

#[test]
fn noise_free_dead_reckoning_matches_closed_form() {
    let profile = VehicleProfile::quadcopter();
    let dt = profile.dt_s;
    let model = EstimatorModel::nominal(&profile);
    let v = Vec3::new(8.0, 1.5, 0.5);
    let cp = cruising_checkpoint(v, 30, dt);
    let last = cp.last().unwrap().state;
    let steps = 25;
    let command = ActuatorSetpoint {
        velocity: v,
        ..Default::default()
    };
    let commands = vec![command; steps];
    for sensor in [Sensor::Gps, Sensor::Barometer] {
        let spoof = Vec3::new(40.0, -30.0, 12.0);
        let raw: Vec<VehicleState> = (1..=steps)
            .map(|k| {
                let t = last.time + k as f64 * dt;
                VehicleState::at(last.position + v * (k as f64 * dt) + spoof, v, t)
            })
            .collect();
        let cfg = ReconstructionConfig::default();
        let s = reconstruct_state(&model, &cp, &commands, &raw, sensor, steps, &cfg).unwrap();
        let want = last.position + v * (steps as f64 * dt);
        match sensor {
            Sensor::Gps => {
                assert!(
                    (s.position.x - want.x).abs() < 1e-9,
                    "{} vs {}",
                    s.position.x,
                    want.x
                );
                assert!((s.position.y - want.y).abs() < 1e-9);
            }
            _ => assert!(
                (s.position.z - want.z).abs() < 1e-9,
                "{} vs {}",
                s.position.z,
                want.z
            ),
        }
    }
}

fn random_samples(p: &PolicyParams, n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let features: Vec<f64> = (0..p.input_width)
                .map(|_| rng.random_range(-2.0..2.0))
                .collect();
            let probs = p.probabilities_of(&features);
            let action = rng.random_range(0..6);
            Sample {
                log_prob: probs[action].ln() - rng.random_range(-0.1..0.1),
                features,
                action,
                advantage: rng.random_range(-1.5..1.5),
                ret: rng.random_range(-3.0..3.0),
            }
        })
        .collect()
}

fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale: f64 = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
    diff / scale.max(1e-12)
}

#[test]
fn policy_gradients_match_central_differences() {
    let p = PolicyParams::new(24, VehicleKind::Quadcopter, 4);
    let samples = random_samples(&p, 16, 8);
    let (_, grad) = surrogate_grad(&p, &samples, 0.2, 0.01);
    let h = 1e-6;
    let numeric: Vec<f64> = (0..p.actor.params.len())
        .map(|i| {
            let mut q = p.clone();
            q.actor.params[i] += h;
            let up = surrogate_loss(&q, &samples, 0.2, 0.01);
            q.actor.params[i] -= 2.0 * h;
            let down = surrogate_loss(&q, &samples, 0.2, 0.01);
            (up - down) / (2.0 * h)
        })
        .collect();
    let err = relative_error(&grad, &numeric);
    assert!(err < 1e-4, "actor relative error {err}");

    let (_, grad) = critic_grad(&p, &samples);
    let numeric: Vec<f64> = (0..p.critic.params.len())
        .map(|i| {
            let mut q = p.clone();
            q.critic.params[i] += h;
            let up = critic_grad(&q, &samples).0;
            q.critic.params[i] -= 2.0 * h;
            let down = critic_grad(&q, &samples).0;
            (up - down) / (2.0 * h)
        })
        .collect();
    let err = relative_error(&grad, &numeric);
    assert!(err < 1e-4, "critic relative error {err}");
}

#[test]
fn sequential_training_and_missions_are_bit_identical() {
    let cfg = TrainingConfig {
        total_steps: 600,
        batch_episodes: 4,
        sequential: true,
        ..Default::default()
    };
    let (p1, r1) = train(&cfg, None).unwrap();
    let (p2, r2) = train(&cfg, None).unwrap();
    assert_eq!(
        serde_json::to_string(&r1).unwrap(),
        serde_json::to_string(&r2).unwrap()
    );
    assert_eq!(p1.hash().unwrap(), p2.hash().unwrap());

    let mut scenario = ScenarioConfig::default();
    scenario.recovery = rav_recover::harness::RecoveryMode::Proactive;
    scenario.seed = 77;
    let a = run_mission(&scenario, Some(&p1), None).unwrap();
    let b = run_mission(&scenario, Some(&p2), None).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
}
