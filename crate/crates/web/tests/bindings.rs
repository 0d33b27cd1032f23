use rav_recover_web::{attack_preview_json, fly_mission_json, reward_curve_json};
use serde_json::Value;

const GPS: &str = r#"{"sensor":"gps","pattern":"constant","magnitude":20.0,"start_s":3.0,"duration_s":5.0,"class":"overt","direction":"+y"}"#;

#[test]
fn reward_curve_spans_threshold() {
    let v: Value = serde_json::from_str(&reward_curve_json("S1", 1.0, 61).unwrap()).unwrap();
    let y = v["y"].as_array().unwrap();
    assert_eq!(y.len(), 61);
    assert_eq!(y[30].as_f64().unwrap(), 0.0);
    assert_eq!(y[60].as_f64().unwrap(), 1.0);
    assert!(reward_curve_json("S99", 1.0, 10).is_err());
    assert!(reward_curve_json("S2", -1.0, 10).is_err());
}

#[test]
fn preview_is_zero_outside_window() {
    let v: Value = serde_json::from_str(&attack_preview_json(GPS, 0.5).unwrap()).unwrap();
    let bias: Vec<f64> = v["bias"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert_eq!(bias[0], 0.0);
    assert_eq!(bias[8], 20.0);
    assert_eq!(*bias.last().unwrap(), 0.0);
    assert!(attack_preview_json(GPS, 0.0).is_err());
}

#[test]
fn unprotected_gps_attack_violates() {
    let v: Value = serde_json::from_str(&fly_mission_json(GPS, "none", 3, "").unwrap()).unwrap();
    assert!(!v["violated"].as_array().unwrap().is_empty());
    assert_eq!(v["obstacles"].as_array().unwrap().len(), 3);
    assert!(fly_mission_json(GPS, "reactive", 3, "").is_err());
    let clean: Value = serde_json::from_str(&fly_mission_json("", "none", 3, "").unwrap()).unwrap();
    assert!(clean["violated"].as_array().unwrap().is_empty());
}
