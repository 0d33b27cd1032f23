//! Reference reward forms written out per specification, independent of
//! the family table in the library.

#![allow(dead_code)]

/// Logistic function through `tanh`, so it shares no code path with the
/// library's exponential form.
pub fn logistic(x: f64) -> f64 {
    0.5 * (1.0 + (0.5 * x).tanh())
}

/// Reference reward of a quadcopter specification, keyed by id. `f` is the
/// condition value, `v` the second clearance of the geofence.
pub fn reference_rho(id: &str, f: f64, v: f64, a: f64, k: f64) -> f64 {
    match id {
        // Collision clearance: saturates at 1 once clear, signed below.
        "S1" => {
            if f > a {
                1.0
            } else {
                (0.5 * k * (f - a)).tanh()
            }
        }
        "S6" => {
            if f > a {
                1.0
            } else {
                logistic(k * (f - a))
            }
        }
        // Lower bounds.
        "S3" | "S7" | "S10" => {
            if f < a {
                0.0
            } else {
                logistic(k * (f - a))
            }
        }
        // Upper bounds.
        "S2" | "S4" | "S5" | "S8" | "S9" | "S11" => {
            if f > a {
                0.0
            } else {
                logistic(k * (a - f))
            }
        }
        "S12" => {
            if f < a || v < a {
                0.0
            } else {
                logistic(k * (f - a)) * logistic(k * (v - a))
            }
        }
        other => panic!("no reference form for {other}"),
    }
}
