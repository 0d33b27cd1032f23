//! Specification-aware attack recovery for simulated robotic vehicles.
//!
//! Mission specifications written as flat G/F temporal formulas are turned
//! into shaped rewards, a discrete-action recovery policy is trained against
//! them, and missions are flown under scripted or learned sensor attacks with
//! state reconstruction bounding the damage.

pub mod adversarial;
pub mod detection;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod navigation;
pub mod policy;
pub mod reconstruction;
pub mod reward;
pub mod sensors;
pub mod stl;
pub mod training;
pub mod vehicle;
pub mod world;

pub use error::{Error, Result};
