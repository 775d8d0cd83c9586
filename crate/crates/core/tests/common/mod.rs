#![allow(dead_code)]

use recon_core::analytic::{SchemeConfig, SpatialWeights};
use recon_core::model::{self, SensorField, SourceParams};
use recon_core::spt::{self, LinkParams};

pub const FIELD_SEED: u64 = 42;
pub const HALF_WIDTH_M: f64 = 10.0;
pub const SENSORS: usize = 5;
pub const PERIOD_S: f64 = 0.15;

pub fn source() -> SourceParams {
    SourceParams::new(1.0, 5.0, 2.0, 0.01).unwrap()
}

pub fn field() -> SensorField {
    model::place_sensors(
        SENSORS,
        HALF_WIDTH_M,
        model::inscribed_disc_density(SENSORS, HALF_WIDTH_M),
        FIELD_SEED,
    )
    .unwrap()
}

pub fn weights() -> SpatialWeights {
    SpatialWeights::from_field(&field(), source().b_per_m)
}

pub fn link_db(db: f64) -> LinkParams {
    LinkParams::new(160.0, 80.0, 1e-4, spt::db_to_linear(db)).unwrap()
}

pub fn link() -> LinkParams {
    link_db(5.0)
}

pub fn syn() -> SchemeConfig {
    SchemeConfig::syn(PERIOD_S, SENSORS, 0)
}

pub fn asyn(h: f64) -> SchemeConfig {
    SchemeConfig::asyn(PERIOD_S, h, SENSORS, 0)
}

/// Prints one verdict line and returns the verdict.
pub fn verdict(id: &str, pass: bool, detail: &str) -> bool {
    println!("criterion {id:<5} [{}] {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Five-point central difference.
pub fn derivative(f: impl Fn(f64) -> f64, x: f64, step: f64) -> f64 {
    (-f(x + 2.0 * step) + 8.0 * f(x + step) - 8.0 * f(x - step) + f(x - 2.0 * step)) / (12.0 * step)
}
