//! Bundled reference triangles.

use crate::triangle::{parse_triangle, RunOffTriangle};

/// Australian motor bodily injury claim counts, accident years 1993-1999.
pub const AUS_MOTOR_BI_CSV: &str = include_str!("../data/aus_motor_bi.csv");

/// Taylor-Ashe incremental paid amounts (integer valued).
pub const TAYLOR_ASHE_CSV: &str = include_str!("../data/taylor_ashe.csv");

pub fn aus_motor_bi() -> RunOffTriangle {
    parse_triangle(AUS_MOTOR_BI_CSV).expect("bundled triangle is valid")
}

pub fn taylor_ashe() -> RunOffTriangle {
    parse_triangle(TAYLOR_ASHE_CSV).expect("bundled triangle is valid")
}
