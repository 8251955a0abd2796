pub mod aggregation;
pub mod confidence;
pub mod data;
pub mod error;
pub mod experiment;
pub mod model;
pub mod numerics;
pub mod queue;
pub mod trainer;

pub use error::{Error, Result};

/// Formats a float with nine significant digits, as used by every text output.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    format!("{rounded}")
}
