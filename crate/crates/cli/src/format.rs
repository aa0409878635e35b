//! Number formatting: every float is printed with 10 significant digits.

use num_complex::Complex64;
use serde_json::{json, Value};

pub const SIGNIFICANT: usize = 10;

/// `v` with 10 significant digits; positional notation for moderate
/// magnitudes, scientific otherwise.
pub fn sig(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIGNIFICANT - 1, v);
    let exponent: i32 = sci
        .rsplit_once('e')
        .and_then(|(_, e)| e.parse().ok())
        .unwrap_or(0);
    if (-5..10).contains(&exponent) {
        let decimals = (SIGNIFICANT as i32 - 1 - exponent).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        sci
    }
}

pub fn sig_complex(z: Complex64) -> String {
    if z.im == 0.0 {
        return sig(z.re);
    }
    let sign = if z.im.is_sign_negative() { '-' } else { '+' };
    format!("{}{sign}{}i", sig(z.re), sig(z.im.abs()))
}

/// `v` rounded to 10 significant digits, as a JSON number (null if not finite).
pub fn num(v: f64) -> Value {
    if !v.is_finite() {
        return Value::Null;
    }
    let rounded: f64 = format!("{:.*e}", SIGNIFICANT - 1, v).parse().unwrap_or(v);
    json!(rounded)
}

pub fn pair(z: Complex64) -> Value {
    json!([num(z.re), num(z.im)])
}
