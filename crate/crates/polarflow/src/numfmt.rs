//! Fixed 6-significant-digit float formatting so emitted artifacts are
//! byte-stable across runs.

/// Format with 6 significant digits; plain decimal notation inside a sane
/// magnitude window, scientific outside it.
pub fn fmt_sig6(value: f64) -> String {
    if value == 0.0 {
        return "0.000000".to_string();
    }
    if !value.is_finite() {
        return value.to_string();
    }
    let exponent = value.abs().log10().floor() as i32;
    if (-4..6).contains(&exponent) {
        let decimals = (5 - exponent) as usize;
        format!("{value:.decimals$}")
    } else {
        format!("{value:.5e}")
    }
}

/// Round to 6 significant digits (used before JSON serialization).
pub fn round_sig6(value: f64) -> f64 {
    fmt_sig6(value).parse().unwrap_or(value)
}
