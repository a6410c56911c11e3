//! Decimal formatting with a fixed number of significant digits.
//!
//! Two renderings are used by the on-disk formats: plain positional decimals
//! (ARPA files, 7 digits) and scientific notation (N-best records and scorer
//! messages, 9 digits). Both parse back with `str::parse::<f64>`.

/// Formats `x` as a positional decimal with `digits` significant digits.
///
/// Trailing zeros after the decimal point are kept so that the number of
/// significant digits is visible in the output.
pub fn plain_sig(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let digits = digits.max(1);
    // Round through scientific notation first; this fixes the exponent after
    // rounding (9.9999999 -> 1.000000e1).
    let sci = format!("{:.*e}", digits - 1, x);
    let (_, exp) = sci.split_once('e').expect("scientific format has exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    format!("{:.*}", decimals, x)
}

/// Formats `x` in scientific notation with `digits` significant digits.
pub fn sci_sig(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    format!("{:.*e}", digits.max(1) - 1, x)
}

/// Rounds `x` to the value obtained by printing it with `digits`
/// significant digits and parsing it back.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    sci_sig(x, digits).parse().expect("formatted float parses")
}
