//! Locale-independent number formatting shared by CSV and table output.

/// Formats `x` with nine significant digits.
///
/// Plain decimal notation is used for magnitudes in `[1e-4, 1e9)`, scientific
/// notation otherwise. Trailing zeros are kept so columns line up.
pub fn sig9(x: f64) -> String {
    sig(x, 9)
}

pub fn sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let digits = digits.max(1);
    let mag = x.abs();
    if (1e-4..1e9).contains(&mag) {
        // Round first, then look at the exponent of the rounded value so that
        // 9.9999999999 does not print with one digit too many.
        let sci = format!("{:.*e}", digits - 1, x);
        let exp: i32 = sci.split('e').nth(1).and_then(|e| e.parse().ok()).unwrap_or(0);
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        format!("{:.*}", decimals, x)
    } else {
        format!("{:.*e}", digits - 1, x)
    }
}
