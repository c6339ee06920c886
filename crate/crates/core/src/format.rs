//! Number formatting shared by every text output.

/// `x` rounded to 12 significant digits, printed in shortest form.
pub fn sig12(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    let mag = rounded.abs();
    if mag != 0.0 && !(1e-5..1e16).contains(&mag) {
        format!("{rounded:e}")
    } else {
        format!("{rounded}")
    }
}

/// A JSON number rounded to 12 significant digits.
pub fn json12(x: f64) -> serde_json::Value {
    let rounded: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    serde_json::Number::from_f64(rounded)
        .map(serde_json::Value::Number)
        .unwrap_or(serde_json::Value::Null)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounds_to_twelve_digits() {
        assert_eq!(sig12(std::f64::consts::SQRT_2 / std::f64::consts::PI), "0.450158158079");
        assert_eq!(sig12(0.25), "0.25");
        assert_eq!(sig12(-1.0), "-1");
        assert_eq!(sig12(1e-20 / 3.0), "3.33333333333e-21");
        assert_eq!(json12(2.0 / 3.0).to_string(), "0.666666666667");
    }
}
