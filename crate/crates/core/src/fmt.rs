//! Locale-independent number printing with a fixed count of significant digits.

/// Significant digits used for every number written by this crate.
pub const SIG_DIGITS: usize = 12;

/// Formats `value` with `digits` significant digits.
///
/// Plain positional notation is used for decimal exponents in `-5..15`;
/// outside that range the output switches to `1.23e-7` style. Zero prints as
/// `0`, and non-finite values print as `NaN`, `inf` or `-inf`.
pub fn format_sig(value: f64, digits: usize) -> String {
    assert!(digits >= 1, "need at least one significant digit");
    if value == 0.0 {
        return "0".to_string();
    }
    if value.is_nan() {
        return "NaN".to_string();
    }
    if value.is_infinite() {
        return if value > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    // `{:e}` rounds correctly and tells us the exponent after rounding.
    let sci = format!("{:.*e}", digits - 1, value);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..15).contains(&exp) {
        return sci;
    }
    let negative = mantissa.starts_with('-');
    let mantissa_digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let mut out = String::new();
    if negative {
        out.push('-');
    }
    if exp < 0 {
        out.push_str("0.");
        for _ in 0..(-exp - 1) {
            out.push('0');
        }
        out.push_str(&mantissa_digits);
    } else {
        let int_len = exp as usize + 1;
        if mantissa_digits.len() <= int_len {
            out.push_str(&mantissa_digits);
            for _ in mantissa_digits.len()..int_len {
                out.push('0');
            }
        } else {
            out.push_str(&mantissa_digits[..int_len]);
            out.push('.');
            out.push_str(&mantissa_digits[int_len..]);
        }
    }
    out
}

/// [`format_sig`] at [`SIG_DIGITS`].
pub fn num(value: f64) -> String {
    format_sig(value, SIG_DIGITS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_digits() {
        assert_eq!(num(std::f64::consts::LN_2), "0.693147180560");
        assert_eq!(num(1.0), "1.00000000000");
        assert_eq!(num(-2.5), "-2.50000000000");
        assert_eq!(num(0.0), "0");
        assert_eq!(num(123456.0), "123456.000000");
        assert_eq!(num(0.000123), "0.000123000000000");
        assert_eq!(num(1e-9), "1.00000000000e-9");
        assert_eq!(num(9.9999999999996), "10.0000000000");
    }

    #[test]
    fn parses_back_to_printed_precision() {
        for &v in &[std::f64::consts::PI, -1.0e-7, 6.02214076e23, 0.1 + 0.2] {
            let back: f64 = num(v).parse().unwrap();
            assert!(((back - v) / v).abs() < 1e-11, "{v} -> {back}");
        }
    }
}
