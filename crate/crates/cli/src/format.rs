//! Decimal rendering with 12 significant digits.

pub const SIGNIFICANT_DIGITS: usize = 12;

/// Plain decimal (no exponent) with exactly 12 significant digits.
pub fn decimal(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return format!("0.{}", "0".repeat(SIGNIFICANT_DIGITS - 1));
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exponent) = sci.split_once('e').expect("scientific format");
    let exponent: i64 = exponent.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let point = 1 + exponent;
    let body = if point <= 0 {
        format!("0.{}{digits}", "0".repeat((-point) as usize))
    } else if point as usize >= digits.len() {
        format!("{digits}{}", "0".repeat(point as usize - digits.len()))
    } else {
        let (int, frac) = digits.split_at(point as usize);
        format!("{int}.{frac}")
    };
    if negative {
        format!("-{body}")
    } else {
        body
    }
}

/// Quotas joined with `;` so they stay inside one CSV field.
pub fn quotas(q: &[usize]) -> String {
    q.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_twelve_digits() {
        assert_eq!(decimal(1.0), "1.00000000000");
        assert_eq!(decimal(0.0), "0.00000000000");
        assert_eq!(decimal(-0.0), "0.00000000000");
        assert_eq!(decimal(1.5819767068693265), "1.58197670687");
        assert_eq!(decimal(0.000123456789012345), "0.000123456789012");
        assert_eq!(decimal(-2.5e-3), "-0.00250000000000");
        assert_eq!(decimal(123456.0), "123456.000000");
        assert_eq!(decimal(1e15), "1000000000000000");
        assert_eq!(decimal(9.9999999999999e-1), "1.00000000000");
        assert_eq!(decimal(f64::INFINITY), "inf");
        assert_eq!(decimal(f64::NAN), "nan");
    }

    #[test]
    fn parses_back_within_precision() {
        for x in [0.6967346701436833, 1.0764499487951879, 3.3e-7, 42.0] {
            let y: f64 = decimal(x).parse().unwrap();
            assert!((x - y).abs() <= x.abs() * 1e-11);
        }
    }

    #[test]
    fn joins_quotas() {
        assert_eq!(quotas(&[3, 2, 1]), "3;2;1");
        assert_eq!(quotas(&[7]), "7");
    }
}
