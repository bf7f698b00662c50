//! Rendering helpers: every float is printed with 9 significant digits so
//! reruns diff cleanly and golden tests can pin exact bytes.

/// 9-significant-digit formatting: plain decimal for exponents in [-4, 8],
/// scientific otherwise.
pub fn fmt9(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return "0.00000000".into();
    }
    let sci = format!("{x:e}");
    let exp: i32 = sci
        .split('e')
        .nth(1)
        .expect("float in scientific notation")
        .parse()
        .expect("integer exponent");
    if (-4..=8).contains(&exp) {
        format!("{:.*}", (8 - exp) as usize, x)
    } else {
        format!("{x:.8e}")
    }
}

/// `fmt9`, or the empty string for a missing value (CSV cells).
pub fn fmt9_opt(x: Option<f64>) -> String {
    x.map(fmt9).unwrap_or_default()
}

/// `fmt9`, or `null` for a missing value (JSON fields).
pub fn json9_opt(x: Option<f64>) -> String {
    x.map(fmt9).unwrap_or_else(|| "null".into())
}

/// Renders a JSON array of f64 on one line.
pub fn json_array(values: &[f64]) -> String {
    let items: Vec<String> = values.iter().map(|&v| fmt9(v)).collect();
    format!("[{}]", items.join(", "))
}
