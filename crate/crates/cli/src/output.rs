use std::path::Path;

use serde_json::Value;

use crate::CliError;

/// Formats with 6 significant digits, `%g` style.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    let rounded: f64 = format!("{x:.5e}").parse().unwrap_or(x);
    let exp = if rounded.abs() >= 10f64.powi(exp + 1) {
        exp + 1
    } else {
        exp
    };
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim(format!("{rounded:.decimals$}"))
    } else {
        let s = format!("{x:.5e}");
        let (mantissa, e) = s.split_once('e').expect("exponent form");
        format!("{}e{e}", trim(mantissa.to_string()))
    }
}

fn trim(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Writes the pretty-printed report atomically when a path is given.
pub fn write_report(path: Option<&Path>, report: &Value) -> Result<(), CliError> {
    if let Some(path) = path {
        let mut text = serde_json::to_string_pretty(report).map_err(rdp_audit::Error::from)?;
        text.push('\n');
        rdp_audit::audit::write_atomic(path, text.as_bytes())?;
        eprintln!("report written to {}", path.display());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::sig6;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(1.0), "1");
        assert_eq!(sig6(13.51292546497023), "13.5129");
        assert_eq!(sig6(0.000123456789), "0.000123457");
        assert_eq!(sig6(-2.0865), "-2.0865");
        assert_eq!(sig6(999999.7), "1e6");
        assert_eq!(sig6(1234567.0), "1.23457e6");
        assert_eq!(sig6(1e-7), "1e-7");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(9.999996), "10");
    }
}
