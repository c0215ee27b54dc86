//! Deterministic number formatting and output formats.

use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Text,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "text" => Ok(Format::Text),
            _ => Err(format!("unknown format {s:?} (csv, json or text)")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Text => "text",
        })
    }
}

/// Fixed-point text with at least six significant digits; scientific
/// notation below 1e-4.
pub fn num(x: f64) -> String {
    if x == 0.0 {
        return "0.000000".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let mag = x.abs().log10().floor() as i32;
    if mag < -4 {
        format!("{x:.6e}")
    } else {
        let decimals = (5 - mag).max(6) as usize;
        format!("{x:.decimals$}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(num(0.0), "0.000000");
        assert_eq!(num(6.84), "6.840000");
        assert_eq!(num(303.37), "303.370000");
        assert_eq!(num(-0.0021963), "-0.00219630");
        assert_eq!(num(2.5e-6), "2.500000e-6");
    }

    #[test]
    fn formats_parse() {
        for f in [Format::Csv, Format::Json, Format::Text] {
            assert_eq!(f.to_string().parse::<Format>(), Ok(f));
        }
        assert!("xml".parse::<Format>().is_err());
    }
}
