//! Fixed presentation of scores: text metrics with two decimals
//! (`30.90`), neural metrics with four decimals and no leading zero
//! (`.8606`, `-.0123`).

use crate::{Error, Result};

pub fn format_text_metric(value: f64) -> String {
    format!("{value:.2}")
}

pub fn format_neural(value: f64) -> String {
    let s = format!("{value:.4}");
    if let Some(rest) = s.strip_prefix("0.") {
        format!(".{rest}")
    } else if let Some(rest) = s.strip_prefix("-0.") {
        if rest.bytes().all(|b| b == b'0') {
            format!(".{rest}")
        } else {
            format!("-.{rest}")
        }
    } else {
        s
    }
}

pub fn parse_score(text: &str) -> Result<f64> {
    let v: f64 = text
        .trim()
        .parse()
        .map_err(|_| Error::Domain(format!("not a score: {text:?}")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Domain(format!("not a finite score: {text:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_row_round_trip() {
        for s in ["30.90", "57.55"] {
            assert_eq!(format_text_metric(parse_score(s).unwrap()), s);
        }
        for s in [".8606", ".1128", "-.0123"] {
            assert_eq!(format_neural(parse_score(s).unwrap()), s);
        }
    }

    #[test]
    fn neural_edge_cases() {
        assert_eq!(format_neural(0.0), ".0000");
        assert_eq!(format_neural(-0.00001), ".0000");
        assert_eq!(format_neural(1.0), "1.0000");
        assert_eq!(format_neural(0.11164), ".1116");
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_score("abc").is_err());
        assert!(parse_score("inf").is_err());
    }
}
