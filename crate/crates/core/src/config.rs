//! Flat `key=value` text used for run configs and checkpoint headers.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are unique.
//! Values are written with Rust's shortest round-trip float formatting,
//! so parse → write reproduces the text of a canonical document.

use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {0}: expected key=value")]
    Syntax(usize),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{0}` given twice")]
    Duplicate(String),
    #[error("invalid value `{value}` for `{key}`")]
    InvalidValue { key: String, value: String },
}

/// Splits `text` into ordered `(key, value)` pairs with whitespace trimmed.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax(i + 1))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError::Syntax(i + 1));
        }
        if out.iter().any(|(seen, _)| seen == k) {
            return Err(ConfigError::Duplicate(k.to_string()));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

pub fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
    })
}

/// Renders pairs one per line, in the given order.
pub fn render(pairs: &[(&str, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let pairs = parse_pairs("# run\n\n lr = 0.001\nseed=3\n").unwrap();
        assert_eq!(pairs, vec![("lr".into(), "0.001".into()), ("seed".into(), "3".into())]);
    }

    #[test]
    fn rejects_bad_lines() {
        assert_eq!(parse_pairs("a=1\nnoequals"), Err(ConfigError::Syntax(2)));
        assert_eq!(parse_pairs("=1"), Err(ConfigError::Syntax(1)));
        assert_eq!(parse_pairs("a=1\na=2"), Err(ConfigError::Duplicate("a".into())));
        assert!(parse_value::<f64>("lr", "fast").is_err());
    }

    #[test]
    fn float_text_roundtrips() {
        for v in [0.1, 1e-300, 0.30000000000000004, 123456.789] {
            let s = render(&[("x", v.to_string())]);
            let pairs = parse_pairs(&s).unwrap();
            assert_eq!(parse_value::<f64>("x", &pairs[0].1).unwrap(), v);
        }
    }
}
