//! Merging `--config` JSON with command-line flags. Config keys use the
//! flag names; flags win.

use std::fs;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

/// Reads `--config`: inline JSON when it starts with `{`, else a file path.
pub fn load(arg: Option<&str>) -> CliResult<Map<String, Value>> {
    let Some(arg) = arg else {
        return Ok(Map::new());
    };
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        fs::read_to_string(arg).map_err(|e| CliError::io(format!("{arg}: {e}")))?
    };
    match serde_json::from_str(&text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(CliError::config("config must be a JSON object")),
        Err(e) => Err(CliError::config(format!("malformed config JSON: {e}"))),
    }
}

pub fn merge<T: Serialize + DeserializeOwned + Default>(flags: &T, config: Map<String, Value>) -> CliResult<T> {
    let known = match serde_json::to_value(T::default()) {
        Ok(Value::Object(m)) => m,
        _ => unreachable!("parameter structs serialize to objects"),
    };
    if let Some(key) = config.keys().find(|k| !known.contains_key(*k)) {
        return Err(CliError::config(format!("unknown config key {key:?}")));
    }
    let mut merged = config;
    if let Ok(Value::Object(given)) = serde_json::to_value(flags) {
        merged.extend(given.into_iter().filter(|(_, v)| !v.is_null()));
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::config(format!("invalid config: {e}")))
}

pub fn require<T: Clone>(value: &Option<T>, name: &str) -> CliResult<T> {
    value.clone().ok_or_else(|| CliError::config(format!("missing required parameter --{name}")))
}

/// 0.667 and friends stand for ⅔ in kind lists and exponent flags.
pub fn exponent(q: f64) -> f64 {
    if (q - 2.0 / 3.0).abs() < 1e-3 {
        2.0 / 3.0
    } else {
        q
    }
}

pub fn numbers(text: &str, what: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::config(format!("{what}: cannot parse {t:?} as a number")))
        })
        .collect()
}

/// `2,1;2,0.5` → [(2, 1), (2, 0.5)].
pub fn kinds(text: &str) -> CliResult<Vec<(f64, f64)>> {
    text.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| match numbers(pair, "kinds")?.as_slice() {
            [p, q] => Ok((*p, exponent(*q))),
            _ => Err(CliError::config(format!("kinds: expected p,q but got {pair:?}"))),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Default, Serialize, Deserialize, PartialEq)]
    #[serde(rename_all = "kebab-case")]
    struct P {
        q: Option<f64>,
        max_iter: Option<usize>,
    }

    #[test]
    fn flags_override_config() {
        let cfg = load(Some(r#"{"q": 1, "max-iter": 5}"#)).unwrap();
        let got = merge(&P { q: Some(0.5), max_iter: None }, cfg).unwrap();
        assert_eq!(got, P { q: Some(0.5), max_iter: Some(5) });
    }

    #[test]
    fn unknown_keys_rejected() {
        let cfg = load(Some(r#"{"qq": 1}"#)).unwrap();
        assert!(merge(&P::default(), cfg).is_err());
        assert!(load(Some("{oops")).is_err());
    }

    #[test]
    fn kind_lists() {
        assert_eq!(kinds("2,1;1,0.667").unwrap(), vec![(2.0, 1.0), (1.0, 2.0 / 3.0)]);
        assert!(kinds("2;1,1").is_err());
    }
}
