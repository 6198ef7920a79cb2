use std::fs;

use serde_json::Value;

use crate::CliError;

/// Parses `--input`: either `x1,x2,...` or `file.json#k`, where the file holds
/// an array of points or an object with an `inputs` array.
pub fn parse_input(spec: &str) -> Result<Vec<f64>, CliError> {
    if let Some((path, index)) = spec.rsplit_once('#') {
        let k: usize = index.parse().map_err(|_| CliError::usage(format!("bad input index {index:?}")))?;
        let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read {path}: {e}")))?;
        let value: Value = serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{path}: {e}")))?;
        let list = match &value {
            Value::Array(a) => a,
            Value::Object(o) => o
                .get("inputs")
                .and_then(Value::as_array)
                .ok_or_else(|| CliError::usage(format!("{path}: no `inputs` array")))?,
            _ => return Err(CliError::usage(format!("{path}: expected an array of inputs"))),
        };
        let point = list
            .get(k)
            .ok_or_else(|| CliError::usage(format!("{path}: index {k} out of range ({} inputs)", list.len())))?;
        return serde_json::from_value(point.clone()).map_err(|e| CliError::usage(format!("{path}#{k}: {e}")));
    }
    spec.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| CliError::usage(format!("bad input value {t:?}"))))
        .collect()
}
