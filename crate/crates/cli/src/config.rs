//! `--config FILE`: JSON settings turned into flags placed before the
//! command-line flags, so explicit flags win.

use serde_json::Value;

fn flag_tokens(key: &str, value: &Value) -> Result<Vec<String>, String> {
    let flag = format!("--{}", key.replace('_', "-"));
    Ok(match value {
        Value::Bool(true) => vec![flag],
        Value::Bool(false) | Value::Null => vec![],
        Value::Number(n) => vec![flag, n.to_string()],
        Value::String(s) => vec![flag, s.clone()],
        Value::Array(items) => {
            let parts: Vec<String> = items
                .iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s.clone()),
                    Value::Number(n) => Ok(n.to_string()),
                    other => Err(format!("config key '{key}' has an unsupported list item {other}")),
                })
                .collect::<Result<_, _>>()?;
            vec![flag, parts.join(",")]
        }
        Value::Object(_) => return Err(format!("config key '{key}' must not be an object")),
    })
}

/// Removes `--config FILE` from `args` and splices the file's settings in
/// right after the subcommand name. A top-level object named after the
/// subcommand is used when present, otherwise the whole document.
pub fn expand_args(mut args: Vec<String>) -> Result<Vec<String>, String> {
    let Some(pos) = args.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(args);
    };
    let path = if let Some(p) = args[pos].strip_prefix("--config=") {
        let p = p.to_string();
        args.remove(pos);
        p
    } else {
        if pos + 1 >= args.len() {
            return Err("--config needs a file".into());
        }
        let p = args.remove(pos + 1);
        args.remove(pos);
        p
    };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("cannot read config {path}: {e}"))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| format!("config {path}: {e}"))?;
    let Value::Object(map) = doc else {
        return Err(format!("config {path} must be a JSON object"));
    };
    // first positional argument after the binary is the subcommand
    let sub = args
        .iter()
        .enumerate()
        .skip(1)
        .find(|(i, a)| !a.starts_with('-') && !matches!(args[i - 1].as_str(), "--log"))
        .map(|(i, _)| i);
    let Some(sub) = sub else {
        return Ok(args);
    };
    let section = match map.get(args[sub].as_str()) {
        Some(Value::Object(m)) => m.clone(),
        _ => map,
    };
    let mut inserted = Vec::new();
    for (k, v) in &section {
        inserted.extend(flag_tokens(k, v)?);
    }
    let tail = args.split_off(sub + 1);
    args.extend(inserted);
    args.extend(tail);
    Ok(args)
}
