use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use serde_json::{json, Value};

/// Appends one JSON record per line.
pub fn append(path: &Path, command: &str, config: Value, metrics: Value) -> std::io::Result<()> {
    let seed = ["seed", "train_seed", "split_seed"]
        .iter()
        .filter_map(|k| config.get(*k).or_else(|| config.get("model").and_then(|m| m.get(*k))))
        .next()
        .cloned()
        .unwrap_or(Value::Null);
    let record = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "seed": seed,
        "metrics": metrics,
    });
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(file, "{record}")
}
