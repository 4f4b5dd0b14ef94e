//! Report emission.
//!
//! JSON is the machine contract: reports are built with sorted keys and
//! printed byte-identically for identical inputs.  The table renderer is
//! presentation only and carries no stability promise.

use clap::ValueEnum;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
}

/// Prints a finished report to stdout in the requested format.
pub fn emit(format: Format, report: &Value) {
    match format {
        Format::Json => {
            println!(
                "{}",
                serde_json::to_string_pretty(report).expect("reports serialize")
            );
        }
        Format::Table => print!("{}", table(report)),
    }
}

fn table(report: &Value) -> String {
    let mut out = String::new();
    match report {
        Value::Object(fields) => {
            for (key, value) in fields {
                match value {
                    Value::Array(items)
                        if !items.is_empty() && items.iter().all(Value::is_object) =>
                    {
                        out.push_str(key);
                        out.push_str(":\n");
                        out.push_str(&columns(items));
                    }
                    Value::Array(items) if !items.is_empty() => {
                        out.push_str(key);
                        out.push_str(":\n");
                        for item in items {
                            out.push_str(&format!("  - {}\n", inline(item)));
                        }
                    }
                    other => out.push_str(&format!("{key}: {}\n", inline(other))),
                }
            }
        }
        other => out.push_str(&format!("{}\n", inline(other))),
    }
    out
}

/// Renders an array of uniform objects as aligned columns, headed by the
/// keys of the first row.
fn columns(items: &[Value]) -> String {
    let keys: Vec<&String> = match items[0].as_object() {
        Some(fields) => fields.keys().collect(),
        None => return String::new(),
    };
    let cell = |item: &Value, key: &String| item.get(key).map(inline).unwrap_or_default();
    let mut widths: Vec<usize> = keys.iter().map(|k| k.len()).collect();
    for item in items {
        for (j, key) in keys.iter().enumerate() {
            widths[j] = widths[j].max(cell(item, key).len());
        }
    }
    let mut out = String::from(" ");
    for (j, key) in keys.iter().enumerate() {
        out.push_str(&format!(" {:w$}", key, w = widths[j]));
    }
    out.push('\n');
    for item in items {
        out.push(' ');
        for (j, key) in keys.iter().enumerate() {
            out.push_str(&format!(" {:w$}", cell(item, key), w = widths[j]));
        }
        while out.ends_with(' ') {
            out.pop();
        }
        out.push('\n');
    }
    out
}

fn inline(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        Value::Null => "-".into(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn tables_align_object_arrays() {
        let report = json!({
            "value": 3,
            "levels": [
                {"a": 1, "mu": -1},
                {"a": 200, "mu": 4},
            ],
            "trace": ["step one"],
        });
        let text = table(&report);
        assert!(text.contains("value: 3"));
        assert!(text.contains("a   mu"));
        assert!(text.contains("200 4"));
        assert!(text.contains("  - step one"));
    }
}
