//! Report rendering. Reports are built as JSON trees; CSV flattens them with
//! dotted keys and text indents them.

use std::fmt::Write as _;

use serde_json::{json, Map, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

/// A float as JSON; non-finite values become strings.
pub fn float(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x.is_nan() {
        json!("nan")
    } else if x > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

pub fn analytic(x: f64) -> Value {
    json!({ "value": float(x), "provenance": "analytic" })
}

pub fn heuristic(x: f64) -> Value {
    json!({ "value": float(x), "provenance": "heuristic" })
}

pub fn mc(x: f64, se: f64) -> Value {
    json!({ "value": float(x), "std_error": float(se), "provenance": "mc" })
}

pub fn floats(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|x| float(*x)).collect())
}

pub fn render(report: &Value, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("reports serialize");
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut rows = Vec::new();
            flatten("", report, &mut rows);
            let mut s = String::from("key,value\n");
            for (k, v) in rows {
                let _ = writeln!(s, "{},{}", csv_field(&k), csv_field(&v));
            }
            s
        }
        Format::Text => {
            let mut s = String::new();
            text(report, 0, &mut s);
            s
        }
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::Number(n) => match n.as_f64() {
            Some(x) if n.is_f64() => format!("{x:.16e}"),
            _ => n.to_string(),
        },
        Value::String(s) => s.clone(),
        Value::Bool(b) => b.to_string(),
        Value::Null => String::new(),
        _ => unreachable!("containers are flattened"),
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Object(m) => m.iter().for_each(|(k, v)| flatten(&key(k), v, out)),
        Value::Array(a) => a
            .iter()
            .enumerate()
            .for_each(|(i, v)| flatten(&key(&i.to_string()), v, out)),
        _ => out.push((prefix.to_string(), scalar(v))),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// A tagged number `{value, provenance[, std_error]}` on one line.
fn tagged(m: &Map<String, Value>) -> Option<String> {
    let p = m.get("provenance")?.as_str()?;
    let v = m.get("value")?;
    let keys = if m.contains_key("std_error") { 3 } else { 2 };
    if m.len() != keys {
        return None;
    }
    let num = |v: &Value| match v.as_f64() {
        Some(x) => format!("{x:.10}"),
        None => scalar(v),
    };
    Some(match m.get("std_error") {
        Some(se) => format!("{} ± {} [{p}]", num(v), num(se)),
        None => format!("{} [{p}]", num(v)),
    })
}

fn text(v: &Value, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    match v {
        Value::Object(m) => {
            for (k, v) in m.iter().filter(|(_, v)| !v.is_null()) {
                match v {
                    Value::Object(inner) if tagged(inner).is_some() => {
                        let _ = writeln!(out, "{pad}{k}: {}", tagged(inner).unwrap());
                    }
                    Value::Object(_) | Value::Array(_) if !is_flat_array(v) => {
                        let _ = writeln!(out, "{pad}{k}:");
                        text(v, depth + 1, out);
                    }
                    _ => {
                        let _ = writeln!(out, "{pad}{k}: {}", inline(v));
                    }
                }
            }
        }
        Value::Array(a) => {
            for (i, v) in a.iter().enumerate() {
                if is_flat_array(v) || !(v.is_object() || v.is_array()) {
                    let _ = writeln!(out, "{pad}- {}", inline(v));
                } else {
                    let _ = writeln!(out, "{pad}- [{i}]");
                    text(v, depth + 1, out);
                }
            }
        }
        _ => {
            let _ = writeln!(out, "{pad}{}", inline(v));
        }
    }
}

fn is_flat_array(v: &Value) -> bool {
    matches!(v, Value::Array(a) if a.iter().all(|x| !(x.is_object() || x.is_array())))
}

fn inline(v: &Value) -> String {
    match v {
        Value::Array(a) => format!(
            "[{}]",
            a.iter().map(inline).collect::<Vec<_>>().join(", ")
        ),
        Value::Number(n) => match n.as_f64() {
            Some(x) if n.is_f64() && x != 0.0 && !(1e-4..1e7).contains(&x.abs()) => format!("{x:e}"),
            Some(x) if n.is_f64() => format!("{x}"),
            _ => n.to_string(),
        },
        other => scalar(other),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_uses_dotted_keys_and_full_precision() {
        let r = json!({"a": {"b": [analytic(0.1), 2]}, "s": "x,y"});
        let csv = render(&r, Format::Csv);
        assert!(csv.contains("a.b.0.value,1.0000000000000001e-1\n"));
        assert!(csv.contains("a.b.0.provenance,analytic\n"));
        assert!(csv.contains("a.b.1,2\n"));
        assert!(csv.contains("s,\"x,y\"\n"));
    }

    #[test]
    fn non_finite_values_are_strings() {
        assert_eq!(float(f64::INFINITY), json!("inf"));
        assert_eq!(float(1.5), json!(1.5));
    }

    #[test]
    fn text_shows_provenance() {
        let t = render(&json!({"v0": mc(0.5, 0.01)}), Format::Text);
        assert_eq!(t, "v0: 0.5000000000 ± 0.0100000000 [mc]\n");
    }
}
