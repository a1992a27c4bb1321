//! Canonical JSON rendering for persistence and diffing.
//!
//! Rules: fields in declared order (we build on serde_json's `preserve_order`
//! feature), no insignificant whitespace, floats rendered with up to 6
//! significant digits and no trailing zeros, integers rendered exactly.
//! Record logs write one canonical line per record, LF-terminated.

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

/// Render a float with at most 6 significant digits, no trailing zeros,
/// no exponent.
pub fn format_f64(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).clamp(0, 17) as usize;
    let mut s = format!("{:.*}", decimals, x);
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    // "-0" collapses to "0" after a sub-precision negative rounds away.
    if s == "-0" {
        s = "0".to_string();
    }
    s
}

fn write_value(out: &mut String, v: &Value) -> Result<()> {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else if let Some(f) = n.as_f64() {
                if !f.is_finite() {
                    return Err(Error::Contract(format!("non-finite number {f} in canonical JSON")));
                }
                out.push_str(&format_f64(f));
            }
        }
        Value::String(s) => {
            out.push_str(&serde_json::to_string(s)?);
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(out, item)?;
            }
            out.push(']');
        }
        Value::Object(map) => {
            out.push('{');
            for (i, (k, item)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k)?);
                out.push(':');
                write_value(out, item)?;
            }
            out.push('}');
        }
    }
    Ok(())
}

/// Canonical compact rendering of a JSON value.
pub fn value_to_canonical(v: &Value) -> Result<String> {
    let mut out = String::new();
    write_value(&mut out, v)?;
    Ok(out)
}

/// Canonical rendering of any serializable value. Field order follows the
/// type's declaration order.
pub fn to_canonical_string<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    value_to_canonical(&v)
}
