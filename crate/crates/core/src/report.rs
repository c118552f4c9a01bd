//! Canonical JSON writer for reports and system documents.
//!
//! serde_json serializes floats in shortest-round-trip form, which is not
//! stable across representations of the same value and does not pin a digit
//! count. Reports here need fixed key order and floats at 17 significant
//! digits, so the writer is explicit.

/// A JSON value with ordered object keys.
#[derive(Clone, Debug)]
pub enum JsonValue {
    Null,
    Bool(bool),
    Int(i64),
    Num(f64),
    Str(String),
    Arr(Vec<JsonValue>),
    Obj(Vec<(String, JsonValue)>),
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out
}

/// 17 significant digits; round-trips every finite f64 exactly.
pub fn format_f64(x: f64) -> String {
    if x.is_nan() {
        return "null".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "1e400".into() } else { "-1e400".into() };
    }
    // integers that fit exactly keep an integral look for readability
    if x == x.trunc() && x.abs() < 1e15 {
        return format!("{:.1}", x);
    }
    format!("{:.16e}", x)
}

impl JsonValue {
    pub fn compact(&self) -> String {
        match self {
            JsonValue::Null => "null".into(),
            JsonValue::Bool(b) => b.to_string(),
            JsonValue::Int(i) => i.to_string(),
            JsonValue::Num(x) => format_f64(*x),
            JsonValue::Str(s) => format!("\"{}\"", escape(s)),
            JsonValue::Arr(items) => {
                let inner: Vec<String> = items.iter().map(|v| v.compact()).collect();
                format!("[{}]", inner.join(","))
            }
            JsonValue::Obj(fields) => {
                let inner: Vec<String> = fields
                    .iter()
                    .map(|(k, v)| format!("\"{}\":{}", escape(k), v.compact()))
                    .collect();
                format!("{{{}}}", inner.join(","))
            }
        }
    }

    pub fn pretty(&self, indent: usize) -> String {
        let pad = "  ".repeat(indent);
        let pad_in = "  ".repeat(indent + 1);
        match self {
            JsonValue::Arr(items) if !items.is_empty() => {
                let inner: Vec<String> =
                    items.iter().map(|v| format!("{pad_in}{}", v.pretty(indent + 1))).collect();
                format!("[\n{}\n{pad}]", inner.join(",\n"))
            }
            JsonValue::Obj(fields) if !fields.is_empty() => {
                let inner: Vec<String> = fields
                    .iter()
                    .map(|(k, v)| format!("{pad_in}\"{}\": {}", escape(k), v.pretty(indent + 1)))
                    .collect();
                format!("{{\n{}\n{pad}}}", inner.join(",\n"))
            }
            other => other.compact(),
        }
    }
}

pub fn obj(fields: Vec<(&str, JsonValue)>) -> JsonValue {
    JsonValue::Obj(fields.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
}

pub fn num_arr(xs: &[f64]) -> JsonValue {
    JsonValue::Arr(xs.iter().map(|&x| JsonValue::Num(x)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trip_exact() {
        for &x in &[std::f64::consts::PI, 1.0 / 3.0, 1e-300, -2.5, 0.1 + 0.2] {
            let s = format_f64(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn object_keys_keep_order() {
        let v = obj(vec![
            ("zeta", JsonValue::Int(1)),
            ("alpha", JsonValue::Bool(true)),
        ]);
        let s = v.compact();
        assert!(s.find("zeta").unwrap() < s.find("alpha").unwrap());
    }

    #[test]
    fn valid_json_for_serde() {
        let v = obj(vec![
            ("a", JsonValue::Num(0.1)),
            ("b", JsonValue::Arr(vec![JsonValue::Null, JsonValue::Str("x\"y".into())])),
        ]);
        let parsed: serde_json::Value = serde_json::from_str(&v.pretty(0)).unwrap();
        assert!(parsed.get("a").is_some());
    }
}
