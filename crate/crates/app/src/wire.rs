//! JSON encoding of keys, rows and engine events.
//!
//! Ordinals travel as decimal strings, datetimes as ISO-8601 strings and
//! non-finite doubles as `"NaN"`, `"Infinity"` or `"-Infinity"`.

use keyscroll_core::dataset::{format_datetime, parse_datetime, KeySchema};
use keyscroll_core::numerators::{FieldValue, ScalarKind};
use keyscroll_core::{EngineEvent, Row, Window};
use serde_json::{json, Value};

pub fn value_to_json(value: &FieldValue) -> Value {
    match value {
        FieldValue::Bit(b) => Value::Bool(*b),
        FieldValue::Int32(v) => json!(v),
        FieldValue::Int64(v) => json!(v),
        FieldValue::Float64(v) if v.is_finite() => json!(v),
        FieldValue::Float64(v) if v.is_nan() => json!("NaN"),
        FieldValue::Float64(v) if *v > 0.0 => json!("Infinity"),
        FieldValue::Float64(_) => json!("-Infinity"),
        FieldValue::DateTime(ms) => Value::String(format_datetime(*ms)),
        FieldValue::Str(s) => Value::String(s.clone()),
    }
}

pub fn value_from_json(kind: ScalarKind, value: &Value) -> Result<FieldValue, String> {
    let bad = || format!("expected {kind}, got {value}");
    Ok(match (kind, value) {
        (ScalarKind::Bit, Value::Bool(b)) => FieldValue::Bit(*b),
        (ScalarKind::Bit, Value::Number(n)) => match n.as_u64() {
            Some(0) => FieldValue::Bit(false),
            Some(1) => FieldValue::Bit(true),
            _ => return Err(bad()),
        },
        (ScalarKind::Int32, Value::Number(n)) => {
            FieldValue::Int32(n.as_i64().and_then(|v| i32::try_from(v).ok()).ok_or_else(bad)?)
        }
        (ScalarKind::Int64, Value::Number(n)) => FieldValue::Int64(n.as_i64().ok_or_else(bad)?),
        (ScalarKind::Int64, Value::String(s)) => FieldValue::Int64(s.parse().map_err(|_| bad())?),
        (ScalarKind::Float64, Value::Number(n)) => FieldValue::Float64(n.as_f64().ok_or_else(bad)?),
        (ScalarKind::Float64, Value::String(s)) => FieldValue::Float64(s.parse().map_err(|_| bad())?),
        (ScalarKind::DateTime, Value::String(s)) => FieldValue::DateTime(parse_datetime(s).ok_or_else(bad)?),
        (ScalarKind::DateTime, Value::Number(n)) => FieldValue::DateTime(n.as_i64().ok_or_else(bad)?),
        (ScalarKind::Str, Value::String(s)) => FieldValue::Str(s.clone()),
        _ => return Err(bad()),
    })
}

/// Parses a key array in schema order and checks it against the codec.
pub fn keys_from_json(schema: &KeySchema, value: &Value) -> Result<Vec<FieldValue>, String> {
    let items = value.as_array().ok_or("keys must be an array")?;
    if items.len() != schema.arity() {
        return Err(format!("expected {} key values, got {}", schema.arity(), items.len()));
    }
    let keys = schema
        .fields()
        .iter()
        .zip(items)
        .map(|(f, v)| value_from_json(f.kind, v).map_err(|e| format!("{}: {e}", f.name)))
        .collect::<Result<Vec<_>, _>>()?;
    schema.encode(&keys).map_err(|e| e.to_string())?;
    Ok(keys)
}

pub fn row_to_json(schema: &KeySchema, row: &Row) -> Value {
    let ordinal = schema.encode(&row.key).map(|k| k.to_string()).ok();
    json!({
        "key": row.key.iter().map(value_to_json).collect::<Vec<_>>(),
        "ordinal": ordinal,
        "payload": row.payload,
    })
}

pub fn rows_to_json(schema: &KeySchema, rows: &[Row]) -> Value {
    Value::Array(rows.iter().map(|r| row_to_json(schema, r)).collect())
}

pub fn window_to_json(schema: &KeySchema, window: &Window) -> Value {
    json!({
        "rows": rows_to_json(schema, &window.rows),
        "lambda": window.lambda,
        "exact": window.exact,
        "generation": window.generation,
    })
}

pub fn event_to_json(schema: &KeySchema, event: &EngineEvent) -> Value {
    match event {
        EngineEvent::WindowChanged { generation, lambda, rows } => json!({
            "type": "WindowChanged",
            "generation": generation,
            "lambda": lambda,
            "rows": rows_to_json(schema, rows),
        }),
        EngineEvent::ThumbCorrected { generation, lambda } => json!({
            "type": "ThumbCorrected",
            "generation": generation,
            "lambda": lambda,
        }),
        EngineEvent::LambdaMaxChanged { lambda_max } => json!({
            "type": "LambdaMaxChanged",
            "lambda_max": lambda_max,
        }),
    }
}

pub fn schema_to_json(schema: &KeySchema) -> Value {
    Value::Array(
        schema
            .fields()
            .iter()
            .map(|f| json!({ "name": f.name, "kind": f.kind.name(), "max_length": f.max_length }))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use keyscroll_core::synth::{schema_for, Distribution};

    #[test]
    fn scalar_round_trips() {
        let cases = [
            (ScalarKind::Bit, FieldValue::Bit(true)),
            (ScalarKind::Int32, FieldValue::Int32(i32::MIN)),
            (ScalarKind::Int64, FieldValue::Int64(i64::MAX)),
            (ScalarKind::Float64, FieldValue::Float64(0.1 + 0.2)),
            (ScalarKind::Float64, FieldValue::Float64(-0.0)),
            (ScalarKind::Float64, FieldValue::Float64(f64::NAN)),
            (ScalarKind::Float64, FieldValue::Float64(f64::NEG_INFINITY)),
            (ScalarKind::DateTime, FieldValue::DateTime(1_700_000_000_123)),
            (ScalarKind::Str, FieldValue::Str("ул. Ленина".into())),
        ];
        for (kind, v) in cases {
            let text = value_to_json(&v).to_string();
            let back: Value = serde_json::from_str(&text).unwrap();
            assert_eq!(value_from_json(kind, &back).unwrap(), v, "{text}");
        }
        assert_eq!(value_to_json(&FieldValue::DateTime(0)), json!("1970-01-01T00:00:00.000Z"));
    }

    #[test]
    fn key_errors() {
        let schema = schema_for(Distribution::Composite);
        assert!(keys_from_json(&schema, &json!(["Ленина", 4])).is_ok());
        for bad in [
            json!("Ленина"),
            json!(["Ленина"]),
            json!(["Ленина", "4"]),
            json!(["Ленина", 4_000_000_000i64]),
            json!(["Lenina", 4]),
            json!(["очень длинная улица", 4]),
        ] {
            assert!(keys_from_json(&schema, &bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn rows_carry_decimal_ordinals() {
        let schema = schema_for(Distribution::Uniform);
        let row = Row::new(vec![FieldValue::Int32(0)], vec!["x".into()]);
        assert_eq!(
            row_to_json(&schema, &row),
            json!({ "key": [0], "ordinal": "2147483648", "payload": ["x"] })
        );
        let e = event_to_json(&schema, &EngineEvent::ThumbCorrected { generation: 3, lambda: 9 });
        assert_eq!(e["type"], "ThumbCorrected");
    }
}
