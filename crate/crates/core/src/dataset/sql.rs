//! SQL text for the four queries the engine issues, for use against a live
//! DBMS.
//!
//! Keyset predicates are rendered in nested form,
//! `k1 >= K1 AND (k1 > K1 OR (k2 >= K2 AND (k2 > K2 OR (k3 >= K3))))`, so
//! that the top-level connective is always `AND` and a composite index on
//! `(k1, k2, ...)` can serve the query as a range scan.

use std::fmt::Write;

use super::{DatasetError, Direction, KeySchema};
use crate::numerators::FieldValue;

/// Comparison the predicate expresses between the row key and the bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    /// key >= bound
    AtLeast,
    /// key > bound
    After,
    /// key <= bound
    AtMost,
    /// key < bound
    Before,
}

impl Bound {
    fn ops(self) -> (&'static str, &'static str, &'static str) {
        // (outer, inner strict, last field)
        match self {
            Bound::AtLeast => (">=", ">", ">="),
            Bound::After => (">=", ">", ">"),
            Bound::AtMost => ("<=", "<", "<="),
            Bound::Before => ("<=", "<", "<"),
        }
    }
}

pub fn quote_ident(name: &str) -> String {
    let simple = name
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_lowercase() || c == '_')
        && name
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_');
    if simple {
        name.to_owned()
    } else {
        format!("\"{}\"", name.replace('"', "\"\""))
    }
}

pub fn render_literal(value: &FieldValue) -> String {
    match value {
        FieldValue::Bit(b) => if *b { "TRUE" } else { "FALSE" }.to_owned(),
        FieldValue::Int32(v) => v.to_string(),
        FieldValue::Int64(v) => v.to_string(),
        FieldValue::Float64(v) if v.is_nan() => "CAST('NaN' AS DOUBLE PRECISION)".to_owned(),
        FieldValue::Float64(v) if v.is_infinite() => {
            let s = if *v > 0.0 { "Infinity" } else { "-Infinity" };
            format!("CAST('{s}' AS DOUBLE PRECISION)")
        }
        FieldValue::Float64(v) => format!("{v:?}"),
        FieldValue::DateTime(ms) => format!("TIMESTAMP '{}'", super::format_datetime(*ms)),
        FieldValue::Str(s) => format!("'{}'", s.replace('\'', "''")),
    }
}

/// `WHERE` clause body comparing the key columns against `keys`.
pub fn render_where(schema: &KeySchema, keys: &[FieldValue], bound: Bound) -> Result<String, DatasetError> {
    schema.encode(keys)?;
    let (outer, strict, last) = bound.ops();
    let n = keys.len();
    let mut out = String::new();
    for (i, (f, v)) in schema.fields().iter().zip(keys).enumerate() {
        let col = quote_ident(&f.name);
        let lit = render_literal(v);
        if i + 1 == n {
            let _ = write!(out, "{col} {last} {lit}");
        } else {
            let _ = write!(out, "{col} {outer} {lit} AND ({col} {strict} {lit} OR (");
        }
    }
    out.push_str(&")".repeat(2 * n.saturating_sub(1)));
    Ok(out)
}

fn order_by(schema: &KeySchema, direction: Direction) -> String {
    let dir = match direction {
        Direction::Asc => "ASC",
        Direction::Desc => "DESC",
    };
    schema
        .fields()
        .iter()
        .map(|f| format!("{} {dir}", quote_ident(&f.name)))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Minimal or maximal row.
pub fn first_last_query(table: &str, schema: &KeySchema, direction: Direction) -> String {
    format!(
        "SELECT * FROM {} ORDER BY {} LIMIT 1",
        quote_ident(table),
        order_by(schema, direction)
    )
}

/// Up to `h` rows on the given side of `keys`. `AtLeast`/`After` scan
/// forward, `AtMost`/`Before` scan backward.
pub fn seek_query(
    table: &str,
    schema: &KeySchema,
    keys: &[FieldValue],
    bound: Bound,
    h: usize,
) -> Result<String, DatasetError> {
    let direction = match bound {
        Bound::AtLeast | Bound::After => Direction::Asc,
        Bound::AtMost | Bound::Before => Direction::Desc,
    };
    Ok(format!(
        "SELECT * FROM {} WHERE {} ORDER BY {} LIMIT {h}",
        quote_ident(table),
        render_where(schema, keys, bound)?,
        order_by(schema, direction)
    ))
}

pub fn count_all_query(table: &str) -> String {
    format!("SELECT COUNT(*) FROM {}", quote_ident(table))
}

/// Number of rows strictly below `keys`.
pub fn count_less_query(table: &str, schema: &KeySchema, keys: &[FieldValue]) -> Result<String, DatasetError> {
    Ok(format!(
        "SELECT COUNT(*) FROM {} WHERE {}",
        quote_ident(table),
        render_where(schema, keys, Bound::Before)?
    ))
}
