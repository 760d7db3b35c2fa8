use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, NaiveDate, NaiveDateTime, SecondsFormat};

use super::{DatasetError, IndexedTable, KeySchema, Row};
use crate::numerators::{FieldValue, ScalarKind};

const NULL_MARKER: &str = "\\N";

/// Milliseconds since the Unix epoch as ISO-8601 UTC. Instants chrono cannot
/// represent are printed as the raw millisecond count.
pub fn format_datetime(ms: i64) -> String {
    match DateTime::from_timestamp_millis(ms) {
        Some(dt) => dt.to_rfc3339_opts(SecondsFormat::Millis, true),
        None => ms.to_string(),
    }
}

/// Accepts RFC 3339, naive `YYYY-MM-DD[ T]HH:MM:SS[.fff]` (taken as UTC),
/// a bare date, or an integer millisecond count.
pub fn parse_datetime(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(ms) = s.parse::<i64>() {
        return Some(ms);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp_millis());
    }
    for fmt in ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp_millis());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc().timestamp_millis())
}

fn parse_bit(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "t" | "true" | "y" | "yes" => Some(true),
        "0" | "f" | "false" | "n" | "no" => Some(false),
        _ => None,
    }
}

/// Parses one cell. `Ok(None)` is NULL.
pub fn parse_field(kind: ScalarKind, cell: &str) -> Result<Option<FieldValue>, String> {
    if cell == NULL_MARKER || (cell.is_empty() && kind != ScalarKind::Str) {
        return Ok(None);
    }
    let bad = || format!("cannot parse {cell:?} as {kind}");
    let t = cell.trim();
    let value = match kind {
        ScalarKind::Bit => FieldValue::Bit(parse_bit(t).ok_or_else(bad)?),
        ScalarKind::Int32 => FieldValue::Int32(t.parse().map_err(|_| bad())?),
        ScalarKind::Int64 => FieldValue::Int64(t.parse().map_err(|_| bad())?),
        ScalarKind::Float64 => FieldValue::Float64(t.parse().map_err(|_| bad())?),
        ScalarKind::DateTime => FieldValue::DateTime(parse_datetime(t).ok_or_else(bad)?),
        ScalarKind::Str => FieldValue::Str(cell.to_owned()),
    };
    Ok(Some(value))
}

pub fn ingest_csv(path: impl AsRef<Path>, schema: Arc<KeySchema>) -> Result<IndexedTable, DatasetError> {
    ingest_reader(File::open(path)?, schema)
}

/// Reads a headed CSV. Columns named after key fields form the key; every
/// other column is kept as payload in header order.
pub fn ingest_reader<R: Read>(reader: R, schema: Arc<KeySchema>) -> Result<IndexedTable, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut key_cols = Vec::with_capacity(schema.arity());
    for f in schema.fields() {
        let col = headers
            .iter()
            .position(|h| h.trim() == f.name)
            .ok_or_else(|| DatasetError::Schema(format!("header has no column {:?}", f.name)))?;
        key_cols.push(col);
    }
    let payload_cols: Vec<usize> = (0..headers.len()).filter(|c| !key_cols.contains(c)).collect();
    let payload_names = payload_cols.iter().map(|&c| headers[c].to_owned()).collect();

    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row_no = i as u64 + 1;
        let record = record?;
        let mut key = Vec::with_capacity(key_cols.len());
        for (f, &c) in schema.fields().iter().zip(&key_cols) {
            let cell = record.get(c).unwrap_or(NULL_MARKER);
            match parse_field(f.kind, cell) {
                Ok(Some(v)) => key.push(v),
                Ok(None) => {
                    return Err(DatasetError::Ingest {
                        row: row_no,
                        message: format!("NULL in key field {:?}", f.name),
                    })
                }
                Err(message) => return Err(DatasetError::Ingest { row: row_no, message }),
            }
        }
        let payload = payload_cols
            .iter()
            .map(|&c| record.get(c).unwrap_or_default().to_owned())
            .collect();
        rows.push(Row::new(key, payload));
    }
    IndexedTable::from_rows_with_columns(schema, payload_names, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collation::CollationRules;
    use crate::dataset::{Direction, FieldSpec};

    fn schema() -> Arc<KeySchema> {
        let rules = Arc::new(CollationRules::plain("abc").unwrap());
        Arc::new(
            KeySchema::new(vec![
                FieldSpec::string("name", rules, 3),
                FieldSpec::new("n", ScalarKind::Int32),
            ])
            .unwrap(),
        )
    }

    #[test]
    fn datetime_round_trip() {
        for ms in [0, 1_700_000_000_123, -86_400_000, i64::MAX, i64::MIN] {
            assert_eq!(parse_datetime(&format_datetime(ms)), Some(ms));
        }
        assert_eq!(format_datetime(0), "1970-01-01T00:00:00.000Z");
        assert_eq!(parse_datetime("1970-01-02"), Some(86_400_000));
        assert_eq!(parse_datetime("1970-01-01 00:00:01.5"), Some(1500));
        assert_eq!(parse_datetime("1970-01-01T01:00:00+01:00"), Some(0));
        assert_eq!(parse_datetime("yesterday"), None);
    }

    #[test]
    fn cells() {
        assert_eq!(parse_field(ScalarKind::Int32, ""), Ok(None));
        assert_eq!(parse_field(ScalarKind::Str, ""), Ok(Some(FieldValue::Str(String::new()))));
        assert_eq!(parse_field(ScalarKind::Str, "\\N"), Ok(None));
        assert_eq!(parse_field(ScalarKind::Bit, "TRUE"), Ok(Some(FieldValue::Bit(true))));
        assert_eq!(parse_field(ScalarKind::Float64, "-0.5"), Ok(Some(FieldValue::Float64(-0.5))));
        assert!(parse_field(ScalarKind::Int32, "4294967296").is_err());
    }

    #[test]
    fn reads_sorted_table() {
        let csv = "extra,n,name\nx,2,b\ny,1,b\nz,7,a\n";
        let t = ingest_reader(csv.as_bytes(), schema()).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.payload_columns(), ["extra"]);
        let first = t.first_last(Direction::Asc).unwrap();
        assert_eq!(first.key, vec![FieldValue::Str("a".into()), FieldValue::Int32(7)]);
        assert_eq!(first.payload, vec!["z".to_string()]);
        assert_eq!(t.row_at(1).unwrap().payload, vec!["y".to_string()]);
    }

    #[test]
    fn rejects_bad_input() {
        let dup = "name,n\na,1\nb,1\na,1\n";
        let err = ingest_reader(dup.as_bytes(), schema()).unwrap_err();
        assert!(matches!(err, DatasetError::Ingest { row: 3, .. }), "{err}");

        let null = "name,n\na,\n";
        let err = ingest_reader(null.as_bytes(), schema()).unwrap_err();
        assert!(matches!(err, DatasetError::Ingest { row: 1, .. }), "{err}");

        let missing = "name,m\na,1\n";
        assert!(matches!(
            ingest_reader(missing.as_bytes(), schema()),
            Err(DatasetError::Schema(_))
        ));

        let foreign = "name,n\nabd,1\n";
        assert!(ingest_reader(foreign.as_bytes(), schema()).is_err());
        let long = "name,n\naaaa,1\n";
        assert!(ingest_reader(long.as_bytes(), schema()).is_err());
    }
}
