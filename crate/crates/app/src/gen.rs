//! Synthetic CSV tables.

use std::io::Write;
use std::path::Path;

use anyhow::Result;
use keyscroll_core::dataset::format_datetime;
use keyscroll_core::numerators::FieldValue;
use keyscroll_core::synth::{self, Distribution};

use crate::config::{AppConfig, FieldConfig};

pub const PAYLOAD_COLUMN: &str = "seq";

fn cell(value: &FieldValue) -> String {
    match value {
        FieldValue::Bit(b) => u8::from(*b).to_string(),
        FieldValue::Int32(v) => v.to_string(),
        FieldValue::Int64(v) => v.to_string(),
        FieldValue::Float64(v) => v.to_string(),
        FieldValue::DateTime(ms) => format_datetime(*ms),
        FieldValue::Str(s) => s.clone(),
    }
}

/// Writes `rows` generated rows in generation order, plus a sequence
/// column as payload.
pub fn write_csv(out: impl Write, distribution: Distribution, rows: usize, seed: u64) -> Result<()> {
    let schema = synth::schema_for(distribution);
    let mut writer = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = schema.fields().iter().map(|f| f.name.as_str()).collect();
    header.push(PAYLOAD_COLUMN);
    writer.write_record(&header)?;
    for (i, row) in synth::generate(distribution, rows, seed).into_iter().enumerate() {
        let mut record: Vec<String> = row.key.iter().map(cell).collect();
        record.push(i.to_string());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// A config that reads `dataset` with the generator's schema.
pub fn config_for(distribution: Distribution, dataset: &Path) -> AppConfig {
    let mut config = AppConfig::synthetic(distribution, 0);
    config.synthetic = None;
    config.dataset = Some(dataset.to_path_buf());
    config.fields = synth::schema_for(distribution)
        .fields()
        .iter()
        .map(|f| FieldConfig {
            name: f.name.clone(),
            kind: f.kind.name().into(),
            max_length: f.max_length,
            rules: None,
            collation: f.max_length.map(|_| "russian".into()),
        })
        .collect();
    config
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_rows() {
        let mut buf = Vec::new();
        write_csv(&mut buf, Distribution::Composite, 25, 4).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "street,house,seq");
        assert_eq!(lines.len(), 26);
        assert!(lines[25].ends_with(",24"));
    }

    #[test]
    fn emitted_config_reads_back() {
        let text = toml::to_string(&config_for(Distribution::Clustered, Path::new("s.csv"))).unwrap();
        let config = AppConfig::parse(&text).unwrap();
        assert_eq!(config.schema().unwrap().fields()[0].max_length, Some(synth::STREET_MAX_LEN));
    }
}
