//! Service configuration, read from a TOML file.
//!
//! ```toml
//! dataset = "streets.csv"
//! h = 40
//! slow_latency_ms = 50
//! listen = "127.0.0.1:8080"
//!
//! [warmup]
//! threshold = 0.2
//!
//! [[field]]
//! name = "street"
//! kind = "string"
//! max_length = 16
//! rules = "russian.rules"
//! ```
//!
//! A `[synthetic]` table (`distribution`, `rows`) may replace `dataset`.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use keyscroll_core::collation::CollationRules;
use keyscroll_core::dataset::{ingest_csv, FieldSpec, IndexedTable, KeySchema};
use keyscroll_core::interpolator::DEFAULT_CAPACITY;
use keyscroll_core::numerators::ScalarKind;
use keyscroll_core::synth::{self, Distribution};
use keyscroll_core::EngineConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    pub dataset: Option<PathBuf>,
    pub synthetic: Option<SyntheticSource>,
    #[serde(default, rename = "field")]
    pub fields: Vec<FieldConfig>,
    #[serde(default = "default_h")]
    pub h: usize,
    #[serde(default = "default_capacity")]
    pub capacity: usize,
    /// Defaults to twice `h`.
    pub page_size: Option<usize>,
    #[serde(default)]
    pub warmup: WarmupConfig,
    /// Added to every counting query.
    #[serde(default)]
    pub slow_latency_ms: u64,
    #[serde(default = "default_listen")]
    pub listen: String,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub name: String,
    pub kind: String,
    pub max_length: Option<usize>,
    /// Rule file, relative to the config file.
    pub rules: Option<PathBuf>,
    /// Built-in rule set; only `russian` exists.
    pub collation: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSource {
    pub distribution: String,
    pub rows: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarmupConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

impl Default for WarmupConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            threshold: default_threshold(),
            max_iter: default_max_iter(),
        }
    }
}

fn default_h() -> usize {
    40
}

fn default_capacity() -> usize {
    DEFAULT_CAPACITY
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn yes() -> bool {
    true
}

fn default_threshold() -> f64 {
    0.2
}

fn default_max_iter() -> usize {
    64
}

impl AppConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut config = Self::parse(&text).with_context(|| format!("in {}", path.display()))?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Config for a generated table with its default schema.
    pub fn synthetic(distribution: Distribution, rows: usize) -> Self {
        Self {
            dataset: None,
            synthetic: Some(SyntheticSource {
                distribution: distribution.to_string(),
                rows,
                seed: None,
            }),
            fields: Vec::new(),
            h: default_h(),
            capacity: default_capacity(),
            page_size: None,
            warmup: WarmupConfig::default(),
            slow_latency_ms: 0,
            listen: default_listen(),
            base_dir: PathBuf::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        match (&self.dataset, &self.synthetic) {
            (Some(_), Some(_)) => bail!("set either `dataset` or `[synthetic]`, not both"),
            (None, None) => bail!("no data source: set `dataset` or `[synthetic]`"),
            (Some(_), None) if self.fields.is_empty() => bail!("`dataset` needs at least one [[field]]"),
            _ => {}
        }
        if let Some(s) = &self.synthetic {
            s.distribution.parse::<Distribution>().map_err(anyhow::Error::msg)?;
        }
        if self.h == 0 {
            bail!("`h` must be positive");
        }
        if !(self.warmup.threshold > 0.0 && self.warmup.threshold < 1.0) {
            bail!("warmup threshold must lie in (0, 1)");
        }
        Ok(())
    }

    pub fn slow_latency(&self) -> Duration {
        Duration::from_millis(self.slow_latency_ms)
    }

    pub fn engine_config(&self) -> EngineConfig {
        let mut config = EngineConfig::with_height(self.h);
        config.capacity = self.capacity;
        if let Some(page) = self.page_size {
            config.page_size = page.max(1);
        }
        config.warmup_enabled = self.warmup.enabled;
        config.warmup_threshold = self.warmup.threshold;
        config.warmup_max_iter = self.warmup.max_iter;
        config
    }

    pub fn schema(&self) -> Result<KeySchema> {
        if self.fields.is_empty() {
            let s = self.synthetic.as_ref().expect("validated");
            return Ok(synth::schema_for(s.distribution.parse().map_err(anyhow::Error::msg)?));
        }
        let fields = self
            .fields
            .iter()
            .map(|f| self.field_spec(f))
            .collect::<Result<Vec<_>>>()?;
        Ok(KeySchema::new(fields)?)
    }

    fn field_spec(&self, field: &FieldConfig) -> Result<FieldSpec> {
        let kind: ScalarKind = field.kind.parse().map_err(anyhow::Error::msg)?;
        if kind != ScalarKind::Str {
            return Ok(FieldSpec::new(&field.name, kind));
        }
        let max_length = field
            .max_length
            .with_context(|| format!("string field {:?} needs max_length", field.name))?;
        let rules = match (&field.rules, field.collation.as_deref()) {
            (Some(path), None) => {
                let path = self.base_dir.join(path);
                Arc::new(
                    CollationRules::from_file(&path)
                        .with_context(|| format!("rule file {}", path.display()))?,
                )
            }
            (None, Some("russian")) => synth::russian_rules(),
            (None, Some(other)) => bail!("unknown built-in collation {other:?}"),
            (Some(_), Some(_)) => bail!("field {:?}: set `rules` or `collation`, not both", field.name),
            (None, None) => bail!("string field {:?} needs `rules` or `collation`", field.name),
        };
        Ok(FieldSpec::string(&field.name, rules, max_length))
    }

    /// Reads or generates the table. `seed` applies to synthetic tables
    /// without their own seed.
    pub fn load_table(&self, seed: u64) -> Result<IndexedTable> {
        let schema = Arc::new(self.schema()?);
        let table = match (&self.dataset, &self.synthetic) {
            (Some(path), _) => {
                let path = self.base_dir.join(path);
                ingest_csv(&path, schema).with_context(|| format!("ingesting {}", path.display()))?
            }
            (None, Some(s)) => {
                let distribution = s.distribution.parse().map_err(anyhow::Error::msg)?;
                let rows = synth::generate(distribution, s.rows, s.seed.unwrap_or(seed));
                IndexedTable::from_rows(schema, rows)?
            }
            (None, None) => unreachable!("validated"),
        };
        table.set_slow_latency(self.slow_latency());
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_synthetic() {
        let c = AppConfig::parse("[synthetic]\ndistribution = \"composite\"\nrows = 50\n").unwrap();
        assert_eq!(c.h, 40);
        assert_eq!(c.engine_config().page_size, 80);
        assert_eq!(c.schema().unwrap().arity(), 2);
        assert_eq!(c.load_table(1).unwrap().len(), 50);
    }

    #[test]
    fn explicit_fields() {
        let c = AppConfig::parse(
            r#"
            dataset = "x.csv"
            h = 10
            page_size = 5
            slow_latency_ms = 25
            [warmup]
            enabled = false
            [[field]]
            name = "s"
            kind = "varchar"
            max_length = 8
            collation = "russian"
            [[field]]
            name = "t"
            kind = "timestamp"
            "#,
        )
        .unwrap();
        let e = c.engine_config();
        assert_eq!((e.h, e.page_size, e.warmup_enabled), (10, 5, false));
        assert_eq!(c.slow_latency(), Duration::from_millis(25));
        let s = c.schema().unwrap();
        assert_eq!(s.fields()[1].kind, ScalarKind::DateTime);
        assert!(c.load_table(0).is_err());
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            "h = 3",
            "dataset = \"a\"\n[synthetic]\ndistribution = \"uniform\"\nrows = 1",
            "dataset = \"a\"",
            "[synthetic]\ndistribution = \"zipf\"\nrows = 1",
            "bogus = 1\n[synthetic]\ndistribution = \"uniform\"\nrows = 1",
            "h = 0\n[synthetic]\ndistribution = \"uniform\"\nrows = 1",
        ] {
            assert!(AppConfig::parse(text).is_err(), "{text}");
        }
        let c = AppConfig::parse("dataset = \"a\"\n[[field]]\nname = \"s\"\nkind = \"string\"\nmax_length = 3").unwrap();
        assert!(c.schema().is_err());
    }
}
