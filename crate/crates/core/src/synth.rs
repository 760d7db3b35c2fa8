//! Deterministic synthetic tables for tests and benchmarks.
//!
//! `Clustered` and `Composite` mimic an address register: street names share
//! a handful of popular stems, so their ordinals bunch up in a few narrow
//! bands of the key space.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::distributions::{Distribution as _, WeightedIndex};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::collation::{CollationRules, RUSSIAN_RULES};
use crate::dataset::{FieldSpec, KeySchema, Row};
use crate::numerators::{FieldValue, ScalarKind};

/// Longest generated street name.
pub const STREET_MAX_LEN: usize = 16;

const STEMS: &[&str] = &[
    "Советская", "Садовая", "Лесная", "Школьная", "Новая", "Полевая", "Мира", "Ленина",
    "Кирова", "Зелёная", "Речная", "Горная", "Южная", "Сосновая", "Луговая", "Берёзовая",
];
const CONSONANTS: &[char] = &[
    'б', 'в', 'г', 'д', 'ж', 'з', 'к', 'л', 'м', 'н', 'п', 'р', 'с', 'т', 'ф', 'х', 'ц', 'ч', 'ш', 'щ',
];
const VOWELS: &[char] = &['а', 'е', 'и', 'о', 'у', 'я'];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distribution {
    /// Distinct uniformly random `int32` keys.
    Uniform,
    /// Distinct street-like names.
    Clustered,
    /// (street name, house number) pairs.
    Composite,
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Distribution::Uniform => "uniform",
            Distribution::Clustered => "clustered",
            Distribution::Composite => "composite",
        })
    }
}

impl FromStr for Distribution {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Distribution::Uniform),
            "clustered" => Ok(Distribution::Clustered),
            "composite" => Ok(Distribution::Composite),
            _ => Err(format!("unknown distribution {s:?}")),
        }
    }
}

pub fn russian_rules() -> Arc<CollationRules> {
    Arc::new(CollationRules::parse(RUSSIAN_RULES).expect("built-in rules parse"))
}

pub fn schema_for(distribution: Distribution) -> KeySchema {
    let fields = match distribution {
        Distribution::Uniform => vec![FieldSpec::new("id", ScalarKind::Int32)],
        Distribution::Clustered => vec![FieldSpec::string("street", russian_rules(), STREET_MAX_LEN)],
        Distribution::Composite => vec![
            FieldSpec::string("street", russian_rules(), STREET_MAX_LEN),
            FieldSpec::new("house", ScalarKind::Int32),
        ],
    };
    KeySchema::new(fields).expect("synthetic schema is valid")
}

/// `rows` rows with distinct keys, identical for identical seeds.
pub fn generate(distribution: Distribution, rows: usize, seed: u64) -> Vec<Row> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match distribution {
        Distribution::Uniform => uniform_ints(&mut rng, rows)
            .into_iter()
            .map(|v| Row::new(vec![FieldValue::Int32(v)], Vec::new()))
            .collect(),
        Distribution::Clustered => street_names(&mut rng, rows)
            .into_iter()
            .map(|s| Row::new(vec![FieldValue::Str(s)], Vec::new()))
            .collect(),
        Distribution::Composite => addresses(&mut rng, rows),
    }
}

pub fn uniform_ints(rng: &mut impl Rng, n: usize) -> Vec<i32> {
    let mut seen = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let v: i32 = rng.gen();
        if seen.insert(v) {
            out.push(v);
        }
    }
    out
}

fn syllable(rng: &mut impl Rng) -> [char; 2] {
    [*CONSONANTS.choose(rng).unwrap(), *VOWELS.choose(rng).unwrap()]
}

pub fn street_names(rng: &mut impl Rng, n: usize) -> Vec<String> {
    let weights: Vec<f64> = (0..STEMS.len()).map(|i| 1.0 / ((i + 1) as f64).powf(1.5)).collect();
    let stems = WeightedIndex::new(weights).expect("positive weights");
    let mut seen = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let stem = STEMS[stems.sample(rng)];
        let room = (STREET_MAX_LEN - stem.chars().count() - 1) / 2;
        let syllables = rng.gen_range(1..=room.min(3));
        let mut name = String::from(stem);
        name.push(' ');
        for _ in 0..syllables {
            name.extend(syllable(rng));
        }
        if seen.insert(name.clone()) {
            out.push(name);
        }
    }
    out
}

fn addresses(rng: &mut impl Rng, n: usize) -> Vec<Row> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let streets = street_names(rng, (n - out.len()) / 20 + 1);
        for street in streets {
            let u: f64 = rng.gen();
            let houses = 1 + (u * u * u * 99.0) as i32;
            for house in 1..=houses {
                if out.len() == n {
                    return out;
                }
                out.push(Row::new(
                    vec![FieldValue::Str(street.clone()), FieldValue::Int32(house)],
                    Vec::new(),
                ));
            }
        }
    }
    out
}
