//! Order-isomorphic numbering of field values and key tuples.
//!
//! Every codec maps its domain onto `[0, cardinality)` so that the natural
//! order of values (numeric, chronological, collated) is the order of their
//! ordinals. Composite keys combine member ordinals in mixed radix, most
//! significant field first.

pub mod string;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

pub use self::string::{string_count, StringCodec};
use crate::collation::{CollationError, CollationRules};
use crate::Ordinal;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("ordinal is outside the codec's domain")]
    OutOfRange,
    #[error("string of {len} characters exceeds maximum length {max}")]
    LengthExceeded { len: usize, max: usize },
    #[error("digit {digit} at position {position} is not below {radix}")]
    DigitOutOfRange {
        position: usize,
        digit: usize,
        radix: usize,
    },
    #[error("ordinal addresses an unpopulated collation slot at position {position}")]
    NoSuchSlot { position: usize },
    #[error("expected a {expected} value, got {found}")]
    KindMismatch {
        expected: ScalarKind,
        found: ScalarKind,
    },
    #[error("expected {expected} key fields, got {found}")]
    Arity { expected: usize, found: usize },
    #[error("field {index}: {source}")]
    Field {
        index: usize,
        #[source]
        source: Box<CodecError>,
    },
    #[error(transparent)]
    Collation(#[from] CollationError),
}

impl CodecError {
    fn in_field(self, index: usize) -> Self {
        CodecError::Field {
            index,
            source: Box::new(self),
        }
    }
}

/// Machine type of a key field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScalarKind {
    Bit,
    Int32,
    Int64,
    Float64,
    /// Milliseconds since the Unix epoch.
    DateTime,
    Str,
}

impl ScalarKind {
    pub fn name(self) -> &'static str {
        match self {
            ScalarKind::Bit => "bit",
            ScalarKind::Int32 => "int32",
            ScalarKind::Int64 => "int64",
            ScalarKind::Float64 => "float64",
            ScalarKind::DateTime => "datetime",
            ScalarKind::Str => "string",
        }
    }
}

impl fmt::Display for ScalarKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScalarKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "bit" | "bool" | "boolean" => ScalarKind::Bit,
            "int32" | "int" | "integer" => ScalarKind::Int32,
            "int64" | "bigint" => ScalarKind::Int64,
            "float64" | "double" => ScalarKind::Float64,
            "datetime" | "timestamp" => ScalarKind::DateTime,
            "string" | "varchar" | "str" => ScalarKind::Str,
            other => return Err(format!("unknown field kind {other:?}")),
        })
    }
}

/// A single key field value.
///
/// Equality on `Float64` is bitwise, so `-0.0 != 0.0` and a NaN equals
/// itself; this matches the codec, which gives each bit pattern its own
/// ordinal.
#[derive(Debug, Clone)]
pub enum FieldValue {
    Bit(bool),
    Int32(i32),
    Int64(i64),
    Float64(f64),
    DateTime(i64),
    Str(String),
}

impl FieldValue {
    pub fn kind(&self) -> ScalarKind {
        match self {
            FieldValue::Bit(_) => ScalarKind::Bit,
            FieldValue::Int32(_) => ScalarKind::Int32,
            FieldValue::Int64(_) => ScalarKind::Int64,
            FieldValue::Float64(_) => ScalarKind::Float64,
            FieldValue::DateTime(_) => ScalarKind::DateTime,
            FieldValue::Str(_) => ScalarKind::Str,
        }
    }
}

impl PartialEq for FieldValue {
    fn eq(&self, other: &Self) -> bool {
        use FieldValue::*;
        match (self, other) {
            (Bit(a), Bit(b)) => a == b,
            (Int32(a), Int32(b)) => a == b,
            (Int64(a), Int64(b)) => a == b,
            (Float64(a), Float64(b)) => a.to_bits() == b.to_bits(),
            (DateTime(a), DateTime(b)) => a == b,
            (Str(a), Str(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for FieldValue {}

impl fmt::Display for FieldValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldValue::Bit(b) => write!(f, "{b}"),
            FieldValue::Int32(v) => write!(f, "{v}"),
            FieldValue::Int64(v) => write!(f, "{v}"),
            FieldValue::Float64(v) => write!(f, "{v:?}"),
            FieldValue::DateTime(ms) => f.write_str(&crate::dataset::format_datetime(*ms)),
            FieldValue::Str(s) => f.write_str(s),
        }
    }
}

const I32_OFFSET: i64 = 1 << 31;
const SIGN_64: u64 = 1 << 63;

/// Monotone map from IEEE-754 doubles to u64: negative values have all bits
/// inverted, non-negative values get the sign bit set. `-0.0` sorts just
/// below `+0.0`; positive NaNs sort above infinity.
pub fn f64_to_ordered(v: f64) -> u64 {
    let bits = v.to_bits();
    if bits & SIGN_64 != 0 {
        !bits
    } else {
        bits | SIGN_64
    }
}

pub fn ordered_to_f64(u: u64) -> f64 {
    if u & SIGN_64 != 0 {
        f64::from_bits(u & !SIGN_64)
    } else {
        f64::from_bits(!u)
    }
}

fn i64_to_ordered(v: i64) -> u64 {
    (v as u64) ^ SIGN_64
}

fn ordered_to_i64(u: u64) -> i64 {
    (u ^ SIGN_64) as i64
}

/// Codec for one field.
#[derive(Debug, Clone)]
pub enum ScalarCodec {
    Bit,
    Int32,
    Int64,
    Float64,
    DateTime,
    Str(StringCodec),
}

impl ScalarCodec {
    pub fn string(rules: Arc<CollationRules>, max_len: usize) -> Self {
        ScalarCodec::Str(StringCodec::new(rules, max_len))
    }

    pub fn kind(&self) -> ScalarKind {
        match self {
            ScalarCodec::Bit => ScalarKind::Bit,
            ScalarCodec::Int32 => ScalarKind::Int32,
            ScalarCodec::Int64 => ScalarKind::Int64,
            ScalarCodec::Float64 => ScalarKind::Float64,
            ScalarCodec::DateTime => ScalarKind::DateTime,
            ScalarCodec::Str(_) => ScalarKind::Str,
        }
    }

    pub fn cardinality(&self) -> Ordinal {
        match self {
            ScalarCodec::Bit => BigUint::from(2u32),
            ScalarCodec::Int32 => BigUint::from(1u64 << 32),
            ScalarCodec::Int64 | ScalarCodec::Float64 | ScalarCodec::DateTime => {
                BigUint::one() << 64u32
            }
            ScalarCodec::Str(c) => c.cardinality().clone(),
        }
    }

    pub fn encode(&self, value: &FieldValue) -> Result<Ordinal, CodecError> {
        match (self, value) {
            (ScalarCodec::Bit, FieldValue::Bit(b)) => Ok(BigUint::from(*b as u32)),
            (ScalarCodec::Int32, FieldValue::Int32(v)) => {
                Ok(BigUint::from((*v as i64 + I32_OFFSET) as u64))
            }
            (ScalarCodec::Int64, FieldValue::Int64(v))
            | (ScalarCodec::DateTime, FieldValue::DateTime(v)) => {
                Ok(BigUint::from(i64_to_ordered(*v)))
            }
            (ScalarCodec::Float64, FieldValue::Float64(v)) => {
                Ok(BigUint::from(f64_to_ordered(*v)))
            }
            (ScalarCodec::Str(c), FieldValue::Str(s)) => c.encode(s),
            (codec, value) => Err(CodecError::KindMismatch {
                expected: codec.kind(),
                found: value.kind(),
            }),
        }
    }

    /// Strict inverse of [`encode`](Self::encode).
    pub fn decode(&self, ordinal: &Ordinal) -> Result<FieldValue, CodecError> {
        match self {
            ScalarCodec::Str(c) => c.decode(ordinal).map(FieldValue::Str),
            _ => self.decode_fixed(ordinal),
        }
    }

    /// Decodes the greatest value whose ordinal does not exceed `ordinal`.
    /// Differs from [`decode`](Self::decode) only on the gaps of collated
    /// string numberings.
    pub fn decode_floor(&self, ordinal: &Ordinal) -> Result<FieldValue, CodecError> {
        match self {
            ScalarCodec::Str(c) => c.decode_floor(ordinal).map(FieldValue::Str),
            _ => self.decode_fixed(ordinal),
        }
    }

    fn decode_fixed(&self, ordinal: &Ordinal) -> Result<FieldValue, CodecError> {
        if ordinal >= &self.cardinality() {
            return Err(CodecError::OutOfRange);
        }
        let raw = ordinal.to_u64().ok_or(CodecError::OutOfRange)?;
        Ok(match self {
            ScalarCodec::Bit => FieldValue::Bit(raw == 1),
            ScalarCodec::Int32 => FieldValue::Int32((raw as i64 - I32_OFFSET) as i32),
            ScalarCodec::Int64 => FieldValue::Int64(ordered_to_i64(raw)),
            ScalarCodec::DateTime => FieldValue::DateTime(ordered_to_i64(raw)),
            ScalarCodec::Float64 => FieldValue::Float64(ordered_to_f64(raw)),
            ScalarCodec::Str(_) => unreachable!("strings are decoded by their codec"),
        })
    }
}

/// Mixed-radix codec for key tuples; the first field is most significant.
#[derive(Debug, Clone)]
pub struct CompositeCodec {
    fields: Vec<ScalarCodec>,
    radices: Vec<Ordinal>,
    cardinality: Ordinal,
}

impl CompositeCodec {
    pub fn new(fields: Vec<ScalarCodec>) -> Self {
        let radices: Vec<Ordinal> = fields.iter().map(ScalarCodec::cardinality).collect();
        let cardinality = radices.iter().fold(BigUint::one(), |acc, n| acc * n);
        Self {
            fields,
            radices,
            cardinality,
        }
    }

    pub fn fields(&self) -> &[ScalarCodec] {
        &self.fields
    }

    pub fn radices(&self) -> &[Ordinal] {
        &self.radices
    }

    pub fn cardinality(&self) -> &Ordinal {
        &self.cardinality
    }

    pub fn arity(&self) -> usize {
        self.fields.len()
    }

    /// Combines member ordinals with Horner's scheme:
    /// `((k1 * N2 + k2) * N3 + k3) ...`, i.e. n - 1 multiplications.
    pub fn combine(&self, members: &[Ordinal]) -> Result<Ordinal, CodecError> {
        self.check_arity(members.len())?;
        let mut iter = members.iter().zip(&self.radices).enumerate();
        let Some((_, (first, n1))) = iter.next() else {
            return Ok(BigUint::zero());
        };
        if first >= n1 {
            return Err(CodecError::OutOfRange.in_field(0));
        }
        let mut acc = first.clone();
        for (i, (k, n)) in iter {
            if k >= n {
                return Err(CodecError::OutOfRange.in_field(i));
            }
            acc = acc * n + k;
        }
        Ok(acc)
    }

    /// Splits an ordinal into member ordinals, least significant first in
    /// the loop, returned in field order.
    pub fn split(&self, ordinal: &Ordinal) -> Result<Vec<Ordinal>, CodecError> {
        if ordinal >= &self.cardinality {
            return Err(CodecError::OutOfRange);
        }
        let mut g = ordinal.clone();
        let mut out = vec![BigUint::zero(); self.fields.len()];
        for i in (0..self.fields.len()).rev() {
            let (q, r) = g.div_rem(&self.radices[i]);
            out[i] = r;
            g = q;
        }
        Ok(out)
    }

    pub fn encode(&self, values: &[FieldValue]) -> Result<Ordinal, CodecError> {
        self.check_arity(values.len())?;
        let members = self
            .fields
            .iter()
            .zip(values)
            .enumerate()
            .map(|(i, (codec, v))| codec.encode(v).map_err(|e| e.in_field(i)))
            .collect::<Result<Vec<_>, _>>()?;
        self.combine(&members)
    }

    pub fn decode(&self, ordinal: &Ordinal) -> Result<Vec<FieldValue>, CodecError> {
        self.split(ordinal)?
            .iter()
            .zip(&self.fields)
            .enumerate()
            .map(|(i, (k, codec))| codec.decode(k).map_err(|e| e.in_field(i)))
            .collect()
    }

    /// Greatest valid key tuple whose ordinal is at most `ordinal`. When a
    /// member has to be lowered, all less significant members take their
    /// maximum value.
    pub fn decode_floor(&self, ordinal: &Ordinal) -> Result<Vec<FieldValue>, CodecError> {
        let members = self.split(ordinal)?;
        let mut saturate = false;
        let mut out = Vec::with_capacity(members.len());
        for (i, (codec, k)) in self.fields.iter().zip(&members).enumerate() {
            let target = if saturate {
                &self.radices[i] - 1u32
            } else {
                k.clone()
            };
            let value = codec.decode_floor(&target).map_err(|e| e.in_field(i))?;
            if !saturate && codec.encode(&value).map_err(|e| e.in_field(i))? != target {
                saturate = true;
            }
            out.push(value);
        }
        Ok(out)
    }

    fn check_arity(&self, found: usize) -> Result<(), CodecError> {
        if found != self.fields.len() {
            return Err(CodecError::Arity {
                expected: self.fields.len(),
                found,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ord(v: u64) -> Ordinal {
        BigUint::from(v)
    }

    #[test]
    fn int32_bounds() {
        let c = ScalarCodec::Int32;
        assert_eq!(c.encode(&FieldValue::Int32(i32::MIN)).unwrap(), ord(0));
        assert_eq!(c.decode(&ord(0)).unwrap(), FieldValue::Int32(i32::MIN));
        assert_eq!(
            c.decode(&ord(4_294_967_295)).unwrap(),
            FieldValue::Int32(i32::MAX)
        );
        assert_eq!(c.decode(&ord(1 << 32)), Err(CodecError::OutOfRange));
    }

    #[test]
    fn bit() {
        let c = ScalarCodec::Bit;
        assert_eq!(c.encode(&FieldValue::Bit(false)).unwrap(), ord(0));
        assert_eq!(c.encode(&FieldValue::Bit(true)).unwrap(), ord(1));
        assert_eq!(c.decode(&ord(1)).unwrap(), FieldValue::Bit(true));
        assert_eq!(c.decode(&ord(2)), Err(CodecError::OutOfRange));
    }

    #[test]
    fn float_special_values() {
        let c = ScalarCodec::Float64;
        let e = |v: f64| c.encode(&FieldValue::Float64(v)).unwrap();
        assert!(e(1.0) < e(2.0));
        assert!(e(-1.0) < e(0.0));
        assert!(e(-0.0) < e(0.0));
        assert!(e(f64::NEG_INFINITY) < e(f64::MIN));
        assert!(e(f64::MAX) < e(f64::INFINITY));
        assert!(e(f64::INFINITY) < e(f64::NAN));
        let nan = c.decode(&e(f64::NAN)).unwrap();
        assert_eq!(nan, FieldValue::Float64(f64::NAN));
    }

    #[test]
    fn kind_mismatch() {
        let err = ScalarCodec::Int64.encode(&FieldValue::Int32(1)).unwrap_err();
        assert_eq!(
            err,
            CodecError::KindMismatch {
                expected: ScalarKind::Int64,
                found: ScalarKind::Int32
            }
        );
    }

    #[test]
    fn composite_small_radices() {
        let c = CompositeCodec::new(vec![ScalarCodec::Bit, ScalarCodec::Bit]);
        assert_eq!(c.cardinality(), &ord(4));
        // radices (2, 3) through combine/split directly
        let c23 = RadixOnly::new(&[2, 3]);
        assert_eq!(c23.combine(&[ord(1), ord(2)]).unwrap(), ord(5));
        assert_eq!(c23.combine(&[ord(0), ord(0)]).unwrap(), ord(0));
        assert_eq!(c23.split(&ord(5)).unwrap(), vec![ord(1), ord(2)]);
        assert_eq!(c23.split(&ord(0)).unwrap(), vec![ord(0), ord(0)]);
        assert_eq!(c23.split(&ord(6)), Err(CodecError::OutOfRange));
        let c7 = RadixOnly::new(&[7]);
        assert_eq!(c7.split(&ord(4)).unwrap(), vec![ord(4)]);
    }

    #[test]
    fn composite_errors_carry_field_index() {
        let c = CompositeCodec::new(vec![ScalarCodec::Int32, ScalarCodec::Int32]);
        let err = c
            .encode(&[FieldValue::Int32(1), FieldValue::Bit(true)])
            .unwrap_err();
        assert!(matches!(err, CodecError::Field { index: 1, .. }));
        assert!(matches!(
            c.encode(&[FieldValue::Int32(1)]),
            Err(CodecError::Arity {
                expected: 2,
                found: 1
            })
        ));
    }

    #[test]
    fn composite_floor_saturates_lower_fields() {
        let rules = Arc::new(CollationRules::parse("<а,А<е,Е;ё,Ё").unwrap());
        let c = CompositeCodec::new(vec![
            ScalarCodec::string(rules.clone(), 1),
            ScalarCodec::Int32,
        ]);
        let key = |s: &str, n: i32| vec![FieldValue::Str(s.into()), FieldValue::Int32(n)];
        let upper = c.encode(&key("А", 7)).unwrap();
        let next = c.encode(&key("е", i32::MIN)).unwrap();
        // first ordinal past every "А" tuple lies in the gap before "е"
        let gap = c.encode(&key("А", i32::MAX)).unwrap() + 1u32;
        assert!(gap < next && gap > upper);
        assert!(c.decode(&gap).is_err());
        assert_eq!(c.decode_floor(&gap).unwrap(), key("А", i32::MAX));
        assert_eq!(c.decode_floor(&next).unwrap(), key("е", i32::MIN));
    }

    /// Test helper exposing Horner/split over arbitrary radices.
    struct RadixOnly(CompositeCodec);

    impl RadixOnly {
        fn new(radices: &[u64]) -> Self {
            let radices: Vec<Ordinal> = radices.iter().map(|&r| ord(r)).collect();
            let cardinality = radices.iter().fold(BigUint::one(), |a, r| a * r);
            let fields = vec![ScalarCodec::Bit; radices.len()];
            RadixOnly(CompositeCodec {
                fields,
                radices,
                cardinality,
            })
        }

        fn combine(&self, m: &[Ordinal]) -> Result<Ordinal, CodecError> {
            self.0.combine(m)
        }

        fn split(&self, g: &Ordinal) -> Result<Vec<Ordinal>, CodecError> {
            self.0.split(g)
        }
    }
}
