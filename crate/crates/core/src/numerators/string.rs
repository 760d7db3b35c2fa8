use std::sync::Arc;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};

use super::CodecError;
use crate::collation::{CharComponents, CollationRules};
use crate::Ordinal;

/// Number of strings of length at most `max_len` over an alphabet of
/// `alphabet` letters: `1 + a + a^2 + ... + a^m`.
pub fn string_count(alphabet: usize, max_len: usize) -> Ordinal {
    match alphabet {
        0 => BigUint::one(),
        1 => BigUint::from(max_len) + 1u32,
        a => {
            let a = BigUint::from(a);
            (a.pow(max_len as u32 + 1) - 1u32) / (a - 1u32)
        }
    }
}

/// Ordinal codec for strings of bounded length under collation rules.
///
/// The ordinal is `(k0 * a1^m + k1) * a2^m + k2`, where `k0` numbers the
/// primary-letter sequence in plain lexicographic order, and `k1`/`k2` hold
/// the accent-variant and case digits as fixed-width base-`a1`/base-`a2`
/// numbers. With one variant and one case per letter this reduces to the
/// plain lexicographic numbering.
#[derive(Debug, Clone)]
pub struct StringCodec {
    rules: Arc<CollationRules>,
    max_len: usize,
    /// q[i] = (a^(m-i) - 1) / (a - 1), the weight of the letter at position i.
    q: Vec<Ordinal>,
    plain_count: Ordinal,
    variant_weight: Ordinal,
    case_weight: Ordinal,
    cardinality: Ordinal,
}

/// Digits of a collated ordinal before validation.
struct Digits {
    primaries: Vec<usize>,
    variants: Vec<usize>,
    cases: Vec<usize>,
}

impl StringCodec {
    pub fn new(rules: Arc<CollationRules>, max_len: usize) -> Self {
        let a = rules.primary_count();
        let mut q = vec![BigUint::zero(); max_len];
        let mut acc = BigUint::zero();
        for slot in q.iter_mut().rev() {
            acc = acc * a + 1u32;
            *slot = acc.clone();
        }
        let plain_count = string_count(a, max_len);
        let variant_weight = BigUint::from(rules.max_variants()).pow(max_len as u32);
        let case_weight = BigUint::from(rules.max_cases()).pow(max_len as u32);
        let cardinality = &plain_count * &variant_weight * &case_weight;
        Self {
            rules,
            max_len,
            q,
            plain_count,
            variant_weight,
            case_weight,
            cardinality,
        }
    }

    /// Plain-order codec over the given characters (one letter each).
    pub fn plain(alphabet: &str, max_len: usize) -> Result<Self, CodecError> {
        Ok(Self::new(Arc::new(CollationRules::plain(alphabet)?), max_len))
    }

    pub fn rules(&self) -> &Arc<CollationRules> {
        &self.rules
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn cardinality(&self) -> &Ordinal {
        &self.cardinality
    }

    /// Number of distinct primary-letter sequences.
    pub fn plain_cardinality(&self) -> &Ordinal {
        &self.plain_count
    }

    pub fn coefficients(&self) -> &[Ordinal] {
        &self.q
    }

    /// Numbers a sequence of primary-letter indices in plain lexicographic
    /// order: `l + sum(q[i] * c[i])`.
    pub fn encode_plain(&self, digits: &[usize]) -> Result<Ordinal, CodecError> {
        if digits.len() > self.max_len {
            return Err(CodecError::LengthExceeded {
                len: digits.len(),
                max: self.max_len,
            });
        }
        let a = self.rules.primary_count();
        let mut g = BigUint::from(digits.len());
        for (i, &c) in digits.iter().enumerate() {
            if c >= a {
                return Err(CodecError::DigitOutOfRange {
                    position: i,
                    digit: c,
                    radix: a,
                });
            }
            if c > 0 {
                g += &self.q[i] * c;
            }
        }
        Ok(g)
    }

    /// Inverse of [`encode_plain`](Self::encode_plain).
    pub fn decode_plain(&self, g: &Ordinal) -> Result<Vec<usize>, CodecError> {
        if g >= &self.plain_count {
            return Err(CodecError::OutOfRange);
        }
        let mut g = g.clone();
        let mut out = Vec::new();
        let mut i = 0;
        while i < self.max_len && !g.is_zero() {
            g -= 1u32;
            let (c, rest) = g.div_rem(&self.q[i]);
            out.push(c.to_usize().expect("digit below alphabet size"));
            g = rest;
            i += 1;
        }
        Ok(out)
    }

    pub fn encode(&self, s: &str) -> Result<Ordinal, CodecError> {
        let comps = self.rules.decompose(s)?;
        if comps.len() > self.max_len {
            return Err(CodecError::LengthExceeded {
                len: comps.len(),
                max: self.max_len,
            });
        }
        let primaries: Vec<usize> = comps.iter().map(|c| c.primary).collect();
        let k0 = self.encode_plain(&primaries)?;
        let k1 = fixed_width(
            comps.iter().map(|c| c.variant),
            self.rules.max_variants(),
            self.max_len,
        );
        let k2 = fixed_width(
            comps.iter().map(|c| c.case),
            self.rules.max_cases(),
            self.max_len,
        );
        Ok((k0 * &self.variant_weight + k1) * &self.case_weight + k2)
    }

    /// Strict inverse of [`encode`](Self::encode). Ordinals that fall into
    /// gaps of the numbering (a variant or case digit naming a slot the
    /// letter does not have) fail with [`CodecError::NoSuchSlot`].
    pub fn decode(&self, g: &Ordinal) -> Result<String, CodecError> {
        let digits = self.split(g)?;
        if let Some(position) = self.first_invalid(&digits) {
            return Err(CodecError::NoSuchSlot { position });
        }
        self.assemble(&digits)
    }

    /// Decodes the greatest valid string whose ordinal is at most `g`.
    pub fn decode_floor(&self, g: &Ordinal) -> Result<String, CodecError> {
        let mut digits = self.split(g)?;
        self.floor_digits(&mut digits);
        self.assemble(&digits)
    }

    fn split(&self, g: &Ordinal) -> Result<Digits, CodecError> {
        if g >= &self.cardinality {
            return Err(CodecError::OutOfRange);
        }
        let (rest, k2) = g.div_rem(&self.case_weight);
        let (k0, k1) = rest.div_rem(&self.variant_weight);
        Ok(Digits {
            primaries: self.decode_plain(&k0)?,
            variants: digits_of(k1, self.rules.max_variants(), self.max_len),
            cases: digits_of(k2, self.rules.max_cases(), self.max_len),
        })
    }

    fn variant_limit(&self, d: &Digits, i: usize) -> usize {
        d.primaries
            .get(i)
            .map_or(1, |&p| self.rules.variant_count(p))
    }

    fn case_limit(&self, d: &Digits, i: usize) -> usize {
        d.primaries
            .get(i)
            .map_or(1, |&p| self.rules.case_count(p, d.variants[i]))
    }

    fn first_invalid(&self, d: &Digits) -> Option<usize> {
        (0..self.max_len)
            .find(|&i| d.variants[i] >= self.variant_limit(d, i))
            .or_else(|| (0..self.max_len).find(|&i| d.cases[i] >= self.case_limit(d, i)))
    }

    /// Clamps the first offending digit to its largest admissible value and
    /// saturates every less significant digit.
    fn floor_digits(&self, d: &mut Digits) {
        let mut saturate = false;
        for i in 0..self.max_len {
            let lim = self.variant_limit(d, i);
            if saturate || d.variants[i] >= lim {
                saturate = true;
                d.variants[i] = lim - 1;
            }
        }
        for i in 0..self.max_len {
            let lim = self.case_limit(d, i);
            if saturate || d.cases[i] >= lim {
                saturate = true;
                d.cases[i] = lim - 1;
            }
        }
    }

    fn assemble(&self, d: &Digits) -> Result<String, CodecError> {
        d.primaries
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                self.rules
                    .char_of(CharComponents::new(p, d.variants[i], d.cases[i]))
                    .map_err(|_| CodecError::NoSuchSlot { position: i })
            })
            .collect()
    }
}

/// `sum(radix^(width-1-i) * digit[i])`, digits past the iterator being zero.
fn fixed_width(digits: impl Iterator<Item = usize>, radix: usize, width: usize) -> Ordinal {
    let mut acc = BigUint::zero();
    let mut n = 0;
    for d in digits {
        acc = acc * radix + d;
        n += 1;
    }
    if radix > 1 && n < width {
        acc *= BigUint::from(radix).pow((width - n) as u32);
    }
    acc
}

/// Most-significant-first digits of `value` in a fixed width.
fn digits_of(mut value: Ordinal, radix: usize, width: usize) -> Vec<usize> {
    let mut out = vec![0usize; width];
    if radix <= 1 {
        return out;
    }
    let r = BigUint::from(radix);
    for slot in out.iter_mut().rev() {
        let (q, d) = value.div_rem(&r);
        *slot = d.to_usize().expect("digit below radix");
        value = q;
    }
    out
}
