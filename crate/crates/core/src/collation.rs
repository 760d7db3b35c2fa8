//! Collation rules with a three-level view of every character.
//!
//! The rule language has three separators:
//!
//! * `<` starts a new primary letter,
//! * `;` starts a new accent variant of the current letter,
//! * `,` starts a new case form of the current variant.
//!
//! So `<д,Д<е,Е;ё,Ё<ж,Ж` declares three letters, where `е` has two variants
//! (`е`/`ё`), each with two case forms. Every declared character maps to a
//! `(primary, variant, case)` triple and back.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

/// Errors raised while parsing rules or looking up characters.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CollationError {
    #[error("malformed rule at char offset {offset}: {reason}")]
    MalformedRule { offset: usize, reason: &'static str },
    #[error("character {0:?} declared more than once")]
    DuplicateChar(char),
    #[error("character {0:?} is not covered by the collation rules")]
    UnknownChar(char),
    #[error("no character at slot ({primary}, {variant}, {case})")]
    NoSuchSlot {
        primary: usize,
        variant: usize,
        case: usize,
    },
    #[error("cannot read rule file: {0}")]
    Io(String),
}

/// Position of a character in the three-level alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CharComponents {
    pub primary: usize,
    pub variant: usize,
    pub case: usize,
}

impl CharComponents {
    pub const fn new(primary: usize, variant: usize, case: usize) -> Self {
        Self {
            primary,
            variant,
            case,
        }
    }
}

/// Which comparison levels are active beyond the primary one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Sensitivity {
    pub accent: bool,
    pub case: bool,
}

impl Sensitivity {
    pub const FULL: Sensitivity = Sensitivity {
        accent: true,
        case: true,
    };
    pub const PRIMARY: Sensitivity = Sensitivity {
        accent: false,
        case: false,
    };
}

/// Parsed collation rules. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollationRules {
    /// groups[primary][variant][case]
    groups: Vec<Vec<Vec<char>>>,
    reverse: HashMap<char, CharComponents>,
    max_variants: usize,
    max_cases: usize,
}

/// Cyrillic alphabet in the usual Russian dictionary order, preceded by space,
/// hyphen, period and the decimal digits.
pub const RUSSIAN_RULES: &str = "< <-<.<0<1<2<3<4<5<6<7<8<9\
<а,А<б,Б<в,В<г,Г<д,Д<е,Е;ё,Ё<ж,Ж<з,З<и,И;й,Й<к,К<л,Л<м,М<н,Н<о,О<п,П\
<р,Р<с,С<т,Т<у,У<ф,Ф<х,Х<ц,Ц<ч,Ч<ш,Ш<щ,Щ<ъ,Ъ<ы,Ы<ь,Ь<э,Э<ю,Ю<я,Я";

impl CollationRules {
    /// Parses a rule string. A single leading `<` is accepted and ignored.
    pub fn parse(text: &str) -> Result<Self, CollationError> {
        let body = text.strip_prefix('<').unwrap_or(text);
        let offset_base = text.chars().count() - body.chars().count();
        if body.is_empty() {
            return Err(CollationError::MalformedRule {
                offset: offset_base,
                reason: "empty rule",
            });
        }

        let mut groups: Vec<Vec<Vec<char>>> = vec![vec![vec![]]];
        let mut reverse = HashMap::new();
        // Each token between separators must be exactly one character.
        let mut pending: Option<char> = None;
        let mut token_len = 0usize;

        let mut flush = |groups: &mut Vec<Vec<Vec<char>>>,
                         pending: &mut Option<char>,
                         token_len: &mut usize,
                         offset: usize|
         -> Result<(), CollationError> {
            let ch = match (pending.take(), *token_len) {
                (Some(ch), 1) => ch,
                (_, 0) => {
                    return Err(CollationError::MalformedRule {
                        offset,
                        reason: "empty token",
                    })
                }
                _ => {
                    return Err(CollationError::MalformedRule {
                        offset,
                        reason: "multi-character collation elements are not supported",
                    })
                }
            };
            *token_len = 0;
            let primary = groups.len() - 1;
            let group = groups.last_mut().expect("at least one group");
            let variant = group.len() - 1;
            let cases = group.last_mut().expect("at least one variant");
            let comp = CharComponents::new(primary, variant, cases.len());
            if reverse.insert(ch, comp).is_some() {
                return Err(CollationError::DuplicateChar(ch));
            }
            cases.push(ch);
            Ok(())
        };

        for (i, ch) in body.chars().enumerate() {
            let offset = offset_base + i;
            match ch {
                '<' | ';' | ',' => {
                    flush(&mut groups, &mut pending, &mut token_len, offset)?;
                    match ch {
                        '<' => groups.push(vec![vec![]]),
                        ';' => groups.last_mut().unwrap().push(vec![]),
                        _ => {}
                    }
                }
                _ => {
                    pending = Some(ch);
                    token_len += 1;
                }
            }
        }
        let end = offset_base + body.chars().count();
        flush(&mut groups, &mut pending, &mut token_len, end)?;

        let max_variants = groups.iter().map(Vec::len).max().unwrap_or(1);
        let max_cases = groups
            .iter()
            .flat_map(|g| g.iter().map(Vec::len))
            .max()
            .unwrap_or(1);
        Ok(Self {
            groups,
            reverse,
            max_variants,
            max_cases,
        })
    }

    /// Reads a rule file; line breaks are removed before parsing.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, CollationError> {
        let text = fs::read_to_string(path.as_ref())
            .map_err(|e| CollationError::Io(format!("{}: {e}", path.as_ref().display())))?;
        let joined: String = text.chars().filter(|c| *c != '\n' && *c != '\r').collect();
        Self::parse(&joined)
    }

    /// Rules where every character of `alphabet` is its own primary letter,
    /// in the given order. Yields plain lexicographic ordering.
    pub fn plain(alphabet: &str) -> Result<Self, CollationError> {
        let mut text = String::new();
        for ch in alphabet.chars() {
            if matches!(ch, '<' | ';' | ',') {
                return Err(CollationError::MalformedRule {
                    offset: text.len(),
                    reason: "separator cannot be declared as a character",
                });
            }
            text.push('<');
            text.push(ch);
        }
        Self::parse(&text)
    }

    /// Number of primary letters (a0).
    pub fn primary_count(&self) -> usize {
        self.groups.len()
    }

    /// Maximum number of accent variants over all letters (a1).
    pub fn max_variants(&self) -> usize {
        self.max_variants
    }

    /// Maximum number of case forms over all variants (a2).
    pub fn max_cases(&self) -> usize {
        self.max_cases
    }

    pub fn variant_count(&self, primary: usize) -> usize {
        self.groups.get(primary).map_or(0, Vec::len)
    }

    pub fn case_count(&self, primary: usize, variant: usize) -> usize {
        self.groups
            .get(primary)
            .and_then(|g| g.get(variant))
            .map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.reverse.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reverse.is_empty()
    }

    pub fn contains(&self, ch: char) -> bool {
        self.reverse.contains_key(&ch)
    }

    /// All declared characters in full collation order.
    pub fn chars(&self) -> impl Iterator<Item = char> + '_ {
        self.groups.iter().flatten().flatten().copied()
    }

    pub fn components_of(&self, ch: char) -> Result<CharComponents, CollationError> {
        self.reverse
            .get(&ch)
            .copied()
            .ok_or(CollationError::UnknownChar(ch))
    }

    pub fn char_of(&self, comp: CharComponents) -> Result<char, CollationError> {
        self.groups
            .get(comp.primary)
            .and_then(|g| g.get(comp.variant))
            .and_then(|v| v.get(comp.case))
            .copied()
            .ok_or(CollationError::NoSuchSlot {
                primary: comp.primary,
                variant: comp.variant,
                case: comp.case,
            })
    }

    /// Splits a string into per-character components.
    pub fn decompose(&self, s: &str) -> Result<Vec<CharComponents>, CollationError> {
        s.chars().map(|c| self.components_of(c)).collect()
    }

    /// Compares primaries first, then accent variants, then case forms.
    pub fn compare(
        &self,
        left: &str,
        right: &str,
        sensitivity: Sensitivity,
    ) -> Result<Ordering, CollationError> {
        let l = self.decompose(left)?;
        let r = self.decompose(right)?;

        let primary = l.iter().map(|c| c.primary).cmp(r.iter().map(|c| c.primary));
        if primary != Ordering::Equal {
            return Ok(primary);
        }
        // Equal primaries imply equal lengths from here on.
        if sensitivity.accent {
            let ord = l.iter().map(|c| c.variant).cmp(r.iter().map(|c| c.variant));
            if ord != Ordering::Equal {
                return Ok(ord);
            }
        }
        if sensitivity.case {
            let ord = l.iter().map(|c| c.case).cmp(r.iter().map(|c| c.case));
            if ord != Ordering::Equal {
                return Ok(ord);
            }
        }
        Ok(Ordering::Equal)
    }
}
