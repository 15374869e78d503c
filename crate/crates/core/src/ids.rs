//! Identifier schemes for the artifact families.
//!
//! Every artifact id is `<PREFIX>-<digits>`. Ordering is natural: by prefix,
//! then by the numeric suffix, so `TC-2` sorts before `TC-10`.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

/// The typed artifact families that carry a prefixed id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdKind {
    Requirement,
    Story,
    Test,
    Phase,
    Issue,
    Adr,
}

impl IdKind {
    pub const ALL: [IdKind; 6] = [
        IdKind::Requirement,
        IdKind::Story,
        IdKind::Test,
        IdKind::Phase,
        IdKind::Issue,
        IdKind::Adr,
    ];

    pub fn prefix(self) -> &'static str {
        match self {
            IdKind::Requirement => "REQ",
            IdKind::Story => "US",
            IdKind::Test => "TC",
            IdKind::Phase => "PH",
            IdKind::Issue => "ISS",
            IdKind::Adr => "ADR",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            IdKind::Requirement => "requirement",
            IdKind::Story => "story",
            IdKind::Test => "test",
            IdKind::Phase => "phase",
            IdKind::Issue => "issue",
            IdKind::Adr => "adr",
        }
    }

    /// Classify an id by its prefix. Does not check the digits.
    pub fn of(id: &str) -> Option<IdKind> {
        let (prefix, _) = id.split_once('-')?;
        IdKind::ALL.into_iter().find(|k| k.prefix() == prefix)
    }

    /// True when `id` matches this family's pattern exactly.
    ///
    /// ADR ids carry exactly four digits; the others any positive number
    /// without leading zeros.
    pub fn matches(self, id: &str) -> bool {
        let Some(digits) = id
            .strip_prefix(self.prefix())
            .and_then(|rest| rest.strip_prefix('-'))
        else {
            return false;
        };
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return false;
        }
        match self {
            IdKind::Adr => digits.len() == 4,
            _ => !digits.starts_with('0'),
        }
    }
}

impl fmt::Display for IdKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Numeric suffix of a prefixed id, if it has one.
pub fn numeric_suffix(id: &str) -> Option<u64> {
    id.rsplit_once('-')?.1.parse().ok()
}

/// Natural ordering for ids: prefix first, then numeric suffix, then the raw
/// string as a final tie-break so the order is total.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    let split = |s: &str| match s.rsplit_once('-') {
        Some((p, n)) => (p.to_owned(), n.parse::<u64>().ok()),
        None => (s.to_owned(), None),
    };
    let (pa, na) = split(a);
    let (pb, nb) = split(b);
    pa.cmp(&pb)
        .then_with(|| match (na, nb) {
            (Some(x), Some(y)) => x.cmp(&y),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        })
        .then_with(|| a.cmp(b))
}

/// String key with natural ordering, for use in ordered maps and sets.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NaturalKey(pub String);

impl Ord for NaturalKey {
    fn cmp(&self, other: &Self) -> Ordering {
        natural_cmp(&self.0, &other.0)
    }
}

impl PartialOrd for NaturalKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl From<&str> for NaturalKey {
    fn from(s: &str) -> Self {
        NaturalKey(s.to_owned())
    }
}

impl fmt::Display for NaturalKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Sort a list of ids in natural order.
pub fn sort_natural(ids: &mut [String]) {
    ids.sort_by(|a, b| natural_cmp(a, b));
}
