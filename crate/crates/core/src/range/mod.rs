//! Reference-range expressions of clinical indicators.
//!
//! A range such as `Male: 300–1000 ng/L Female: 200–800 ng/L` parses into a
//! [`ReferenceRange`]: an ordered list of [`Stratum`]s, each a population
//! qualifier plus a [`Bound`]. Bounds carry exact [`Decimal`] values and a
//! [`Unit`] looked up in a [`UnitTable`]; unknown unit strings are kept
//! verbatim and flagged as not normalized.
//!
//! The grammar is documented in the book chapter on reference ranges.

mod classify;
mod parse;
mod qualifier;
mod units;

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use classify::{classify, ClassifyError, Classification, Observation, QualifierContext};
pub use parse::{parse_reference_range, ParseError, RangeParser};
pub use qualifier::{
    AgeGroup, Alternative, Period, PeriodUnit, Qualifier, QualifierKeyword, QualifierTable,
    QualifierTableError, Sex,
};
pub use units::{canonical_symbol, UnitDef, UnitTable, UnitTableError};

use crate::decimal::Decimal;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Unit {
    /// Empty for dimensionless quantities.
    pub symbol: String,
    /// False when the symbol was not found in the unit table.
    pub normalized: bool,
}

impl Unit {
    pub fn known(symbol: &str) -> Self {
        Unit { symbol: symbol.to_string(), normalized: true }
    }

    pub fn verbatim(symbol: &str) -> Self {
        Unit { symbol: symbol.to_string(), normalized: false }
    }

    pub fn dimensionless() -> Self {
        Unit { symbol: String::new(), normalized: true }
    }

    pub fn is_dimensionless(&self) -> bool {
        self.symbol.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Quantity {
    pub value: Decimal,
    pub unit: Unit,
}

impl Quantity {
    pub fn new(value: Decimal, unit: Unit) -> Self {
        Quantity { value, unit }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.unit.is_dimensionless() {
            write!(f, "{}", self.value)
        } else {
            write!(f, "{} {}", self.value, self.unit.symbol)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Bound {
    /// `lo–hi`, both ends inclusive.
    ClosedInterval { lo: Quantity, hi: Quantity },
    /// `<limit`, strict.
    LessThan { limit: Quantity },
    /// `>limit`, strict.
    GreaterThan { limit: Quantity },
    /// Labelled components read together, e.g. systolic/diastolic pressure.
    Compound { components: Vec<(String, Bound)> },
    Qualitative { expected: String },
}

impl Bound {
    fn comparator(&self) -> Option<(char, &Quantity)> {
        match self {
            Bound::LessThan { limit } => Some(('<', limit)),
            Bound::GreaterThan { limit } => Some(('>', limit)),
            _ => None,
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::ClosedInterval { lo, hi } => {
                write!(f, "{}\u{2013}{}", lo.value, hi.value)?;
                if !hi.unit.is_dimensionless() {
                    write!(f, " {}", hi.unit.symbol)?;
                }
                Ok(())
            }
            Bound::LessThan { limit } => write!(f, "<{limit}"),
            Bound::GreaterThan { limit } => write!(f, ">{limit}"),
            Bound::Compound { components } => {
                let cmps: Option<Vec<_>> = components.iter().map(|(_, b)| b.comparator()).collect();
                match cmps {
                    Some(cmps)
                        if !cmps.is_empty()
                            && cmps.iter().all(|(c, q)| *c == cmps[0].0 && q.unit == cmps[0].1.unit) =>
                    {
                        let values: Vec<String> = cmps.iter().map(|(_, q)| q.value.to_string()).collect();
                        write!(f, "{}{}", cmps[0].0, values.join("/"))?;
                        if !cmps[0].1.unit.is_dimensionless() {
                            write!(f, " {}", cmps[0].1.unit.symbol)?;
                        }
                        Ok(())
                    }
                    _ => {
                        let parts: Vec<String> =
                            components.iter().map(|(l, b)| format!("{l} {b}")).collect();
                        write!(f, "{}", parts.join(" / "))
                    }
                }
            }
            Bound::Qualitative { expected } => write!(f, "{expected}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum StratumQualifier {
    /// Applies to everyone.
    None,
    /// A keyword from the qualifier table, e.g. "Male" or "Postmenopausal women".
    Keyword { label: String, alternatives: Vec<Alternative> },
    /// A collection window, e.g. "24 h".
    Period(Period),
}

impl StratumQualifier {
    fn label(&self) -> Option<String> {
        match self {
            StratumQualifier::None => None,
            StratumQualifier::Keyword { label, .. } => Some(label.clone()),
            StratumQualifier::Period(p) => Some(p.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Stratum {
    pub qualifier: StratumQualifier,
    pub bound: Bound,
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.qualifier.label() {
            Some(label) => write!(f, "{label}: {}", self.bound),
            None => write!(f, "{}", self.bound),
        }
    }
}

/// A parsed reference range. Equality is structural: `raw_text` is ignored.
#[derive(Debug, Clone)]
pub struct ReferenceRange {
    strata: Vec<Stratum>,
    raw_text: String,
}

impl ReferenceRange {
    pub(crate) fn new(strata: Vec<Stratum>, raw_text: &str) -> Self {
        debug_assert!(!strata.is_empty());
        ReferenceRange { strata, raw_text: raw_text.to_string() }
    }

    pub fn strata(&self) -> &[Stratum] {
        &self.strata
    }

    pub fn raw_text(&self) -> &str {
        &self.raw_text
    }

    /// Canonical text form; reparses to an equal value.
    pub fn render(&self) -> String {
        self.to_string()
    }

    /// Equality after unit conversion: `<20 µg/L` is equivalent to
    /// `<20000 ng/L`. Strata are compared as a set.
    pub fn equivalent(&self, other: &ReferenceRange, units: &UnitTable) -> bool {
        self.strata.len() == other.strata.len()
            && self.strata.iter().all(|a| {
                other
                    .strata
                    .iter()
                    .any(|b| a.qualifier == b.qualifier && bounds_equivalent(&a.bound, &b.bound, units))
            })
    }
}

fn quantities_equivalent(a: &Quantity, b: &Quantity, units: &UnitTable) -> bool {
    match units.commensurate(a, b) {
        Some((x, y)) => x == y,
        None => false,
    }
}

fn bounds_equivalent(a: &Bound, b: &Bound, units: &UnitTable) -> bool {
    match (a, b) {
        (Bound::ClosedInterval { lo: l1, hi: h1 }, Bound::ClosedInterval { lo: l2, hi: h2 }) => {
            quantities_equivalent(l1, l2, units) && quantities_equivalent(h1, h2, units)
        }
        (Bound::LessThan { limit: x }, Bound::LessThan { limit: y })
        | (Bound::GreaterThan { limit: x }, Bound::GreaterThan { limit: y }) => quantities_equivalent(x, y, units),
        (Bound::Compound { components: c1 }, Bound::Compound { components: c2 }) => {
            c1.len() == c2.len()
                && c1.iter().zip(c2).all(|((l1, b1), (l2, b2))| l1 == l2 && bounds_equivalent(b1, b2, units))
        }
        (Bound::Qualitative { expected: x }, Bound::Qualitative { expected: y }) => {
            x.trim().eq_ignore_ascii_case(y.trim())
        }
        _ => false,
    }
}

impl PartialEq for ReferenceRange {
    fn eq(&self, other: &Self) -> bool {
        self.strata == other.strata
    }
}

impl Eq for ReferenceRange {}

impl std::hash::Hash for ReferenceRange {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.strata.hash(state);
    }
}

impl fmt::Display for ReferenceRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.strata.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for ReferenceRange {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_reference_range(s)
    }
}

impl Serialize for ReferenceRange {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ReferenceRange {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_reference_range(&s).map_err(serde::de::Error::custom)
    }
}
