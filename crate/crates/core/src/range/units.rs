use std::collections::BTreeMap;
use std::sync::OnceLock;

use thiserror::Error;

use crate::decimal::Decimal;
use crate::range::{Quantity, Unit};
use crate::tsv;

const DEFAULT_UNITS: &str = include_str!("../../data/units.tsv");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UnitTableError {
    #[error("line {line}: expected `unit<TAB>dimension<TAB>factor`")]
    Malformed { line: usize },
    #[error("line {line}: bad factor {factor:?}")]
    BadFactor { line: usize, factor: String },
    #[error("line {line}: duplicate unit {unit:?}")]
    Duplicate { line: usize, unit: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitDef {
    pub symbol: String,
    pub dimension: String,
    pub factor: Decimal,
}

/// Known units, each with a dimension and a factor to that dimension's base.
#[derive(Debug, Clone, Default)]
pub struct UnitTable {
    units: BTreeMap<String, UnitDef>,
    /// Symbols sorted longest first, for greedy matching.
    by_length: Vec<String>,
}

impl UnitTable {
    pub fn parse(text: &str) -> Result<Self, UnitTableError> {
        let mut table = UnitTable::default();
        for rec in tsv::records(text) {
            let [symbol, dimension, factor] = rec.fields[..] else {
                return Err(UnitTableError::Malformed { line: rec.line });
            };
            if symbol.is_empty() || dimension.is_empty() {
                return Err(UnitTableError::Malformed { line: rec.line });
            }
            let factor: Decimal = factor.parse().map_err(|_| UnitTableError::BadFactor {
                line: rec.line,
                factor: factor.to_string(),
            })?;
            if factor <= Decimal::ZERO {
                return Err(UnitTableError::BadFactor { line: rec.line, factor: factor.to_string() });
            }
            let symbol = canonical_symbol(symbol);
            if table.units.contains_key(&symbol) {
                return Err(UnitTableError::Duplicate { line: rec.line, unit: symbol });
            }
            table.units.insert(
                symbol.clone(),
                UnitDef { symbol, dimension: dimension.to_string(), factor },
            );
        }
        table.reindex();
        Ok(table)
    }

    /// The shipped table (mass and molar concentrations, enzyme activity,
    /// pressure, counts per high-power field).
    pub fn builtin() -> &'static UnitTable {
        static TABLE: OnceLock<UnitTable> = OnceLock::new();
        TABLE.get_or_init(|| UnitTable::parse(DEFAULT_UNITS).expect("shipped unit table is valid"))
    }

    fn reindex(&mut self) {
        let mut syms: Vec<String> = self.units.keys().cloned().collect();
        syms.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        self.by_length = syms;
    }

    pub fn get(&self, symbol: &str) -> Option<&UnitDef> {
        self.units.get(&canonical_symbol(symbol))
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// Longest known symbol that `text` starts with, followed by a boundary.
    /// Returns the canonical symbol and the number of bytes consumed.
    pub(crate) fn match_prefix(&self, text: &str) -> Option<(String, usize)> {
        let folded = canonical_symbol(text);
        for sym in &self.by_length {
            if let Some(rest) = folded.strip_prefix(sym.as_str()) {
                if rest.chars().next().is_none_or(|c| c.is_whitespace() || c == ';') {
                    // The folded text can differ in byte length from the input
                    // (µ vs μ are both 2 bytes, "ug" -> "µg" is +1), so walk the
                    // original by chars.
                    let consumed = byte_len_for_chars(text, sym, &folded);
                    return Some((sym.clone(), consumed));
                }
            }
        }
        None
    }

    pub fn unit(&self, symbol: &str) -> Unit {
        match self.get(symbol) {
            Some(def) => Unit::known(&def.symbol),
            None => Unit::verbatim(symbol),
        }
    }

    /// Value of `q` expressed in its dimension's base unit.
    pub fn to_base(&self, q: &Quantity) -> Option<(String, Decimal)> {
        if !q.unit.normalized || q.unit.symbol.is_empty() {
            return None;
        }
        let def = self.get(&q.unit.symbol)?;
        Some((def.dimension.clone(), q.value.checked_mul(&def.factor)?))
    }

    /// Whether two quantities can be compared, and if so their values on a
    /// common scale.
    pub fn commensurate(&self, a: &Quantity, b: &Quantity) -> Option<(Decimal, Decimal)> {
        if a.unit.symbol == b.unit.symbol {
            return Some((a.value, b.value));
        }
        let (da, va) = self.to_base(a)?;
        let (db, vb) = self.to_base(b)?;
        (da == db).then_some((va, vb))
    }
}

impl UnitTable {
    /// `q` re-expressed in `target` units, when both share a dimension and
    /// the conversion is exact.
    pub fn convert(&self, q: &Quantity, target: &str) -> Option<Quantity> {
        let target = canonical_symbol(target);
        if q.unit.symbol == target {
            return Some(q.clone());
        }
        let (dim, base) = self.to_base(q)?;
        let def = self.get(&target)?;
        if def.dimension != dim {
            return None;
        }
        Some(Quantity::new(base.checked_div_exact(&def.factor)?, Unit::known(&def.symbol)))
    }
}

/// Folds the micro-sign variants (`μ` U+03BC and a leading ASCII `u`) onto
/// `µ` U+00B5 so `μg/L`, `ug/L` and `µg/L` are the same unit.
pub fn canonical_symbol(s: &str) -> String {
    let s = s.replace('\u{03BC}', "\u{00B5}");
    if let Some(rest) = s.strip_prefix('u') {
        if rest.starts_with('g') || rest.starts_with("mol") {
            return format!("\u{00B5}{rest}");
        }
    }
    s
}

fn byte_len_for_chars(original: &str, sym: &str, folded: &str) -> usize {
    // Count the chars of `sym` inside `folded`, then take the same number of
    // chars from the original, adjusting for the ASCII `u` -> `µ` rewrite
    // which maps one char to one char.
    debug_assert!(folded.starts_with(sym));
    let n_chars = sym.chars().count();
    original
        .char_indices()
        .nth(n_chars)
        .map(|(i, _)| i)
        .unwrap_or(original.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_conversion() {
        let t = UnitTable::builtin();
        let q = Quantity::new("20000".parse().unwrap(), t.unit("ng/L"));
        assert_eq!(t.convert(&q, "µg/L").unwrap().to_string(), "20 µg/L");
        assert_eq!(t.convert(&q, "ug/L").unwrap().unit.symbol, "µg/L");
        assert!(t.convert(&q, "mmHg").is_none());
        assert!(t.convert(&q, "furlong").is_none());
    }

    #[test]
    fn builtin_table_loads() {
        let t = UnitTable::builtin();
        assert!(t.len() >= 20);
        assert_eq!(t.get("µg/L").unwrap().factor, "1000".parse().unwrap());
        assert_eq!(t.get("μg/L").unwrap().symbol, "µg/L");
        assert_eq!(t.get("ug/L").unwrap().symbol, "µg/L");
    }

    #[test]
    fn prefix_match_is_greedy_and_bounded() {
        let t = UnitTable::builtin();
        assert_eq!(t.match_prefix("mg/dL Female"), Some(("mg/dL".to_string(), 5)));
        assert_eq!(t.match_prefix("mg"), Some(("mg".to_string(), 2)));
        assert_eq!(t.match_prefix("per HPF"), Some(("per HPF".to_string(), 7)));
        assert_eq!(t.match_prefix("μg/L"), Some(("µg/L".to_string(), "μg/L".len())));
        assert_eq!(t.match_prefix("mgx"), None);
        assert_eq!(t.match_prefix("m²/1.73"), None);
    }

    #[test]
    fn conversion_to_base() {
        let t = UnitTable::builtin();
        let a = Quantity::new("1".parse().unwrap(), t.unit("µg/L"));
        let b = Quantity::new("1000".parse().unwrap(), t.unit("ng/L"));
        let (x, y) = t.commensurate(&a, &b).unwrap();
        assert_eq!(x, y);
        let c = Quantity::new("1".parse().unwrap(), t.unit("mmHg"));
        assert!(t.commensurate(&a, &c).is_none());
    }

    #[test]
    fn malformed_lines_are_reported() {
        assert_eq!(UnitTable::parse("ng/L\tmass").unwrap_err(), UnitTableError::Malformed { line: 1 });
        assert!(matches!(
            UnitTable::parse("ng/L\tmass\tx").unwrap_err(),
            UnitTableError::BadFactor { line: 1, .. }
        ));
        assert!(matches!(
            UnitTable::parse("ng/L\tm\t1\nng/L\tm\t2").unwrap_err(),
            UnitTableError::Duplicate { line: 2, .. }
        ));
    }
}
