use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use super::{
    Bound, Period, PeriodUnit, Quantity, QualifierTable, ReferenceRange, Stratum, StratumQualifier, Unit,
    UnitTable,
};
use crate::decimal::Decimal;

/// Failure to parse a range expression. `offset` is a byte offset into the
/// input; `expected` lists what the parser would have accepted there.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("at byte {offset}: expected {}, found {found}", expected.join(" or "))]
pub struct ParseError {
    pub offset: usize,
    pub expected: Vec<String>,
    pub found: String,
}

/// Range parser bound to a unit table and a qualifier keyword table.
#[derive(Debug, Clone, Copy)]
pub struct RangeParser<'a> {
    units: &'a UnitTable,
    qualifiers: &'a QualifierTable,
}

/// Parses with the shipped unit and qualifier tables.
pub fn parse_reference_range(text: &str) -> Result<ReferenceRange, ParseError> {
    RangeParser::builtin().parse(text)
}

fn period_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^(\d+(?:\.\d+)?)\s*(h|hr|hrs|hours?|d|days?)\s*:").expect("valid period regex")
    })
}

impl RangeParser<'static> {
    pub fn builtin() -> Self {
        RangeParser { units: UnitTable::builtin(), qualifiers: QualifierTable::builtin() }
    }
}

impl<'a> RangeParser<'a> {
    pub fn new(units: &'a UnitTable, qualifiers: &'a QualifierTable) -> Self {
        RangeParser { units, qualifiers }
    }

    pub fn units(&self) -> &'a UnitTable {
        self.units
    }

    pub fn parse(&self, text: &str) -> Result<ReferenceRange, ParseError> {
        let mut cur = Cursor { src: text, pos: 0 };
        cur.skip_separators();
        if cur.at_end() {
            return Err(cur.error(&["qualifier", "bound"]));
        }
        let mut strata: Vec<Stratum> = Vec::new();
        loop {
            let start = cur.pos;
            let qualifier = self.qualifier(&mut cur);
            let bound = self.bound(&mut cur)?;
            if strata.iter().any(|s| s.qualifier == qualifier) {
                return Err(ParseError {
                    offset: start,
                    expected: vec!["distinct stratum qualifier".into()],
                    found: text[start..].split_whitespace().next().unwrap_or("").to_string(),
                });
            }
            strata.push(Stratum { qualifier, bound });
            cur.skip_separators();
            if cur.at_end() {
                break;
            }
            if !self.at_qualifier(cur.rest()) {
                return Err(cur.error(&["stratum qualifier", "end of input"]));
            }
        }
        Ok(ReferenceRange::new(strata, text))
    }

    fn at_qualifier(&self, rest: &str) -> bool {
        self.keyword_len(rest).is_some() || period_re().is_match(rest)
    }

    /// Byte length of a `Keyword :` prefix, including the colon.
    fn keyword_len(&self, rest: &str) -> Option<(usize, &'a super::QualifierKeyword)> {
        let kw = self.qualifiers.match_prefix(rest)?;
        let after = &rest[kw.label.len()..];
        let trimmed = after.trim_start_matches([' ', '\t']);
        trimmed
            .starts_with(':')
            .then(|| (rest.len() - trimmed.len() + 1, kw))
    }

    fn qualifier(&self, cur: &mut Cursor<'_>) -> StratumQualifier {
        if let Some((len, kw)) = self.keyword_len(cur.rest()) {
            cur.pos += len;
            return StratumQualifier::Keyword { label: kw.label.clone(), alternatives: kw.alternatives.clone() };
        }
        if let Some(caps) = period_re().captures(cur.rest()) {
            let amount: Decimal = caps[1].parse().expect("regex guarantees a decimal");
            let unit = if caps[2].starts_with('h') { PeriodUnit::Hour } else { PeriodUnit::Day };
            cur.pos += caps[0].len();
            if amount > Decimal::ZERO {
                return StratumQualifier::Period(Period { amount, unit });
            }
            // A zero-length window is not a qualifier; rewind so the bound
            // parser reports the problem at the number.
            cur.pos -= caps[0].len();
        }
        StratumQualifier::None
    }

    fn bound(&self, cur: &mut Cursor<'_>) -> Result<Bound, ParseError> {
        cur.skip_inline_ws();
        match cur.peek() {
            Some(c @ ('<' | '>')) => {
                cur.bump(c);
                cur.skip_inline_ws();
                let mut values = vec![cur.number()?];
                while cur.peek() == Some('/') && cur.rest()[1..].starts_with(|c: char| c.is_ascii_digit()) {
                    cur.bump('/');
                    values.push(cur.number()?);
                }
                let unit = self.unit(cur);
                let make = |v: Decimal| {
                    let limit = Quantity::new(v, unit.clone());
                    if c == '<' {
                        Bound::LessThan { limit }
                    } else {
                        Bound::GreaterThan { limit }
                    }
                };
                if values.len() == 1 {
                    return Ok(make(values[0]));
                }
                let labels = component_labels(values.len(), &unit);
                Ok(Bound::Compound { components: labels.into_iter().zip(values.into_iter().map(make)).collect() })
            }
            Some(c) if c.is_ascii_digit() => {
                let lo_at = cur.pos;
                let lo = cur.number()?;
                cur.skip_inline_ws();
                if !cur.range_separator() {
                    return Err(cur.error(&["'\u{2013}'", "'-'", "'--'"]));
                }
                cur.skip_inline_ws();
                let hi = cur.number()?;
                if lo > hi {
                    return Err(ParseError {
                        offset: lo_at,
                        expected: vec!["lower bound not above upper bound".into()],
                        found: format!("{lo}\u{2013}{hi}"),
                    });
                }
                let unit = self.unit(cur);
                Ok(Bound::ClosedInterval { lo: Quantity::new(lo, unit.clone()), hi: Quantity::new(hi, unit) })
            }
            Some(c) if c.is_alphabetic() => {
                let start = cur.pos;
                let mut end = start;
                let mut iter = cur.rest().char_indices().peekable();
                while let Some((i, ch)) = iter.next() {
                    if ch == ';' || ch == '\n' {
                        break;
                    }
                    if ch.is_whitespace() {
                        let next = start + i + ch.len_utf8();
                        let after = cur.src[next..].trim_start_matches([' ', '\t']);
                        if self.at_qualifier(after) {
                            break;
                        }
                    } else {
                        end = start + i + ch.len_utf8();
                    }
                }
                cur.pos = end;
                Ok(Bound::Qualitative { expected: cur.src[start..end].to_string() })
            }
            _ => Err(cur.error(&["'<'", "'>'", "number", "qualitative term"])),
        }
    }

    fn unit(&self, cur: &mut Cursor<'_>) -> Unit {
        let save = cur.pos;
        cur.skip_inline_ws();
        let rest = cur.rest();
        if rest.is_empty() || rest.starts_with([';', '\n']) || self.at_qualifier(rest) {
            cur.pos = save;
            return Unit::dimensionless();
        }
        if let Some((symbol, len)) = self.units.match_prefix(rest) {
            cur.pos += len;
            return Unit::known(&symbol);
        }
        let token_len = rest.find(|c: char| c.is_whitespace() || c == ';').unwrap_or(rest.len());
        let token = &rest[..token_len];
        if token.starts_with(|c: char| c.is_ascii_digit() || c == '<' || c == '>') {
            cur.pos = save;
            return Unit::dimensionless();
        }
        cur.pos += token_len;
        Unit::verbatim(token)
    }
}

fn component_labels(n: usize, unit: &Unit) -> Vec<String> {
    if n == 2 && unit.symbol == "mmHg" {
        return vec!["systolic".into(), "diastolic".into()];
    }
    (1..=n).map(|i| format!("component{i}")).collect()
}

struct Cursor<'s> {
    src: &'s str,
    pos: usize,
}

impl<'s> Cursor<'s> {
    fn rest(&self) -> &'s str {
        &self.src[self.pos..]
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn bump(&mut self, c: char) {
        self.pos += c.len_utf8();
    }

    fn skip_inline_ws(&mut self) {
        let rest = self.rest();
        self.pos += rest.len() - rest.trim_start_matches([' ', '\t']).len();
    }

    fn skip_separators(&mut self) {
        let rest = self.rest();
        self.pos += rest.len() - rest.trim_start_matches(|c: char| c.is_whitespace() || c == ';').len();
    }

    fn range_separator(&mut self) -> bool {
        for sep in ["--", "\u{2013}", "\u{2014}", "-"] {
            if self.rest().starts_with(sep) {
                self.pos += sep.len();
                return true;
            }
        }
        false
    }

    fn number(&mut self) -> Result<Decimal, ParseError> {
        let rest = self.rest();
        let int_len = rest.find(|c: char| !c.is_ascii_digit()).unwrap_or(rest.len());
        if int_len == 0 {
            return Err(self.error(&["number"]));
        }
        let mut len = int_len;
        if rest[len..].starts_with('.') {
            let frac = &rest[len + 1..];
            let frac_len = frac.find(|c: char| !c.is_ascii_digit()).unwrap_or(frac.len());
            if frac_len > 0 {
                len += 1 + frac_len;
            }
        }
        let value = rest[..len].parse().map_err(|_| self.error(&["number"]))?;
        self.pos += len;
        Ok(value)
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        let found = match self.rest().split_whitespace().next() {
            Some(tok) => format!("{tok:?}"),
            None => "end of input".to_string(),
        };
        ParseError { offset: self.pos, expected: expected.iter().map(|s| s.to_string()).collect(), found }
    }
}
