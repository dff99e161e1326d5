use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Bound, Qualifier, Quantity, ReferenceRange, Stratum, StratumQualifier, UnitTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Below,
    Within,
    Above,
    Match,
    Mismatch,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClassifyError {
    #[error("cannot compare {observed:?} with {reference:?}")]
    Unit { observed: String, reference: String },
    #[error("observation kind does not fit the bound ({0})")]
    KindMismatch(&'static str),
    #[error("context matches {0} strata equally well")]
    AmbiguousContext(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Observation {
    Quantity(Quantity),
    /// One value per compound component, in order (systolic, diastolic).
    Compound(Vec<Quantity>),
    Qualitative(String),
}

/// What is known about the patient and the sample.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QualifierContext {
    qualifiers: BTreeSet<Qualifier>,
}

impl QualifierContext {
    pub fn new(qualifiers: impl IntoIterator<Item = Qualifier>) -> Self {
        QualifierContext { qualifiers: qualifiers.into_iter().collect() }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    fn has_period(&self) -> bool {
        self.qualifiers.iter().any(|q| matches!(q, Qualifier::Period(_)))
    }
}

/// How many qualifiers of `stratum` the context satisfies, or `None` if the
/// stratum does not apply.
fn specificity(stratum: &Stratum, ctx: &QualifierContext) -> Option<usize> {
    match &stratum.qualifier {
        StratumQualifier::None => Some(0),
        StratumQualifier::Keyword { alternatives, .. } => alternatives
            .iter()
            .filter(|alt| alt.iter().all(|q| ctx.qualifiers.contains(q)))
            .map(Vec::len)
            .max(),
        // A collection window describes the sample; it applies unless the
        // context names a different window.
        StratumQualifier::Period(p) => {
            if !ctx.has_period() {
                Some(0)
            } else {
                ctx.qualifiers.contains(&Qualifier::Period(*p)).then_some(1)
            }
        }
    }
}

/// Classifies an observation against the stratum selected by `context`.
///
/// Closed intervals include both ends; `<x` and `>x` are strict, so an
/// observation equal to the limit falls outside the normal zone. Numeric
/// values are compared after conversion through `units`.
pub fn classify(
    range: &ReferenceRange,
    observed: &Observation,
    context: &QualifierContext,
    units: &UnitTable,
) -> Result<Classification, ClassifyError> {
    let scored: Vec<(usize, &Stratum)> =
        range.strata().iter().filter_map(|s| specificity(s, context).map(|n| (n, s))).collect();
    let Some(best) = scored.iter().map(|(n, _)| *n).max() else {
        return Ok(Classification::NotApplicable);
    };
    let winners: Vec<&Stratum> = scored.iter().filter(|(n, _)| *n == best).map(|(_, s)| *s).collect();
    if winners.len() > 1 {
        return Err(ClassifyError::AmbiguousContext(winners.len()));
    }
    classify_bound(&winners[0].bound, observed, units)
}

fn compare(observed: &Quantity, reference: &Quantity, units: &UnitTable) -> Result<std::cmp::Ordering, ClassifyError> {
    let (o, r) = units.commensurate(observed, reference).ok_or_else(|| ClassifyError::Unit {
        observed: observed.unit.symbol.clone(),
        reference: reference.unit.symbol.clone(),
    })?;
    Ok(o.cmp(&r))
}

fn classify_quantity(bound: &Bound, q: &Quantity, units: &UnitTable) -> Result<Classification, ClassifyError> {
    use std::cmp::Ordering::*;
    use Classification::*;
    Ok(match bound {
        Bound::ClosedInterval { lo, hi } => {
            if compare(q, lo, units)? == Less {
                Below
            } else if compare(q, hi, units)? == Greater {
                Above
            } else {
                Within
            }
        }
        Bound::LessThan { limit } => match compare(q, limit, units)? {
            Less => Within,
            _ => Above,
        },
        Bound::GreaterThan { limit } => match compare(q, limit, units)? {
            Greater => Within,
            _ => Below,
        },
        Bound::Compound { .. } => return Err(ClassifyError::KindMismatch("compound bound needs one value per component")),
        Bound::Qualitative { .. } => return Err(ClassifyError::KindMismatch("qualitative bound needs a qualitative observation")),
    })
}

fn classify_bound(bound: &Bound, observed: &Observation, units: &UnitTable) -> Result<Classification, ClassifyError> {
    match (bound, observed) {
        (Bound::Qualitative { expected }, Observation::Qualitative(text)) => {
            Ok(if expected.trim().to_lowercase() == text.trim().to_lowercase() {
                Classification::Match
            } else {
                Classification::Mismatch
            })
        }
        (Bound::Compound { components }, Observation::Compound(values)) => {
            if components.len() != values.len() {
                return Err(ClassifyError::KindMismatch("component count differs"));
            }
            let mut verdict = Classification::Within;
            for ((_, b), v) in components.iter().zip(values) {
                let c = classify_quantity(b, v, units)?;
                if verdict == Classification::Within {
                    verdict = c;
                }
            }
            Ok(verdict)
        }
        (_, Observation::Quantity(q)) => classify_quantity(bound, q, units),
        (_, Observation::Qualitative(_)) => Err(ClassifyError::KindMismatch("numeric bound needs a quantity")),
        (_, Observation::Compound(_)) => Err(ClassifyError::KindMismatch("only compound bounds take several values")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::range::{parse_reference_range, Period, PeriodUnit, Sex};

    fn obs(v: &str, unit: &str) -> Observation {
        Observation::Quantity(Quantity::new(v.parse().unwrap(), UnitTable::builtin().unit(unit)))
    }

    fn run(range: &str, o: &Observation, ctx: &QualifierContext) -> Result<Classification, ClassifyError> {
        classify(&parse_reference_range(range).unwrap(), o, ctx, UnitTable::builtin())
    }

    fn male() -> QualifierContext {
        QualifierContext::new([Qualifier::Sex(Sex::Male)])
    }

    #[test]
    fn cholesterol_within() {
        assert_eq!(run("<200 mg/dL", &obs("180", "mg/dL"), &QualifierContext::empty()), Ok(Classification::Within));
    }

    #[test]
    fn uric_acid_male_above() {
        let r = "Male: 3.0–7.0 mg/dL Female: 2.5–6.5 mg/dL";
        assert_eq!(run(r, &obs("8.1", "mg/dL"), &male()), Ok(Classification::Above));
        assert_eq!(run(r, &obs("2.9", "mg/dL"), &male()), Ok(Classification::Below));
    }

    #[test]
    fn fobt_mismatch() {
        let o = Observation::Qualitative("positive".into());
        assert_eq!(run("Negative", &o, &QualifierContext::empty()), Ok(Classification::Mismatch));
        let o = Observation::Qualitative(" NEGATIVE ".into());
        assert_eq!(run("Negative", &o, &QualifierContext::empty()), Ok(Classification::Match));
    }

    #[test]
    fn interval_edges_are_inclusive() {
        let ctx = QualifierContext::empty();
        assert_eq!(run("2–10 mU/L", &obs("2", "mU/L"), &ctx), Ok(Classification::Within));
        assert_eq!(run("2–10 mU/L", &obs("10.00", "mU/L"), &ctx), Ok(Classification::Within));
        assert_eq!(run("2–10 mU/L", &obs("10.01", "mU/L"), &ctx), Ok(Classification::Above));
    }

    #[test]
    fn comparator_limits_are_strict() {
        let ctx = QualifierContext::empty();
        assert_eq!(run("<200 mg/dL", &obs("200", "mg/dL"), &ctx), Ok(Classification::Above));
        assert_eq!(run("Male: >40 mg/dL Female: >50 mg/dL", &obs("40", "mg/dL"), &male()), Ok(Classification::Below));
    }

    #[test]
    fn unit_conversion() {
        let ctx = QualifierContext::empty();
        let range = "0.5–5 ng/L";
        assert_eq!(run(range, &obs("1", "µg/L"), &ctx), run(range, &obs("1000", "ng/L"), &ctx));
        assert_eq!(run("<20 µg/L", &obs("19999", "ng/L"), &ctx), Ok(Classification::Within));
        assert_eq!(run("<20 µg/L", &obs("20000", "ng/L"), &ctx), Ok(Classification::Above));
        assert!(matches!(run("<20 µg/L", &obs("1", "mmHg"), &ctx), Err(ClassifyError::Unit { .. })));
        // Verbatim units compare only with themselves.
        assert_eq!(run("90–120 m²/1.73", &obs("95", "m²/1.73"), &ctx), Ok(Classification::Within));
    }

    #[test]
    fn stratum_selection() {
        let r = "Male or non-pregnant female: <5 IU/L Postmenopausal women: <10 IU/L";
        assert_eq!(run(r, &obs("4", "IU/L"), &male()), Ok(Classification::Within));
        let post = QualifierContext::new([Qualifier::Sex(Sex::Female), Qualifier::Age(crate::range::AgeGroup::Postmenopausal)]);
        assert_eq!(run(r, &obs("7", "IU/L"), &post), Ok(Classification::Within));
        let female = QualifierContext::new([Qualifier::Sex(Sex::Female)]);
        assert_eq!(run(r, &obs("7", "IU/L"), &female), Ok(Classification::NotApplicable));
        let gh = "Children: <20 µg/L Male: <2 µg/L Female: <10 µg/L";
        let boy = QualifierContext::new([Qualifier::Sex(Sex::Male), Qualifier::Age(crate::range::AgeGroup::Children)]);
        assert_eq!(run(gh, &obs("1", "µg/L"), &boy), Err(ClassifyError::AmbiguousContext(2)));
    }

    #[test]
    fn period_applies_unless_contradicted() {
        let r = "24 h: <150 mg";
        assert_eq!(run(r, &obs("100", "mg"), &QualifierContext::empty()), Ok(Classification::Within));
        let day = Period { amount: "24".parse().unwrap(), unit: PeriodUnit::Hour };
        let twelve = Period { amount: "12".parse().unwrap(), unit: PeriodUnit::Hour };
        assert_eq!(run(r, &obs("100", "mg"), &QualifierContext::new([Qualifier::Period(day)])), Ok(Classification::Within));
        assert_eq!(run(r, &obs("100", "mg"), &QualifierContext::new([Qualifier::Period(twelve)])), Ok(Classification::NotApplicable));
    }

    #[test]
    fn blood_pressure_components() {
        let ctx = QualifierContext::empty();
        let u = UnitTable::builtin();
        let bp = |s: &str, d: &str| {
            Observation::Compound(vec![
                Quantity::new(s.parse().unwrap(), u.unit("mmHg")),
                Quantity::new(d.parse().unwrap(), u.unit("mmHg")),
            ])
        };
        assert_eq!(run("<120/80 mmHg", &bp("110", "70"), &ctx), Ok(Classification::Within));
        assert_eq!(run("<120/80 mmHg", &bp("110", "85"), &ctx), Ok(Classification::Above));
        assert!(run("<120/80 mmHg", &obs("110", "mmHg"), &ctx).is_err());
    }
}
