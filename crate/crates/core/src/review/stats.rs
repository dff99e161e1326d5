use std::collections::BTreeMap;

use num_rational::Ratio;
use serde::{Deserialize, Serialize, Serializer};

use super::{Action, ReviewDecision};

/// Counts over edge items. Edited items count as reviewed but not accepted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
pub struct ReviewStats {
    pub reviewed: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub edited: u64,
}

impl ReviewStats {
    /// Exact accepted/reviewed; None when nothing was reviewed.
    pub fn precision(&self) -> Option<Ratio<u64>> {
        (self.reviewed > 0).then(|| Ratio::new(self.accepted, self.reviewed))
    }

    /// Nearest whole percent, halves rounding up, e.g. "88%".
    pub fn precision_display(&self) -> Option<String> {
        (self.reviewed > 0).then(|| format!("{}%", (200 * self.accepted + self.reviewed) / (2 * self.reviewed)))
    }

    pub fn record(&mut self, action: Action) {
        self.reviewed += 1;
        match action {
            Action::Accept => self.accepted += 1,
            Action::Reject => self.rejected += 1,
            Action::Edit => self.edited += 1,
        }
    }
}

impl Serialize for ReviewStats {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Wire {
            reviewed: u64,
            accepted: u64,
            rejected: u64,
            edited: u64,
            /// Reduced fraction, e.g. "53/60".
            precision: Option<String>,
            precision_display: Option<String>,
        }
        Wire {
            reviewed: self.reviewed,
            accepted: self.accepted,
            rejected: self.rejected,
            edited: self.edited,
            precision: self.precision().map(|r| format!("{}/{}", r.numer(), r.denom())),
            precision_display: self.precision_display(),
        }
        .serialize(s)
    }
}

/// Stats from the log alone. Only edge items count, and an item decided
/// more than once counts once, by its latest decision.
pub fn compute_stats(log: &[ReviewDecision]) -> ReviewStats {
    let mut last: BTreeMap<&str, Action> = BTreeMap::new();
    for d in log.iter().filter(|d| d.target.is_edge()) {
        last.insert(&d.item_id, d.action);
    }
    let mut stats = ReviewStats::default();
    for a in last.into_values() {
        stats.record(a);
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::review::ItemTarget;
    use chrono::Utc;
    use proptest::prelude::*;

    fn log(actions: &[Action]) -> Vec<ReviewDecision> {
        actions
            .iter()
            .enumerate()
            .map(|(i, a)| ReviewDecision {
                decision_id: format!("d{i}"),
                item_id: format!("i{i}"),
                target: ItemTarget::Edge { edge_id: format!("e{i}") },
                action: *a,
                edited_triple: None,
                winner: None,
                reviewer_id: "r".into(),
                note: String::new(),
                decided_at: Utc::now(),
            })
            .collect()
    }

    fn synthetic(accepted: usize, rejected: usize, edited: usize) -> Vec<ReviewDecision> {
        let mut a = vec![Action::Accept; accepted];
        a.extend(vec![Action::Reject; rejected]);
        a.extend(vec![Action::Edit; edited]);
        log(&a)
    }

    #[test]
    fn headline_precision() {
        let s = compute_stats(&synthetic(212, 20, 8));
        assert_eq!((s.reviewed, s.accepted), (240, 212));
        assert_eq!(s.precision(), Some(Ratio::new(212, 240)));
        assert_eq!(s.precision_display().as_deref(), Some("88%"));
        let json = serde_json::to_value(s).unwrap();
        assert_eq!(json["precision"], "53/60");
        assert_eq!(json["precision_display"], "88%");
    }

    #[test]
    fn empty_log_has_no_precision() {
        let s = compute_stats(&[]);
        assert_eq!(s.precision(), None);
        assert_eq!(s.precision_display(), None);
        assert!(serde_json::to_value(s).unwrap()["precision"].is_null());
    }

    #[test]
    fn all_accepted_and_halves() {
        assert_eq!(compute_stats(&synthetic(10, 0, 0)).precision_display().as_deref(), Some("100%"));
        // 1/8 = 12.5% rounds up; 1/200 = 0.5% rounds up.
        assert_eq!(compute_stats(&synthetic(1, 7, 0)).precision_display().as_deref(), Some("13%"));
        assert_eq!(compute_stats(&synthetic(1, 199, 0)).precision_display().as_deref(), Some("1%"));
    }

    #[test]
    fn conflict_items_and_repeats() {
        let mut l = synthetic(1, 1, 0);
        let mut c = l[0].clone();
        c.decision_id = "dc".into();
        c.item_id = "ic".into();
        c.target = ItemTarget::Conflict { conflict_id: "c".into() };
        l.push(c);
        let mut again = l[1].clone();
        again.decision_id = "dx".into();
        again.action = Action::Accept;
        l.push(again);
        let s = compute_stats(&l);
        assert_eq!((s.reviewed, s.accepted, s.rejected), (2, 2, 0));
    }

    proptest! {
        #[test]
        fn display_is_nearest_percent(accepted in 0u64..2000, extra in 0u64..2000) {
            let s = ReviewStats { reviewed: accepted + extra, accepted, rejected: extra, edited: 0 };
            prop_assume!(s.reviewed > 0);
            let shown: u64 = s.precision_display().unwrap().trim_end_matches('%').parse().unwrap();
            // Oracle: |100·a/r − k| ≤ 1/2, with ties going up, in exact integers.
            let (a, r, k) = (accepted as i128, s.reviewed as i128, shown as i128);
            let twice_diff = 200 * a - 2 * k * r;
            prop_assert!(twice_diff.abs() <= r);
            prop_assert!(twice_diff != r);
            let p = s.precision().unwrap();
            prop_assert!(*p.numer() <= *p.denom());
        }

        #[test]
        fn incremental_matches_recomputed(actions in proptest::collection::vec(0u8..3, 0..60)) {
            let acts: Vec<Action> = actions.iter().map(|a| [Action::Accept, Action::Reject, Action::Edit][*a as usize]).collect();
            let mut inc = ReviewStats::default();
            for a in &acts {
                inc.record(*a);
            }
            prop_assert_eq!(inc, compute_stats(&log(&acts)));
        }
    }
}
