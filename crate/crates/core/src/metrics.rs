//! Match-set accuracy of a partition against gold.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GoldPartition, Partition};

fn pairs(k: usize) -> u64 {
    let k = k as u64;
    k * k.saturating_sub(1) / 2
}

/// Number of matches a partition specifies.
pub fn match_set_size(partition: &Partition) -> u64 {
    partition.clusters().iter().map(|c| pairs(c.len())).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub candidate_matches: u64,
    pub gold_matches: u64,
    pub correct_matches: u64,
}

impl PrecisionRecall {
    pub fn is_perfect(&self) -> bool {
        self.correct_matches == self.candidate_matches && self.correct_matches == self.gold_matches
    }
}

/// Precision and recall by contingency counting over cluster intersections.
///
/// An empty candidate match set has precision 1.0, an empty gold match set
/// has recall 1.0.
pub fn precision_recall(candidate: &Partition, gold: &GoldPartition) -> Result<PrecisionRecall> {
    if candidate.value_count() != gold.value_count() {
        return Err(Error::ValueTableMismatch(format!(
            "candidate covers {} values, gold covers {}",
            candidate.value_count(),
            gold.value_count()
        )));
    }
    let mut cells: HashMap<(usize, usize), usize> = HashMap::new();
    for c in candidate.clusters() {
        for &v in &c.members {
            *cells.entry((c.id, gold.entity_of(v))).or_default() += 1;
        }
    }
    let correct: u64 = cells.values().map(|&k| pairs(k)).sum();
    let candidate_matches = match_set_size(candidate);
    let gold_matches = match_set_size(gold.partition());
    let ratio = |num: u64, den: u64, what: &str| {
        if den == 0 {
            log::debug!("{what}: empty match set, defined as 1.0");
            1.0
        } else {
            num as f64 / den as f64
        }
    };
    Ok(PrecisionRecall {
        precision: ratio(correct, candidate_matches, "precision"),
        recall: ratio(correct, gold_matches, "recall"),
        candidate_matches,
        gold_matches,
        correct_matches: correct,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ValueTable;

    fn fig2() -> (ValueTable, Partition, GoldPartition) {
        let t = ValueTable::new(["Sony", "Sony Corp", "Vizio Corp", "Vizio", "Vizio Inc"]);
        let cand = Partition::from_groups(5, vec![vec![0, 1, 2], vec![3, 4]]).unwrap();
        let gold = GoldPartition::new(Partition::from_groups(5, vec![vec![0, 1], vec![2, 3, 4]]).unwrap());
        (t, cand, gold)
    }

    #[test]
    fn figure_two_match_counts() {
        let (_, cand, _) = fig2();
        assert_eq!(match_set_size(&cand), 4);
        assert_eq!(match_set_size(&Partition::singletons(5)), 0);
        assert_eq!(match_set_size(&Partition::from_groups(4, vec![vec![0, 1, 2, 3]]).unwrap()), 6);
    }

    #[test]
    fn figure_two_precision_recall_is_half() {
        let (_, cand, gold) = fig2();
        let pr = precision_recall(&cand, &gold).unwrap();
        assert_eq!((pr.precision, pr.recall), (0.5, 0.5));
    }

    #[test]
    fn identity_and_singletons() {
        let (_, _, gold) = fig2();
        let pr = precision_recall(gold.partition(), &gold).unwrap();
        assert_eq!((pr.precision, pr.recall), (1.0, 1.0));
        let pr = precision_recall(&Partition::singletons(5), &gold).unwrap();
        assert_eq!((pr.precision, pr.recall), (1.0, 0.0));
    }

    #[test]
    fn mismatched_tables_error() {
        let (_, _, gold) = fig2();
        assert!(matches!(
            precision_recall(&Partition::singletons(4), &gold),
            Err(Error::ValueTableMismatch(_))
        ));
    }
}
