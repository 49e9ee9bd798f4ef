//! Verification sets and transitivity inference.
//!
//! Every user action implicitly verifies some matches and non-matches. The
//! union of those assertions, closed under match transitivity, decides
//! whether an action sequence pins down the gold partition.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::dsu::UnionFind;
use crate::error::{Error, Result};
use crate::model::{GoldPartition, ValueId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Match,
    NonMatch,
}

/// An unordered pair with a polarity, stored with `a < b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairAssertion {
    pub a: ValueId,
    pub b: ValueId,
    pub polarity: Polarity,
}

impl PairAssertion {
    /// `None` for a self-pair.
    pub fn new(a: ValueId, b: ValueId, polarity: Polarity) -> Option<Self> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Some(Self { a, b, polarity }),
            std::cmp::Ordering::Greater => Some(Self { a: b, b: a, polarity }),
            std::cmp::Ordering::Equal => None,
        }
    }

    pub fn matching(a: ValueId, b: ValueId) -> Self {
        Self::new(a, b, Polarity::Match).expect("distinct values")
    }

    pub fn non_matching(a: ValueId, b: ValueId) -> Self {
        Self::new(a, b, Polarity::NonMatch).expect("distinct values")
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VerificationSet {
    pairs: HashMap<(ValueId, ValueId), Polarity>,
    matches: usize,
}

impl VerificationSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one assertion. Returns whether it was new.
    pub fn record(&mut self, assertion: PairAssertion) -> Result<bool> {
        let key = (assertion.a, assertion.b);
        match self.pairs.get(&key) {
            Some(&p) if p == assertion.polarity => Ok(false),
            Some(_) => Err(Error::ConflictingEvidence(assertion.a, assertion.b)),
            None => {
                self.pairs.insert(key, assertion.polarity);
                if assertion.polarity == Polarity::Match {
                    self.matches += 1;
                }
                Ok(true)
            }
        }
    }

    /// Set union with conflict detection; returns the number of new assertions.
    pub fn extend<I: IntoIterator<Item = PairAssertion>>(&mut self, new: I) -> Result<usize> {
        let mut added = 0;
        for a in new {
            added += usize::from(self.record(a)?);
        }
        Ok(added)
    }

    /// Functional form of [`extend`](Self::extend).
    pub fn with<I: IntoIterator<Item = PairAssertion>>(mut self, new: I) -> Result<Self> {
        self.extend(new)?;
        Ok(self)
    }

    pub fn merge(&mut self, other: &VerificationSet) -> Result<usize> {
        self.extend(other.iter())
    }

    /// All pairwise matches inside `members`.
    pub fn record_clique(&mut self, members: &[ValueId]) -> Result<usize> {
        let mut added = 0;
        for (i, &a) in members.iter().enumerate() {
            for &b in &members[i + 1..] {
                added += usize::from(self.record(PairAssertion::matching(a, b))?);
            }
        }
        Ok(added)
    }

    /// Non-matches between every member of `left` and every member of `right`.
    pub fn record_cross_non_matches(&mut self, left: &[ValueId], right: &[ValueId]) -> Result<usize> {
        let mut added = 0;
        for &a in left {
            for &b in right {
                added += usize::from(self.record(PairAssertion::non_matching(a, b))?);
            }
        }
        Ok(added)
    }

    pub fn get(&self, a: ValueId, b: ValueId) -> Option<Polarity> {
        let key = if a < b { (a, b) } else { (b, a) };
        self.pairs.get(&key).copied()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn match_count(&self) -> usize {
        self.matches
    }

    pub fn non_match_count(&self) -> usize {
        self.pairs.len() - self.matches
    }

    pub fn iter(&self) -> impl Iterator<Item = PairAssertion> + '_ {
        self.pairs
            .iter()
            .map(|(&(a, b), &polarity)| PairAssertion { a, b, polarity })
    }

    /// Assertions in canonical order, for export and comparison.
    pub fn sorted(&self) -> Vec<PairAssertion> {
        let mut out: Vec<_> = self.iter().collect();
        out.sort_unstable_by_key(|p| (p.a, p.b));
        out
    }
}

/// Match components plus non-match edges lifted to component pairs.
#[derive(Clone, Debug)]
pub struct TransitivityIndex {
    component: Vec<usize>,
    non_match: HashSet<(usize, usize)>,
}

impl TransitivityIndex {
    /// Builds the index over value ids `0..n`.
    pub fn build(vs: &VerificationSet, n: usize) -> Result<Self> {
        let mut uf = UnionFind::new(n);
        for p in vs.iter().filter(|p| p.polarity == Polarity::Match) {
            uf.union(p.a, p.b);
        }
        let component = uf.roots();
        let mut non_match = HashSet::new();
        for p in vs.iter().filter(|p| p.polarity == Polarity::NonMatch) {
            let (ca, cb) = (component[p.a], component[p.b]);
            if ca == cb {
                return Err(Error::ConflictingEvidence(p.a, p.b));
            }
            non_match.insert((ca.min(cb), ca.max(cb)));
        }
        Ok(Self { component, non_match })
    }

    pub fn component_of(&self, v: ValueId) -> usize {
        self.component[v]
    }

    /// Whether the assertion is present in, or follows from, the evidence.
    pub fn can_infer(&self, pair: &PairAssertion) -> bool {
        let (ca, cb) = (self.component[pair.a], self.component[pair.b]);
        match pair.polarity {
            Polarity::Match => ca == cb,
            Polarity::NonMatch => ca != cb && self.non_match.contains(&(ca.min(cb), ca.max(cb))),
        }
    }

    pub fn component_count(&self) -> usize {
        self.component.iter().collect::<HashSet<_>>().len()
    }

    pub fn non_match_edge_count(&self) -> usize {
        self.non_match.len()
    }

    /// Groups of values sharing a match component.
    pub fn components(&self) -> Vec<Vec<ValueId>> {
        let mut slot: HashMap<usize, usize> = HashMap::new();
        let mut groups: Vec<Vec<ValueId>> = Vec::new();
        for (v, &c) in self.component.iter().enumerate() {
            let next = groups.len();
            let s = *slot.entry(c).or_insert(next);
            if s == next {
                groups.push(Vec::new());
            }
            groups[s].push(v);
        }
        groups
    }
}

/// True iff every gold match and gold non-match is present in `vs` or
/// inferable from it.
///
/// Checked at component granularity: the match components must coincide
/// with the gold clusters, and every pair of components must carry a
/// non-match edge.
pub fn is_gold_sequence(vs: &VerificationSet, gold: &GoldPartition) -> bool {
    let n = gold.value_count();
    let index = match TransitivityIndex::build(vs, n) {
        Ok(i) => i,
        Err(_) => return false,
    };
    let mut component_of_entity: HashMap<usize, usize> = HashMap::new();
    let mut entity_of_component: HashMap<usize, usize> = HashMap::new();
    for v in 0..n {
        let (e, c) = (gold.entity_of(v), index.component_of(v));
        if *component_of_entity.entry(e).or_insert(c) != c {
            return false;
        }
        if *entity_of_component.entry(c).or_insert(e) != e {
            return false;
        }
    }
    let m = entity_of_component.len() as u64;
    index.non_match_edge_count() as u64 == m * m.saturating_sub(1) / 2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Partition;

    // Sony, Sony Corp, Vizio Corp, Vizo, Vizio
    fn figure_three() -> VerificationSet {
        let q_split_d1 = [
            PairAssertion::matching(0, 1),
            PairAssertion::non_matching(0, 2),
            PairAssertion::non_matching(1, 2),
        ];
        let q_split_d2 = [PairAssertion::matching(3, 4)];
        let q_merge = [PairAssertion::matching(3, 2), PairAssertion::matching(4, 2)];
        VerificationSet::new()
            .with(q_split_d1)
            .and_then(|vs| vs.with(q_split_d2))
            .and_then(|vs| vs.with(q_merge))
            .unwrap()
    }

    #[test]
    fn figure_three_union_has_six_assertions() {
        let vs = figure_three();
        assert_eq!(vs.len(), 6);
        assert_eq!(vs.match_count(), 4);
        assert_eq!(vs.non_match_count(), 2);
        assert!(VerificationSet::new().with([]).unwrap().is_empty());
    }

    #[test]
    fn opposite_polarity_conflicts() {
        let err = VerificationSet::new()
            .with([PairAssertion::matching(1, 2), PairAssertion::non_matching(2, 1)])
            .unwrap_err();
        assert_eq!(err, Error::ConflictingEvidence(1, 2));
    }

    #[test]
    fn figure_three_index() {
        let idx = TransitivityIndex::build(&figure_three(), 5).unwrap();
        let mut comps = idx.components();
        comps.sort();
        assert_eq!(comps, vec![vec![0, 1], vec![2, 3, 4]]);
        assert_eq!(idx.non_match_edge_count(), 1);
        assert!(idx.can_infer(&PairAssertion::non_matching(0, 4)));
    }

    #[test]
    fn inference_examples() {
        let vs = VerificationSet::new()
            .with([PairAssertion::matching(0, 1), PairAssertion::matching(1, 2)])
            .unwrap();
        let idx = TransitivityIndex::build(&vs, 5).unwrap();
        assert!(idx.can_infer(&PairAssertion::matching(0, 2)));
        assert!(!idx.can_infer(&PairAssertion::matching(3, 4)));

        let vs = VerificationSet::new()
            .with([PairAssertion::matching(0, 1), PairAssertion::non_matching(1, 2)])
            .unwrap();
        let idx = TransitivityIndex::build(&vs, 3).unwrap();
        assert_eq!(idx.component_count(), 2);
        assert!(idx.can_infer(&PairAssertion::non_matching(0, 2)));
        assert!(!idx.can_infer(&PairAssertion::matching(0, 2)));
    }

    #[test]
    fn non_match_inside_component_is_conflict() {
        let vs = VerificationSet::new()
            .with([
                PairAssertion::matching(0, 1),
                PairAssertion::matching(1, 2),
                PairAssertion::non_matching(0, 2),
            ])
            .unwrap();
        assert!(matches!(TransitivityIndex::build(&vs, 3), Err(Error::ConflictingEvidence(..))));
    }

    #[test]
    fn gold_sequence_examples() {
        let gold = GoldPartition::new(Partition::from_groups(5, vec![vec![0, 1], vec![2, 3, 4]]).unwrap());
        assert!(is_gold_sequence(&figure_three(), &gold));
        assert!(!is_gold_sequence(&VerificationSet::new(), &gold));
        let only_matches = VerificationSet::new()
            .with([
                PairAssertion::matching(0, 1),
                PairAssertion::matching(2, 3),
                PairAssertion::matching(3, 4),
            ])
            .unwrap();
        assert!(!is_gold_sequence(&only_matches, &gold));
    }
}
