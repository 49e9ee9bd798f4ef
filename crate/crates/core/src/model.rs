//! Values, clusters and partitions.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense index of a value inside a [`ValueTable`].
pub type ValueId = usize;

/// The set of strings to normalize. Exact duplicates collapse to one id.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct ValueTable {
    values: Vec<String>,
    index: HashMap<String, ValueId>,
}

impl ValueTable {
    pub fn new<I, S>(values: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::ingest(values).0
    }

    /// Builds a table and reports, for every input position, the id it maps to.
    pub fn ingest<I, S>(values: I) -> (Self, Vec<ValueId>)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut table = ValueTable::default();
        let mut ids = Vec::new();
        let mut duplicates = 0usize;
        for v in values {
            let v = v.into();
            let id = match table.index.get(&v) {
                Some(&id) => {
                    duplicates += 1;
                    id
                }
                None => {
                    let id = table.values.len();
                    table.index.insert(v.clone(), id);
                    table.values.push(v);
                    id
                }
            };
            ids.push(id);
        }
        if duplicates > 0 {
            log::debug!("collapsed {duplicates} duplicate input value(s)");
        }
        (table, ids)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ValueId) -> &str {
        &self.values[id]
    }

    pub fn id(&self, value: &str) -> Option<ValueId> {
        self.index.get(value).copied()
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (ValueId, &str)> {
        self.values.iter().enumerate().map(|(i, v)| (i, v.as_str()))
    }

    /// Longest member string; ties go to the smallest id.
    pub fn longest(&self, members: &[ValueId]) -> Option<ValueId> {
        members.iter().copied().min_by(|&a, &b| {
            self.values[b]
                .chars()
                .count()
                .cmp(&self.values[a].chars().count())
                .then(a.cmp(&b))
        })
    }

    /// Key used for every alphabetical list shown to a user: case-folded
    /// string first, raw bytes and id as tie-breakers.
    pub fn sort_alphabetically(&self, ids: &mut [ValueId]) {
        ids.sort_by_cached_key(|&id| (self.values[id].to_lowercase(), self.values[id].clone(), id));
    }
}

impl From<Vec<String>> for ValueTable {
    fn from(values: Vec<String>) -> Self {
        ValueTable::new(values)
    }
}

impl From<ValueTable> for Vec<String> {
    fn from(table: ValueTable) -> Self {
        table.values
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: usize,
    pub members: Vec<ValueId>,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Disjoint clusters covering every value id `0..n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    n: usize,
    clusters: Vec<Cluster>,
}

impl Partition {
    /// Validates and normalizes: members sorted, clusters ordered by their
    /// smallest member, ids renumbered from zero.
    pub fn from_groups<I>(n: usize, groups: I) -> Result<Self>
    where
        I: IntoIterator<Item = Vec<ValueId>>,
    {
        let mut seen = vec![false; n];
        let mut groups: Vec<Vec<ValueId>> = groups.into_iter().collect();
        for g in &mut groups {
            if g.is_empty() {
                return Err(Error::InvalidPartition("empty cluster".into()));
            }
            for &v in g.iter() {
                if v >= n {
                    return Err(Error::InvalidPartition(format!("value id {v} out of range 0..{n}")));
                }
                if std::mem::replace(&mut seen[v], true) {
                    return Err(Error::InvalidPartition(format!("value id {v} appears twice")));
                }
            }
            g.sort_unstable();
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidPartition(format!("value id {missing} is not covered")));
        }
        groups.sort_unstable_by_key(|g| g[0]);
        let clusters = groups
            .into_iter()
            .enumerate()
            .map(|(id, members)| Cluster { id, members })
            .collect();
        Ok(Self { n, clusters })
    }

    pub fn singletons(n: usize) -> Self {
        Self::from_groups(n, (0..n).map(|v| vec![v])).expect("singletons are a partition")
    }

    /// Builds a partition from one label per value.
    pub fn from_labels<L: Eq + std::hash::Hash>(labels: &[L]) -> Self {
        let mut slot: HashMap<&L, usize> = HashMap::new();
        let mut groups: Vec<Vec<ValueId>> = Vec::new();
        for (v, l) in labels.iter().enumerate() {
            let next = groups.len();
            let s = *slot.entry(l).or_insert(next);
            if s == groups.len() {
                groups.push(Vec::new());
            }
            groups[s].push(v);
        }
        Self::from_groups(labels.len(), groups).expect("labels always form a partition")
    }

    pub fn value_count(&self) -> usize {
        self.n
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// Cluster index of every value.
    pub fn assignment(&self) -> Vec<usize> {
        let mut out = vec![0; self.n];
        for c in &self.clusters {
            for &v in &c.members {
                out[v] = c.id;
            }
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(Cluster::len).collect()
    }

    pub fn max_size(&self) -> usize {
        self.clusters.iter().map(Cluster::len).max().unwrap_or(0)
    }

    /// Canonical (longest) string per cluster.
    pub fn canonical(&self, table: &ValueTable) -> Vec<ValueId> {
        self.clusters
            .iter()
            .map(|c| table.longest(&c.members).expect("clusters are nonempty"))
            .collect()
    }
}

/// The correct partition, with a per-value entity lookup.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldPartition {
    partition: Partition,
    entity_of: Vec<usize>,
}

impl GoldPartition {
    pub fn new(partition: Partition) -> Self {
        let entity_of = partition.assignment();
        Self { partition, entity_of }
    }

    pub fn from_labels<L: Eq + std::hash::Hash>(labels: &[L]) -> Self {
        Self::new(Partition::from_labels(labels))
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn entity_of(&self, v: ValueId) -> usize {
        self.entity_of[v]
    }

    pub fn entities(&self) -> &[usize] {
        &self.entity_of
    }

    pub fn entity_count(&self) -> usize {
        self.partition.len()
    }

    pub fn value_count(&self) -> usize {
        self.partition.value_count()
    }
}
