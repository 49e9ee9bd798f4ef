//! Hierarchical agglomerative clustering with an optional cluster-size cap,
//! and joint execution of many capped variants over one uncapped run.
//!
//! A cluster is identified by its smallest member id, which is also the
//! slot it occupies in the working similarity matrix.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{Partition, ValueTable};
use crate::similarity::{Linkage, SimilarityConfig, SimilarityMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeStep {
    pub step: usize,
    pub a: usize,
    pub b: usize,
    pub similarity: f64,
    /// Largest cluster size after this step.
    pub max_size: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MergeTrace {
    pub steps: Vec<MergeStep>,
}

impl MergeTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Number of leading steps whose running max cluster size stays within `cap`.
    pub fn prefix_within(&self, cap: usize) -> usize {
        self.steps.partition_point(|s| s.max_size <= cap)
    }

    /// One `step,a,b,sim,maxsize` line per merge.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            let _ = writeln!(out, "{},{},{},{},{}", s.step, s.a, s.b, s.similarity, s.max_size);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HacOutput {
    pub partition: Partition,
    pub trace: MergeTrace,
}

/// Where a capped run branches off the shared uncapped trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub cap: usize,
    pub prefix_len: usize,
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    sim: f64,
    a: usize,
    b: usize,
    va: u32,
    vb: u32,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    // Max-heap order: higher similarity first, then smaller keys.
    fn cmp(&self, other: &Self) -> Ordering {
        self.sim
            .total_cmp(&other.sim)
            .then_with(|| other.a.cmp(&self.a))
            .then_with(|| other.b.cmp(&self.b))
            .then_with(|| other.va.cmp(&self.va))
            .then_with(|| other.vb.cmp(&self.vb))
    }
}

struct State {
    sim: SimilarityMatrix,
    linkage: Linkage,
    threshold: f64,
    active: Vec<bool>,
    size: Vec<usize>,
    version: Vec<u32>,
    members: Vec<Vec<usize>>,
    max_size: usize,
    trace: Vec<MergeStep>,
}

impl State {
    fn new(sim: SimilarityMatrix, cfg: &SimilarityConfig) -> Self {
        let n = sim.len();
        Self {
            sim,
            linkage: cfg.linkage,
            threshold: cfg.stop_threshold,
            active: vec![true; n],
            size: vec![1; n],
            version: vec![0; n],
            members: (0..n).map(|i| vec![i]).collect(),
            max_size: usize::from(n > 0),
            trace: Vec::new(),
        }
    }

    fn n(&self) -> usize {
        self.active.len()
    }

    fn candidate(&self, a: usize, b: usize) -> Candidate {
        let (a, b) = (a.min(b), a.max(b));
        Candidate {
            sim: self.sim.get(a, b),
            a,
            b,
            va: self.version[a],
            vb: self.version[b],
        }
    }

    fn admissible(&self, a: usize, b: usize, cap: usize) -> bool {
        self.size[a] + self.size[b] <= cap && self.sim.get(a, b) >= self.threshold
    }

    fn is_current(&self, c: &Candidate) -> bool {
        self.active[c.a] && self.active[c.b] && self.version[c.a] == c.va && self.version[c.b] == c.vb
    }

    /// Every admissible pair among live clusters.
    fn fill_heap(&self, cap: usize) -> BinaryHeap<Candidate> {
        let live: Vec<usize> = (0..self.n()).filter(|&i| self.active[i]).collect();
        let mut heap = BinaryHeap::new();
        for (x, &i) in live.iter().enumerate() {
            for &j in &live[x + 1..] {
                if self.admissible(i, j, cap) {
                    heap.push(self.candidate(i, j));
                }
            }
        }
        heap
    }

    /// Merges slot `b` into slot `a` (`a < b`) with Lance-Williams updates.
    fn merge(&mut self, a: usize, b: usize, similarity: f64) {
        debug_assert!(a < b);
        let (na, nb) = (self.size[a] as f64, self.size[b] as f64);
        for k in 0..self.n() {
            if k == a || k == b || !self.active[k] {
                continue;
            }
            let (sa, sb) = (self.sim.get(a, k), self.sim.get(b, k));
            let s = match self.linkage {
                Linkage::Single => sa.max(sb),
                Linkage::Complete => sa.min(sb),
                Linkage::Average => (na * sa + nb * sb) / (na + nb),
            };
            self.sim.set(a, k, s);
        }
        self.active[b] = false;
        self.size[a] += self.size[b];
        self.version[a] += 1;
        let moved = std::mem::take(&mut self.members[b]);
        self.members[a].extend(moved);
        self.max_size = self.max_size.max(self.size[a]);
        self.trace.push(MergeStep {
            step: self.trace.len(),
            a,
            b,
            similarity,
            max_size: self.max_size,
        });
    }

    fn run(&mut self, cap: usize) {
        let mut heap = self.fill_heap(cap);
        while let Some(c) = heap.pop() {
            if !self.is_current(&c) || self.size[c.a] + self.size[c.b] > cap {
                continue;
            }
            self.merge(c.a, c.b, c.sim);
            for k in 0..self.n() {
                if k != c.a && self.active[k] && self.admissible(c.a, k, cap) {
                    heap.push(self.candidate(c.a, k));
                }
            }
        }
    }

    fn finish(self) -> HacOutput {
        let n = self.n();
        let groups = self.members.into_iter().filter(|m| !m.is_empty());
        HacOutput {
            partition: Partition::from_groups(n, groups).expect("merges preserve a partition"),
            trace: MergeTrace { steps: self.trace },
        }
    }
}

fn check(cfg: &SimilarityConfig, cap: Option<usize>) -> Result<()> {
    cfg.validate()?;
    if cap == Some(0) {
        return Err(Error::InvalidParameter("cluster size cap must be at least 1".into()));
    }
    Ok(())
}

/// Runs HAC over a precomputed similarity matrix. `cap = None` is uncapped.
pub fn run_hac_with_matrix(sim: SimilarityMatrix, cfg: &SimilarityConfig, cap: Option<usize>) -> Result<HacOutput> {
    check(cfg, cap)?;
    let n = sim.len();
    let mut state = State::new(sim, cfg);
    state.run(cap.unwrap_or(n).max(1));
    Ok(state.finish())
}

pub fn run_hac(table: &ValueTable, cfg: &SimilarityConfig, cap: Option<usize>) -> Result<HacOutput> {
    check(cfg, cap)?;
    let sim = SimilarityMatrix::from_table(table, cfg, Execution::default());
    run_hac_with_matrix(sim, cfg, cap)
}

/// Output of [`run_joint`]: the shared uncapped trace plus one result per cap.
#[derive(Clone, Debug)]
pub struct JointOutput {
    pub uncapped: HacOutput,
    pub checkpoints: Vec<Checkpoint>,
    pub results: BTreeMap<usize, HacOutput>,
}

/// Runs uncapped HAC once, then resumes every requested cap from the last
/// step of the shared trace it can reuse.
///
/// Each resumption replays the reusable prefix on a copy of the base matrix
/// and rebuilds the candidate set from the live clusters, so its output is
/// identical to [`run_hac`] with that cap.
pub fn run_joint_with_matrix(
    sim: &SimilarityMatrix,
    cfg: &SimilarityConfig,
    caps: &[usize],
    exec: Execution,
) -> Result<JointOutput> {
    check(cfg, None)?;
    let n = sim.len();
    if let Some(&bad) = caps.iter().find(|&&c| c == 0 || c > n.max(1)) {
        return Err(Error::InvalidParameter(format!("cap {bad} outside 1..={n}")));
    }
    let mut base = State::new(sim.clone(), cfg);
    base.run(n.max(1));
    let uncapped = base.finish();

    let mut caps: Vec<usize> = caps.to_vec();
    caps.sort_unstable();
    caps.dedup();
    let checkpoints: Vec<Checkpoint> = caps
        .iter()
        .map(|&cap| Checkpoint {
            cap,
            prefix_len: uncapped.trace.prefix_within(cap),
        })
        .collect();

    let outputs = exec.map(&checkpoints, |cp| {
        if cp.prefix_len == uncapped.trace.len() {
            // The whole uncapped run fits under this cap and nothing above
            // the threshold is left to merge.
            return uncapped.clone();
        }
        let mut state = State::new(sim.clone(), cfg);
        for s in &uncapped.trace.steps[..cp.prefix_len] {
            state.merge(s.a, s.b, s.similarity);
        }
        state.run(cp.cap);
        state.finish()
    });
    Ok(JointOutput {
        results: caps.into_iter().zip(outputs).collect(),
        checkpoints,
        uncapped,
    })
}

pub fn run_joint(table: &ValueTable, cfg: &SimilarityConfig, caps: &[usize], exec: Execution) -> Result<JointOutput> {
    let sim = SimilarityMatrix::from_table(table, cfg, exec);
    run_joint_with_matrix(&sim, cfg, caps, exec)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub cluster_count: usize,
    /// Cluster size to number of clusters of that size.
    pub histogram: BTreeMap<usize, usize>,
    pub max_size: usize,
}

pub fn cluster_stats(p: &Partition) -> ClusterStats {
    let mut histogram = BTreeMap::new();
    for c in p.clusters() {
        *histogram.entry(c.len()).or_insert(0) += 1;
    }
    ClusterStats {
        cluster_count: p.len(),
        histogram,
        max_size: p.max_size(),
    }
}
