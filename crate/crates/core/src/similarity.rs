//! Character n-gram Jaccard similarity.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::ValueTable;

const START: char = '\u{2}';
const END: char = '\u{3}';

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Single,
    Complete,
    #[default]
    Average,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimilarityConfig {
    pub gram_size: usize,
    pub stop_threshold: f64,
    pub linkage: Linkage,
    /// Pad both ends with `gram_size - 1` boundary markers before cutting grams.
    pub pad: bool,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self {
            gram_size: 3,
            stop_threshold: 0.3,
            linkage: Linkage::Average,
            pad: true,
        }
    }
}

impl SimilarityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gram_size == 0 {
            return Err(Error::InvalidParameter("gram size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.stop_threshold) {
            return Err(Error::InvalidParameter(format!(
                "stop threshold {} outside [0, 1]",
                self.stop_threshold
            )));
        }
        Ok(())
    }
}

/// Case-folded gram strings of `s`, sorted and deduplicated.
pub fn grams(s: &str, cfg: &SimilarityConfig) -> Vec<String> {
    let k = cfg.gram_size.max(1);
    let mut chars: Vec<char> = Vec::new();
    if cfg.pad {
        chars.extend(std::iter::repeat_n(START, k - 1));
    }
    chars.extend(s.to_lowercase().chars());
    if cfg.pad {
        chars.extend(std::iter::repeat_n(END, k - 1));
    }
    let mut out: Vec<String> = chars.windows(k).map(|w| w.iter().collect()).collect();
    out.sort_unstable();
    out.dedup();
    out
}

fn jaccard_sorted<T: Ord>(a: &[T], b: &[T]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Jaccard similarity of the gram sets of `a` and `b`.
///
/// Two empty gram sets score 1.0 when the folded strings are equal and 0.0
/// otherwise.
pub fn jaccard(a: &str, b: &str, cfg: &SimilarityConfig) -> f64 {
    let (ga, gb) = (grams(a, cfg), grams(b, cfg));
    if ga.is_empty() && gb.is_empty() {
        return if a.to_lowercase() == b.to_lowercase() { 1.0 } else { 0.0 };
    }
    jaccard_sorted(&ga, &gb)
}

/// 3-gram Jaccard with the default (padded) configuration.
pub fn jaccard3g(a: &str, b: &str) -> f64 {
    jaccard(a, b, &SimilarityConfig::default())
}

/// Interned gram profiles of a whole table, for fast pairwise scoring.
#[derive(Clone, Debug)]
pub struct Profiles {
    grams: Vec<Vec<u32>>,
    folded: Vec<String>,
}

impl Profiles {
    pub fn build(table: &ValueTable, cfg: &SimilarityConfig) -> Self {
        let mut intern: HashMap<String, u32> = HashMap::new();
        let mut profiles = Vec::with_capacity(table.len());
        for (_, v) in table.iter() {
            let mut ids: Vec<u32> = grams(v, cfg)
                .into_iter()
                .map(|g| {
                    let next = intern.len() as u32;
                    *intern.entry(g).or_insert(next)
                })
                .collect();
            ids.sort_unstable();
            profiles.push(ids);
        }
        let folded = table.values().iter().map(|v| v.to_lowercase()).collect();
        Self { grams: profiles, folded }
    }

    pub fn len(&self) -> usize {
        self.grams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grams.is_empty()
    }

    pub fn similarity(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (&self.grams[i], &self.grams[j]);
        if a.is_empty() && b.is_empty() {
            return if self.folded[i] == self.folded[j] { 1.0 } else { 0.0 };
        }
        jaccard_sorted(a, b)
    }

    /// Highest similarity between value `v` and any of `others`.
    pub fn max_similarity(&self, v: usize, others: &[usize]) -> f64 {
        others.iter().map(|&o| self.similarity(v, o)).fold(0.0, f64::max)
    }
}

/// Strict upper triangle of a symmetric similarity matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn build(profiles: &Profiles, exec: Execution) -> Self {
        let n = profiles.len();
        let rows = exec.map_range(n, |i| {
            ((i + 1)..n).map(|j| profiles.similarity(i, j)).collect::<Vec<f64>>()
        });
        Self {
            n,
            data: rows.concat(),
        }
    }

    pub fn from_table(table: &ValueTable, cfg: &SimilarityConfig, exec: Execution) -> Self {
        Self::build(&Profiles::build(table, cfg), exec)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        debug_assert!(i != j && j < self.n);
        i * (2 * self.n - i - 1) / 2 + (j - i - 1)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.index(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, s: f64) {
        let k = self.index(i, j);
        self.data[k] = s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unpadded() -> SimilarityConfig {
        SimilarityConfig {
            pad: false,
            ..Default::default()
        }
    }

    #[test]
    fn identity_scores_one() {
        assert_eq!(jaccard3g("abc", "abc"), 1.0);
        assert_eq!(jaccard3g("Sony", "SONY"), 1.0);
    }

    #[test]
    fn unpadded_overlap_is_one_third() {
        assert_eq!(grams("abcd", &unpadded()), vec!["abc", "bcd"]);
        assert!((jaccard("abcd", "bcde", &unpadded()) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn short_strings_without_grams() {
        assert_eq!(jaccard("x", "y", &unpadded()), 0.0);
        assert_eq!(jaccard("x", "X", &unpadded()), 1.0);
        assert_eq!(jaccard("x", "xyz", &unpadded()), 0.0);
    }

    #[test]
    fn padding_gives_short_strings_grams() {
        let g = grams("ab", &SimilarityConfig::default());
        assert_eq!(g.len(), 4);
        assert!(jaccard3g("x", "y") == 0.0);
    }

    #[test]
    fn matrix_agrees_with_direct_scores() {
        let t = ValueTable::new(["Sony", "Sonny", "Sony Corp", "LG", "Lg"]);
        let cfg = SimilarityConfig::default();
        let m = SimilarityMatrix::from_table(&t, &cfg, Execution::Sequential);
        let p = SimilarityMatrix::from_table(&t, &cfg, Execution::Parallel);
        assert_eq!(m, p);
        for i in 0..t.len() {
            for j in 0..t.len() {
                if i != j {
                    assert_eq!(m.get(i, j), jaccard(t.get(i), t.get(j), &cfg));
                }
            }
        }
    }
}
