//! Seeded synthetic datasets: entity names plus typo and abbreviation variants.
//!
//! Entities come in families that share a stem ("Norvak Systems",
//! "Norvak Labs"), so similarity clustering produces impure clusters once the
//! size cap is loose enough. Variant counts per entity follow a power-law
//! weighting, with every entity getting at least one value.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GoldPartition;

const SUFFIXES: &[&str] = &[
    "Corp", "Inc", "Ltd", "Group", "Labs", "Systems", "Holdings", "Partners", "Media", "Foods", "Motors", "Bank",
];
const SYLLABLES: &[&str] = &[
    "ar", "bel", "cor", "dan", "el", "fin", "gar", "hol", "is", "jun", "kel", "lor", "mar", "nor", "ol", "pra", "quin",
    "ras", "sol", "tor", "ul", "ven", "wes", "xan", "yor", "zel", "tri", "vak", "mon", "sta",
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TypoModel {
    pub substitute: f64,
    pub delete: f64,
    pub insert: f64,
    pub transpose: f64,
    pub case: f64,
    pub abbreviate: f64,
    pub drop_suffix: f64,
}

impl Default for TypoModel {
    fn default() -> Self {
        Self {
            substitute: 0.3,
            delete: 0.25,
            insert: 0.25,
            transpose: 0.1,
            case: 0.2,
            abbreviate: 0.1,
            drop_suffix: 0.15,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_values: usize,
    pub n_entities: usize,
    /// Entities sharing one stem.
    pub family_size: usize,
    /// Exponent of the variant-count weighting (0 = uniform).
    pub skew: f64,
    pub typos: TypoModel,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_values: 200,
            n_entities: 40,
            family_size: 3,
            skew: 0.8,
            typos: TypoModel::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthDataset {
    pub values: Vec<String>,
    /// Gold entity of each value.
    pub labels: Vec<usize>,
    /// Canonical name of each entity.
    pub entities: Vec<String>,
}

impl SynthDataset {
    pub fn gold(&self) -> GoldPartition {
        GoldPartition::from_labels(&self.labels)
    }

    pub fn variant_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.entities.len()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn word(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(2..=3);
    let w: String = (0..n).map(|_| *SYLLABLES.choose(rng).expect("nonempty")).collect();
    capitalize(&w)
}

fn entity_names(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut names = Vec::with_capacity(cfg.n_entities);
    let mut seen = HashSet::new();
    let family = cfg.family_size.max(1);
    while names.len() < cfg.n_entities {
        let stem = if rng.gen_bool(0.3) {
            format!("{} {}", word(rng), word(rng))
        } else {
            word(rng)
        };
        let mut suffixes: Vec<&str> = SUFFIXES.to_vec();
        suffixes.shuffle(rng);
        for s in suffixes.into_iter().take(family) {
            if names.len() == cfg.n_entities {
                break;
            }
            let name = format!("{stem} {s}");
            if seen.insert(name.to_lowercase()) {
                names.push(name);
            }
        }
    }
    names
}

fn variant_counts(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let k = cfg.n_entities;
    let mut counts = vec![1usize; k];
    let weights: Vec<f64> = (1..=k).map(|r| (r as f64).powf(-cfg.skew)).collect();
    let total: f64 = weights.iter().sum();
    let mut cumulative = Vec::with_capacity(k);
    let mut acc = 0.0;
    for w in &weights {
        acc += w / total;
        cumulative.push(acc);
    }
    for _ in k..cfg.n_values {
        let x: f64 = rng.gen();
        let i = cumulative.partition_point(|&c| c < x).min(k - 1);
        counts[i] += 1;
    }
    counts.shuffle(rng);
    counts
}

fn random_letter(rng: &mut ChaCha8Rng) -> char {
    rng.gen_range(b'a'..=b'z') as char
}

/// One noisy variant of `name`.
pub fn mutate(name: &str, t: &TypoModel, rng: &mut ChaCha8Rng) -> String {
    let mut words: Vec<String> = name.split(' ').map(str::to_string).collect();
    if words.len() > 1 && rng.gen_bool(t.drop_suffix) {
        words.pop();
    }
    if words.len() > 1 && rng.gen_bool(t.abbreviate) {
        let i = rng.gen_range(0..words.len());
        let w: String = words[i].chars().take(rng.gen_range(1..=3)).collect();
        words[i] = format!("{w}.");
    }
    let mut chars: Vec<char> = words.join(" ").chars().collect();
    if rng.gen_bool(t.substitute) && !chars.is_empty() {
        let i = rng.gen_range(0..chars.len());
        chars[i] = random_letter(rng);
    }
    if rng.gen_bool(t.delete) && chars.len() > 3 {
        chars.remove(rng.gen_range(0..chars.len()));
    }
    if rng.gen_bool(t.insert) {
        let i = rng.gen_range(0..=chars.len());
        chars.insert(i, random_letter(rng));
    }
    if rng.gen_bool(t.transpose) && chars.len() > 2 {
        let i = rng.gen_range(0..chars.len() - 1);
        chars.swap(i, i + 1);
    }
    let s: String = chars.into_iter().collect();
    if rng.gen_bool(t.case) {
        match rng.gen_range(0..3) {
            0 => s.to_uppercase(),
            1 => s.to_lowercase(),
            _ => s.split(' ').map(capitalize).collect::<Vec<_>>().join(" "),
        }
    } else {
        s
    }
}

/// Generates `n_values` unique strings over `n_entities` entities.
pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    if cfg.n_entities == 0 && cfg.n_values > 0 || cfg.n_entities > cfg.n_values {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= n_entities <= n_values, got {} entities for {} values",
            cfg.n_entities, cfg.n_values
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let entities = entity_names(cfg, &mut rng);
    let counts = variant_counts(cfg, &mut rng);
    let mut seen: HashSet<String> = HashSet::with_capacity(cfg.n_values);
    let mut values = Vec::with_capacity(cfg.n_values);
    let mut labels = Vec::with_capacity(cfg.n_values);
    for (e, (name, &count)) in entities.iter().zip(&counts).enumerate() {
        if seen.insert(name.clone()) {
            values.push(name.clone());
            labels.push(e);
        }
        let mut attempts = 0;
        while labels.iter().rev().take_while(|&&l| l == e).count() < count {
            attempts += 1;
            let mut v = mutate(name, &cfg.typos, &mut rng);
            if attempts > 50 {
                // Short names run out of distinct edits; tag the variant instead.
                v = format!("{name} {attempts}");
            }
            if seen.insert(v.clone()) {
                values.push(v);
                labels.push(e);
            }
        }
    }
    // Interleave entities so value ids carry no hint of the gold clustering.
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.shuffle(&mut rng);
    Ok(SynthDataset {
        values: order.iter().map(|&i| values[i].clone()).collect(),
        labels: order.iter().map(|&i| labels[i]).collect(),
        entities,
    })
}
