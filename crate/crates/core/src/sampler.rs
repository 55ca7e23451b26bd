//! Negative sampling for drug-drug interaction triples.
//!
//! A positive triple `(dx, dy, se)` is corrupted by replacing `dy` with a
//! drug drawn with probability proportional to `f^(3/4)`, where `f` counts
//! how often each drug appears among the positives.

use std::collections::HashSet;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphPair, Target};

pub const DEFAULT_RETRIES: usize = 100;

/// `(drug x, drug y, side-effect class)`.
pub type Triple = (usize, usize, usize);

#[derive(Clone, Debug)]
pub struct SamplerState {
    pub counts: Vec<u64>,
    pub probs: Vec<f64>,
    dist: WeightedIndex<f64>,
}

impl SamplerState {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        let nonzero = counts.iter().filter(|&&c| c > 0).count();
        if counts.len() < 2 || nonzero == 0 {
            return Err(Error::Config("negative sampling needs at least two drugs with positive mass".into()));
        }
        let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
        let total: f64 = weights.iter().sum();
        let probs = weights.iter().map(|w| w / total).collect();
        let dist = WeightedIndex::new(&weights).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self { counts, probs, dist })
    }

    /// Counts every drug occurrence (both sides) among `positives`.
    pub fn from_positives(num_drugs: usize, positives: &[Triple]) -> Result<Self> {
        let mut counts = vec![0u64; num_drugs];
        for &(x, y, _) in positives {
            for d in [x, y] {
                *counts
                    .get_mut(d)
                    .ok_or(Error::IndexOutOfRange { index: d, len: num_drugs })? += 1;
            }
        }
        Self::new(counts)
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> usize {
        self.dist.sample(rng)
    }
}

/// Set of known positives; drug pairs are unordered.
#[derive(Clone, Debug, Default)]
pub struct PositiveSet {
    set: HashSet<Triple>,
}

impl PositiveSet {
    pub fn new(positives: &[Triple]) -> Self {
        let mut set = HashSet::new();
        for &(x, y, s) in positives {
            set.insert((x.min(y), x.max(y), s));
        }
        Self { set }
    }

    pub fn contains(&self, (x, y, s): Triple) -> bool {
        self.set.contains(&(x.min(y), x.max(y), s))
    }
}

/// Replaces `dy` with a sampled drug that differs from it and does not
/// form a known positive with `dx`.
pub fn negative_sample<R: Rng>(
    positive: Triple,
    state: &SamplerState,
    known: &PositiveSet,
    rng: &mut R,
    max_retries: usize,
) -> Result<Triple> {
    let (dx, dy, se) = positive;
    for _ in 0..max_retries {
        let d = state.draw(rng);
        if d != dy && !known.contains((dx, d, se)) {
            return Ok((dx, d, se));
        }
    }
    Err(Error::SamplerExhausted { retries: max_retries })
}

/// Drug graphs plus positive interaction triples.
#[derive(Clone, Debug)]
pub struct DdiData {
    pub drugs: Vec<Graph>,
    pub positives: Vec<Triple>,
    pub num_classes: usize,
}

impl DdiData {
    /// Training pairs: each positive with `ratio` sampled negatives.
    /// Targets set the triple's class to 1 (or 0 for a negative) and mask
    /// every other class.
    pub fn pairs_with_negatives<R: Rng>(&self, ratio: usize, rng: &mut R) -> Result<Vec<GraphPair>> {
        let state = SamplerState::from_positives(self.drugs.len(), &self.positives)?;
        let known = PositiveSet::new(&self.positives);
        let mut out = Vec::with_capacity(self.positives.len() * (1 + ratio));
        for &t in &self.positives {
            out.push(self.pair(t, 1.0)?);
            for _ in 0..ratio {
                let neg = negative_sample(t, &state, &known, rng, DEFAULT_RETRIES)?;
                out.push(self.pair(neg, 0.0)?);
            }
        }
        Ok(out)
    }

    fn pair(&self, (x, y, se): Triple, value: f64) -> Result<GraphPair> {
        if se >= self.num_classes {
            return Err(Error::IndexOutOfRange {
                index: se,
                len: self.num_classes,
            });
        }
        let get = |d: usize| {
            self.drugs.get(d).cloned().ok_or(Error::IndexOutOfRange {
                index: d,
                len: self.drugs.len(),
            })
        };
        let mut target = vec![-1.0; self.num_classes];
        target[se] = value;
        GraphPair::new(get(x)?, get(y)?, Target::Classes(target))
    }
}
