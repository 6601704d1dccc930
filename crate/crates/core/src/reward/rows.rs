use std::collections::{BTreeMap, HashMap};

use crate::data::Segment;
use crate::scalar::Scalar;

/// Deduplicated `[state; action]` inputs. Segments become sparse count vectors
/// over the unique rows so each network pass touches every distinct input once.
#[derive(Clone, Debug, Default)]
pub struct RowTable<S> {
    rows: Vec<Vec<S>>,
    index: HashMap<Vec<u64>, usize>,
}

/// `(row index, multiplicity)` pairs sorted by row index.
pub type RowCounts<S> = Vec<(usize, S)>;

impl<S: Scalar> RowTable<S> {
    pub fn new() -> Self {
        Self {
            rows: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn intern(&mut self, row: Vec<S>) -> usize {
        let key: Vec<u64> = row.iter().map(|v| v.as_f64().to_bits()).collect();
        let next = self.rows.len();
        let id = *self.index.entry(key).or_insert(next);
        if id == next {
            self.rows.push(row);
        }
        id
    }

    pub fn segment_counts(&mut self, seg: &Segment<S>) -> RowCounts<S> {
        let mut counts = BTreeMap::new();
        for t in 0..seg.len() {
            *counts
                .entry(self.intern(seg.step_input(t)))
                .or_insert(0usize) += 1;
        }
        counts
            .into_iter()
            .map(|(r, c)| (r, S::from_count(c)))
            .collect()
    }

    pub fn rows(&self) -> &[Vec<S>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// `Σ count · r(row)`.
pub fn weighted_sum<S: Scalar>(counts: &[(usize, S)], row_rewards: &[S]) -> S {
    counts.iter().map(|&(r, c)| c * row_rewards[r]).sum()
}
