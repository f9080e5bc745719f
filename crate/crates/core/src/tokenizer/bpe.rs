// SPDX-License-Identifier: MIT OR Apache-2.0

//! Rank-ordered pair merging over vocabulary ids.

use std::collections::HashMap;

/// Merge table keyed by the ids of the two parts.
#[derive(Debug, Default, Clone)]
pub(crate) struct MergeTable {
    pairs: HashMap<(u32, u32), Merge>,
}

#[derive(Debug, Clone, Copy)]
struct Merge {
    rank: u32,
    merged: u32,
}

impl MergeTable {
    pub(crate) fn insert(&mut self, left: u32, right: u32, rank: u32, merged: u32) {
        // first occurrence wins if a malformed file repeats a pair
        self.pairs.entry((left, right)).or_insert(Merge { rank, merged });
    }

    pub(crate) fn len(&self) -> usize {
        self.pairs.len()
    }

    /// Applies merges to `symbols` until no ranked pair remains.
    ///
    /// Each step picks the lowest-ranked adjacent pair (leftmost on ties)
    /// and merges every non-overlapping occurrence of it, scanning left to
    /// right.
    pub(crate) fn apply(&self, symbols: &mut Vec<u32>) {
        if self.pairs.is_empty() {
            return;
        }
        while symbols.len() > 1 {
            let mut best: Option<((u32, u32), Merge)> = None;
            for w in symbols.windows(2) {
                if let Some(m) = self.pairs.get(&(w[0], w[1])) {
                    if best.is_none_or(|(_, b)| m.rank < b.rank) {
                        best = Some(((w[0], w[1]), *m));
                    }
                }
            }
            let Some(((left, right), merge)) = best else {
                break;
            };
            let mut out = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && symbols[i] == left && symbols[i + 1] == right {
                    out.push(merge.merged);
                    i += 2;
                } else {
                    out.push(symbols[i]);
                    i += 1;
                }
            }
            *symbols = out;
        }
    }
}
