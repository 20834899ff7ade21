//! Example-table containment: `example ⊆ big` up to an injective column mapping.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::table::{cell_equal, ColumnType, Table};

/// Maps example column `i` to the output column named `targets[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ColumnMapping {
    pub targets: Vec<String>,
}

impl ColumnMapping {
    pub fn new(targets: Vec<String>) -> ColumnMapping {
        ColumnMapping { targets }
    }

    pub fn target(&self, example_col: usize) -> &str {
        &self.targets[example_col]
    }

    /// Keyed by example column name (`C1` → `Date`, ...).
    pub fn by_name(&self, example: &Table) -> BTreeMap<String, String> {
        example
            .column_names()
            .zip(&self.targets)
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect()
    }

    pub fn is_injective(&self) -> bool {
        let mut seen = self.targets.clone();
        seen.sort();
        seen.windows(2).all(|w| w[0] != w[1])
    }
}

fn types_compatible(example: ColumnType, big: ColumnType) -> bool {
    match example {
        ColumnType::Quantitative => big == ColumnType::Quantitative,
        ColumnType::Nominal | ColumnType::Temporal => big != ColumnType::Quantitative,
    }
}

/// Every injective, type-compatible column mapping under which each example
/// row equals (within `rel_tol`) some row of `big`. Mappings come out in
/// lexicographic order of target column positions; an empty result means the
/// example is not contained.
pub fn contains(big: &Table, example: &Table, rel_tol: f64) -> Vec<ColumnMapping> {
    let k = example.num_cols();
    let m = example.num_rows();
    if k == 0 || m == 0 || k > big.num_cols() || big.num_rows() == 0 {
        return Vec::new();
    }
    // cheap screen before building row sets: each example column needs some
    // compatible column holding all its values
    let screen = |i: usize, j: usize| {
        types_compatible(example.column_type(i), big.column_type(j))
            && example
                .column_cells(i)
                .all(|v| big.column_cells(j).any(|c| cell_equal(c, v, rel_tol)))
    };
    if !(0..k).all(|i| (0..big.num_cols()).any(|j| screen(i, j))) {
        return Vec::new();
    }
    let words = big.num_rows().div_ceil(64);

    // For each example column i and screened big column j, one row bitset
    // per example row: the big rows whose j cell matches that example cell.
    let mut candidates: Vec<Vec<(usize, Vec<u64>)>> = Vec::with_capacity(k);
    for i in 0..k {
        let mut js = Vec::new();
        for j in 0..big.num_cols() {
            if !screen(i, j) {
                continue;
            }
            let mut bits = vec![0u64; m * words];
            for r in 0..m {
                let want = example.cell(r, i);
                let slot = &mut bits[r * words..(r + 1) * words];
                for (o, c) in big.column_cells(j).enumerate() {
                    if cell_equal(c, want, rel_tol) {
                        slot[o / 64] |= 1 << (o % 64);
                    }
                }
                debug_assert!(slot.iter().any(|&w| w != 0));
            }
            js.push((j, bits));
        }
        candidates.push(js);
    }

    let mut search = Search {
        big,
        words,
        candidates: &candidates,
        chosen: Vec::with_capacity(k),
        found: Vec::new(),
    };
    let mut live = vec![!0u64; m * words];
    let tail = big.num_rows() % 64;
    if tail != 0 {
        for r in 0..m {
            live[(r + 1) * words - 1] = (1 << tail) - 1;
        }
    }
    search.extend(&live);
    search.found
}

struct Search<'a> {
    big: &'a Table,
    words: usize,
    candidates: &'a [Vec<(usize, Vec<u64>)>],
    chosen: Vec<usize>,
    found: Vec<ColumnMapping>,
}

impl Search<'_> {
    /// `live` holds, per example row, the big rows still consistent with it
    /// under the columns chosen so far.
    fn extend(&mut self, live: &[u64]) {
        let i = self.chosen.len();
        if i == self.candidates.len() {
            let names = self
                .chosen
                .iter()
                .map(|&j| self.big.columns()[j].name.clone())
                .collect();
            self.found.push(ColumnMapping::new(names));
            return;
        }
        let mut next = vec![0u64; live.len()];
        for (j, bits) in &self.candidates[i] {
            if self.chosen.contains(j) {
                continue;
            }
            for ((n, a), b) in next.iter_mut().zip(live).zip(bits) {
                *n = a & b;
            }
            if next
                .chunks(self.words)
                .all(|row| row.iter().any(|&w| w != 0))
            {
                self.chosen.push(*j);
                self.extend(&next);
                self.chosen.pop();
            }
        }
    }
}
