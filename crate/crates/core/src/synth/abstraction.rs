//! Abstract interpretation of partial programs.
//!
//! A concrete table abstracts to its exact column count, a row-count upper
//! bound and the cells it holds. Remaining holes widen the column interval
//! operator by operator; values are checked only while no remaining operator
//! can create them.

use serde::Serialize;

use crate::lang::{contains, OpKind};
use crate::table::{cell_equal, numbers_close, CellValue, ColumnType, Table};

use super::pool::{MAX_GROUP_COLS, MAX_PIVOT_WIDTH};

/// Column-count interval `[lo, hi]` plus an upper bound on rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AbstractTable {
    pub lo: usize,
    pub hi: usize,
    pub max_rows: usize,
    pub numeric_ops_remaining: bool,
    pub string_ops_remaining: bool,
}

impl AbstractTable {
    pub fn of(t: &Table) -> AbstractTable {
        AbstractTable {
            lo: t.num_cols(),
            hi: t.num_cols(),
            max_rows: t.num_rows(),
            numeric_ops_remaining: false,
            string_ops_remaining: false,
        }
    }
}

/// What an example table demands of a program output.
#[derive(Debug, Clone)]
pub struct ExampleSummary {
    pub num_cols: usize,
    table: Table,
    numbers: Vec<f64>,
    texts: Vec<CellValue>,
}

impl ExampleSummary {
    pub fn of(example: &Table) -> ExampleSummary {
        let mut numbers = Vec::new();
        let mut texts = Vec::new();
        for (c, col) in example.columns().iter().enumerate() {
            for cell in example.column_cells(c) {
                match (col.ty, cell) {
                    (ColumnType::Quantitative, CellValue::Number(x)) => numbers.push(*x),
                    (_, CellValue::Missing) | (ColumnType::Quantitative, _) => {}
                    _ => texts.push(cell.clone()),
                }
            }
        }
        numbers.sort_by(f64::total_cmp);
        numbers.dedup();
        texts.sort();
        texts.dedup();
        ExampleSummary {
            num_cols: example.num_cols(),
            table: example.clone(),
            numbers,
            texts,
        }
    }
}

fn has_number(t: &Table, x: f64, rel_tol: f64) -> bool {
    t.cells()
        .iter()
        .any(|c| matches!(c, CellValue::Number(y) if numbers_close(x, *y, rel_tol)))
}

fn has_text(t: &Table, v: &CellValue, rel_tol: f64, with_names: bool) -> bool {
    t.cells()
        .iter()
        .any(|c| !matches!(c, CellValue::Number(_)) && cell_equal(c, v, rel_tol))
        || with_names
            && t
                .column_names()
                .any(|n| cell_equal(&CellValue::text(n), v, rel_tol))
}

/// Applies one unfilled operator to the abstraction. `None` when the operator
/// cannot apply to any table the abstraction describes.
pub fn abstract_op(kind: OpKind, a: AbstractTable) -> Option<AbstractTable> {
    let AbstractTable {
        lo, hi, max_rows, ..
    } = a;
    let mut out = a;
    match kind {
        OpKind::PivotLonger => {
            if hi < 2 {
                return None;
            }
            out.lo = 2;
            out.max_rows = max_rows.saturating_mul(hi);
        }
        OpKind::PivotWider => {
            if hi < 2 || max_rows == 0 {
                return None;
            }
            out.lo = lo.max(2) - 1;
            out.hi = hi - 2 + max_rows.min(MAX_PIVOT_WIDTH);
        }
        OpKind::Select => out.lo = 1,
        OpKind::Filter | OpKind::CumSum => {}
        OpKind::GroupSummarise => {
            if hi < 2 {
                return None;
            }
            out.lo = 2;
            out.hi = hi.min(MAX_GROUP_COLS + 1);
        }
        OpKind::Mutate | OpKind::Separate => {
            out.lo = lo + 1;
            out.hi = hi + 1;
        }
        OpKind::Unite => {
            if hi < 2 {
                return None;
            }
            out.lo = lo.max(2) - 1;
            out.hi = hi - 1;
        }
    }
    if matches!(
        kind,
        OpKind::Mutate | OpKind::GroupSummarise | OpKind::CumSum | OpKind::Separate | OpKind::Unite
    ) {
        out.numeric_ops_remaining = true;
    }
    if matches!(kind, OpKind::Separate | OpKind::Unite) {
        out.string_ops_remaining = true;
    }
    Some(out)
}

/// Composes [`abstract_op`] over the remaining holes.
pub fn abstract_eval(current: &Table, remaining: &[OpKind]) -> Option<AbstractTable> {
    remaining
        .iter()
        .try_fold(AbstractTable::of(current), |a, &k| abstract_op(k, a))
}

/// Whether column names of the current table may still land in cells: some
/// `pivot_longer` remains and nothing before the last one renames or adds
/// columns.
fn names_move_verbatim(remaining: &[OpKind]) -> Option<bool> {
    let last = remaining.iter().rposition(|&k| k == OpKind::PivotLonger)?;
    Some(remaining[..last].iter().all(|k| {
        matches!(k, OpKind::Select | OpKind::Filter | OpKind::CumSum)
    }))
}

/// Over-approximate check: `false` guarantees that no instantiation of
/// `remaining` applied to the current table yields an output containing the
/// example.
pub fn feasible(
    current: &Table,
    remaining: &[OpKind],
    example: &ExampleSummary,
    rel_tol: f64,
) -> bool {
    let Some(a) = abstract_eval(current, remaining) else {
        return false;
    };
    // containment tolerates extra output columns, so only the upper bound binds
    if example.num_cols > a.hi || a.max_rows == 0 {
        return false;
    }
    if !a.numeric_ops_remaining
        && !example
            .numbers
            .iter()
            .all(|&x| has_number(current, x, rel_tol))
    {
        return false;
    }
    if !remaining.is_empty()
        && remaining
            .iter()
            .all(|k| matches!(k, OpKind::Filter | OpKind::Select))
    {
        // dropping rows or columns never creates a match
        return !contains(current, &example.table, rel_tol).is_empty();
    }
    if a.string_ops_remaining {
        return true;
    }
    match names_move_verbatim(remaining) {
        // earlier operators may invent the column names being pivoted
        Some(false) => true,
        Some(true) => example
            .texts
            .iter()
            .all(|v| has_text(current, v, rel_tol, true)),
        None => example
            .texts
            .iter()
            .all(|v| has_text(current, v, rel_tol, false)),
    }
}
