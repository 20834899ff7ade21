//! Constants and the per-operator argument space used to fill sketch holes.

use std::collections::BTreeSet;

use crate::lang::{Aggregate, ArithOp, CmpOp, OpKind, Operand, TransformOp, SEPARATORS};
use crate::table::{CellValue, ColumnType, Table};

/// Input-derived literals kept per type.
pub const POOL_CAP: usize = 64;
/// `pivot_wider` is not tried on columns with more distinct values than this.
pub const MAX_PIVOT_WIDTH: usize = 64;
/// Largest grouping key tried by `summarise`.
pub const MAX_GROUP_COLS: usize = 2;
/// Column subsets are enumerated exhaustively up to this many columns.
const MAX_SUBSET_COLS: usize = 10;

/// Literals available to `filter` and `mutate`, harvested from the example
/// table (always kept) and the input table (capped).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstantPool {
    pub numbers: Vec<f64>,
    pub texts: Vec<CellValue>,
    pub dates: Vec<CellValue>,
    /// Numbers appearing in the example; the only `mutate` literals.
    pub example_numbers: Vec<f64>,
    /// Separators occurring in example text, the only `unite` delimiters.
    pub example_delims: Vec<&'static str>,
    pub column_names: Vec<String>,
}

impl ConstantPool {
    pub fn new(input: &Table, example: &Table) -> ConstantPool {
        let mut numbers: Vec<CellValue> = Vec::new();
        let mut texts: Vec<CellValue> = Vec::new();
        let mut dates: Vec<CellValue> = Vec::new();
        let mut example_numbers = Vec::new();
        let mut delims = BTreeSet::new();

        for cell in example.cells() {
            match cell {
                CellValue::Number(x) => {
                    example_numbers.push(*x);
                    numbers.push(cell.clone());
                }
                CellValue::Text(_) => texts.push(cell.clone()),
                CellValue::Date(_) => dates.push(cell.clone()),
                CellValue::Missing => {}
            }
            if !matches!(cell, CellValue::Number(_)) {
                let s = cell.canonical();
                for (i, d) in SEPARATORS.iter().enumerate() {
                    if s.contains(d) {
                        delims.insert(i);
                    }
                }
            }
        }

        let mut budget = [POOL_CAP; 3];
        let mut seen = std::collections::HashSet::new();
        for cell in input.cells() {
            let (slot, bucket) = match cell {
                CellValue::Number(_) => (0, &mut numbers),
                CellValue::Text(_) => (1, &mut texts),
                CellValue::Date(_) => (2, &mut dates),
                CellValue::Missing => continue,
            };
            if budget[slot] > 0 && seen.insert(cell.clone()) {
                budget[slot] -= 1;
                bucket.push(cell.clone());
            }
        }

        let norm = |mut v: Vec<CellValue>| {
            v.sort();
            v.dedup();
            v
        };
        example_numbers.sort_by(f64::total_cmp);
        example_numbers.dedup();
        ConstantPool {
            numbers: norm(numbers)
                .into_iter()
                .filter_map(|c| c.as_number())
                .collect(),
            texts: norm(texts),
            dates: norm(dates),
            example_numbers,
            example_delims: delims.into_iter().map(|i| SEPARATORS[i]).collect(),
            column_names: input.column_names().map(str::to_string).collect(),
        }
    }

    /// Whether `cell` is an admissible `filter` literal.
    pub fn has(&self, cell: &CellValue) -> bool {
        match cell {
            CellValue::Number(x) => self.numbers.binary_search_by(|y| y.total_cmp(x)).is_ok(),
            CellValue::Text(_) => self.texts.binary_search(cell).is_ok(),
            CellValue::Date(_) => self.dates.binary_search(cell).is_ok(),
            CellValue::Missing => false,
        }
    }
}

/// Index subsets of `items` with at least `min` members, in lexicographic
/// order of their index lists.
fn subsets(items: &[usize], min: usize, max: usize) -> Vec<Vec<usize>> {
    fn go(
        items: &[usize],
        start: usize,
        cur: &mut Vec<usize>,
        min: usize,
        max: usize,
        out: &mut Vec<Vec<usize>>,
    ) {
        if cur.len() >= min && !cur.is_empty() {
            out.push(cur.clone());
        }
        if cur.len() == max {
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            go(items, i + 1, cur, min, max, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if items.len() > MAX_SUBSET_COLS {
        // wide tables: only drop up to two columns
        let n = items.len();
        let mut drops: Vec<Vec<usize>> = vec![vec![]];
        drops.extend((0..n).map(|i| vec![i]));
        drops.extend((0..n).flat_map(|i| (i + 1..n).map(move |j| vec![i, j])));
        for d in drops {
            let keep = n - d.len();
            if keep >= min.max(1) && keep <= max {
                out.push(
                    items
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| !d.contains(i))
                        .map(|(_, c)| *c)
                        .collect(),
                );
            }
        }
        return out;
    }
    go(items, 0, &mut Vec::new(), min, max, &mut out);
    out
}

/// Whether a cell's canonical text contains `delim`.
fn holds_delim(v: &CellValue, delim: &str) -> bool {
    match v {
        CellValue::Text(s) => s.contains(delim),
        // ISO dates only ever contain dashes
        CellValue::Date(_) => delim == "-",
        _ => false,
    }
}

fn names(t: &Table, idx: &[usize]) -> Vec<String> {
    idx.iter().map(|&i| t.columns()[i].name.clone()).collect()
}

fn distinct_count(t: &Table, c: usize) -> usize {
    let mut v: Vec<&CellValue> = t.column_cells(c).collect();
    v.sort();
    v.dedup();
    v.len()
}

/// Every concrete instantiation of an operator kind against a table.
///
/// Ordering follows columns left to right, then literals in canonical order.
pub fn candidate_ops(kind: OpKind, t: &Table, pool: &ConstantPool) -> Vec<TransformOp> {
    let n = t.num_cols();
    let all: Vec<usize> = (0..n).collect();
    let name = |i: usize| t.columns()[i].name.clone();
    let of_type =
        |ty: ColumnType| -> Vec<usize> { all.iter().copied().filter(|&i| t.column_type(i) == ty).collect() };
    let mut out = Vec::new();
    match kind {
        OpKind::PivotLonger => {
            let mut groups: Vec<Vec<usize>> = Vec::new();
            for ty in [ColumnType::Quantitative, ColumnType::Nominal, ColumnType::Temporal] {
                let g = of_type(ty);
                if g.len() >= 2 {
                    groups.extend(subsets(&g, 2, usize::MAX));
                }
            }
            groups.sort();
            for cols in groups {
                out.push(TransformOp::PivotLonger {
                    cols: names(t, &cols),
                    names_to: "name".into(),
                    values_to: "value".into(),
                });
            }
        }
        OpKind::PivotWider => {
            for nf in 0..n {
                if distinct_count(t, nf) > MAX_PIVOT_WIDTH {
                    continue;
                }
                for vf in (0..n).filter(|&v| v != nf) {
                    out.push(TransformOp::PivotWider {
                        names_from: name(nf),
                        values_from: name(vf),
                    });
                }
            }
        }
        OpKind::Select => {
            for cols in subsets(&all, 1, usize::MAX) {
                out.push(TransformOp::Select {
                    cols: names(t, &cols),
                });
            }
        }
        OpKind::Filter => {
            for c in 0..n {
                let mut lits: Vec<&CellValue> = t
                    .column_cells(c)
                    .filter(|v| !v.is_missing() && pool.has(v))
                    .collect();
                lits.sort();
                lits.dedup();
                let ops: &[CmpOp] = if t.column_type(c) == ColumnType::Nominal {
                    &[CmpOp::Eq, CmpOp::Ne]
                } else {
                    &CmpOp::ALL
                };
                for &cmp in ops {
                    for lit in &lits {
                        out.push(TransformOp::Filter {
                            col: name(c),
                            cmp,
                            lit: (*lit).clone(),
                        });
                    }
                }
            }
        }
        OpKind::GroupSummarise => {
            for keys in subsets(&all, 1, MAX_GROUP_COLS.min(n.saturating_sub(1))) {
                for target in all.iter().copied().filter(|c| !keys.contains(c)) {
                    let quantitative = t.column_type(target) == ColumnType::Quantitative;
                    for agg in Aggregate::ALL {
                        if !quantitative && agg != Aggregate::Count {
                            continue;
                        }
                        out.push(TransformOp::GroupSummarise {
                            group_cols: names(t, &keys),
                            agg,
                            target: name(target),
                            out_name: format!("{}_{}", agg.name(), name(target)),
                        });
                    }
                }
            }
        }
        OpKind::CumSum => {
            for target in of_type(ColumnType::Quantitative) {
                out.push(TransformOp::CumSum {
                    group_cols: vec![],
                    target: name(target),
                });
                for g in all.iter().copied().filter(|&g| g != target) {
                    out.push(TransformOp::CumSum {
                        group_cols: vec![name(g)],
                        target: name(target),
                    });
                }
            }
        }
        OpKind::Mutate => {
            let quant = of_type(ColumnType::Quantitative);
            for &lhs in &quant {
                for op in ArithOp::ALL {
                    let out_name = match op {
                        ArithOp::Add => "Sum",
                        ArithOp::Sub => "Diff",
                        ArithOp::Mul => "Product",
                        ArithOp::Div => "Ratio",
                    };
                    for &rhs in &quant {
                        if rhs == lhs || (op.is_commutative() && rhs < lhs) {
                            continue;
                        }
                        out.push(TransformOp::Mutate {
                            out_name: out_name.into(),
                            lhs: name(lhs),
                            op,
                            rhs: Operand::Column(name(rhs)),
                        });
                    }
                    for &x in &pool.example_numbers {
                        if op == ArithOp::Div && x == 0.0 {
                            continue;
                        }
                        out.push(TransformOp::Mutate {
                            out_name: out_name.into(),
                            lhs: name(lhs),
                            op,
                            rhs: Operand::Literal(x),
                        });
                    }
                }
            }
        }
        OpKind::Separate => {
            for c in all.iter().copied().filter(|&c| t.column_type(c) != ColumnType::Quantitative) {
                for delim in SEPARATORS {
                    if t.column_cells(c).any(|v| holds_delim(v, delim)) {
                        out.push(TransformOp::Separate {
                            col: name(c),
                            delim: delim.into(),
                            out1: format!("{}_1", name(c)),
                            out2: format!("{}_2", name(c)),
                        });
                    }
                }
            }
        }
        OpKind::Unite => {
            for a in 0..n {
                for b in (0..n).filter(|&b| b != a) {
                    for delim in &pool.example_delims {
                        out.push(TransformOp::Unite {
                            col1: name(a),
                            col2: name(b),
                            delim: delim.to_string(),
                            out_name: format!("{}_{}", name(a), name(b)),
                        });
                    }
                }
            }
        }
    }
    out
}
