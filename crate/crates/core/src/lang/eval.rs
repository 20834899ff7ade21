//! Operator semantics.

use std::collections::HashMap;

use thiserror::Error;

use super::{Aggregate, ArithOp, CmpOp, Operand, TransformOp, TransformProgram};
use crate::table::{fresh_name, infer_column_type, CellValue, Column, ColumnType, Table};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalErrorKind {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("pivot_wider collision: key ({key}) has more than one `{name}` value")]
    PivotCollision { key: String, name: String },
    #[error("division by zero in row {row}")]
    DivisionByZero { row: usize },
    #[error("aggregate `{agg}` over a group with no values")]
    EmptyAggregate { agg: &'static str },
}

/// An evaluation failure at operator `index` of a program.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("operator {index}: {kind}")]
pub struct EvalError {
    pub index: usize,
    pub kind: EvalErrorKind,
}

type OpResult = Result<Table, EvalErrorKind>;

/// Runs a program on a table.
pub fn eval(prog: &TransformProgram, input: &Table) -> Result<Table, EvalError> {
    let mut ops = prog.ops.iter().enumerate();
    let Some((_, first)) = ops.next() else {
        return Ok(input.clone());
    };
    let mut current = eval_op(first, input).map_err(|kind| EvalError { index: 0, kind })?;
    for (index, op) in ops {
        current = eval_op(op, &current).map_err(|kind| EvalError { index, kind })?;
    }
    Ok(current)
}

fn col(t: &Table, name: &str) -> Result<usize, EvalErrorKind> {
    t.column_index(name)
        .ok_or_else(|| EvalErrorKind::Schema(format!("no column `{name}`")))
}

fn distinct_cols(t: &Table, names: &[String]) -> Result<Vec<usize>, EvalErrorKind> {
    let mut idx = Vec::with_capacity(names.len());
    for n in names {
        let i = col(t, n)?;
        if idx.contains(&i) {
            return Err(EvalErrorKind::Schema(format!("column `{n}` listed twice")));
        }
        idx.push(i);
    }
    Ok(idx)
}

fn build(columns: Vec<Column>, cells: Vec<CellValue>) -> OpResult {
    Table::from_parts(columns, cells).map_err(|e| EvalErrorKind::Schema(e.to_string()))
}

fn key_text(row: &[CellValue], idx: &[usize]) -> String {
    idx.iter()
        .map(|&i| row[i].to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Groups row indices by the values in `key`, in order of first appearance.
fn group_rows(t: &Table, key: &[usize]) -> Vec<(Vec<CellValue>, Vec<usize>)> {
    let mut slot: HashMap<Vec<CellValue>, usize> = HashMap::new();
    let mut groups: Vec<(Vec<CellValue>, Vec<usize>)> = Vec::new();
    for (r, row) in t.rows().enumerate() {
        let k: Vec<CellValue> = key.iter().map(|&i| row[i].clone()).collect();
        match slot.get(&k) {
            Some(&g) => groups[g].1.push(r),
            None => {
                slot.insert(k.clone(), groups.len());
                groups.push((k, vec![r]));
            }
        }
    }
    groups
}

/// Applies one operator.
pub fn eval_op(op: &TransformOp, t: &Table) -> OpResult {
    match op {
        TransformOp::PivotLonger {
            cols,
            names_to,
            values_to,
        } => pivot_longer(t, cols, names_to, values_to),
        TransformOp::PivotWider {
            names_from,
            values_from,
        } => pivot_wider(t, names_from, values_from),
        TransformOp::Select { cols } => select(t, cols),
        TransformOp::Filter { col, cmp, lit } => filter(t, col, *cmp, lit),
        TransformOp::GroupSummarise {
            group_cols,
            agg,
            target,
            out_name,
        } => group_summarise(t, group_cols, *agg, target, out_name),
        TransformOp::CumSum { group_cols, target } => cumsum(t, group_cols, target),
        TransformOp::Mutate {
            out_name,
            lhs,
            op,
            rhs,
        } => mutate(t, out_name, lhs, *op, rhs),
        TransformOp::Separate {
            col,
            delim,
            out1,
            out2,
        } => separate(t, col, delim, out1, out2),
        TransformOp::Unite {
            col1,
            col2,
            delim,
            out_name,
        } => unite(t, col1, col2, delim, out_name),
    }
}

fn pivot_longer(t: &Table, cols: &[String], names_to: &str, values_to: &str) -> OpResult {
    if cols.len() < 2 {
        return Err(EvalErrorKind::Schema(
            "pivot_longer needs at least two columns".into(),
        ));
    }
    let idx = distinct_cols(t, cols)?;
    let ty = t.column_type(idx[0]);
    if idx.iter().any(|&i| t.column_type(i) != ty) {
        return Err(EvalErrorKind::Type(
            "pivot_longer columns must share one type".into(),
        ));
    }
    let ids: Vec<usize> = (0..t.num_cols()).filter(|i| !idx.contains(i)).collect();
    let mut columns: Vec<Column> = ids.iter().map(|&i| t.columns()[i].clone()).collect();
    let names_col = fresh_name(columns.iter().map(|c| c.name.as_str()), names_to);
    columns.push(Column::new(names_col, ColumnType::Nominal));
    let values_col = fresh_name(columns.iter().map(|c| c.name.as_str()), values_to);
    columns.push(Column::new(values_col, ty));

    let names: Vec<CellValue> = cols.iter().map(CellValue::text).collect();
    let mut cells = Vec::with_capacity(t.num_rows() * idx.len() * columns.len());
    for row in t.rows() {
        for (&c, name) in idx.iter().zip(&names) {
            cells.extend(ids.iter().map(|&i| row[i].clone()));
            cells.push(name.clone());
            cells.push(row[c].clone());
        }
    }
    build(columns, cells)
}

fn pivot_wider(t: &Table, names_from: &str, values_from: &str) -> OpResult {
    let n = col(t, names_from)?;
    let v = col(t, values_from)?;
    if n == v {
        return Err(EvalErrorKind::Schema(
            "pivot_wider needs distinct names_from and values_from".into(),
        ));
    }
    let keys: Vec<usize> = (0..t.num_cols()).filter(|&i| i != n && i != v).collect();

    let mut name_slot: HashMap<&CellValue, usize> = HashMap::new();
    let mut new_names: Vec<&CellValue> = Vec::new();
    for c in t.column_cells(n) {
        if !name_slot.contains_key(c) {
            name_slot.insert(c, new_names.len());
            new_names.push(c);
        }
    }

    let mut columns: Vec<Column> = keys.iter().map(|&i| t.columns()[i].clone()).collect();
    let vty = t.column_type(v);
    for name in &new_names {
        let fresh = fresh_name(columns.iter().map(|c| c.name.as_str()), &name.to_string());
        columns.push(Column::new(fresh, vty));
    }

    let groups = group_rows(t, &keys);
    let width = keys.len() + new_names.len();
    let mut cells = Vec::with_capacity(groups.len() * width);
    for (key, members) in groups {
        let mut out = key;
        out.resize(width, CellValue::Missing);
        let mut filled = vec![false; new_names.len()];
        for r in members {
            let row = t.row(r);
            let s = name_slot[&row[n]];
            if filled[s] {
                return Err(EvalErrorKind::PivotCollision {
                    key: key_text(row, &keys),
                    name: row[n].to_string(),
                });
            }
            filled[s] = true;
            out[keys.len() + s] = row[v].clone();
        }
        cells.extend(out);
    }
    build(columns, cells)
}

fn select(t: &Table, cols: &[String]) -> OpResult {
    if cols.is_empty() {
        return Err(EvalErrorKind::Schema("select needs at least one column".into()));
    }
    let idx = distinct_cols(t, cols)?;
    let columns = idx.iter().map(|&i| t.columns()[i].clone()).collect();
    let cells = t
        .rows()
        .flat_map(|row| idx.iter().map(|&i| row[i].clone()))
        .collect();
    build(columns, cells)
}

fn filter(t: &Table, name: &str, cmp: CmpOp, lit: &CellValue) -> OpResult {
    let c = col(t, name)?;
    let ty = t.column_type(c);
    let fits = matches!(
        (ty, lit),
        (ColumnType::Quantitative, CellValue::Number(_))
            | (ColumnType::Temporal, CellValue::Date(_))
            | (ColumnType::Nominal, CellValue::Text(_))
    );
    if !fits {
        return Err(EvalErrorKind::Type(format!(
            "literal {lit} does not fit {ty} column `{name}`"
        )));
    }
    if ty == ColumnType::Nominal && !cmp.is_equality() {
        return Err(EvalErrorKind::Type(format!(
            "`{}` is not defined on nominal column `{name}`",
            cmp.symbol()
        )));
    }
    let cells = t
        .rows()
        .filter(|row| {
            let cell = &row[c];
            if cell.is_missing() {
                return false;
            }
            let ord = cell.cmp(lit);
            match cmp {
                CmpOp::Eq => ord.is_eq(),
                CmpOp::Ne => ord.is_ne(),
                CmpOp::Lt => ord.is_lt(),
                CmpOp::Le => ord.is_le(),
                CmpOp::Gt => ord.is_gt(),
                CmpOp::Ge => ord.is_ge(),
            }
        })
        .flatten()
        .cloned()
        .collect();
    build(t.columns().to_vec(), cells)
}

fn require_quantitative(t: &Table, c: usize) -> Result<(), EvalErrorKind> {
    if t.column_type(c) == ColumnType::Quantitative {
        Ok(())
    } else {
        Err(EvalErrorKind::Type(format!(
            "column `{}` is not quantitative",
            t.columns()[c].name
        )))
    }
}

fn group_summarise(
    t: &Table,
    group_cols: &[String],
    agg: Aggregate,
    target: &str,
    out_name: &str,
) -> OpResult {
    if group_cols.is_empty() {
        return Err(EvalErrorKind::Schema(
            "summarise needs at least one grouping column".into(),
        ));
    }
    let keys = distinct_cols(t, group_cols)?;
    let tc = col(t, target)?;
    if keys.contains(&tc) {
        return Err(EvalErrorKind::Schema(format!(
            "`{target}` cannot be both grouped and aggregated"
        )));
    }
    if agg != Aggregate::Count {
        require_quantitative(t, tc)?;
    }
    let mut columns: Vec<Column> = keys.iter().map(|&i| t.columns()[i].clone()).collect();
    let out = fresh_name(columns.iter().map(|c| c.name.as_str()), out_name);
    columns.push(Column::new(out, ColumnType::Quantitative));

    let mut cells = Vec::new();
    for (key, members) in group_rows(t, &keys) {
        let present = members.iter().map(|&r| t.cell(r, tc)).filter(|c| !c.is_missing());
        let value = if agg == Aggregate::Count {
            present.count() as f64
        } else {
            let xs: Vec<f64> = present.filter_map(CellValue::as_number).collect();
            if xs.is_empty() {
                return Err(EvalErrorKind::EmptyAggregate { agg: agg.name() });
            }
            match agg {
                Aggregate::Sum => round_computed(xs.iter().sum()),
                Aggregate::Mean => round_computed(xs.iter().sum::<f64>() / xs.len() as f64),
                Aggregate::Min => xs.iter().copied().fold(f64::INFINITY, f64::min),
                Aggregate::Max => xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                Aggregate::Count => unreachable!(),
            }
        };
        cells.extend(key);
        cells.push(CellValue::number(value).unwrap_or(CellValue::Missing));
    }
    build(columns, cells)
}

/// Significant digits kept in computed numbers, so that `63.4 - 62.7` is 0.7.
pub const SIGNIFICANT_DIGITS: i32 = 12;

/// Rounds an arithmetic result to [`SIGNIFICANT_DIGITS`].
pub fn round_computed(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let shift = SIGNIFICANT_DIGITS - 1 - x.abs().log10().floor() as i32;
    if !(-22..=22).contains(&shift) {
        return x;
    }
    let rounded = if shift >= 0 {
        let p = 10f64.powi(shift);
        (x * p).round() / p
    } else {
        let p = 10f64.powi(-shift);
        (x / p).round() * p
    };
    if rounded.is_finite() {
        rounded
    } else {
        x
    }
}

fn computed(x: f64) -> CellValue {
    CellValue::number(round_computed(x)).unwrap_or(CellValue::Missing)
}

fn cumsum(t: &Table, group_cols: &[String], target: &str) -> OpResult {
    let keys = distinct_cols(t, group_cols)?;
    let tc = col(t, target)?;
    if keys.contains(&tc) {
        return Err(EvalErrorKind::Schema(format!(
            "`{target}` cannot be both a group and the cumsum target"
        )));
    }
    require_quantitative(t, tc)?;
    let mut running: HashMap<Vec<CellValue>, f64> = HashMap::new();
    let mut cells = t.cells().to_vec();
    let width = t.num_cols();
    for (r, row) in t.rows().enumerate() {
        if let CellValue::Number(x) = row[tc] {
            let key: Vec<CellValue> = keys.iter().map(|&i| row[i].clone()).collect();
            let acc = running.entry(key).or_insert(0.0);
            *acc += x;
            cells[r * width + tc] = computed(*acc);
        }
    }
    build(t.columns().to_vec(), cells)
}

fn mutate(t: &Table, out_name: &str, lhs: &str, op: ArithOp, rhs: &Operand) -> OpResult {
    let l = col(t, lhs)?;
    require_quantitative(t, l)?;
    let r = match rhs {
        Operand::Column(name) => {
            let r = col(t, name)?;
            require_quantitative(t, r)?;
            Some(r)
        }
        Operand::Literal(x) if !x.is_finite() => {
            return Err(EvalErrorKind::Type("mutate literal must be finite".into()))
        }
        Operand::Literal(_) => None,
    };
    let mut columns = t.columns().to_vec();
    let out = fresh_name(columns.iter().map(|c| c.name.as_str()), out_name);
    columns.push(Column::new(out, ColumnType::Quantitative));

    let mut cells = Vec::with_capacity(t.num_rows() * columns.len());
    for (i, row) in t.rows().enumerate() {
        let a = row[l].as_number();
        let b = match (r, rhs) {
            (Some(r), _) => row[r].as_number(),
            (None, Operand::Literal(x)) => Some(*x),
            (None, Operand::Column(_)) => unreachable!(),
        };
        let value = match (a, b) {
            (Some(a), Some(b)) => {
                let v = match op {
                    ArithOp::Add => a + b,
                    ArithOp::Sub => a - b,
                    ArithOp::Mul => a * b,
                    ArithOp::Div => {
                        if b == 0.0 {
                            return Err(EvalErrorKind::DivisionByZero { row: i });
                        }
                        a / b
                    }
                };
                computed(v)
            }
            _ => CellValue::Missing,
        };
        cells.extend(row.iter().cloned());
        cells.push(value);
    }
    build(columns, cells)
}

/// Re-types freshly produced text cells.
fn typed_column(texts: Vec<Option<String>>) -> (ColumnType, Vec<CellValue>) {
    let raw: Vec<&str> = texts.iter().map(|t| t.as_deref().unwrap_or("")).collect();
    let ty = infer_column_type(&raw);
    let cells = texts
        .iter()
        .map(|t| match t {
            None => CellValue::Missing,
            Some(s) => CellValue::parse_as(s, ty).expect("inferred type admits its cells"),
        })
        .collect();
    (ty, cells)
}

fn separate(t: &Table, name: &str, delim: &str, out1: &str, out2: &str) -> OpResult {
    let c = col(t, name)?;
    if t.column_type(c) == ColumnType::Quantitative {
        return Err(EvalErrorKind::Type(format!(
            "separate needs a text column, `{name}` is quantitative"
        )));
    }
    if delim.is_empty() {
        return Err(EvalErrorKind::Schema("separate needs a delimiter".into()));
    }
    let mut left = Vec::with_capacity(t.num_rows());
    let mut right = Vec::with_capacity(t.num_rows());
    for cell in t.column_cells(c) {
        if cell.is_missing() {
            left.push(None);
            right.push(None);
            continue;
        }
        let s = cell.canonical();
        match s.split_once(delim) {
            Some((a, b)) => {
                left.push(Some(a.to_string()));
                right.push(Some(b.to_string()));
            }
            None => {
                left.push(Some(s));
                right.push(None);
            }
        }
    }
    let (ty1, cells1) = typed_column(left);
    let (ty2, cells2) = typed_column(right);

    let mut columns: Vec<Column> = t.columns().to_vec();
    columns.remove(c);
    let n1 = fresh_name(columns.iter().map(|c| c.name.as_str()), out1);
    columns.insert(c, Column::new(n1, ty1));
    let n2 = fresh_name(columns.iter().map(|c| c.name.as_str()), out2);
    columns.insert(c + 1, Column::new(n2, ty2));

    let mut cells = Vec::with_capacity(t.num_rows() * columns.len());
    for (row, (a, b)) in t.rows().zip(cells1.into_iter().zip(cells2)) {
        cells.extend(row[..c].iter().cloned());
        cells.push(a);
        cells.push(b);
        cells.extend(row[c + 1..].iter().cloned());
    }
    build(columns, cells)
}

fn unite(t: &Table, col1: &str, col2: &str, delim: &str, out_name: &str) -> OpResult {
    let a = col(t, col1)?;
    let b = col(t, col2)?;
    if a == b {
        return Err(EvalErrorKind::Schema("unite needs two distinct columns".into()));
    }
    let texts: Vec<Option<String>> = t
        .rows()
        .map(|row| {
            if row[a].is_missing() || row[b].is_missing() {
                None
            } else {
                Some(format!("{}{delim}{}", row[a].canonical(), row[b].canonical()))
            }
        })
        .collect();
    let (ty, cells) = typed_column(texts);
    let at = a.min(b);
    let mut columns: Vec<Column> = t
        .columns()
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != a && *i != b)
        .map(|(_, c)| c.clone())
        .collect();
    let out = fresh_name(columns.iter().map(|c| c.name.as_str()), out_name);
    columns.insert(at, Column::new(out, ty));
    let mut out = Vec::with_capacity(t.num_rows() * columns.len());
    for (row, cell) in t.rows().zip(cells) {
        let kept = row
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != a && *i != b)
            .map(|(_, c)| c);
        out.extend(kept.clone().take(at).cloned());
        out.push(cell);
        out.extend(kept.skip(at).cloned());
    }
    build(columns, out)
}
