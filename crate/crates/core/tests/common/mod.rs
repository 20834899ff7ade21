//! Shared helpers for integration tests: seeded random instances, a
//! brute-force program oracle and a structural Vega-Lite checker.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use vizsynth_core::lang::eval_op;
use vizsynth_core::synth::{candidate_ops, ConstantPool};
use vizsynth_core::{contains, load_csv, CellValue, Column, ColumnMapping, ColumnType, OpKind, Table, TransformOp};

pub const TOL: f64 = 1e-6;

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../testdata").join(name)
}

pub fn load(name: &str) -> Table {
    let bytes = std::fs::read(data_path(name)).expect("test data exists");
    load_csv(&bytes, true).expect("test data parses")
}

const NAMES: [&str; 6] = ["a", "b", "c", "d", "e", "f"];
const TEXTS: [&str; 6] = ["a", "b", "x", "y", "x-1", "y_2"];
const NUMBERS: [f64; 6] = [0.0, 1.0, 2.0, 3.0, 1.5, -1.0];
const DATES: [(i32, u32, u32); 3] = [(2020, 1, 1), (2020, 1, 2), (2021, 6, 30)];

fn random_cell(rng: &mut ChaCha8Rng, ty: ColumnType) -> CellValue {
    if rng.random_bool(0.04) {
        return CellValue::Missing;
    }
    match ty {
        ColumnType::Quantitative => CellValue::Number(*NUMBERS.choose(rng).unwrap()),
        ColumnType::Nominal => CellValue::text(TEXTS.choose(rng).unwrap()),
        ColumnType::Temporal => {
            let (y, m, d) = *DATES.choose(rng).unwrap();
            CellValue::date(y, m, d).unwrap()
        }
    }
}

/// A random table with up to `max_cols` columns and `max_rows` rows, drawn
/// from small value domains so that values collide often.
pub fn random_table(rng: &mut ChaCha8Rng, max_cols: usize, max_rows: usize) -> Table {
    let ncols = rng.random_range(1..=max_cols);
    let nrows = rng.random_range(1..=max_rows);
    let types = [ColumnType::Quantitative, ColumnType::Nominal, ColumnType::Temporal];
    let columns: Vec<Column> = NAMES[..ncols]
        .iter()
        .map(|n| {
            let ty = if rng.random_bool(0.5) {
                ColumnType::Quantitative
            } else {
                *types.choose(rng).unwrap()
            };
            Column::new(*n, ty)
        })
        .collect();
    let rows = (0..nrows)
        .map(|_| columns.iter().map(|c| random_cell(rng, c.ty)).collect())
        .collect();
    Table::new(columns, rows).expect("generated tables are valid")
}

/// Every operator of every kind applicable to `t`.
pub fn all_ops(t: &Table, pool: &ConstantPool) -> Vec<TransformOp> {
    OpKind::ALL
        .iter()
        .flat_map(|&k| candidate_ops(k, t, pool))
        .collect()
}

/// An example table cut out of `t`: some rows and some columns, renamed
/// `C1..Ck` and retyped from text the way decompiled examples are.
pub fn cut_example(
    rng: &mut ChaCha8Rng,
    t: &Table,
    max_rows: usize,
    max_cols: usize,
) -> Option<Table> {
    if t.num_rows() == 0 {
        return None;
    }
    let k = rng.random_range(1..=max_cols.min(t.num_cols()));
    let mut cols: Vec<usize> = (0..t.num_cols()).collect();
    cols.shuffle(rng);
    cols.truncate(k);
    let m = rng.random_range(1..=max_rows.min(t.num_rows()));
    let mut rows: Vec<usize> = (0..t.num_rows()).collect();
    rows.shuffle(rng);
    rows.truncate(m);
    let mut text_rows = Vec::new();
    for &r in &rows {
        let row: Vec<String> = cols.iter().map(|&c| t.cell(r, c).canonical()).collect();
        if row.iter().any(|s| s.trim().is_empty()) {
            return None;
        }
        text_rows.push(row);
    }
    let names = (1..=k).map(|i| format!("C{i}")).collect();
    Table::from_text_rows(names, text_rows).ok()
}

/// A random example: usually cut from the output of a random program of
/// depth at most two, otherwise assembled from arbitrary values.
pub fn random_example(rng: &mut ChaCha8Rng, input: &Table, max_rows: usize, max_cols: usize) -> Table {
    if rng.random_bool(0.75) {
        let pool = ConstantPool::new(input, input);
        let mut t = input.clone();
        for _ in 0..rng.random_range(0..=2) {
            let ops = all_ops(&t, &pool);
            let Some(op) = ops.choose(rng) else { break };
            if let Ok(next) = eval_op(op, &t) {
                t = next;
            }
        }
        if let Some(ex) = cut_example(rng, &t, max_rows, max_cols) {
            return ex;
        }
    }
    let k = rng.random_range(1..=max_cols);
    let m = rng.random_range(1..=max_rows);
    let mut pool: Vec<String> = input
        .cells()
        .iter()
        .filter(|c| !c.is_missing())
        .map(CellValue::canonical)
        .collect();
    pool.extend(input.column_names().map(String::from));
    pool.push("0.7".into());
    let rows = (0..m)
        .map(|_| (0..k).map(|_| pool.choose(rng).unwrap().clone()).collect())
        .collect();
    Table::from_text_rows((1..=k).map(|i| format!("C{i}")).collect(), rows).unwrap()
}

/// Every program of depth at most `depth` over the synthesizer's argument
/// space, with its output.
pub struct Enumerated {
    pub ops: Vec<TransformOp>,
    pub output: Table,
}

pub fn enumerate_programs(input: &Table, pool: &ConstantPool, depth: usize) -> Vec<Enumerated> {
    let mut out = vec![Enumerated {
        ops: Vec::new(),
        output: input.clone(),
    }];
    let mut frontier = 0..1;
    for _ in 0..depth {
        let start = out.len();
        for i in frontier.clone() {
            let parent_ops = out[i].ops.clone();
            let parent = out[i].output.clone();
            for op in all_ops(&parent, pool) {
                if let Ok(output) = eval_op(&op, &parent) {
                    let mut ops = parent_ops.clone();
                    ops.push(op);
                    out.push(Enumerated { ops, output });
                }
            }
        }
        frontier = start..out.len();
    }
    out
}

/// Satisfying programs keyed by their text, with their mappings.
pub fn oracle_solutions(
    input: &Table,
    example: &Table,
    depth: usize,
) -> BTreeMap<String, Vec<ColumnMapping>> {
    let pool = ConstantPool::new(input, example);
    enumerate_programs(input, &pool, depth)
        .into_iter()
        .filter_map(|e| {
            let m = contains(&e.output, example, TOL);
            (!m.is_empty()).then(|| {
                let text = vizsynth_core::TransformProgram::new(e.ops).serialize();
                (text, m)
            })
        })
        .collect()
}

const MARKS: [&str; 5] = ["point", "line", "bar", "rect", "area"];
const TYPED: [&str; 7] = ["x", "y", "color", "size", "shape", "column", "row"];
const UNTYPED: [&str; 2] = ["x2", "y2"];
const TYPES: [&str; 4] = ["quantitative", "nominal", "temporal", "ordinal"];
pub const SCHEMA: &str = "https://vega.github.io/schema/vega-lite/v5.json";

fn unescape(field: &str) -> String {
    let mut out = String::new();
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            if let Some(n) = chars.next() {
                out.push(n);
            }
        } else {
            out.push(c);
        }
    }
    out
}

fn check_unit(unit: &Value, path: &str, errs: &mut Vec<String>) {
    let Some(obj) = unit.as_object() else {
        errs.push(format!("{path}: not an object"));
        return;
    };
    let allowed: BTreeSet<&str> = ["mark", "encoding", "data", "$schema"].into();
    for k in obj.keys() {
        if !allowed.contains(k.as_str()) {
            errs.push(format!("{path}: unexpected key {k}"));
        }
    }
    match obj.get("mark").and_then(Value::as_str) {
        Some(m) if MARKS.contains(&m) => {}
        other => errs.push(format!("{path}: bad mark {other:?}")),
    }
    let rows = match obj.get("data").and_then(|d| d.get("values")).and_then(Value::as_array) {
        Some(rows) if rows.iter().all(Value::is_object) => rows,
        _ => {
            errs.push(format!("{path}: data.values must be an array of objects"));
            return;
        }
    };
    let Some(enc) = obj.get("encoding").and_then(Value::as_object) else {
        errs.push(format!("{path}: missing encoding"));
        return;
    };
    for (ch, def) in enc {
        let typed = TYPED.contains(&ch.as_str());
        if !typed && !UNTYPED.contains(&ch.as_str()) {
            errs.push(format!("{path}: unknown channel {ch}"));
            continue;
        }
        let Some(field) = def.get("field").and_then(Value::as_str) else {
            errs.push(format!("{path}.{ch}: missing field"));
            continue;
        };
        let name = unescape(field);
        if rows.iter().any(|r| r.get(&name).is_none()) {
            errs.push(format!("{path}.{ch}: field {name} absent from data"));
        }
        match def.get("type").and_then(Value::as_str) {
            Some(t) if typed && TYPES.contains(&t) => {}
            None if !typed => {}
            other => errs.push(format!("{path}.{ch}: bad type {other:?}")),
        }
    }
    for need in ["x", "y"] {
        if !enc.contains_key(need) {
            errs.push(format!("{path}: missing {need}"));
        }
    }
}

/// Problems with a document against the Vega-Lite v5 subset the compiler
/// targets: unit specs or a `layer` array of units with inline data.
pub fn vegalite_violations(doc: &Value) -> Vec<String> {
    let mut errs = Vec::new();
    if doc.get("$schema").and_then(Value::as_str) != Some(SCHEMA) {
        errs.push("missing v5 $schema".into());
    }
    match doc.get("layer") {
        Some(Value::Array(units)) => {
            if units.is_empty() {
                errs.push("empty layer array".into());
            }
            if doc.as_object().map_or(0, |o| o.len()) != 2 {
                errs.push("layered spec has extra top-level keys".into());
            }
            for (i, u) in units.iter().enumerate() {
                if u.get("$schema").is_some() {
                    errs.push(format!("layer[{i}] repeats $schema"));
                }
                check_unit(u, &format!("layer[{i}]"), &mut errs);
            }
        }
        Some(_) => errs.push("layer must be an array".into()),
        None => check_unit(doc, "root", &mut errs),
    }
    errs
}

/// Per-layer `(channel → (field, type))` of a document.
pub fn encodings(doc: &Value) -> Vec<BTreeMap<String, (String, Option<String>)>> {
    let units: Vec<&Value> = match doc.get("layer").and_then(Value::as_array) {
        Some(u) => u.iter().collect(),
        None => vec![doc],
    };
    units
        .into_iter()
        .map(|u| {
            u["encoding"]
                .as_object()
                .map(|enc| {
                    enc.iter()
                        .map(|(ch, d)| {
                            (
                                ch.clone(),
                                (
                                    unescape(d["field"].as_str().unwrap_or("")),
                                    d.get("type").and_then(Value::as_str).map(String::from),
                                ),
                            )
                        })
                        .collect()
                })
                .unwrap_or_default()
        })
        .collect()
}
