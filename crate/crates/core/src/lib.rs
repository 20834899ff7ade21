//! Visualization-by-example synthesis.
//!
//! Given an input table and a handful of demonstrated chart elements, the
//! pipeline recovers a visualization skeleton and example table per layer
//! ([`decompile`]), searches for table transformations whose output contains
//! each example table ([`synth`]), and compiles the results into ranked,
//! deduplicated Vega-Lite candidates ([`compile`]). [`pipeline`] ties the
//! stages together for the CLI, the HTTP service and the Python bindings.

pub mod compile;
pub mod decompile;
pub mod grammar;
pub mod lang;
pub mod pipeline;
pub mod synth;
pub mod table;

pub use lang::{
    contains, eval, ColumnMapping, EvalError, OpKind, TransformOp, TransformProgram,
};
pub use table::{cell_equal, infer_column_type, load_csv, CellValue, Column, ColumnType, Table};
