//! Program synthesis for a single layer: find every transformation program
//! whose output contains the layer's example table.

pub mod abstraction;
pub mod pool;
pub mod search;
pub mod sketch;

pub use abstraction::{abstract_eval, abstract_op, feasible, AbstractTable, ExampleSummary};
pub use pool::{candidate_ops, ConstantPool};
pub use search::{
    sort_solutions, synthesize_layer, synthesize_layer_with, ConfigError, LayerSearch, SearchConfig,
    SearchEvent, SearchStats, Solution, WorkerStats,
};
pub use sketch::{enumerate_sketches, Sketch};
