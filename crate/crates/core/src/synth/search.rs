//! Budgeted multi-worker enumerative search.

use std::collections::HashMap;
use std::sync::mpsc;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::{contains, eval_op, ColumnMapping, OpKind, TransformOp, TransformProgram};
use crate::table::{Table, DEFAULT_REL_TOL};

use super::abstraction::{feasible, ExampleSummary};
use super::pool::{candidate_ops, ConstantPool};
use super::sketch::{enumerate_sketches, Sketch};

/// Entries kept per worker before the memo stops growing.
const MEMO_CAP: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub max_depth: usize,
    pub max_candidates: usize,
    /// One entry per worker, ascending; `None` runs until the sketch space
    /// is exhausted.
    pub worker_budgets_ms: Vec<Option<u64>>,
    pub rel_tol: f64,
    pub memoize: bool,
}

impl Default for SearchConfig {
    fn default() -> SearchConfig {
        SearchConfig {
            max_depth: 3,
            max_candidates: 20,
            worker_budgets_ms: vec![Some(5_000), Some(20_000)],
            rel_tol: DEFAULT_REL_TOL,
            memoize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("max_depth must be at least 1")]
    ZeroDepth,
    #[error("max_candidates must be at least 1")]
    ZeroCandidates,
    #[error("at least one worker budget is required")]
    NoWorkers,
    #[error("worker budgets must be ascending")]
    UnorderedBudgets,
    #[error("rel_tol must be finite and non-negative")]
    BadTolerance,
}

impl SearchConfig {
    /// A single worker with no time limit.
    pub fn seedless() -> SearchConfig {
        SearchConfig {
            worker_budgets_ms: vec![None],
            ..SearchConfig::default()
        }
    }

    pub fn unbounded(workers: usize) -> SearchConfig {
        SearchConfig {
            worker_budgets_ms: vec![None; workers.max(1)],
            ..SearchConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_depth == 0 {
            return Err(ConfigError::ZeroDepth);
        }
        if self.max_candidates == 0 {
            return Err(ConfigError::ZeroCandidates);
        }
        if self.worker_budgets_ms.is_empty() {
            return Err(ConfigError::NoWorkers);
        }
        let key = |b: &Option<u64>| b.unwrap_or(u64::MAX);
        if self
            .worker_budgets_ms
            .windows(2)
            .any(|w| key(&w[0]) > key(&w[1]))
        {
            return Err(ConfigError::UnorderedBudgets);
        }
        if !self.rel_tol.is_finite() || self.rel_tol < 0.0 {
            return Err(ConfigError::BadTolerance);
        }
        Ok(())
    }

    pub fn workers(&self) -> usize {
        self.worker_budgets_ms.len()
    }
}

/// A program whose output contains the example, with every valid mapping.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Solution {
    pub program: TransformProgram,
    pub text: String,
    pub mappings: Vec<ColumnMapping>,
    #[serde(skip)]
    pub output: Arc<Table>,
    pub sketch_index: usize,
}

impl Solution {
    pub fn complexity(&self) -> usize {
        self.program.complexity()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkerStats {
    pub worker: usize,
    pub budget_ms: Option<u64>,
    pub elapsed_ms: u64,
    pub sketches_explored: usize,
    pub pruned_count: usize,
    pub programs_evaluated: usize,
    pub memo_hits: usize,
    pub solutions: usize,
    pub truncated: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub workers: Vec<WorkerStats>,
}

impl SearchStats {
    pub fn sketches_explored(&self) -> usize {
        self.workers.iter().map(|w| w.sketches_explored).sum()
    }

    pub fn pruned_count(&self) -> usize {
        self.workers.iter().map(|w| w.pruned_count).sum()
    }

    pub fn truncated(&self) -> bool {
        self.workers.iter().any(|w| w.truncated)
    }

    pub fn elapsed_ms(&self) -> Vec<u64> {
        self.workers.iter().map(|w| w.elapsed_ms).collect()
    }
}

/// Progress reported to the collector's caller, in arrival order.
#[derive(Debug)]
pub enum SearchEvent<'a> {
    Found { worker: usize, solution: &'a Solution },
    WorkerFinished(&'a WorkerStats),
}

#[derive(Debug, Clone)]
pub struct LayerSearch {
    /// Sorted by complexity, then program text.
    pub solutions: Vec<Solution>,
    pub stats: SearchStats,
}

impl LayerSearch {
    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }
}

/// Orders solutions by complexity, then serialization, dropping repeats.
pub fn sort_solutions(solutions: &mut Vec<Solution>) {
    solutions.sort_by(|a, b| {
        (a.complexity(), &a.text, &a.mappings).cmp(&(b.complexity(), &b.text, &b.mappings))
    });
    solutions.dedup_by(|a, b| a.text == b.text);
}

enum Message {
    Found(usize, Solution),
    Done(WorkerStats),
}

/// A completion of the remaining holes from some intermediate table.
struct Completion {
    ops: Vec<TransformOp>,
    mappings: Vec<ColumnMapping>,
    output: Arc<Table>,
}

type Completions = Arc<Vec<Completion>>;

/// Per-worker memo. Tables are interned so that evaluation results and
/// completion lists can be keyed by a small id instead of table contents.
#[derive(Default)]
struct Memo {
    ids: HashMap<Arc<Table>, usize>,
    tables: Vec<Arc<Table>>,
    evals: HashMap<(usize, OpKind, usize), Option<usize>>,
    completions: HashMap<(usize, Vec<OpKind>), Completions>,
}

impl Memo {
    fn intern(&mut self, t: Table) -> usize {
        let t = Arc::new(t);
        if let Some(&id) = self.ids.get(&t) {
            return id;
        }
        let id = self.tables.len();
        self.ids.insert(t.clone(), id);
        self.tables.push(t);
        id
    }

    fn full(&self) -> bool {
        self.tables.len() >= MEMO_CAP
    }
}

/// A table in the search tree, with its memo id when memoizing.
#[derive(Clone)]
struct Node {
    table: Arc<Table>,
    id: Option<usize>,
}

struct Worker<'a> {
    id: usize,
    input: &'a Table,
    example: &'a Table,
    example_summary: &'a ExampleSummary,
    pool: &'a ConstantPool,
    cfg: &'a SearchConfig,
    deadline: Option<Instant>,
    memo: Memo,
    stats: WorkerStats,
    tx: mpsc::Sender<Message>,
    out_of_time: bool,
}

impl Worker<'_> {
    fn expired(&mut self) -> bool {
        if !self.out_of_time {
            if let Some(d) = self.deadline {
                self.out_of_time = Instant::now() >= d;
            }
        }
        self.out_of_time
    }

    fn node(&mut self, t: Table, intern: bool) -> Node {
        if intern && self.cfg.memoize && !self.memo.full() {
            let id = self.memo.intern(t);
            Node {
                table: self.memo.tables[id].clone(),
                id: Some(id),
            }
        } else {
            Node {
                table: Arc::new(t),
                id: None,
            }
        }
    }

    /// Evaluates one filled hole. Leaf outputs are checked once and dropped,
    /// so they skip the memo.
    fn apply(
        &mut self,
        parent: &Node,
        kind: OpKind,
        index: usize,
        op: &TransformOp,
        leaf: bool,
    ) -> Option<Node> {
        if leaf {
            self.stats.programs_evaluated += 1;
            return eval_op(op, &parent.table).ok().map(|t| self.node(t, false));
        }
        if let Some(pid) = parent.id {
            if let Some(hit) = self.memo.evals.get(&(pid, kind, index)) {
                self.stats.memo_hits += 1;
                return hit.map(|id| Node {
                    table: self.memo.tables[id].clone(),
                    id: Some(id),
                });
            }
        }
        self.stats.programs_evaluated += 1;
        let child = eval_op(op, &parent.table).ok().map(|t| self.node(t, true));
        if let Some(pid) = parent.id {
            if !self.memo.full() || child.as_ref().is_none_or(|c| c.id.is_some()) {
                let cid = child.as_ref().and_then(|c| c.id);
                if child.is_none() || cid.is_some() {
                    self.memo.evals.insert((pid, kind, index), cid);
                }
            }
        }
        child
    }

    fn run(mut self, sketches: &[Sketch]) {
        let start = Instant::now();
        let root = self.node(self.input.clone(), true);
        let workers = self.cfg.workers();
        for (index, sketch) in sketches.iter().enumerate() {
            if index % workers != self.id {
                continue;
            }
            if self.expired() {
                break;
            }
            self.stats.sketches_explored += 1;
            if !feasible(&root.table, &sketch.ops, self.example_summary, self.cfg.rel_tol) {
                self.stats.pruned_count += 1;
                continue;
            }
            for c in self.complete(&root, &sketch.ops).iter() {
                self.stats.solutions += 1;
                let program = TransformProgram::new(c.ops.clone());
                let solution = Solution {
                    text: program.serialize(),
                    program,
                    mappings: c.mappings.clone(),
                    output: c.output.clone(),
                    sketch_index: index,
                };
                let _ = self.tx.send(Message::Found(self.id, solution));
            }
        }
        self.stats.truncated = self.out_of_time;
        self.stats.elapsed_ms = start.elapsed().as_millis() as u64;
        let _ = self.tx.send(Message::Done(self.stats));
    }

    /// Every filling of `remaining` that takes `node` to a table containing
    /// the example. Partial when the budget runs out midway.
    fn complete(&mut self, node: &Node, remaining: &[OpKind]) -> Completions {
        let key = node.id.map(|id| (id, remaining.to_vec()));
        if let Some(k) = &key {
            if let Some(hit) = self.memo.completions.get(k) {
                self.stats.memo_hits += 1;
                return hit.clone();
            }
        }
        let mut found = Vec::new();
        match remaining.split_first() {
            None => {
                let mappings = contains(&node.table, self.example, self.cfg.rel_tol);
                if !mappings.is_empty() {
                    found.push(Completion {
                        ops: Vec::new(),
                        mappings,
                        output: node.table.clone(),
                    });
                }
            }
            Some((&kind, rest)) => {
                for (index, op) in candidate_ops(kind, &node.table, self.pool)
                    .into_iter()
                    .enumerate()
                {
                    if self.expired() {
                        return Arc::new(found);
                    }
                    let leaf = rest.is_empty();
                    let Some(child) = self.apply(node, kind, index, &op, leaf) else {
                        continue;
                    };
                    // at a leaf the containment check subsumes feasibility
                    if !leaf
                        && !feasible(&child.table, rest, self.example_summary, self.cfg.rel_tol)
                    {
                        self.stats.pruned_count += 1;
                        continue;
                    }
                    for c in self.complete(&child, rest).iter() {
                        let mut ops = Vec::with_capacity(c.ops.len() + 1);
                        ops.push(op.clone());
                        ops.extend(c.ops.iter().cloned());
                        found.push(Completion {
                            ops,
                            mappings: c.mappings.clone(),
                            output: c.output.clone(),
                        });
                    }
                }
            }
        }
        let found = Arc::new(found);
        if let Some(k) = key {
            if !self.out_of_time {
                self.memo.completions.insert(k, found.clone());
            }
        }
        found
    }
}

/// Searches for every program up to `cfg.max_depth` whose output contains
/// `example`. Workers run until their budget or the sketch space runs out.
pub fn synthesize_layer(input: &Table, example: &Table, cfg: &SearchConfig) -> LayerSearch {
    synthesize_layer_with(input, example, cfg, &mut |_| {})
}

/// Like [`synthesize_layer`], reporting each solution and worker completion
/// as it reaches the collector.
pub fn synthesize_layer_with(
    input: &Table,
    example: &Table,
    cfg: &SearchConfig,
    on_event: &mut dyn FnMut(SearchEvent<'_>),
) -> LayerSearch {
    let sketches: Vec<Sketch> = enumerate_sketches(cfg.max_depth).collect();
    let pool = ConstantPool::new(input, example);
    let example_summary = ExampleSummary::of(example);
    let started = Instant::now();

    let (tx, rx) = mpsc::channel();
    let mut solutions = Vec::new();
    let mut workers = Vec::new();
    std::thread::scope(|scope| {
        for (id, budget) in cfg.worker_budgets_ms.iter().enumerate() {
            let worker = Worker {
                id,
                input,
                example,
                example_summary: &example_summary,
                pool: &pool,
                cfg,
                deadline: budget.map(|ms| started + Duration::from_millis(ms)),
                memo: Memo::default(),
                stats: WorkerStats {
                    worker: id,
                    budget_ms: *budget,
                    ..WorkerStats::default()
                },
                tx: tx.clone(),
                out_of_time: false,
            };
            let sketches = &sketches;
            scope.spawn(move || worker.run(sketches));
        }
        drop(tx);
        for msg in rx {
            match msg {
                Message::Found(worker, s) => {
                    on_event(SearchEvent::Found {
                        worker,
                        solution: &s,
                    });
                    solutions.push(s);
                }
                Message::Done(stats) => {
                    log::debug!(
                        "worker {} done: {} sketches, {} pruned, {} solutions{}",
                        stats.worker,
                        stats.sketches_explored,
                        stats.pruned_count,
                        stats.solutions,
                        if stats.truncated { " (truncated)" } else { "" }
                    );
                    on_event(SearchEvent::WorkerFinished(&stats));
                    workers.push(stats);
                }
            }
        }
    });
    workers.sort_by_key(|w| w.worker);
    sort_solutions(&mut solutions);
    LayerSearch {
        solutions,
        stats: SearchStats { workers },
    }
}
