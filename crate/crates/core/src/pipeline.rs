//! End-to-end synthesis: decompile the demonstration, search every layer
//! concurrently, then combine, rank and compile candidates. Also defines the
//! JSON request and response shapes shared by the CLI, service and bindings.

use std::collections::HashSet;
use std::sync::{mpsc, Arc};
use std::time::Instant;

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::compile::{
    bind_layer, canonical_layer, dedup, infer_scales, rank_and_group, Candidate, GroupKey,
};
use crate::decompile::{decompile, DecompileError, LayerSketch};
use crate::grammar::{ExampleElement, LayerSpec};
use crate::lang::{ColumnMapping, TransformProgram};
use crate::synth::{
    sort_solutions, synthesize_layer_with, ConfigError, SearchConfig, SearchEvent, SearchStats,
    Solution,
};
use crate::table::{load_csv, Table, TableError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),
    #[error("input table: {0}")]
    Table(#[from] TableError),
    #[error(transparent)]
    Decompile(#[from] DecompileError),
}

/// Input table given either as the JSON table form or as CSV text.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum TableInput {
    Json(Table),
    Csv(String),
}

impl TableInput {
    pub fn load(&self) -> Result<Table, TableError> {
        match self {
            TableInput::Json(t) => Ok(t.clone()),
            TableInput::Csv(text) => load_csv(text.as_bytes(), true),
        }
    }
}

impl<'de> Deserialize<'de> for TableInput {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<TableInput, D::Error> {
        match Value::deserialize(d)? {
            Value::String(s) => Ok(TableInput::Csv(s)),
            v @ Value::Object(_) => Table::from_json(&v)
                .map(TableInput::Json)
                .map_err(serde::de::Error::custom),
            _ => Err(serde::de::Error::custom(
                "expected CSV text or a {columns, rows} table",
            )),
        }
    }
}

/// Optional per-request overrides of a base [`SearchConfig`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_candidates: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worker_budgets_ms: Option<Vec<Option<u64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memoize: Option<bool>,
}

impl ConfigOverrides {
    pub fn apply(&self, base: &SearchConfig) -> SearchConfig {
        let mut cfg = base.clone();
        if let Some(d) = self.max_depth {
            cfg.max_depth = d;
        }
        if let Some(m) = self.max_candidates {
            cfg.max_candidates = m;
        }
        if let Some(b) = &self.worker_budgets_ms {
            cfg.worker_budgets_ms = b.clone();
        }
        if let Some(t) = self.rel_tol {
            cfg.rel_tol = t;
        }
        if let Some(m) = self.memoize {
            cfg.memoize = m;
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisRequest {
    pub table: TableInput,
    pub elements: Vec<ExampleElement>,
    #[serde(default)]
    pub config: ConfigOverrides,
}

/// Wire form of a [`Candidate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub id: String,
    pub vegalite: Value,
    pub programs: Vec<String>,
    pub mappings: Vec<ColumnMapping>,
    pub complexity: usize,
    pub group_key: GroupKey,
}

impl From<&Candidate> for CandidateSummary {
    fn from(c: &Candidate) -> CandidateSummary {
        CandidateSummary {
            id: c.id.clone(),
            vegalite: c.vegalite.clone(),
            programs: c.program_texts(),
            mappings: c.mappings.clone(),
            complexity: c.complexity,
            group_key: c.group_key.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseStats {
    /// Per worker, the longest time it ran in any layer.
    pub elapsed_ms: Vec<u64>,
    pub total_ms: u64,
    pub sketches_explored: usize,
    pub pruned_count: usize,
    pub truncated: bool,
    pub layers: Vec<SearchStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResponse {
    pub candidates: Vec<CandidateSummary>,
    pub stats: ResponseStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Why a run produced nothing.
pub const NO_CANDIDATE: &str = "NoCandidate";

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub sketches: Vec<LayerSketch>,
    pub candidates: Vec<Candidate>,
    /// What the fastest worker alone produced, when it was streamed.
    pub fast: Option<Vec<Candidate>>,
    pub stats: ResponseStats,
}

impl PipelineOutput {
    pub fn response(&self) -> SynthesisResponse {
        SynthesisResponse {
            candidates: self.candidates.iter().map(CandidateSummary::from).collect(),
            stats: self.stats.clone(),
            reason: self.candidates.is_empty().then(|| NO_CANDIDATE.to_string()),
        }
    }
}

/// One instantiated layer choice.
struct LayerEntry {
    program: TransformProgram,
    mapping: ColumnMapping,
    layer: LayerSpec,
    table: Arc<Table>,
    canonical: String,
    complexity: usize,
}

/// Instantiates solutions in complexity order and keeps the best `cap`
/// distinct layers. A level is finished before the cut so that ties are
/// settled by canonical text, as in the final ranking.
fn layer_entries(sketch: &LayerSketch, solutions: &[Solution], cap: usize) -> Vec<LayerEntry> {
    let mut seen = HashSet::new();
    let mut out: Vec<LayerEntry> = Vec::new();
    for s in solutions {
        if out.len() >= cap && out.last().is_some_and(|e| e.complexity < s.complexity()) {
            break;
        }
        for m in &s.mappings {
            let Ok(layer) = bind_layer(sketch, m, &s.output) else {
                log::warn!("solution `{}` has an unusable mapping", s.text);
                continue;
            };
            let layer = infer_scales(&layer, &s.output);
            let canonical = canonical_layer(&layer, &s.output);
            if seen.insert(canonical.clone()) {
                out.push(LayerEntry {
                    program: s.program.clone(),
                    mapping: m.clone(),
                    layer,
                    table: s.output.clone(),
                    canonical,
                    complexity: s.complexity(),
                });
            }
        }
    }
    out.sort_by(|a, b| (a.complexity, &a.canonical).cmp(&(b.complexity, &b.canonical)));
    out.truncate(cap);
    out
}

/// Best `max` combinations of one entry per layer. Merging layer by layer
/// and truncating each time is exact because the order is lexicographic in
/// the per-layer canonical texts and additive in complexity.
fn combine(layers: &[Vec<LayerEntry>], max: usize) -> Vec<Candidate> {
    let mut combos: Vec<Vec<usize>> = vec![Vec::new()];
    for (l, entries) in layers.iter().enumerate() {
        let mut next: Vec<Vec<usize>> = combos
            .iter()
            .flat_map(|c| {
                (0..entries.len()).map(move |i| {
                    let mut c = c.clone();
                    c.push(i);
                    c
                })
            })
            .collect();
        let key = |c: &Vec<usize>| {
            let cx: usize = c.iter().enumerate().map(|(k, &i)| layers[k][i].complexity).sum();
            let canon: Vec<&str> = c
                .iter()
                .enumerate()
                .map(|(k, &i)| layers[k][i].canonical.as_str())
                .collect();
            (cx, canon)
        };
        next.sort_by_cached_key(key);
        next.truncate(max);
        debug_assert!(next.iter().all(|c| c.len() == l + 1));
        combos = next;
    }
    combos
        .into_iter()
        .map(|c| {
            let picked: Vec<&LayerEntry> =
                c.iter().enumerate().map(|(k, &i)| &layers[k][i]).collect();
            Candidate::assemble(
                picked.iter().map(|e| e.program.clone()).collect(),
                picked.iter().map(|e| e.mapping.clone()).collect(),
                picked.iter().map(|e| e.layer.clone()).collect(),
                picked.iter().map(|e| e.table.clone()).collect(),
            )
        })
        .collect()
}

/// Ranked candidates from per-layer solution lists (each sorted).
pub fn build_candidates(
    sketches: &[LayerSketch],
    solutions: &[Vec<Solution>],
    max: usize,
) -> Vec<Candidate> {
    let entries: Vec<Vec<LayerEntry>> = sketches
        .iter()
        .zip(solutions)
        .map(|(sk, sols)| layer_entries(sk, sols, max))
        .collect();
    if entries.iter().any(Vec::is_empty) {
        return Vec::new();
    }
    rank_and_group(dedup(combine(&entries, max)), max)
}

enum Progress {
    Found(usize, Solution),
    Finished,
}

/// Runs the pipeline. When streaming with several workers, `on_fast`
/// receives the ranked candidates of the fastest worker as soon as it has
/// finished in every layer. Streamed candidates are kept in the final list
/// so that a client never has to retract one it already shows.
pub fn run_with(
    input: &Table,
    elements: &[ExampleElement],
    cfg: &SearchConfig,
    mut on_fast: Option<&mut dyn FnMut(&[Candidate])>,
) -> Result<PipelineOutput, PipelineError> {
    cfg.validate()?;
    let sketches = decompile(elements)?;
    let started = Instant::now();
    let n = sketches.len();
    let streaming = cfg.workers() > 1 && on_fast.is_some();

    // on a machine too small for every worker at once, layers take turns so
    // that each layer's budgets are measured against a fair share of the CPU
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let concurrent = n * cfg.workers() <= cores;

    let (tx, rx) = mpsc::channel();
    let mut fast_solutions: Vec<Vec<Solution>> = vec![Vec::new(); n];
    let mut fast_pending = n;
    let mut fast = None;
    let search = |l: usize, tx: mpsc::Sender<Progress>| {
        synthesize_layer_with(input, &sketches[l].example_table, cfg, &mut |ev| match ev {
            SearchEvent::Found {
                worker: 0,
                solution,
            } if streaming => {
                let _ = tx.send(Progress::Found(l, solution.clone()));
            }
            SearchEvent::WorkerFinished(st) if st.worker == 0 => {
                let _ = tx.send(Progress::Finished);
            }
            _ => {}
        })
    };
    let searches = std::thread::scope(|scope| {
        let driver = scope.spawn(move || {
            if concurrent {
                std::thread::scope(|inner| {
                    let handles: Vec<_> = (0..n)
                        .map(|l| {
                            let tx = tx.clone();
                            inner.spawn(move || search(l, tx))
                        })
                        .collect();
                    handles
                        .into_iter()
                        .map(|h| h.join().expect("layer search panicked"))
                        .collect::<Vec<_>>()
                })
            } else {
                (0..n).map(|l| search(l, tx.clone())).collect()
            }
        });
        for msg in rx {
            match msg {
                Progress::Found(l, s) => fast_solutions[l].push(s),
                Progress::Finished => {
                    fast_pending -= 1;
                    if fast_pending == 0 && streaming {
                        for sols in &mut fast_solutions {
                            sort_solutions(sols);
                        }
                        let snapshot =
                            build_candidates(&sketches, &fast_solutions, cfg.max_candidates);
                        if let Some(f) = on_fast.as_mut() {
                            f(&snapshot);
                        }
                        fast = Some(snapshot);
                    }
                }
            }
        }
        driver.join().expect("layer search panicked")
    });

    let solutions: Vec<Vec<Solution>> = searches.iter().map(|s| s.solutions.clone()).collect();
    let mut candidates = build_candidates(&sketches, &solutions, cfg.max_candidates);
    if let Some(early) = &fast {
        let have: HashSet<String> = candidates.iter().map(|c| c.id.clone()).collect();
        let missing: Vec<Candidate> =
            early.iter().filter(|c| !have.contains(&c.id)).cloned().collect();
        if !missing.is_empty() {
            candidates.extend(missing);
            candidates = rank_and_group(candidates, usize::MAX);
        }
    }

    let layers: Vec<SearchStats> = searches.into_iter().map(|s| s.stats).collect();
    let mut elapsed_ms = vec![0; cfg.workers()];
    for w in layers.iter().flat_map(|s| &s.workers) {
        elapsed_ms[w.worker] = elapsed_ms[w.worker].max(w.elapsed_ms);
    }
    let stats = ResponseStats {
        elapsed_ms,
        total_ms: started.elapsed().as_millis() as u64,
        sketches_explored: layers.iter().map(SearchStats::sketches_explored).sum(),
        pruned_count: layers.iter().map(SearchStats::pruned_count).sum(),
        truncated: layers.iter().any(SearchStats::truncated),
        layers,
    };
    Ok(PipelineOutput {
        sketches,
        candidates,
        fast,
        stats,
    })
}

pub fn run(
    input: &Table,
    elements: &[ExampleElement],
    cfg: &SearchConfig,
) -> Result<PipelineOutput, PipelineError> {
    run_with(input, elements, cfg, None)
}

/// Loads the request's table, applies its overrides to `base` and runs.
pub fn run_request(
    req: &SynthesisRequest,
    base: &SearchConfig,
    on_fast: Option<&mut dyn FnMut(&[Candidate])>,
) -> Result<PipelineOutput, PipelineError> {
    let input = req.table.load()?;
    run_with(&input, &req.elements, &req.config.apply(base), on_fast)
}
