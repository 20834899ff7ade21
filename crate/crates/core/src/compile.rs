//! Program generation: bind placeholder specs to real columns, pick scales,
//! emit Vega-Lite with inline data, collapse duplicates and rank.

use std::collections::{BTreeSet, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::decompile::LayerSketch;
use crate::grammar::{Channel, LayerSpec, Mark, ScaleHint, VisSpec};
use crate::lang::{eval, ColumnMapping, EvalError, TransformProgram};
use crate::table::{ColumnType, Table};

pub const VEGA_LITE_SCHEMA: &str = "https://vega.github.io/schema/vega-lite/v5.json";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error("placeholder {0} has no mapping")]
    UnmappedPlaceholder(String),
    #[error("mapping names column `{0}`, which the transformed table lacks")]
    MissingColumn(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Marks and channels of a candidate, both sorted. Candidates sharing a key
/// are shown side by side.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupKey {
    pub marks: Vec<Mark>,
    pub channels: Vec<Channel>,
}

impl GroupKey {
    pub fn of(spec: &VisSpec) -> GroupKey {
        let mut marks: Vec<Mark> = spec.layers.iter().map(|l| l.mark).collect();
        marks.sort();
        let channels: BTreeSet<Channel> = spec.layers.iter().flat_map(|l| l.channels()).collect();
        GroupKey {
            marks,
            channels: channels.into_iter().collect(),
        }
    }
}

/// One synthesized (transformations, visualization) pair.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub programs: Vec<TransformProgram>,
    pub mappings: Vec<ColumnMapping>,
    pub spec: VisSpec,
    pub rendered: Vec<Arc<Table>>,
    pub vegalite: Value,
    pub complexity: usize,
    pub group_key: GroupKey,
    pub canonical: String,
    pub id: String,
}

impl Candidate {
    /// Compiles layers that are already instantiated and scale-typed.
    pub fn assemble(
        programs: Vec<TransformProgram>,
        mappings: Vec<ColumnMapping>,
        layers: Vec<LayerSpec>,
        rendered: Vec<Arc<Table>>,
    ) -> Candidate {
        let spec = VisSpec { layers };
        let tables: Vec<&Table> = rendered.iter().map(Arc::as_ref).collect();
        let vegalite = to_vegalite(&spec, &tables);
        let canonical = canonical_form(&spec, &tables);
        let id = hex::encode(Sha256::digest(canonical.as_bytes()));
        Candidate {
            complexity: programs.iter().map(TransformProgram::complexity).sum(),
            group_key: GroupKey::of(&spec),
            programs,
            mappings,
            spec,
            rendered,
            vegalite,
            canonical,
            id,
        }
    }

    pub fn program_texts(&self) -> Vec<String> {
        self.programs.iter().map(TransformProgram::serialize).collect()
    }

    /// Bit-exact JSON text of the Vega-Lite document.
    pub fn vegalite_text(&self) -> String {
        render_json(&self.vegalite)
    }
}

/// Binds a layer's placeholders through `mapping` to columns of `output`.
pub fn bind_layer(
    sketch: &LayerSketch,
    mapping: &ColumnMapping,
    output: &Table,
) -> Result<LayerSpec, CompileError> {
    let mut layer = sketch.layer.clone();
    for field in layer.encodings.values_mut() {
        let idx = sketch
            .example_table
            .column_index(field)
            .filter(|&i| i < mapping.targets.len())
            .ok_or_else(|| CompileError::UnmappedPlaceholder(field.clone()))?;
        let target = &mapping.targets[idx];
        if output.column_index(target).is_none() {
            return Err(CompileError::MissingColumn(target.clone()));
        }
        *field = target.clone();
    }
    layer.scales.clear();
    Ok(layer)
}

/// Evaluates `prog` on `input` and binds the layer to the result.
pub fn instantiate(
    sketch: &LayerSketch,
    prog: &TransformProgram,
    mapping: &ColumnMapping,
    input: &Table,
) -> Result<(LayerSpec, Table), CompileError> {
    let output = eval(prog, input)?;
    let layer = bind_layer(sketch, mapping, &output)?;
    Ok((layer, output))
}

/// Assigns each channel the scale its bound column calls for.
pub fn infer_scales(layer: &LayerSpec, data: &Table) -> LayerSpec {
    let mut out = layer.clone();
    out.scales = layer
        .encodings
        .iter()
        .filter_map(|(&ch, field)| {
            let idx = data.column_index(field)?;
            Some((ch, ScaleHint::for_column(ch, data.column_type(idx))))
        })
        .collect();
    out
}

/// Vega-Lite escapes `.`, `[` and `]` in field names.
fn field_ref(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    for c in name.chars() {
        if matches!(c, '.' | '[' | ']' | '\\') {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

fn type_name(ty: ColumnType) -> &'static str {
    match ty {
        ColumnType::Quantitative => "quantitative",
        ColumnType::Nominal => "nominal",
        ColumnType::Temporal => "temporal",
    }
}

/// Columns of `t` bound to some channel, in table order.
fn encoded_columns(layer: &LayerSpec, t: &Table) -> Vec<usize> {
    (0..t.num_cols())
        .filter(|&c| layer.encodings.values().any(|f| *f == t.columns()[c].name))
        .collect()
}

/// Inline rows restricted to the encoded columns: other columns never
/// reach the chart.
fn data_values(layer: &LayerSpec, t: &Table) -> Value {
    let cols = encoded_columns(layer, t);
    let rows = t
        .rows()
        .map(|row| {
            let obj: Map<String, Value> = cols
                .iter()
                .map(|&c| (t.columns()[c].name.clone(), row[c].to_json()))
                .collect();
            Value::Object(obj)
        })
        .collect();
    Value::Array(rows)
}

fn layer_json(layer: &LayerSpec, data: &Table) -> Value {
    let mut encoding = Map::new();
    for (&ch, field) in &layer.encodings {
        let mut enc = Map::new();
        enc.insert("field".into(), Value::String(field_ref(field)));
        if !ch.is_secondary() {
            let hint = layer.scales.get(&ch).copied().unwrap_or_else(|| {
                let ty = data
                    .column_index(field)
                    .map_or(ColumnType::Nominal, |i| data.column_type(i));
                ScaleHint::for_column(ch, ty)
            });
            enc.insert("type".into(), json!(type_name(hint.field_type())));
        }
        encoding.insert(ch.name().into(), Value::Object(enc));
    }
    json!({
        "data": { "values": data_values(layer, data) },
        "encoding": encoding,
        "mark": layer.mark.name(),
    })
}

/// Emits a Vega-Lite v5 document: a plain unit spec for one layer, a
/// `layer` array otherwise. Each layer carries its own inline data.
pub fn to_vegalite(spec: &VisSpec, rendered: &[&Table]) -> Value {
    assert_eq!(spec.layers.len(), rendered.len(), "one table per layer");
    let mut units: Vec<Value> = spec
        .layers
        .iter()
        .zip(rendered)
        .map(|(l, t)| layer_json(l, t))
        .collect();
    let mut doc = if units.len() == 1 {
        units.pop().expect("one layer")
    } else {
        json!({ "layer": units })
    };
    doc.as_object_mut()
        .expect("specs are objects")
        .insert("$schema".into(), json!(VEGA_LITE_SCHEMA));
    doc
}

/// Serializes a JSON value with object keys in sorted order regardless of
/// how the map stores them.
struct Sorted<'a>(&'a Value);

impl Serialize for Sorted<'_> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::{SerializeMap, SerializeSeq};
        match self.0 {
            Value::Object(m) => {
                let mut keys: Vec<&String> = m.keys().collect();
                keys.sort();
                let mut out = s.serialize_map(Some(keys.len()))?;
                for k in keys {
                    out.serialize_entry(k, &Sorted(&m[k]))?;
                }
                out.end()
            }
            Value::Array(items) => {
                let mut out = s.serialize_seq(Some(items.len()))?;
                for v in items {
                    out.serialize_element(&Sorted(v))?;
                }
                out.end()
            }
            other => other.serialize(s),
        }
    }
}

/// Sorted keys, two-space indent, trailing newline.
pub fn render_json(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(&Sorted(v)).expect("JSON values serialize");
    s.push('\n');
    s
}

/// Sorted keys, no whitespace.
pub fn compact_json(v: &Value) -> String {
    serde_json::to_string(&Sorted(v)).expect("JSON values serialize")
}

/// The encoded columns of a table, sorted by name, with rows sorted.
fn canonical_table(layer: &LayerSpec, t: &Table) -> Value {
    let mut order = encoded_columns(layer, t);
    order.sort_by(|&a, &b| t.columns()[a].name.cmp(&t.columns()[b].name));
    let mut rows: Vec<Vec<String>> = t
        .rows()
        .map(|r| order.iter().map(|&c| r[c].canonical()).collect())
        .collect();
    rows.sort();
    json!({
        "columns": order.iter().map(|&c| {
            let col = &t.columns()[c];
            json!([col.name, col.ty])
        }).collect::<Vec<_>>(),
        "rows": rows,
    })
}

/// Canonical text of one layer: its spec and the data it draws.
pub fn canonical_layer(layer: &LayerSpec, data: &Table) -> String {
    compact_json(&json!({ "spec": layer, "table": canonical_table(layer, data) }))
}

pub fn canonical_form(spec: &VisSpec, rendered: &[&Table]) -> String {
    let layers: Vec<String> = spec
        .layers
        .iter()
        .zip(rendered)
        .map(|(l, t)| canonical_layer(l, t))
        .collect();
    format!("[{}]", layers.join(","))
}

fn rank_cmp(a: &Candidate, b: &Candidate) -> std::cmp::Ordering {
    (a.complexity, &a.group_key, &a.canonical).cmp(&(b.complexity, &b.group_key, &b.canonical))
}

/// Keeps the lowest-complexity member of each canonical class, ties broken
/// by program text. Survivors keep their input order.
pub fn dedup(cands: Vec<Candidate>) -> Vec<Candidate> {
    let mut best: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
    let key = |c: &Candidate| (c.complexity, c.program_texts());
    for (i, c) in cands.iter().enumerate() {
        best.entry(c.canonical.as_str())
            .and_modify(|j| {
                if key(c) < key(&cands[*j]) {
                    *j = i;
                }
            })
            .or_insert(i);
    }
    let keep: HashSet<usize> = best.into_values().collect();
    cands
        .into_iter()
        .enumerate()
        .filter(|(i, _)| keep.contains(i))
        .map(|(_, c)| c)
        .collect()
}

/// Orders by complexity, then group, then canonical text, and truncates.
pub fn rank_and_group(mut cands: Vec<Candidate>, max: usize) -> Vec<Candidate> {
    cands.sort_by(rank_cmp);
    cands.truncate(max);
    cands
}
