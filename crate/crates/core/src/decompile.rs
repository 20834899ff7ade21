//! Visualization decompilation: demonstrated elements → per-layer chart
//! skeletons over placeholder columns, plus the example table each layer's
//! data must contain.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{Channel, ElementError, ElementKind, ExampleElement, LayerSpec, Mark, MAX_LAYERS};
use crate::table::{Table, TableError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecompileError {
    #[error("no example elements given")]
    NoElements,
    #[error("element {index}: {source}")]
    InvalidElement {
        index: usize,
        #[source]
        source: ElementError,
    },
    #[error("examples form {0} layers, at most {MAX_LAYERS} are supported")]
    TooManyLayers(usize),
    #[error("elements in one layer must share kind and properties")]
    InconsistentGroup,
    #[error("example table: {0}")]
    Table(#[from] TableError),
}

/// A layer skeleton over placeholder columns `C1..Ck` and its example table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSketch {
    pub layer: LayerSpec,
    pub example_table: Table,
    pub channel_order: Vec<Channel>,
}

impl LayerSketch {
    pub fn placeholder(&self, ch: Channel) -> Option<&str> {
        self.layer.encodings.get(&ch).map(String::as_str)
    }
}

fn group_key(e: &ExampleElement) -> (ElementKind, BTreeSet<&str>) {
    (e.kind, e.prop_names())
}

/// Groups elements by (kind, property-name set) in order of first appearance.
pub fn partition_examples(
    elements: &[ExampleElement],
) -> Result<Vec<Vec<ExampleElement>>, DecompileError> {
    if elements.is_empty() {
        return Err(DecompileError::NoElements);
    }
    for (index, e) in elements.iter().enumerate() {
        e.validate()
            .map_err(|source| DecompileError::InvalidElement { index, source })?;
    }
    let mut keys = Vec::new();
    let mut groups: Vec<Vec<ExampleElement>> = Vec::new();
    for e in elements {
        let k = group_key(e);
        match keys.iter().position(|g| *g == k) {
            Some(i) => groups[i].push(e.clone()),
            None => {
                keys.push(k);
                groups.push(vec![e.clone()]);
            }
        }
    }
    if groups.len() > MAX_LAYERS {
        return Err(DecompileError::TooManyLayers(groups.len()));
    }
    Ok(groups)
}

fn mark_for(kind: ElementKind) -> Mark {
    match kind {
        ElementKind::Point => Mark::Point,
        ElementKind::Line => Mark::Line,
        ElementKind::Bar => Mark::Bar,
        ElementKind::Rect => Mark::Rect,
        ElementKind::Area => Mark::Area,
    }
}

/// Channel fed by a non-endpoint property.
fn channel_for(prop: &str) -> Option<Channel> {
    Some(match prop {
        "x" => Channel::X,
        "x2" => Channel::X2,
        "y" => Channel::Y,
        "y2" => Channel::Y2,
        "color" => Channel::Color,
        "size" => Channel::Size,
        "shape" => Channel::Shape,
        "column" => Channel::Column,
        "row" => Channel::Row,
        _ => return None,
    })
}

/// Property holding a channel's value for one row of an element. Line
/// endpoints yield two rows: endpoint 0 reads `x1`/`y1`, endpoint 1 `x2`/`y2`.
fn prop_for(kind: ElementKind, ch: Channel, endpoint: usize) -> &'static str {
    match (kind, ch) {
        (ElementKind::Line, Channel::X) => ["x1", "x2"][endpoint],
        (ElementKind::Line, Channel::Y) => ["y1", "y2"][endpoint],
        (_, ch) => ch.name(),
    }
}

/// Builds the layer skeleton and example table for one homogeneous group.
pub fn decompile_layer(group: &[ExampleElement]) -> Result<LayerSketch, DecompileError> {
    let first = group.first().ok_or(DecompileError::NoElements)?;
    let key = group_key(first);
    if group.iter().any(|e| group_key(e) != key) {
        return Err(DecompileError::InconsistentGroup);
    }
    for (index, e) in group.iter().enumerate() {
        e.validate()
            .map_err(|source| DecompileError::InvalidElement { index, source })?;
    }
    let kind = first.kind;
    let present: BTreeSet<Channel> = if kind == ElementKind::Line {
        let mut s: BTreeSet<Channel> = [Channel::X, Channel::Y].into();
        s.extend(
            first
                .props
                .keys()
                .filter(|p| !matches!(p.as_str(), "x1" | "x2" | "y1" | "y2"))
                .filter_map(|p| channel_for(p)),
        );
        s
    } else {
        first.props.keys().filter_map(|p| channel_for(p)).collect()
    };
    let channel_order: Vec<Channel> = Channel::ALL
        .into_iter()
        .filter(|c| present.contains(c))
        .collect();

    let names: Vec<String> = (1..=channel_order.len()).map(|i| format!("C{i}")).collect();
    let endpoints = if kind == ElementKind::Line { 2 } else { 1 };
    let mut rows = Vec::with_capacity(group.len() * endpoints);
    for e in group {
        for endpoint in 0..endpoints {
            rows.push(
                channel_order
                    .iter()
                    .map(|&ch| e.props[prop_for(kind, ch, endpoint)].canonical())
                    .collect(),
            );
        }
    }
    let example_table = Table::from_text_rows(names.clone(), rows)?;
    let layer = LayerSpec::new(mark_for(kind), channel_order.iter().copied().zip(names));
    Ok(LayerSketch {
        layer,
        example_table,
        channel_order,
    })
}

/// Partitions elements into layers and decompiles each.
pub fn decompile(elements: &[ExampleElement]) -> Result<Vec<LayerSketch>, DecompileError> {
    partition_examples(elements)?
        .iter()
        .map(|g| decompile_layer(g))
        .collect()
}
