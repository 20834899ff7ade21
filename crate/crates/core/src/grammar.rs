//! The internal visualization grammar: marks, channel encodings and layers,
//! plus the vocabulary of demonstrated example elements.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::table::{CellValue, ColumnType};

/// Maximum number of layers in one visualization.
pub const MAX_LAYERS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mark {
    Point,
    Line,
    Bar,
    Rect,
    Area,
}

impl Mark {
    pub fn name(self) -> &'static str {
        match self {
            Mark::Point => "point",
            Mark::Line => "line",
            Mark::Bar => "bar",
            Mark::Rect => "rect",
            Mark::Area => "area",
        }
    }

    pub fn legal_channels(self) -> &'static [Channel] {
        use Channel::*;
        match self {
            Mark::Line => &[X, Y, Color, Size, Column, Row],
            Mark::Point => &[X, Y, Color, Size, Shape, Column, Row],
            Mark::Bar => &[X, Y, Y2, Color, Column, Row],
            Mark::Rect => &[X, X2, Y, Y2, Color, Column, Row],
            Mark::Area => &[X, Y, Y2, Color, Column, Row],
        }
    }

    pub fn allows(self, ch: Channel) -> bool {
        self.legal_channels().contains(&ch)
    }
}

impl fmt::Display for Mark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Visual channels, declared in placeholder-assignment order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    X,
    X2,
    Y,
    Y2,
    Color,
    Size,
    Shape,
    Column,
    Row,
}

impl Channel {
    pub const ALL: [Channel; 9] = [
        Channel::X,
        Channel::X2,
        Channel::Y,
        Channel::Y2,
        Channel::Color,
        Channel::Size,
        Channel::Shape,
        Channel::Column,
        Channel::Row,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::X => "x",
            Channel::X2 => "x2",
            Channel::Y => "y",
            Channel::Y2 => "y2",
            Channel::Color => "color",
            Channel::Size => "size",
            Channel::Shape => "shape",
            Channel::Column => "column",
            Channel::Row => "row",
        }
    }

    pub fn is_facet(self) -> bool {
        matches!(self, Channel::Column | Channel::Row)
    }

    /// Secondary position channels share the scale of their primary.
    pub fn is_secondary(self) -> bool {
        matches!(self, Channel::X2 | Channel::Y2)
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Scale chosen for a channel once the bound column is known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleHint {
    Linear,
    Temporal,
    Categorical,
    /// Quantitative color: a sequential gradient.
    Sequential,
}

impl ScaleHint {
    pub fn for_column(ch: Channel, ty: ColumnType) -> ScaleHint {
        match (ch, ty) {
            (Channel::Color, ColumnType::Quantitative) => ScaleHint::Sequential,
            (_, ColumnType::Quantitative) => ScaleHint::Linear,
            (_, ColumnType::Temporal) => ScaleHint::Temporal,
            (_, ColumnType::Nominal) => ScaleHint::Categorical,
        }
    }

    pub fn field_type(self) -> ColumnType {
        match self {
            ScaleHint::Linear | ScaleHint::Sequential => ColumnType::Quantitative,
            ScaleHint::Temporal => ColumnType::Temporal,
            ScaleHint::Categorical => ColumnType::Nominal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerSpec {
    pub mark: Mark,
    pub encodings: BTreeMap<Channel, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub scales: BTreeMap<Channel, ScaleHint>,
}

impl LayerSpec {
    pub fn new(mark: Mark, encodings: impl IntoIterator<Item = (Channel, String)>) -> LayerSpec {
        LayerSpec {
            mark,
            encodings: encodings.into_iter().collect(),
            scales: BTreeMap::new(),
        }
    }

    pub fn channels(&self) -> impl Iterator<Item = Channel> + '_ {
        self.encodings.keys().copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VisSpec {
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub layer: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.layer {
            Some(l) => write!(f, "layer {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Collects every channel-legality and layer-consistency problem.
pub fn validate_spec(spec: &VisSpec) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    let global = |m: String| Violation {
        layer: None,
        message: m,
    };
    if spec.layers.is_empty() {
        out.push(global("a visualization needs at least one layer".into()));
    }
    if spec.layers.len() > MAX_LAYERS {
        out.push(global(format!(
            "{} layers exceed the limit of {MAX_LAYERS}",
            spec.layers.len()
        )));
    }
    for (i, layer) in spec.layers.iter().enumerate() {
        for required in [Channel::X, Channel::Y] {
            if !layer.encodings.contains_key(&required) {
                out.push(Violation {
                    layer: Some(i),
                    message: format!("{} requires an encoding for {required}", layer.mark),
                });
            }
        }
        for ch in layer.channels() {
            if !layer.mark.allows(ch) {
                out.push(Violation {
                    layer: Some(i),
                    message: format!("{ch} illegal for {}", layer.mark),
                });
            }
        }
    }
    if let Some(first) = spec.layers.first() {
        let facets = |l: &LayerSpec| -> BTreeMap<Channel, String> {
            l.encodings
                .iter()
                .filter(|(c, _)| c.is_facet())
                .map(|(c, f)| (*c, f.clone()))
                .collect()
        };
        let reference = facets(first);
        for (i, layer) in spec.layers.iter().enumerate().skip(1) {
            if facets(layer) != reference {
                out.push(Violation {
                    layer: Some(i),
                    message: "facet channels disagree with layer 0".into(),
                });
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Point,
    Line,
    Bar,
    Rect,
    Area,
}

impl ElementKind {
    pub fn name(self) -> &'static str {
        match self {
            ElementKind::Point => "point",
            ElementKind::Line => "line",
            ElementKind::Bar => "bar",
            ElementKind::Rect => "rect",
            ElementKind::Area => "area",
        }
    }

    /// (required, optional) property names.
    pub fn vocabulary(self) -> (&'static [&'static str], &'static [&'static str]) {
        match self {
            ElementKind::Point => (
                &["x", "y"],
                &["color", "size", "shape", "column", "row"],
            ),
            ElementKind::Line => (
                &["x1", "y1", "x2", "y2"],
                &["color", "size", "column", "row"],
            ),
            ElementKind::Bar => (&["x", "y"], &["y2", "color", "column", "row"]),
            ElementKind::Rect => (&["x", "x2", "y", "y2"], &["color", "column", "row"]),
            ElementKind::Area => (&["x", "y"], &["y2", "color", "column", "row"]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ElementError {
    #[error("{kind} element is missing required property `{prop}`")]
    MissingProperty { kind: &'static str, prop: String },
    #[error("{kind} element has unknown property `{prop}`")]
    UnknownProperty { kind: &'static str, prop: String },
    #[error("property `{prop}` has no value")]
    MissingValue { prop: String },
}

/// One demonstrated chart element with concrete property values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleElement {
    pub kind: ElementKind,
    #[serde(serialize_with = "ser_props", deserialize_with = "de_props")]
    pub props: BTreeMap<String, CellValue>,
}

fn ser_props<S: Serializer>(props: &BTreeMap<String, CellValue>, s: S) -> Result<S::Ok, S::Error> {
    let m: BTreeMap<&str, serde_json::Value> = props
        .iter()
        .map(|(k, v)| (k.as_str(), v.to_json()))
        .collect();
    m.serialize(s)
}

fn de_props<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, CellValue>, D::Error> {
    let raw = BTreeMap::<String, serde_json::Value>::deserialize(d)?;
    raw.into_iter()
        .map(|(k, v)| {
            CellValue::from_json_loose(&v)
                .map(|c| (k.clone(), c))
                .ok_or_else(|| {
                    serde::de::Error::custom(format!("property `{k}` must be a string or number"))
                })
        })
        .collect()
}

impl ExampleElement {
    pub fn new<K: Into<String>>(
        kind: ElementKind,
        props: impl IntoIterator<Item = (K, CellValue)>,
    ) -> ExampleElement {
        ExampleElement {
            kind,
            props: props.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }

    pub fn prop_names(&self) -> BTreeSet<&str> {
        self.props.keys().map(String::as_str).collect()
    }

    pub fn validate(&self) -> Result<(), ElementError> {
        let (required, optional) = self.kind.vocabulary();
        for r in required {
            if !self.props.contains_key(*r) {
                return Err(ElementError::MissingProperty {
                    kind: self.kind.name(),
                    prop: r.to_string(),
                });
            }
        }
        for (k, v) in &self.props {
            if !required.contains(&k.as_str()) && !optional.contains(&k.as_str()) {
                return Err(ElementError::UnknownProperty {
                    kind: self.kind.name(),
                    prop: k.clone(),
                });
            }
            let blank = matches!(v, CellValue::Text(s) if s.trim().is_empty());
            if v.is_missing() || blank {
                return Err(ElementError::MissingValue { prop: k.clone() });
            }
        }
        Ok(())
    }
}
