//! The table transformation language.
//!
//! Programs are straight-line pipelines of tidyverse-style operators applied
//! left to right to an input table. See [`eval`] for operator semantics,
//! [`syntax`] for the textual form, and [`contains`](containment::contains)
//! for the check that decides whether a program output covers an example.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::table::CellValue;

pub mod containment;
pub mod eval;
pub mod syntax;

pub use containment::{contains, ColumnMapping};
pub use eval::{eval, eval_op, EvalError, EvalErrorKind};
pub use syntax::{parse, ParseError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl CmpOp {
    pub const ALL: [CmpOp; 6] = [
        CmpOp::Eq,
        CmpOp::Ne,
        CmpOp::Lt,
        CmpOp::Le,
        CmpOp::Gt,
        CmpOp::Ge,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn is_equality(self) -> bool {
        matches!(self, CmpOp::Eq | CmpOp::Ne)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    Sum,
    Mean,
    Count,
    Min,
    Max,
}

impl Aggregate {
    pub const ALL: [Aggregate; 5] = [
        Aggregate::Sum,
        Aggregate::Mean,
        Aggregate::Count,
        Aggregate::Min,
        Aggregate::Max,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Aggregate::Sum => "sum",
            Aggregate::Mean => "mean",
            Aggregate::Count => "count",
            Aggregate::Min => "min",
            Aggregate::Max => "max",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArithOp {
    #[serde(rename = "+")]
    Add,
    #[serde(rename = "-")]
    Sub,
    #[serde(rename = "*")]
    Mul,
    #[serde(rename = "/")]
    Div,
}

impl ArithOp {
    pub const ALL: [ArithOp; 4] = [ArithOp::Add, ArithOp::Sub, ArithOp::Mul, ArithOp::Div];

    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }

    pub fn is_commutative(self) -> bool {
        matches!(self, ArithOp::Add | ArithOp::Mul)
    }
}

/// Right operand of a `mutate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operand {
    Column(String),
    Literal(f64),
}

/// Delimiters accepted by `separate`.
pub const SEPARATORS: [&str; 5] = ["-", "_", "/", " ", ":"];

/// One pipeline step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformOp {
    PivotLonger {
        cols: Vec<String>,
        names_to: String,
        values_to: String,
    },
    PivotWider {
        names_from: String,
        values_from: String,
    },
    Select {
        cols: Vec<String>,
    },
    Filter {
        col: String,
        cmp: CmpOp,
        #[serde(with = "literal_serde")]
        lit: CellValue,
    },
    GroupSummarise {
        group_cols: Vec<String>,
        agg: Aggregate,
        target: String,
        out_name: String,
    },
    CumSum {
        group_cols: Vec<String>,
        target: String,
    },
    Mutate {
        out_name: String,
        lhs: String,
        op: ArithOp,
        rhs: Operand,
    },
    Separate {
        col: String,
        delim: String,
        out1: String,
        out2: String,
    },
    Unite {
        col1: String,
        col2: String,
        delim: String,
        out_name: String,
    },
}

/// Operator kinds, in the fixed order used for sketch enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    PivotLonger,
    PivotWider,
    Select,
    Filter,
    GroupSummarise,
    CumSum,
    Mutate,
    Separate,
    Unite,
}

impl OpKind {
    pub const ALL: [OpKind; 9] = [
        OpKind::PivotLonger,
        OpKind::PivotWider,
        OpKind::Select,
        OpKind::Filter,
        OpKind::GroupSummarise,
        OpKind::CumSum,
        OpKind::Mutate,
        OpKind::Separate,
        OpKind::Unite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::PivotLonger => "pivot_longer",
            OpKind::PivotWider => "pivot_wider",
            OpKind::Select => "select",
            OpKind::Filter => "filter",
            OpKind::GroupSummarise => "summarise",
            OpKind::CumSum => "cumsum",
            OpKind::Mutate => "mutate",
            OpKind::Separate => "separate",
            OpKind::Unite => "unite",
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl TransformOp {
    pub fn kind(&self) -> OpKind {
        match self {
            TransformOp::PivotLonger { .. } => OpKind::PivotLonger,
            TransformOp::PivotWider { .. } => OpKind::PivotWider,
            TransformOp::Select { .. } => OpKind::Select,
            TransformOp::Filter { .. } => OpKind::Filter,
            TransformOp::GroupSummarise { .. } => OpKind::GroupSummarise,
            TransformOp::CumSum { .. } => OpKind::CumSum,
            TransformOp::Mutate { .. } => OpKind::Mutate,
            TransformOp::Separate { .. } => OpKind::Separate,
            TransformOp::Unite { .. } => OpKind::Unite,
        }
    }
}

/// A pipeline of operators. The empty program is the identity.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TransformProgram {
    pub ops: Vec<TransformOp>,
}

impl TransformProgram {
    pub fn new(ops: Vec<TransformOp>) -> TransformProgram {
        TransformProgram { ops }
    }

    pub fn identity() -> TransformProgram {
        TransformProgram::default()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Number of operator expressions in the program.
    pub fn complexity(&self) -> usize {
        self.ops.len()
    }

    /// Canonical single-line text form, e.g.
    /// ``mutate(Diff = `New York` - `San Francisco`)``.
    pub fn serialize(&self) -> String {
        syntax::serialize(self)
    }

    pub fn then(mut self, op: TransformOp) -> TransformProgram {
        self.ops.push(op);
        self
    }

    pub fn concat(&self, other: &TransformProgram) -> TransformProgram {
        let mut ops = self.ops.clone();
        ops.extend(other.ops.iter().cloned());
        TransformProgram { ops }
    }
}

impl fmt::Display for TransformProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

pub fn complexity(prog: &TransformProgram) -> usize {
    prog.complexity()
}

/// JSON encoding of filter literals: `{"number": 1.5}`, `{"text": "Low"}`,
/// `{"date": "2011-10-01"}`.
mod literal_serde {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::table::{parse_iso_date, CellValue};

    #[derive(Serialize, Deserialize)]
    #[serde(rename_all = "lowercase")]
    enum Lit {
        Number(f64),
        Text(String),
        Date(String),
    }

    pub fn serialize<S: Serializer>(v: &CellValue, s: S) -> Result<S::Ok, S::Error> {
        match v {
            CellValue::Number(x) => Lit::Number(*x),
            CellValue::Text(t) => Lit::Text(t.to_string()),
            CellValue::Date(_) => Lit::Date(v.canonical()),
            CellValue::Missing => {
                return Err(serde::ser::Error::custom("filter literal cannot be missing"))
            }
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CellValue, D::Error> {
        match Lit::deserialize(d)? {
            Lit::Number(x) => CellValue::number(x).ok_or_else(|| D::Error::custom("non-finite")),
            Lit::Text(t) => Ok(CellValue::text(t)),
            Lit::Date(s) => parse_iso_date(&s)
                .map(CellValue::Date)
                .ok_or_else(|| D::Error::custom(format!("invalid date `{s}`"))),
        }
    }
}
