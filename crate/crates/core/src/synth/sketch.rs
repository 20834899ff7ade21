//! Program sketches: operator sequences with every argument left open.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::lang::OpKind;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Sketch {
    pub ops: Vec<OpKind>,
}

impl Sketch {
    pub fn depth(&self) -> usize {
        self.ops.len()
    }
}

impl fmt::Display for Sketch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ops.is_empty() {
            return f.write_str("identity(□)");
        }
        for (i, op) in self.ops.iter().enumerate() {
            if i > 0 {
                f.write_str(" %>% ")?;
            }
            write!(f, "{op}(□)")?;
        }
        Ok(())
    }
}

/// All sketches up to `depth_limit` operators: shortest first, then in
/// lexicographic operator order. The empty sketch comes first.
pub fn enumerate_sketches(depth_limit: usize) -> impl Iterator<Item = Sketch> {
    (0..=depth_limit).flat_map(|depth| {
        let total = OpKind::ALL.len().pow(depth as u32);
        (0..total).map(move |mut code| {
            let mut ops = vec![OpKind::PivotLonger; depth];
            for slot in ops.iter_mut().rev() {
                *slot = OpKind::ALL[code % OpKind::ALL.len()];
                code /= OpKind::ALL.len();
            }
            Sketch { ops }
        })
    })
}
