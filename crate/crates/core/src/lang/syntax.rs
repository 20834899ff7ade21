//! Canonical text syntax for programs.
//!
//! ```text
//! program  := "identity()" | call (" %>% " call)*
//! call     := pivot_longer(cols = c(N, N, ...), names_to = "s", values_to = "s")
//!           | pivot_wider(names_from = N, values_from = N)
//!           | select(N, ...)
//!           | filter(N CMP LIT)
//!           | summarise(N = AGG(N), .by = c(N, ...))
//!           | cumsum(N[, .by = c(N, ...)])
//!           | mutate(N = N OP (N | NUM))
//!           | separate(N, into = c("s", "s"), sep = "s")
//!           | unite("s", N, N, sep = "s")
//! N        := bare identifier | `backquoted name`
//! LIT      := NUM | "string" | as.Date("YYYY-MM-DD")
//! ```

use std::fmt::Write as _;

use thiserror::Error;

use super::{Aggregate, ArithOp, CmpOp, Operand, TransformOp, TransformProgram};
use crate::table::{format_number, parse_iso_date, CellValue};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("parse error at byte {pos}: {message}")]
pub struct ParseError {
    pub pos: usize,
    pub message: String,
}

const PIPE: &str = " %>% ";

fn is_bare(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !matches!(name, "c" | "identity")
}

fn name(out: &mut String, n: &str) {
    if is_bare(n) {
        out.push_str(n);
    } else {
        out.push('`');
        for ch in n.chars() {
            if ch == '`' || ch == '\\' {
                out.push('\\');
            }
            out.push(ch);
        }
        out.push('`');
    }
}

fn string(out: &mut String, s: &str) {
    out.push_str(&serde_json::to_string(s).expect("strings always serialize"));
}

fn name_list(out: &mut String, names: &[String]) {
    out.push_str("c(");
    for (i, n) in names.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        name(out, n);
    }
    out.push(')');
}

fn literal(out: &mut String, v: &CellValue) {
    match v {
        CellValue::Number(x) => out.push_str(&format_number(*x)),
        CellValue::Text(s) => string(out, s),
        CellValue::Date(_) => {
            out.push_str("as.Date(");
            string(out, &v.canonical());
            out.push(')');
        }
        CellValue::Missing => out.push_str("NA"),
    }
}

pub(crate) fn op_text(out: &mut String, op: &TransformOp) {
    match op {
        TransformOp::PivotLonger {
            cols,
            names_to,
            values_to,
        } => {
            out.push_str("pivot_longer(cols = ");
            name_list(out, cols);
            out.push_str(", names_to = ");
            string(out, names_to);
            out.push_str(", values_to = ");
            string(out, values_to);
            out.push(')');
        }
        TransformOp::PivotWider {
            names_from,
            values_from,
        } => {
            out.push_str("pivot_wider(names_from = ");
            name(out, names_from);
            out.push_str(", values_from = ");
            name(out, values_from);
            out.push(')');
        }
        TransformOp::Select { cols } => {
            out.push_str("select(");
            for (i, c) in cols.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                name(out, c);
            }
            out.push(')');
        }
        TransformOp::Filter { col, cmp, lit } => {
            out.push_str("filter(");
            name(out, col);
            let _ = write!(out, " {} ", cmp.symbol());
            literal(out, lit);
            out.push(')');
        }
        TransformOp::GroupSummarise {
            group_cols,
            agg,
            target,
            out_name,
        } => {
            out.push_str("summarise(");
            name(out, out_name);
            let _ = write!(out, " = {}(", agg.name());
            name(out, target);
            out.push_str("), .by = ");
            name_list(out, group_cols);
            out.push(')');
        }
        TransformOp::CumSum { group_cols, target } => {
            out.push_str("cumsum(");
            name(out, target);
            if !group_cols.is_empty() {
                out.push_str(", .by = ");
                name_list(out, group_cols);
            }
            out.push(')');
        }
        TransformOp::Mutate {
            out_name,
            lhs,
            op,
            rhs,
        } => {
            out.push_str("mutate(");
            name(out, out_name);
            out.push_str(" = ");
            name(out, lhs);
            let _ = write!(out, " {} ", op.symbol());
            match rhs {
                Operand::Column(c) => name(out, c),
                Operand::Literal(x) => out.push_str(&format_number(*x)),
            }
            out.push(')');
        }
        TransformOp::Separate {
            col,
            delim,
            out1,
            out2,
        } => {
            out.push_str("separate(");
            name(out, col);
            out.push_str(", into = c(");
            string(out, out1);
            out.push_str(", ");
            string(out, out2);
            out.push_str("), sep = ");
            string(out, delim);
            out.push(')');
        }
        TransformOp::Unite {
            col1,
            col2,
            delim,
            out_name,
        } => {
            out.push_str("unite(");
            string(out, out_name);
            out.push_str(", ");
            name(out, col1);
            out.push_str(", ");
            name(out, col2);
            out.push_str(", sep = ");
            string(out, delim);
            out.push(')');
        }
    }
}

/// Canonical single-line text of a program.
pub fn serialize(prog: &TransformProgram) -> String {
    if prog.ops.is_empty() {
        return "identity()".to_string();
    }
    let mut out = String::new();
    for (i, op) in prog.ops.iter().enumerate() {
        if i > 0 {
            out.push_str(PIPE);
        }
        op_text(&mut out, op);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Bare(String),
    Quoted(String),
    Str(String),
    Num(f64),
    Sym(&'static str),
}

const SYMBOLS: [&str; 14] = [
    "%>%", "==", "!=", "<=", ">=", "<", ">", "(", ")", ",", "=", "+", "-", "*",
];

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let err = |pos, m: &str| ParseError {
        pos,
        message: m.to_string(),
    };
    let bytes = src.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c == b'`' {
            let mut s = String::new();
            let mut chars = src[i + 1..].char_indices();
            loop {
                match chars.next() {
                    None => return Err(err(start, "unterminated backquoted name")),
                    Some((_, '\\')) => match chars.next() {
                        Some((_, ch)) => s.push(ch),
                        None => return Err(err(start, "dangling escape")),
                    },
                    Some((off, '`')) => {
                        i = i + 1 + off + 1;
                        break;
                    }
                    Some((_, ch)) => s.push(ch),
                }
            }
            toks.push((start, Tok::Quoted(s)));
        } else if c == b'"' {
            let mut j = i + 1;
            loop {
                match bytes.get(j) {
                    None => return Err(err(start, "unterminated string")),
                    Some(b'\\') => j += 2,
                    Some(b'"') => break,
                    Some(_) => j += 1,
                }
            }
            let s: String = serde_json::from_str(&src[i..=j])
                .map_err(|e| err(start, &format!("bad string literal: {e}")))?;
            toks.push((start, Tok::Str(s)));
            i = j + 1;
        } else if c.is_ascii_digit() {
            let mut j = i;
            while j < bytes.len()
                && (bytes[j].is_ascii_digit()
                    || bytes[j] == b'.'
                    || bytes[j] == b'e'
                    || bytes[j] == b'E'
                    || ((bytes[j] == b'-' || bytes[j] == b'+')
                        && matches!(bytes[j - 1], b'e' | b'E')))
            {
                j += 1;
            }
            let x: f64 = src[i..j]
                .parse()
                .map_err(|_| err(start, "bad number"))?;
            toks.push((start, Tok::Num(x)));
            i = j;
        } else if c.is_ascii_alphabetic() || c == b'.' || c == b'_' {
            let mut j = i;
            while j < bytes.len()
                && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_' || bytes[j] == b'.')
            {
                j += 1;
            }
            toks.push((start, Tok::Bare(src[i..j].to_string())));
            i = j;
        } else if c == b'/' {
            toks.push((start, Tok::Sym("/")));
            i += 1;
        } else if let Some(sym) = SYMBOLS.iter().find(|s| src[i..].starts_with(**s)) {
            toks.push((start, Tok::Sym(sym)));
            i += sym.len();
        } else {
            return Err(err(start, &format!("unexpected character `{}`", c as char)));
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    end: usize,
}

impl Parser {
    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.end, |t| t.0)
    }

    fn fail<T>(&self, m: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            pos: self.pos(),
            message: m.into(),
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|t| &t.1)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.at).map(|t| t.1.clone());
        self.at += 1;
        t
    }

    fn sym(&mut self, s: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Sym(x)) if *x == s => {
                self.at += 1;
                Ok(())
            }
            _ => self.fail(format!("expected `{s}`")),
        }
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(x)) if *x == s) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn keyword(&mut self, k: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Bare(x)) if x == k => {
                self.at += 1;
                Ok(())
            }
            _ => self.fail(format!("expected `{k}`")),
        }
    }

    fn named_arg(&mut self, k: &str) -> Result<(), ParseError> {
        self.keyword(k)?;
        self.sym("=")
    }

    fn name(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Bare(x)) | Some(Tok::Quoted(x)) => {
                let x = x.clone();
                self.at += 1;
                Ok(x)
            }
            _ => self.fail("expected a column name"),
        }
    }

    fn string(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Str(x)) => {
                let x = x.clone();
                self.at += 1;
                Ok(x)
            }
            _ => self.fail("expected a string literal"),
        }
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        let neg = self.eat_sym("-");
        match self.next() {
            Some(Tok::Num(x)) => Ok(if neg { -x } else { x }),
            _ => {
                self.at -= 1;
                self.fail("expected a number")
            }
        }
    }

    fn name_list(&mut self) -> Result<Vec<String>, ParseError> {
        self.keyword("c")?;
        self.sym("(")?;
        let mut names = vec![self.name()?];
        while self.eat_sym(",") {
            names.push(self.name()?);
        }
        self.sym(")")?;
        Ok(names)
    }

    fn literal(&mut self) -> Result<CellValue, ParseError> {
        match self.peek() {
            Some(Tok::Str(_)) => Ok(CellValue::text(self.string()?)),
            Some(Tok::Bare(k)) if k == "as.Date" => {
                self.at += 1;
                self.sym("(")?;
                let pos = self.pos();
                let s = self.string()?;
                self.sym(")")?;
                parse_iso_date(&s).map(CellValue::Date).ok_or(ParseError {
                    pos,
                    message: format!("invalid date `{s}`"),
                })
            }
            _ => {
                let pos = self.pos();
                let x = self.number()?;
                CellValue::number(x).ok_or(ParseError {
                    pos,
                    message: "number out of range".into(),
                })
            }
        }
    }

    fn cmp(&mut self) -> Result<CmpOp, ParseError> {
        for op in CmpOp::ALL {
            if self.eat_sym(op.symbol()) {
                return Ok(op);
            }
        }
        self.fail("expected a comparison operator")
    }

    fn arith(&mut self) -> Result<ArithOp, ParseError> {
        for op in ArithOp::ALL {
            if self.eat_sym(op.symbol()) {
                return Ok(op);
            }
        }
        self.fail("expected an arithmetic operator")
    }

    fn call(&mut self) -> Result<Option<TransformOp>, ParseError> {
        let head = match self.next() {
            Some(Tok::Bare(h)) => h,
            _ => {
                self.at -= 1;
                return self.fail("expected an operator name");
            }
        };
        self.sym("(")?;
        let op = match head.as_str() {
            "identity" => None,
            "pivot_longer" => {
                self.named_arg("cols")?;
                let cols = self.name_list()?;
                self.sym(",")?;
                self.named_arg("names_to")?;
                let names_to = self.string()?;
                self.sym(",")?;
                self.named_arg("values_to")?;
                let values_to = self.string()?;
                Some(TransformOp::PivotLonger {
                    cols,
                    names_to,
                    values_to,
                })
            }
            "pivot_wider" => {
                self.named_arg("names_from")?;
                let names_from = self.name()?;
                self.sym(",")?;
                self.named_arg("values_from")?;
                let values_from = self.name()?;
                Some(TransformOp::PivotWider {
                    names_from,
                    values_from,
                })
            }
            "select" => {
                let mut cols = vec![self.name()?];
                while self.eat_sym(",") {
                    cols.push(self.name()?);
                }
                Some(TransformOp::Select { cols })
            }
            "filter" => {
                let col = self.name()?;
                let cmp = self.cmp()?;
                let lit = self.literal()?;
                Some(TransformOp::Filter { col, cmp, lit })
            }
            "summarise" => {
                let out_name = self.name()?;
                self.sym("=")?;
                let pos = self.pos();
                let fname = self.name()?;
                let agg = Aggregate::ALL
                    .into_iter()
                    .find(|a| a.name() == fname)
                    .ok_or(ParseError {
                        pos,
                        message: format!("unknown aggregate `{fname}`"),
                    })?;
                self.sym("(")?;
                let target = self.name()?;
                self.sym(")")?;
                self.sym(",")?;
                self.named_arg(".by")?;
                let group_cols = self.name_list()?;
                Some(TransformOp::GroupSummarise {
                    group_cols,
                    agg,
                    target,
                    out_name,
                })
            }
            "cumsum" => {
                let target = self.name()?;
                let group_cols = if self.eat_sym(",") {
                    self.named_arg(".by")?;
                    self.name_list()?
                } else {
                    Vec::new()
                };
                Some(TransformOp::CumSum { group_cols, target })
            }
            "mutate" => {
                let out_name = self.name()?;
                self.sym("=")?;
                let lhs = self.name()?;
                let op = self.arith()?;
                let rhs = match self.peek() {
                    Some(Tok::Bare(_)) | Some(Tok::Quoted(_)) => Operand::Column(self.name()?),
                    _ => Operand::Literal(self.number()?),
                };
                Some(TransformOp::Mutate {
                    out_name,
                    lhs,
                    op,
                    rhs,
                })
            }
            "separate" => {
                let col = self.name()?;
                self.sym(",")?;
                self.named_arg("into")?;
                self.keyword("c")?;
                self.sym("(")?;
                let out1 = self.string()?;
                self.sym(",")?;
                let out2 = self.string()?;
                self.sym(")")?;
                self.sym(",")?;
                self.named_arg("sep")?;
                let delim = self.string()?;
                Some(TransformOp::Separate {
                    col,
                    delim,
                    out1,
                    out2,
                })
            }
            "unite" => {
                let out_name = self.string()?;
                self.sym(",")?;
                let col1 = self.name()?;
                self.sym(",")?;
                let col2 = self.name()?;
                self.sym(",")?;
                self.named_arg("sep")?;
                let delim = self.string()?;
                Some(TransformOp::Unite {
                    col1,
                    col2,
                    delim,
                    out_name,
                })
            }
            other => {
                self.at -= 2;
                return self.fail(format!("unknown operator `{other}`"));
            }
        };
        self.sym(")")?;
        Ok(op)
    }
}

/// Parses the canonical text form (whitespace-insensitive).
pub fn parse(src: &str) -> Result<TransformProgram, ParseError> {
    let toks = tokenize(src)?;
    let mut p = Parser {
        toks,
        at: 0,
        end: src.len(),
    };
    let mut ops = Vec::new();
    let mut saw_identity = false;
    loop {
        match p.call()? {
            Some(op) => ops.push(op),
            None => saw_identity = true,
        }
        if p.peek().is_none() {
            break;
        }
        p.sym("%>%")?;
    }
    if saw_identity && !ops.is_empty() {
        return Err(ParseError {
            pos: 0,
            message: "identity() cannot be combined with other operators".into(),
        });
    }
    Ok(TransformProgram::new(ops))
}
