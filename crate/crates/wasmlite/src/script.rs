//! Line-oriented allocator scripts:
//!
//! ```text
//! ; comments run to end of line
//! malloc 16 a
//! free a
//! ```
//!
//! Sizes are decimal or `0x` hex. Ids are any token without whitespace.

use std::fmt;

use wasmlite_core::alloc_corpus::{AllocOp, AllocReport, AllocScript};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScriptParseError {
    /// 1-based.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ScriptParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.line, self.message)
    }
}

impl std::error::Error for ScriptParseError {}

/// Parses the text format. Id consistency is left to
/// [`AllocScript::check`].
pub fn parse_script(text: &str) -> Result<AllocScript, ScriptParseError> {
    let mut ops = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let err = |message: String| ScriptParseError { line: i + 1, message };
        let line = raw.split(';').next().unwrap_or("");
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            [] => {}
            ["malloc", size, id] => {
                let size = parse_size(size).ok_or_else(|| err(format!("bad size `{size}`")))?;
                ops.push(AllocOp::Malloc {
                    size,
                    id: (*id).to_owned(),
                });
            }
            ["free", id] => ops.push(AllocOp::Free { id: (*id).to_owned() }),
            ["malloc", ..] => return Err(err("expected `malloc <size> <id>`".into())),
            ["free", ..] => return Err(err("expected `free <id>`".into())),
            [op, ..] => return Err(err(format!("unknown op `{op}`"))),
        }
    }
    Ok(AllocScript { ops })
}

fn parse_size(s: &str) -> Option<u32> {
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u32::from_str_radix(hex, 16).ok(),
        None => s.parse().ok(),
    }
}

/// One op per line; `parse_script(&print_script(s)) == Ok(s)` for ids
/// without whitespace or `;`.
pub fn print_script(script: &AllocScript) -> String {
    let mut out = String::new();
    for op in &script.ops {
        match op {
            AllocOp::Malloc { size, id } => out.push_str(&format!("malloc {size} {id}\n")),
            AllocOp::Free { id } => out.push_str(&format!("free {id}\n")),
        }
    }
    out
}

/// Per-op results followed by a summary line.
pub fn render_alloc_report(script: &AllocScript, report: &AllocReport) -> String {
    let mut out = String::new();
    for (op, addr) in script.ops.iter().zip(&report.results) {
        match op {
            AllocOp::Malloc { size, id } => out.push_str(&format!("malloc {size} {id} -> {addr}\n")),
            AllocOp::Free { id } => out.push_str(&format!("free {id}\n")),
        }
    }
    out.push_str(&format!(
        "ops={} violations={} peak_heap={}\n",
        script.ops.len(),
        report.violations.len(),
        report.peak_heap
    ));
    out
}
