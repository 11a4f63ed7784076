//! Text-format parser.
//!
//! Parsing happens in two passes: the source is first read into an
//! s-expression tree (catching unbalanced parentheses), then the tree is
//! converted into a [`ModuleAst`]. Function and global names are collected
//! before any body is converted, so `call $f` may refer to a function defined
//! later in the file.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use super::ast::*;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    /// Diagnostics in source order; the parser stops at the first problem,
    /// so in practice this holds one entry.
    pub diagnostics: Vec<(SourcePos, String)>,
}

impl ParseError {
    fn at(pos: SourcePos, message: impl Into<String>) -> Self {
        ParseError {
            diagnostics: alloc::vec![(pos, message.into())],
        }
    }

    /// Position of the first diagnostic.
    pub fn pos(&self) -> SourcePos {
        self.diagnostics
            .first()
            .map(|(p, _)| *p)
            .unwrap_or_default()
    }

    pub fn message(&self) -> &str {
        self.diagnostics.first().map_or("", |(_, m)| m.as_str())
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (pos, msg)) in self.diagnostics.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{pos}: {msg}")?;
        }
        Ok(())
    }
}

type PResult<T> = Result<T, ParseError>;
/// A block delimiter keyword and where it appeared.
type Delimiter<'a> = (&'a str, SourcePos);

#[derive(Clone, Debug)]
enum Sexp<'a> {
    Atom(&'a str, SourcePos),
    List(Vec<Sexp<'a>>, SourcePos),
}

impl<'a> Sexp<'a> {
    fn pos(&self) -> SourcePos {
        match self {
            Sexp::Atom(_, p) | Sexp::List(_, p) => *p,
        }
    }

    fn head(&self) -> Option<&'a str> {
        match self {
            Sexp::List(items, _) => match items.first() {
                Some(Sexp::Atom(a, _)) => Some(a),
                _ => None,
            },
            Sexp::Atom(..) => None,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Token<'a> {
    Open(SourcePos),
    Close(SourcePos),
    Atom(&'a str, SourcePos),
}

fn tokenize(text: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut line = 1u32;
    let mut col = 1u32;
    let mut chars = text.char_indices().peekable();
    // Start of the atom being read: (byte offset, position).
    let mut atom: Option<(usize, SourcePos)> = None;

    macro_rules! flush {
        ($end:expr) => {
            if let Some((start, pos)) = atom.take() {
                tokens.push(Token::Atom(&text[start..$end], pos));
            }
        };
    }

    while let Some((i, c)) = chars.next() {
        let pos = SourcePos::new(line, col);
        match c {
            ';' if matches!(chars.peek(), Some((_, ';'))) => {
                flush!(i);
                // Line comment: skip to the newline, which is handled below.
                while let Some(&(_, c)) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                    col += 1;
                }
            }
            '(' => {
                flush!(i);
                tokens.push(Token::Open(pos));
            }
            ')' => {
                flush!(i);
                tokens.push(Token::Close(pos));
            }
            c if c.is_whitespace() => flush!(i),
            _ => {
                if atom.is_none() {
                    atom = Some((i, pos));
                }
            }
        }
        if c == '\n' {
            line += 1;
            col = 1;
        } else {
            col += 1;
        }
    }
    flush!(text.len());
    tokens
}

fn read_tree(text: &str) -> PResult<Vec<Sexp<'_>>> {
    let mut stack: Vec<(Vec<Sexp<'_>>, SourcePos)> = Vec::new();
    let mut top = Vec::new();
    for token in tokenize(text) {
        match token {
            Token::Open(pos) => stack.push((Vec::new(), pos)),
            Token::Close(pos) => {
                let (items, open) = stack
                    .pop()
                    .ok_or_else(|| ParseError::at(pos, "unbalanced parentheses: unexpected `)`"))?;
                let list = Sexp::List(items, open);
                match stack.last_mut() {
                    Some((parent, _)) => parent.push(list),
                    None => top.push(list),
                }
            }
            Token::Atom(a, pos) => match stack.last_mut() {
                Some((parent, _)) => parent.push(Sexp::Atom(a, pos)),
                None => top.push(Sexp::Atom(a, pos)),
            },
        }
    }
    if let Some((_, open)) = stack.last() {
        return Err(ParseError::at(
            *open,
            "unbalanced parentheses: `(` is never closed",
        ));
    }
    Ok(top)
}

/// Parses an integer literal: optional sign, then decimal digits or a
/// `0x`-prefixed hex number. Non-negative literals may span the full
/// unsigned 32-bit range and are wrapped to two's complement; negative ones
/// must be at least `-2^31`.
pub fn parse_i32_literal(text: &str) -> Option<i32> {
    let (negative, rest) = match text.as_bytes().first()? {
        b'-' => (true, &text[1..]),
        b'+' => (false, &text[1..]),
        _ => (false, text),
    };
    let magnitude = parse_unsigned(rest)?;
    if negative {
        if magnitude > 1 << 31 {
            return None;
        }
        Some((magnitude as i64).wrapping_neg() as i32)
    } else if magnitude > u64::from(u32::MAX) {
        None
    } else {
        Some(magnitude as u32 as i32)
    }
}

fn parse_unsigned(text: &str) -> Option<u64> {
    let (digits, radix) = match text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
        Some(hex) => (hex, 16),
        None => (text, 10),
    };
    if digits.is_empty() || !digits.chars().all(|c| c.is_digit(radix)) {
        return None;
    }
    // Anything longer than this cannot fit in 32 bits anyway.
    if digits.trim_start_matches('0').len() > 10 {
        return None;
    }
    u64::from_str_radix(digits, radix).ok()
}

fn parse_index_literal(text: &str) -> Option<u32> {
    parse_unsigned(text).and_then(|v| u32::try_from(v).ok())
}

fn parse_name(text: &str) -> Option<&str> {
    let name = text.strip_prefix('$')?;
    let ok = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '-');
    ok.then_some(name)
}

/// Parses a module from its text form. No validation is performed.
pub fn parse_module(text: &str) -> Result<ModuleAst, ParseError> {
    let tree = read_tree(text)?;
    let mut iter = tree.into_iter();
    let module = match iter.next() {
        Some(m) => m,
        None => return Err(ParseError::at(SourcePos::new(1, 1), "expected `(module ...)`")),
    };
    if let Some(extra) = iter.next() {
        return Err(ParseError::at(extra.pos(), "unexpected text after module"));
    }
    let (items, pos) = match module {
        Sexp::List(items, pos) => (items, pos),
        Sexp::Atom(a, pos) => return Err(unknown_keyword(a, pos)),
    };
    match items.first() {
        Some(Sexp::Atom("module", _)) => {}
        Some(Sexp::Atom(a, p)) => return Err(unknown_keyword(a, *p)),
        _ => return Err(ParseError::at(pos, "expected `module`")),
    }
    ModuleParser::default().parse(&items[1..])
}

fn unknown_keyword(word: &str, pos: SourcePos) -> ParseError {
    ParseError::at(pos, format!("unknown keyword `{word}`"))
}

#[derive(Default)]
struct ModuleParser {
    func_names: Vec<String>,
    global_names: Vec<String>,
}

impl ModuleParser {
    fn parse(mut self, fields: &[Sexp<'_>]) -> PResult<ModuleAst> {
        // First pass: names.
        for field in fields {
            let kind = match field {
                Sexp::List(..) => field.head(),
                Sexp::Atom(a, p) => return Err(unknown_keyword(a, *p)),
            };
            let names = match kind {
                Some("func") => &mut self.func_names,
                Some("global") => &mut self.global_names,
                Some("memory") => continue,
                Some(other) => {
                    let Sexp::List(items, _) = field else { unreachable!() };
                    return Err(unknown_keyword(other, items[0].pos()));
                }
                None => return Err(ParseError::at(field.pos(), "expected a module field")),
            };
            let Sexp::List(items, _) = field else { unreachable!() };
            let (name, pos) = match items.get(1) {
                Some(Sexp::Atom(a, p)) => match parse_name(a) {
                    Some(n) => (n, *p),
                    None => return Err(ParseError::at(*p, format!("expected a `$name`, found `{a}`"))),
                },
                Some(other) => return Err(ParseError::at(other.pos(), "expected a `$name`")),
                None => return Err(ParseError::at(field.pos(), "expected a `$name`")),
            };
            if names.iter().any(|n| n == name) {
                return Err(ParseError::at(pos, format!("duplicate name `${name}`")));
            }
            names.push(name.to_string());
        }

        let mut module = ModuleAst::default();
        for field in fields {
            let Sexp::List(items, pos) = field else { unreachable!() };
            match field.head() {
                Some("memory") => {
                    if module.memory.is_some() {
                        return Err(ParseError::at(*pos, "duplicate memory"));
                    }
                    module.memory = Some(self.memory(items, *pos)?);
                }
                Some("global") => module.globals.push(self.global(items, *pos)?),
                Some("func") => module.funcs.push(self.func(items, *pos)?),
                _ => unreachable!(),
            }
        }
        Ok(module)
    }

    fn memory(&self, items: &[Sexp<'_>], pos: SourcePos) -> PResult<u32> {
        match items {
            [_, Sexp::Atom(n, p)] => {
                parse_index_literal(n).ok_or_else(|| ParseError::at(*p, format!("malformed page count `{n}`")))
            }
            [_, other, ..] => Err(ParseError::at(other.pos(), "expected `(memory <pages>)`")),
            _ => Err(ParseError::at(pos, "expected `(memory <pages>)`")),
        }
    }

    fn global(&self, items: &[Sexp<'_>], pos: SourcePos) -> PResult<GlobalDef> {
        let name = parse_name(atom(&items[1])?).unwrap().to_string();
        let mut rest = &items[2..];
        let mut mutable = false;
        match rest.first() {
            Some(Sexp::List(ty, _)) if matches!(ty.first(), Some(Sexp::Atom("mut", _))) => {
                match &ty[1..] {
                    [Sexp::Atom("i32", _)] => {}
                    _ => return Err(ParseError::at(rest[0].pos(), "expected `(mut i32)`")),
                }
                mutable = true;
                rest = &rest[1..];
            }
            Some(Sexp::Atom("i32", _)) => rest = &rest[1..],
            _ => {}
        }
        let init = match rest {
            [Sexp::List(init, _)] => match init.as_slice() {
                [Sexp::Atom("i32.const", _), Sexp::Atom(n, p)] => literal(n, *p)?,
                [Sexp::Atom(kw, p), ..] if *kw != "i32.const" => return Err(unknown_keyword(kw, *p)),
                _ => return Err(ParseError::at(rest[0].pos(), "expected `(i32.const <value>)`")),
            },
            [] => return Err(ParseError::at(pos, "global is missing its `(i32.const <value>)` initializer")),
            [other, ..] => return Err(ParseError::at(other.pos(), "expected `(i32.const <value>)`")),
        };
        Ok(GlobalDef { name, mutable, init })
    }

    fn func(&self, items: &[Sexp<'_>], pos: SourcePos) -> PResult<FuncDef> {
        let name = parse_name(atom(&items[1])?).unwrap().to_string();
        let mut func = FuncDef {
            name,
            ty: FuncType::default(),
            locals: Vec::new(),
            body: Vec::new(),
            exported: false,
            pos,
        };
        // Header clauses, in grammar order.
        let mut i = 2;
        let mut stage = 0;
        while let Some(Sexp::List(clause, cpos)) = items.get(i) {
            let (kw, kpos) = match clause.first() {
                Some(Sexp::Atom(kw, p)) => (*kw, *p),
                _ => return Err(ParseError::at(*cpos, "expected a function clause")),
            };
            let clause_stage = match kw {
                "export" => 1,
                "param" => 2,
                "result" => 3,
                "local" => 4,
                _ => return Err(unknown_keyword(kw, kpos)),
            };
            if clause_stage < stage || (clause_stage == stage && clause_stage != 2 && clause_stage != 4) {
                return Err(ParseError::at(kpos, format!("`{kw}` clause out of order")));
            }
            stage = clause_stage;
            match kw {
                "export" => {
                    if clause.len() != 1 {
                        return Err(ParseError::at(clause[1].pos(), "`(export)` takes no arguments"));
                    }
                    func.exported = true;
                }
                "param" => func.ty.params.extend(val_types(&clause[1..], kpos)?),
                "result" => func.ty.results.extend(val_types(&clause[1..], kpos)?),
                "local" => func.locals.extend(val_types(&clause[1..], kpos)?),
                _ => unreachable!(),
            }
            i += 1;
        }
        let mut cursor = Cursor {
            items: &items[i..],
            at: 0,
            parser: self,
        };
        let (body, end) = cursor.seq()?;
        if let Some((word, p)) = end {
            return Err(ParseError::at(p, format!("unexpected `{word}` outside a block")));
        }
        func.body = body;
        Ok(func)
    }
}

fn atom<'a>(s: &Sexp<'a>) -> PResult<&'a str> {
    match s {
        Sexp::Atom(a, _) => Ok(a),
        Sexp::List(_, p) => Err(ParseError::at(*p, "expected an atom")),
    }
}

fn literal(text: &str, pos: SourcePos) -> PResult<i32> {
    parse_i32_literal(text).ok_or_else(|| ParseError::at(pos, format!("malformed integer literal `{text}`")))
}

fn val_types(items: &[Sexp<'_>], pos: SourcePos) -> PResult<Vec<ValType>> {
    if items.is_empty() {
        return Err(ParseError::at(pos, "expected at least one value type"));
    }
    items
        .iter()
        .map(|s| match s {
            Sexp::Atom("i32", _) => Ok(ValType::I32),
            Sexp::Atom(a, p) => Err(ParseError::at(*p, format!("unknown value type `{a}`"))),
            Sexp::List(_, p) => Err(ParseError::at(*p, "expected a value type")),
        })
        .collect()
}

/// Walks the flat instruction list of a function body.
struct Cursor<'s, 'a> {
    items: &'s [Sexp<'a>],
    at: usize,
    parser: &'s ModuleParser,
}

impl<'s, 'a> Cursor<'s, 'a> {
    fn next_atom(&mut self, what: &str, after: SourcePos) -> PResult<(&'a str, SourcePos)> {
        match self.items.get(self.at) {
            Some(Sexp::Atom(a, p)) => {
                self.at += 1;
                Ok((a, *p))
            }
            Some(Sexp::List(_, p)) => Err(ParseError::at(*p, format!("expected {what}"))),
            None => Err(ParseError::at(after, format!("expected {what}"))),
        }
    }

    /// Reads instructions until the list ends or a block delimiter
    /// (`end`, `else`, `catch`) is reached; the delimiter is consumed and
    /// returned.
    fn seq(&mut self) -> PResult<(Vec<Instr>, Option<Delimiter<'a>>)> {
        let mut out = Vec::new();
        while let Some(item) = self.items.get(self.at) {
            let (word, pos) = match item {
                Sexp::Atom(a, p) => (*a, *p),
                Sexp::List(_, p) => return Err(ParseError::at(*p, "unexpected `(` in instruction sequence")),
            };
            self.at += 1;
            if matches!(word, "end" | "else" | "catch") {
                return Ok((out, Some((word, pos))));
            }
            out.push(Instr::new(self.instr(word, pos)?, pos));
        }
        Ok((out, None))
    }

    fn block_type(&mut self) -> PResult<BlockType> {
        match self.items.get(self.at) {
            Some(Sexp::List(items, p)) => {
                match items.as_slice() {
                    [Sexp::Atom("result", _), Sexp::Atom("i32", _)] => {}
                    [Sexp::Atom("result", _), ..] => {
                        return Err(ParseError::at(*p, "block result must be `(result i32)`"))
                    }
                    [Sexp::Atom(kw, kp), ..] => return Err(unknown_keyword(kw, *kp)),
                    _ => return Err(ParseError::at(*p, "expected `(result i32)`")),
                }
                self.at += 1;
                Ok(Some(ValType::I32))
            }
            _ => Ok(None),
        }
    }

    fn body_until(&mut self, opener: &str, pos: SourcePos, allowed: &[&str]) -> PResult<(Vec<Instr>, &'a str)> {
        let (body, end) = self.seq()?;
        match end {
            Some((word, _)) if allowed.contains(&word) => Ok((body, word)),
            Some((word, p)) => Err(ParseError::at(p, format!("unexpected `{word}` in `{opener}`"))),
            None => Err(ParseError::at(pos, format!("`{opener}` is missing its `end`"))),
        }
    }

    fn instr(&mut self, word: &str, pos: SourcePos) -> PResult<InstrKind> {
        use InstrKind as I;
        if let Some(op) = BinOp::ALL.iter().find(|op| op.mnemonic() == word) {
            return Ok(I::Binop(*op));
        }
        if let Some(op) = RelOp::ALL.iter().find(|op| op.mnemonic() == word) {
            return Ok(I::Relop(*op));
        }
        Ok(match word {
            "i32.const" => {
                let (n, p) = self.next_atom("an integer literal", pos)?;
                I::Const(literal(n, p)?)
            }
            "i32.eqz" => I::Eqz,
            "drop" => I::Drop,
            "select" => I::Select,
            "local.get" => I::LocalGet(self.index("a local index", pos)?),
            "local.set" => I::LocalSet(self.index("a local index", pos)?),
            "local.tee" => I::LocalTee(self.index("a local index", pos)?),
            "global.get" => I::GlobalGet(self.reference(&self.parser.global_names, "global", pos)?),
            "global.set" => I::GlobalSet(self.reference(&self.parser.global_names, "global", pos)?),
            "i32.load" => I::Load,
            "i32.store" => I::Store,
            "memory.size" => I::MemorySize,
            "memory.grow" => I::MemoryGrow,
            "block" => {
                let ty = self.block_type()?;
                let (body, _) = self.body_until(word, pos, &["end"])?;
                I::Block { ty, body }
            }
            "loop" => {
                let ty = self.block_type()?;
                let (body, _) = self.body_until(word, pos, &["end"])?;
                I::Loop { ty, body }
            }
            "if" => {
                let ty = self.block_type()?;
                let (then_body, delim) = self.body_until(word, pos, &["else", "end"])?;
                let else_body = if delim == "else" {
                    self.body_until(word, pos, &["end"])?.0
                } else {
                    Vec::new()
                };
                I::If {
                    ty,
                    then_body,
                    else_body,
                }
            }
            "try" => {
                let ty = self.block_type()?;
                let (body, _) = self.body_until(word, pos, &["catch"])?;
                let (catch_body, _) = self.body_until(word, pos, &["end"])?;
                I::TryCatch { ty, body, catch_body }
            }
            "br" => I::Br(self.index("a label depth", pos)?),
            "br_if" => I::BrIf(self.index("a label depth", pos)?),
            "return" => I::Return,
            "call" => I::Call(self.reference(&self.parser.func_names, "function", pos)?),
            "nop" => I::Nop,
            "unreachable" => I::Unreachable,
            "throw" => I::Throw,
            _ => return Err(unknown_keyword(word, pos)),
        })
    }

    fn index(&mut self, what: &str, pos: SourcePos) -> PResult<u32> {
        let (text, p) = self.next_atom(what, pos)?;
        parse_index_literal(text).ok_or_else(|| ParseError::at(p, format!("malformed index `{text}`")))
    }

    /// A `$name` or a numeric index referring to a function or global.
    fn reference(&mut self, names: &[String], what: &str, pos: SourcePos) -> PResult<u32> {
        let (text, p) = self.next_atom(&format!("a {what} reference"), pos)?;
        if let Some(name) = parse_name(text) {
            return names
                .iter()
                .position(|n| n == name)
                .map(|i| i as u32)
                .ok_or_else(|| ParseError::at(p, format!("unknown {what} `${name}`")));
        }
        parse_index_literal(text).ok_or_else(|| ParseError::at(p, format!("malformed {what} reference `{text}`")))
    }
}
