//! Abstract syntax for wasmlite modules.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// The single value type of the language: a 32-bit two's-complement integer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ValType {
    I32,
}

impl fmt::Display for ValType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("i32")
    }
}

/// Result type of a structured instruction: zero or one value.
pub type BlockType = Option<ValType>;

/// Number of values a block type leaves on the stack.
pub fn block_arity(ty: BlockType) -> usize {
    ty.map_or(0, |_| 1)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct FuncType {
    pub params: Vec<ValType>,
    /// At most one result. Longer lists are representable so that the
    /// validator can reject them.
    pub results: Vec<ValType>,
}

impl FuncType {
    pub fn new(params: usize, results: usize) -> Self {
        FuncType {
            params: alloc::vec![ValType::I32; params],
            results: alloc::vec![ValType::I32; results],
        }
    }
}

/// 1-based line and column of a token in the source text.
///
/// Synthesized syntax (e.g. from the program generator) uses line 1,
/// column 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SourcePos {
    pub line: u32,
    pub column: u32,
}

impl SourcePos {
    pub const fn new(line: u32, column: u32) -> Self {
        SourcePos { line, column }
    }
}

impl Default for SourcePos {
    fn default() -> Self {
        SourcePos::new(1, 1)
    }
}

impl fmt::Display for SourcePos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    DivS,
    RemS,
    And,
    Or,
    Xor,
    Shl,
    ShrU,
}

impl BinOp {
    pub const ALL: [BinOp; 10] = [
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::DivS,
        BinOp::RemS,
        BinOp::And,
        BinOp::Or,
        BinOp::Xor,
        BinOp::Shl,
        BinOp::ShrU,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            BinOp::Add => "i32.add",
            BinOp::Sub => "i32.sub",
            BinOp::Mul => "i32.mul",
            BinOp::DivS => "i32.div_s",
            BinOp::RemS => "i32.rem_s",
            BinOp::And => "i32.and",
            BinOp::Or => "i32.or",
            BinOp::Xor => "i32.xor",
            BinOp::Shl => "i32.shl",
            BinOp::ShrU => "i32.shr_u",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RelOp {
    Eq,
    Ne,
    LtS,
    LeS,
    LtU,
}

impl RelOp {
    pub const ALL: [RelOp; 5] = [RelOp::Eq, RelOp::Ne, RelOp::LtS, RelOp::LeS, RelOp::LtU];

    pub fn mnemonic(self) -> &'static str {
        match self {
            RelOp::Eq => "i32.eq",
            RelOp::Ne => "i32.ne",
            RelOp::LtS => "i32.lt_s",
            RelOp::LeS => "i32.le_s",
            RelOp::LtU => "i32.lt_u",
        }
    }
}

/// An instruction together with the position of its keyword.
///
/// Equality is structural: positions are ignored, so a module compares
/// equal to the result of printing and re-parsing it.
#[derive(Clone, Debug)]
pub struct Instr {
    pub kind: InstrKind,
    pub pos: SourcePos,
}

impl Instr {
    pub fn new(kind: InstrKind, pos: SourcePos) -> Self {
        Instr { kind, pos }
    }

    /// An instruction with a synthesized position.
    pub fn synth(kind: InstrKind) -> Self {
        Instr {
            kind,
            pos: SourcePos::default(),
        }
    }
}

impl PartialEq for Instr {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl Eq for Instr {}

impl From<InstrKind> for Instr {
    fn from(kind: InstrKind) -> Self {
        Instr::synth(kind)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InstrKind {
    Const(i32),
    Binop(BinOp),
    Relop(RelOp),
    Eqz,
    Drop,
    Select,
    LocalGet(u32),
    LocalSet(u32),
    LocalTee(u32),
    GlobalGet(u32),
    GlobalSet(u32),
    Load,
    Store,
    MemorySize,
    MemoryGrow,
    Block {
        ty: BlockType,
        body: Vec<Instr>,
    },
    Loop {
        ty: BlockType,
        body: Vec<Instr>,
    },
    /// A missing `else` arm is represented by an empty `else_body`.
    If {
        ty: BlockType,
        then_body: Vec<Instr>,
        else_body: Vec<Instr>,
    },
    Br(u32),
    BrIf(u32),
    Return,
    Call(u32),
    Nop,
    Unreachable,
    Throw,
    TryCatch {
        ty: BlockType,
        body: Vec<Instr>,
        catch_body: Vec<Instr>,
    },
}

impl InstrKind {
    /// Keyword that introduces the instruction in the text format.
    pub fn mnemonic(&self) -> &'static str {
        match self {
            InstrKind::Const(_) => "i32.const",
            InstrKind::Binop(op) => op.mnemonic(),
            InstrKind::Relop(op) => op.mnemonic(),
            InstrKind::Eqz => "i32.eqz",
            InstrKind::Drop => "drop",
            InstrKind::Select => "select",
            InstrKind::LocalGet(_) => "local.get",
            InstrKind::LocalSet(_) => "local.set",
            InstrKind::LocalTee(_) => "local.tee",
            InstrKind::GlobalGet(_) => "global.get",
            InstrKind::GlobalSet(_) => "global.set",
            InstrKind::Load => "i32.load",
            InstrKind::Store => "i32.store",
            InstrKind::MemorySize => "memory.size",
            InstrKind::MemoryGrow => "memory.grow",
            InstrKind::Block { .. } => "block",
            InstrKind::Loop { .. } => "loop",
            InstrKind::If { .. } => "if",
            InstrKind::Br(_) => "br",
            InstrKind::BrIf(_) => "br_if",
            InstrKind::Return => "return",
            InstrKind::Call(_) => "call",
            InstrKind::Nop => "nop",
            InstrKind::Unreachable => "unreachable",
            InstrKind::Throw => "throw",
            InstrKind::TryCatch { .. } => "try",
        }
    }

    pub fn is_exception_feature(&self) -> bool {
        matches!(self, InstrKind::Throw | InstrKind::TryCatch { .. })
    }
}

/// A function definition. Like [`Instr`], equality ignores `pos`.
#[derive(Clone, Debug)]
pub struct FuncDef {
    pub name: String,
    pub ty: FuncType,
    /// Declared locals, zero-initialized; indexed after the params.
    pub locals: Vec<ValType>,
    pub body: Vec<Instr>,
    pub exported: bool,
    pub pos: SourcePos,
}

impl PartialEq for FuncDef {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.ty == other.ty
            && self.locals == other.locals
            && self.body == other.body
            && self.exported == other.exported
    }
}

impl Eq for FuncDef {}

impl FuncDef {
    pub fn num_locals(&self) -> usize {
        self.ty.params.len() + self.locals.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GlobalDef {
    pub name: String,
    pub mutable: bool,
    pub init: i32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ModuleAst {
    pub globals: Vec<GlobalDef>,
    /// Initial page count of the single linear memory, if declared.
    pub memory: Option<u32>,
    pub funcs: Vec<FuncDef>,
}

impl ModuleAst {
    pub fn func_index(&self, name: &str) -> Option<usize> {
        self.funcs.iter().position(|f| f.name == name)
    }

    pub fn global_index(&self, name: &str) -> Option<usize> {
        self.globals.iter().position(|g| g.name == name)
    }
}

/// Calls `f` on every instruction in `body`, outer instructions before the
/// ones nested inside them.
pub fn walk_instrs<'a>(body: &'a [Instr], f: &mut impl FnMut(&'a Instr)) {
    for instr in body {
        f(instr);
        match &instr.kind {
            InstrKind::Block { body, .. } | InstrKind::Loop { body, .. } => walk_instrs(body, f),
            InstrKind::If {
                then_body,
                else_body,
                ..
            } => {
                walk_instrs(then_body, f);
                walk_instrs(else_body, f);
            }
            InstrKind::TryCatch {
                body, catch_body, ..
            } => {
                walk_instrs(body, f);
                walk_instrs(catch_body, f);
            }
            _ => {}
        }
    }
}
