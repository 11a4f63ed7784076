//! Static semantics: stack-typed validation of function bodies.
//!
//! The checker keeps an operand-type stack and an explicit stack of control
//! frames. Every structured instruction pushes a frame recording the height
//! of the operand stack on entry and the types its label expects; `br k`
//! looks up the `k`-th frame from the top. After an instruction that never
//! falls through (`br`, `return`, `unreachable`, `throw`) the current frame
//! becomes unreachable and pops below its entry height succeed
//! polymorphically.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::syntax::{block_arity, BlockType, FuncDef, Instr, InstrKind, ModuleAst, SourcePos, ValType};

/// Optional language features.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Features {
    pub exceptions: bool,
}

impl Features {
    pub const ALL: Features = Features { exceptions: true };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ErrorKind {
    StackUnderflow,
    TypeMismatch,
    UnknownIndex,
    DepthOutOfRange,
    ImmutableGlobal,
    MissingResult,
    FeatureDisabled,
    ArityMismatch,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::StackUnderflow => "stack_underflow",
            ErrorKind::TypeMismatch => "type_mismatch",
            ErrorKind::UnknownIndex => "unknown_index",
            ErrorKind::DepthOutOfRange => "depth_out_of_range",
            ErrorKind::ImmutableGlobal => "immutable_global",
            ErrorKind::MissingResult => "missing_result",
            ErrorKind::FeatureDisabled => "feature_disabled",
            ErrorKind::ArityMismatch => "arity_mismatch",
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidationError {
    pub pos: SourcePos,
    pub kind: ErrorKind,
    pub message: String,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.pos, self.kind, self.message)
    }
}

/// A checker failure before it is attached to a position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fault {
    pub kind: ErrorKind,
    pub message: String,
}

impl Fault {
    fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Fault {
            kind,
            message: message.into(),
        }
    }
}

/// Static facts about one function, computed during validation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FuncAnnotation {
    /// Largest operand-stack height reached on any static path.
    pub max_value_stack: usize,
    /// Largest control-frame depth, counting the function body itself.
    pub max_ctrl_depth: usize,
}

/// A module that passed validation, with per-function annotations.
///
/// Only [`validate_module`] (or [`Validator::validate`]) constructs one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidatedModule {
    ast: ModuleAst,
    per_func: Vec<FuncAnnotation>,
    features: Features,
}

impl ValidatedModule {
    pub fn ast(&self) -> &ModuleAst {
        &self.ast
    }

    pub fn annotation(&self, func: usize) -> Option<&FuncAnnotation> {
        self.per_func.get(func)
    }

    pub fn annotations(&self) -> &[FuncAnnotation] {
        &self.per_func
    }

    pub fn features(&self) -> Features {
        self.features
    }

    pub fn into_ast(self) -> ModuleAst {
        self.ast
    }
}

/// Deliberate defects that can be switched on to check that the soundness
/// harness notices a broken validator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mutation {
    /// Accept `br`/`br_if` with any depth; an out-of-range target is
    /// treated as a label expecting no values.
    SkipBrDepthCheck,
}

/// Typing of a single instruction, independent of the label context.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Signature {
    /// Pops then pushes the listed types (pops listed bottom to top).
    Fixed { pops: Vec<ValType>, pushes: Vec<ValType> },
    /// Never falls through; code after it checks against any stack.
    Polymorphic,
    /// Typing depends on the enclosing labels or nested bodies
    /// (`block`, `loop`, `if`, `try`, `br_if`).
    Structured,
}

/// What [`instr_arity`] needs to know about its surroundings.
#[derive(Clone, Copy, Debug)]
pub struct Context<'a> {
    pub module: &'a ModuleAst,
    /// Params plus declared locals of the enclosing function.
    pub num_locals: usize,
}

impl<'a> Context<'a> {
    pub fn for_func(module: &'a ModuleAst, func: &FuncDef) -> Self {
        Context {
            module,
            num_locals: func.num_locals(),
        }
    }
}

const I32: ValType = ValType::I32;

/// The single-instruction signature table.
pub fn instr_arity(instr: &InstrKind, ctx: &Context<'_>) -> Result<Signature, Fault> {
    use InstrKind as I;
    let fixed = |pops: usize, pushes: usize| {
        Ok(Signature::Fixed {
            pops: vec![I32; pops],
            pushes: vec![I32; pushes],
        })
    };
    let local = |i: u32| {
        if (i as usize) < ctx.num_locals {
            Ok(())
        } else {
            Err(Fault::new(
                ErrorKind::UnknownIndex,
                format!("unknown local {i} (function has {})", ctx.num_locals),
            ))
        }
    };
    let global = |i: u32| {
        ctx.module.globals.get(i as usize).ok_or_else(|| {
            Fault::new(ErrorKind::UnknownIndex, format!("unknown global {i}"))
        })
    };
    let memory = || {
        if ctx.module.memory.is_some() {
            Ok(())
        } else {
            Err(Fault::new(
                ErrorKind::UnknownIndex,
                "memory instruction used but no memory is declared",
            ))
        }
    };
    match instr {
        I::Const(_) => fixed(0, 1),
        I::MemorySize => memory().and(fixed(0, 1)),
        I::Binop(_) | I::Relop(_) => fixed(2, 1),
        I::Eqz => fixed(1, 1),
        I::Drop => fixed(1, 0),
        I::Select => fixed(3, 1),
        I::LocalGet(i) => local(*i).and(fixed(0, 1)),
        I::LocalSet(i) => local(*i).and(fixed(1, 0)),
        I::LocalTee(i) => local(*i).and(fixed(1, 1)),
        I::GlobalGet(i) => global(*i).and(fixed(0, 1)),
        I::GlobalSet(i) => {
            let g = global(*i)?;
            if !g.mutable {
                return Err(Fault::new(
                    ErrorKind::ImmutableGlobal,
                    format!("global ${} is immutable", g.name),
                ));
            }
            fixed(1, 0)
        }
        I::Load => memory().and(fixed(1, 1)),
        I::Store => memory().and(fixed(2, 0)),
        I::MemoryGrow => memory().and(fixed(1, 1)),
        I::Call(f) => {
            let callee = ctx
                .module
                .funcs
                .get(*f as usize)
                .ok_or_else(|| Fault::new(ErrorKind::UnknownIndex, format!("unknown function {f}")))?;
            Ok(Signature::Fixed {
                pops: callee.ty.params.clone(),
                pushes: callee.ty.results.clone(),
            })
        }
        I::Nop => fixed(0, 0),
        I::Br(_) | I::Return | I::Unreachable | I::Throw => Ok(Signature::Polymorphic),
        I::BrIf(_) | I::Block { .. } | I::Loop { .. } | I::If { .. } | I::TryCatch { .. } => {
            Ok(Signature::Structured)
        }
    }
}

/// Validates `module`, returning every error found (ordered by position).
pub fn validate_module(module: &ModuleAst, features: Features) -> Result<ValidatedModule, Vec<ValidationError>> {
    Validator::new(features).validate(module)
}

/// Validation entry point with optional injected defects.
#[derive(Clone, Copy, Debug, Default)]
pub struct Validator {
    features: Features,
    mutation: Option<Mutation>,
}

impl Validator {
    pub fn new(features: Features) -> Self {
        Validator {
            features,
            mutation: None,
        }
    }

    pub fn with_mutation(mut self, mutation: Option<Mutation>) -> Self {
        self.mutation = mutation;
        self
    }

    pub fn validate(&self, module: &ModuleAst) -> Result<ValidatedModule, Vec<ValidationError>> {
        let mut errors = Vec::new();
        let mut per_func = Vec::with_capacity(module.funcs.len());
        for func in &module.funcs {
            let mut checker = FuncChecker {
                ctx: Context::for_func(module, func),
                features: self.features,
                mutation: self.mutation,
                opds: Vec::new(),
                frames: Vec::new(),
                errors: &mut errors,
                annotation: FuncAnnotation::default(),
            };
            checker.check(func);
            per_func.push(checker.annotation);
        }
        if errors.is_empty() {
            Ok(ValidatedModule {
                ast: module.clone(),
                per_func,
                features: self.features,
            })
        } else {
            errors.sort_by_key(|e| e.pos);
            Err(errors)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum FrameKind {
    Func,
    Block,
    Loop,
    If,
    Try,
    Catch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Opd {
    Known(ValType),
    Unknown,
}

#[derive(Clone, Debug)]
struct CtrlFrame {
    kind: FrameKind,
    label_types: Vec<ValType>,
    end_types: Vec<ValType>,
    entry_height: usize,
    unreachable: bool,
}

struct FuncChecker<'a, 'e> {
    ctx: Context<'a>,
    features: Features,
    mutation: Option<Mutation>,
    opds: Vec<Opd>,
    frames: Vec<CtrlFrame>,
    errors: &'e mut Vec<ValidationError>,
    annotation: FuncAnnotation,
}

type Check<T = ()> = Result<T, Fault>;

impl FuncChecker<'_, '_> {
    fn check(&mut self, func: &FuncDef) {
        if func.ty.results.len() > 1 {
            self.error(
                func.pos,
                Fault::new(
                    ErrorKind::ArityMismatch,
                    format!("function ${} declares {} results; at most one is allowed", func.name, func.ty.results.len()),
                ),
            );
        }
        self.push_frame(FrameKind::Func, func.ty.results.clone(), func.ty.results.clone());
        self.seq(&func.body);
        self.end_frame(func.pos);
    }

    fn error(&mut self, pos: SourcePos, fault: Fault) {
        self.errors.push(ValidationError {
            pos,
            kind: fault.kind,
            message: fault.message,
        });
    }

    fn push_opd(&mut self, opd: Opd) {
        self.opds.push(opd);
        self.annotation.max_value_stack = self.annotation.max_value_stack.max(self.opds.len());
    }

    fn pop_opd(&mut self, expected: ValType) -> Check<Opd> {
        let frame = self.frames.last().expect("frame stack is never empty while checking");
        if self.opds.len() == frame.entry_height {
            if frame.unreachable {
                return Ok(Opd::Unknown);
            }
            return Err(Fault::new(
                ErrorKind::StackUnderflow,
                format!("expected {expected} but the stack is empty"),
            ));
        }
        let opd = self.opds.pop().unwrap();
        match opd {
            Opd::Known(t) if t != expected => Err(Fault::new(
                ErrorKind::TypeMismatch,
                format!("expected {expected}, found {t}"),
            )),
            _ => Ok(opd),
        }
    }

    fn pop_all(&mut self, types: &[ValType]) -> Check {
        for t in types.iter().rev() {
            self.pop_opd(*t)?;
        }
        Ok(())
    }

    fn push_all(&mut self, types: &[ValType]) {
        for t in types {
            self.push_opd(Opd::Known(*t));
        }
    }

    fn push_frame(&mut self, kind: FrameKind, label_types: Vec<ValType>, end_types: Vec<ValType>) {
        self.frames.push(CtrlFrame {
            kind,
            label_types,
            end_types,
            entry_height: self.opds.len(),
            unreachable: false,
        });
        self.annotation.max_ctrl_depth = self.annotation.max_ctrl_depth.max(self.frames.len());
    }

    /// Checks the frame's results, pops it and returns it. On failure the
    /// error is recorded at `pos` and the frame is still popped.
    fn end_frame(&mut self, pos: SourcePos) -> CtrlFrame {
        let frame = self.frames.last().unwrap().clone();
        let avail = self.opds.len() - frame.entry_height;
        let want = frame.end_types.len();
        let fault = if avail > want {
            Some(Fault::new(
                ErrorKind::TypeMismatch,
                format!("{} value(s) left on the stack at end of {}, expected {want}", avail, frame_name(frame.kind)),
            ))
        } else if avail < want && !frame.unreachable {
            Some(Fault::new(
                ErrorKind::MissingResult,
                format!("{} expects {want} result value(s), found {avail}", frame_name(frame.kind)),
            ))
        } else {
            None
        };
        if let Some(f) = fault {
            self.error(pos, f);
        }
        self.opds.truncate(frame.entry_height);
        self.frames.pop();
        frame
    }

    fn set_unreachable(&mut self) {
        let frame = self.frames.last_mut().unwrap();
        self.opds.truncate(frame.entry_height);
        frame.unreachable = true;
    }

    fn seq(&mut self, body: &[Instr]) {
        for instr in body {
            if let Err(fault) = self.instr(instr) {
                self.error(instr.pos, fault);
                self.set_unreachable();
            }
        }
    }

    fn label_types(&self, depth: u32) -> Check<Vec<ValType>> {
        let depth = depth as usize;
        if depth >= self.frames.len() {
            if self.mutation == Some(Mutation::SkipBrDepthCheck) {
                return Ok(Vec::new());
            }
            return Err(Fault::new(
                ErrorKind::DepthOutOfRange,
                format!("branch depth {depth} exceeds the {} enclosing label(s)", self.frames.len()),
            ));
        }
        Ok(self.frames[self.frames.len() - 1 - depth].label_types.clone())
    }

    fn require_exceptions(&mut self, instr: &Instr) {
        if !self.features.exceptions {
            self.error(
                instr.pos,
                Fault::new(
                    ErrorKind::FeatureDisabled,
                    format!("`{}` requires the exceptions feature", instr.kind.mnemonic()),
                ),
            );
        }
    }

    fn structured(&mut self, kind: FrameKind, ty: BlockType, body: &[Instr], pos: SourcePos) {
        let results = vec![I32; block_arity(ty)];
        let label = if kind == FrameKind::Loop { Vec::new() } else { results.clone() };
        self.push_frame(kind, label, results.clone());
        self.seq(body);
        self.end_frame(pos);
        self.push_all(&results);
    }

    fn instr(&mut self, instr: &Instr) -> Check {
        use InstrKind as I;
        if instr.kind.is_exception_feature() {
            self.require_exceptions(instr);
        }
        match instr_arity(&instr.kind, &self.ctx)? {
            Signature::Fixed { pops, pushes } => {
                self.pop_all(&pops)?;
                self.push_all(&pushes);
                return Ok(());
            }
            Signature::Polymorphic => {}
            Signature::Structured => {}
        }
        match &instr.kind {
            I::Br(depth) => {
                let label = self.label_types(*depth)?;
                self.pop_all(&label)?;
                self.set_unreachable();
            }
            I::BrIf(depth) => {
                self.pop_opd(I32)?;
                let label = self.label_types(*depth)?;
                self.pop_all(&label)?;
                self.push_all(&label);
            }
            I::Return => {
                let results = self.frames[0].label_types.clone();
                self.pop_all(&results)?;
                self.set_unreachable();
            }
            I::Unreachable => self.set_unreachable(),
            I::Throw => {
                self.pop_opd(I32)?;
                self.set_unreachable();
            }
            I::Block { ty, body } => self.structured(FrameKind::Block, *ty, body, instr.pos),
            I::Loop { ty, body } => self.structured(FrameKind::Loop, *ty, body, instr.pos),
            I::If {
                ty,
                then_body,
                else_body,
            } => {
                self.pop_opd(I32)?;
                self.structured(FrameKind::If, *ty, then_body, instr.pos);
                self.opds.truncate(self.opds.len() - block_arity(*ty));
                self.structured(FrameKind::If, *ty, else_body, instr.pos);
            }
            I::TryCatch { ty, body, catch_body } => {
                self.structured(FrameKind::Try, *ty, body, instr.pos);
                self.opds.truncate(self.opds.len() - block_arity(*ty));
                let results = vec![I32; block_arity(*ty)];
                self.push_frame(FrameKind::Catch, results.clone(), results);
                self.push_opd(Opd::Known(I32));
                self.seq(catch_body);
                self.end_frame(instr.pos);
                self.push_all(&vec![I32; block_arity(*ty)]);
            }
            _ => unreachable!("fixed signatures are handled above"),
        }
        Ok(())
    }
}

fn frame_name(kind: FrameKind) -> &'static str {
    match kind {
        FrameKind::Func => "function",
        FrameKind::Block => "block",
        FrameKind::Loop => "loop",
        FrameKind::If => "if",
        FrameKind::Try => "try",
        FrameKind::Catch => "catch",
    }
}
