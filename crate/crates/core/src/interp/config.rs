//! The dynamic configuration and the single-step transition.
//!
//! Code and data are kept apart: each [`Frame`] owns a value stack and a
//! stack of [`ControlEntry`]s, and each entry owns the slice of instructions
//! still to run at its nesting level. Branches never search the code for a
//! matching `end`; they index the control stack directly.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use super::store::{Store, Value};
use crate::exceptions::{self, ExceptionPayload};
use crate::syntax::{block_arity, BinOp, Instr, InstrKind, RelOp};
use crate::validator::ValidatedModule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrapKind {
    Unreachable,
    DivByZero,
    IntOverflow,
    OobMemory,
    CallStackExhausted,
}

impl TrapKind {
    pub const ALL: [TrapKind; 5] = [
        TrapKind::Unreachable,
        TrapKind::DivByZero,
        TrapKind::IntOverflow,
        TrapKind::OobMemory,
        TrapKind::CallStackExhausted,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TrapKind::Unreachable => "unreachable",
            TrapKind::DivByZero => "div_by_zero",
            TrapKind::IntOverflow => "int_overflow",
            TrapKind::OobMemory => "oob_memory",
            TrapKind::CallStackExhausted => "call_stack_exhausted",
        }
    }
}

impl fmt::Display for TrapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How a run ended. Every run of a validated module ends in exactly one of
/// these.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Outcome {
    Returned(Vec<Value>),
    Trap(TrapKind),
    UncaughtException(Value),
    FuelExhausted,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Returned(values) => {
                f.write_str("result:")?;
                for v in values {
                    write!(f, " {v}")?;
                }
                Ok(())
            }
            Outcome::Trap(kind) => write!(f, "trap: {kind}"),
            Outcome::UncaughtException(payload) => write!(f, "exception: {payload}"),
            Outcome::FuelExhausted => f.write_str("fuel exhausted"),
        }
    }
}

/// A defensive check failed: the configuration cannot step although the
/// module validated. This signals a validator or interpreter bug and is
/// never a normal [`Outcome`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InternalError {
    pub func: usize,
    pub message: String,
}

impl fmt::Display for InternalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "internal error in function {}: {}", self.func, self.message)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntryKind<'m> {
    FuncBody,
    Block,
    Loop { body: &'m [Instr] },
    IfArm,
    Try { catch_body: &'m [Instr] },
    Catch,
}

impl EntryKind<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            EntryKind::FuncBody => "func_body",
            EntryKind::Block => "block",
            EntryKind::Loop { .. } => "loop",
            EntryKind::IfArm => "if_arm",
            EntryKind::Try { .. } => "try",
            EntryKind::Catch => "catch",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ControlEntry<'m> {
    /// Code yet to execute at this nesting level.
    pub remaining: &'m [Instr],
    pub kind: EntryKind<'m>,
    /// Values a branch to this entry carries (0 for loops).
    pub label_arity: usize,
    /// Values left when the entry falls through its end.
    pub end_arity: usize,
    /// Value-stack height when the entry was pushed.
    pub entry_height: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame<'m> {
    pub func_index: usize,
    pub locals: Vec<Value>,
    pub values: Vec<Value>,
    pub ctrl: Vec<ControlEntry<'m>>,
    pub result_arity: usize,
}

/// Result of one transition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Step {
    Continue,
    Done(Outcome),
}

/// What the next call to [`Config::step`] will do.
#[derive(Clone, Copy, Debug)]
pub enum Pending<'m> {
    Instr(&'m Instr),
    /// The top entry has no code left.
    EndOf(EntryKind<'m>),
    Halted,
}

/// Execution limits and checking mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExecOptions {
    /// Remaining step budget; `None` is unbounded.
    pub fuel: Option<u64>,
    /// Maximum number of live frames, the entry frame included.
    pub call_depth_limit: usize,
    /// Also check exact stack heights at every block exit and the
    /// validator's stack-size annotations after every step.
    pub check_invariants: bool,
}

pub const DEFAULT_CALL_DEPTH_LIMIT: usize = 1_000;

impl Default for ExecOptions {
    fn default() -> Self {
        ExecOptions {
            fuel: None,
            call_depth_limit: DEFAULT_CALL_DEPTH_LIMIT,
            check_invariants: cfg!(debug_assertions),
        }
    }
}

impl ExecOptions {
    pub fn with_fuel(mut self, fuel: Option<u64>) -> Self {
        self.fuel = fuel;
        self
    }

    pub fn checked(mut self) -> Self {
        self.check_invariants = true;
        self
    }
}

/// Store plus frame stack plus remaining fuel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Config<'m> {
    pub(crate) module: &'m ValidatedModule,
    pub(crate) store: Store,
    pub(crate) frames: Vec<Frame<'m>>,
    pub(crate) fuel: Option<u64>,
    pub(crate) call_depth_limit: usize,
    pub(crate) check_invariants: bool,
    pub(crate) steps: u64,
}

type StepResult = Result<Step, InternalError>;

impl<'m> Config<'m> {
    /// A configuration about to run `func` with `args` as its parameters.
    /// The caller has checked that `func` exists and `args` has the right
    /// length.
    pub fn new(module: &'m ValidatedModule, store: Store, func: usize, args: &[Value], options: ExecOptions) -> Self {
        let mut config = Config {
            module,
            store,
            frames: Vec::new(),
            fuel: options.fuel,
            call_depth_limit: options.call_depth_limit,
            check_invariants: options.check_invariants,
            steps: 0,
        };
        config.push_frame(func, args.to_vec());
        config
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn into_store(self) -> Store {
        self.store
    }

    pub fn frames(&self) -> &[Frame<'m>] {
        &self.frames
    }

    pub fn fuel(&self) -> Option<u64> {
        self.fuel
    }

    /// Number of transitions taken so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn is_halted(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn pending(&self) -> Pending<'m> {
        let Some(entry) = self.frames.last().and_then(|f| f.ctrl.last()) else {
            return Pending::Halted;
        };
        match entry.remaining.first() {
            Some(instr) => Pending::Instr(instr),
            None => Pending::EndOf(entry.kind),
        }
    }

    fn push_frame(&mut self, func_index: usize, mut locals: Vec<Value>) {
        let module: &'m ValidatedModule = self.module;
        let func = &module.ast().funcs[func_index];
        locals.resize(func.num_locals(), Value::ZERO);
        let result_arity = func.ty.results.len();
        self.frames.push(Frame {
            func_index,
            locals,
            values: Vec::new(),
            ctrl: vec![ControlEntry {
                remaining: &func.body,
                kind: EntryKind::FuncBody,
                label_arity: result_arity,
                end_arity: result_arity,
                entry_height: 0,
            }],
            result_arity,
        });
    }

    pub(crate) fn internal(&self, message: impl Into<String>) -> InternalError {
        InternalError {
            func: self.frames.last().map_or(usize::MAX, |f| f.func_index),
            message: message.into(),
        }
    }

    fn frame(&mut self) -> &mut Frame<'m> {
        self.frames.last_mut().expect("live configuration has a frame")
    }

    fn pop(&mut self) -> Result<Value, InternalError> {
        let frame = self.frames.last_mut().expect("live configuration has a frame");
        let floor = frame.ctrl.last().map_or(0, |e| e.entry_height);
        if frame.values.len() <= floor {
            return Err(self.internal("value stack underflow"));
        }
        Ok(frame.values.pop().unwrap())
    }

    fn push(&mut self, v: Value) {
        self.frame().values.push(v);
    }

    fn halt(&mut self, outcome: Outcome) -> StepResult {
        self.frames.clear();
        Ok(Step::Done(outcome))
    }

    /// Applies exactly one rule.
    pub fn step(&mut self) -> StepResult {
        if self.frames.is_empty() {
            return Err(self.internal("step on a halted configuration"));
        }
        if let Some(fuel) = &mut self.fuel {
            if *fuel == 0 {
                return self.halt(Outcome::FuelExhausted);
            }
            *fuel -= 1;
        }
        self.steps += 1;
        let entry = self
            .frame()
            .ctrl
            .last_mut()
            .expect("live frame has a control entry");
        let remaining: &'m [Instr] = entry.remaining;
        let result = match remaining.split_first() {
            Some((instr, rest)) => {
                entry.remaining = rest;
                self.exec(instr)
            }
            None => self.exit_entry(),
        };
        if self.check_invariants {
            if let Ok(Step::Continue) = result {
                self.check_annotations()?;
            }
        }
        result
    }

    fn check_annotations(&self) -> Result<(), InternalError> {
        let Some(frame) = self.frames.last() else {
            return Ok(());
        };
        let Some(ann) = self.module.annotation(frame.func_index) else {
            return Err(self.internal("function has no validator annotation"));
        };
        if frame.values.len() > ann.max_value_stack {
            return Err(self.internal(format!(
                "value stack height {} exceeds the validated maximum {}",
                frame.values.len(),
                ann.max_value_stack
            )));
        }
        if frame.ctrl.len() > ann.max_ctrl_depth {
            return Err(self.internal(format!(
                "control depth {} exceeds the validated maximum {}",
                frame.ctrl.len(),
                ann.max_ctrl_depth
            )));
        }
        Ok(())
    }

    /// The top entry ran out of code: fall through its end.
    fn exit_entry(&mut self) -> StepResult {
        let check = self.check_invariants;
        let frame = self.frame();
        let entry = frame.ctrl.pop().unwrap();
        if entry.kind == EntryKind::FuncBody {
            let arity = self.frames.last().unwrap().result_arity;
            let results = self.take_results(arity, check)?;
            return self.return_values(results);
        }
        let frame = self.frame();
        let height = frame.values.len();
        let want = entry.entry_height + entry.end_arity;
        if height < want || (check && height != want) {
            let kind = entry.kind.name();
            frame.ctrl.push(entry);
            return Err(self.internal(format!(
                "{kind} exits with stack height {height}, expected {want}"
            )));
        }
        frame.values.drain(entry.entry_height..height - entry.end_arity);
        Ok(Step::Continue)
    }

    /// Removes the top frame's `arity` result values. With `exact`, the
    /// stack must hold nothing else.
    fn take_results(&mut self, arity: usize, exact: bool) -> Result<Vec<Value>, InternalError> {
        let frame = self.frame();
        let len = frame.values.len();
        if len < arity || (exact && len != arity) {
            return Err(self.internal(format!(
                "function exits with {len} value(s) on the stack, expected {arity}"
            )));
        }
        Ok(frame.values.split_off(len - arity))
    }

    /// Pops the top frame and hands `results` to the caller.
    fn return_values(&mut self, results: Vec<Value>) -> StepResult {
        self.frames.pop();
        match self.frames.last_mut() {
            Some(caller) => {
                caller.values.extend(results);
                Ok(Step::Continue)
            }
            None => self.halt(Outcome::Returned(results)),
        }
    }

    fn branch(&mut self, depth: u32) -> StepResult {
        let frame = self.frame();
        let depth = depth as usize;
        if depth >= frame.ctrl.len() {
            return Err(self.internal(format!(
                "branch depth {depth} with only {} control entries",
                self.frames.last().unwrap().ctrl.len()
            )));
        }
        let index = frame.ctrl.len() - 1 - depth;
        let target = frame.ctrl[index].clone();
        let len = frame.values.len();
        if len < target.entry_height + target.label_arity {
            return Err(self.internal("value stack underflow at branch"));
        }
        let carried = frame.values.split_off(len - target.label_arity);
        frame.values.truncate(target.entry_height);
        frame.ctrl.truncate(index);
        match target.kind {
            EntryKind::FuncBody => self.return_values(carried),
            EntryKind::Loop { body } => {
                frame.ctrl.push(ControlEntry {
                    remaining: body,
                    ..target
                });
                frame.values.extend(carried);
                Ok(Step::Continue)
            }
            _ => {
                frame.values.extend(carried);
                Ok(Step::Continue)
            }
        }
    }

    fn enter(&mut self, kind: EntryKind<'m>, body: &'m [Instr], ty: crate::syntax::BlockType) {
        let arity = block_arity(ty);
        let frame = self.frame();
        frame.ctrl.push(ControlEntry {
            remaining: body,
            kind,
            label_arity: if matches!(kind, EntryKind::Loop { .. }) { 0 } else { arity },
            end_arity: arity,
            entry_height: frame.values.len(),
        });
    }

    fn exec(&mut self, instr: &'m Instr) -> StepResult {
        use InstrKind as I;
        match &instr.kind {
            I::Const(n) => self.push(Value(*n)),
            I::Binop(op) => {
                let b = self.pop()?.0;
                let a = self.pop()?.0;
                match binop(*op, a, b) {
                    Ok(v) => self.push(Value(v)),
                    Err(trap) => return self.halt(Outcome::Trap(trap)),
                }
            }
            I::Relop(op) => {
                let b = self.pop()?.0;
                let a = self.pop()?.0;
                self.push(Value(relop(*op, a, b) as i32));
            }
            I::Eqz => {
                let a = self.pop()?.0;
                self.push(Value((a == 0) as i32));
            }
            I::Drop => {
                self.pop()?;
            }
            I::Select => {
                let c = self.pop()?;
                let v2 = self.pop()?;
                let v1 = self.pop()?;
                self.push(if c.0 != 0 { v1 } else { v2 });
            }
            I::LocalGet(i) => {
                let v = *self.local(*i)?;
                self.push(v);
            }
            I::LocalSet(i) => {
                let v = self.pop()?;
                *self.local(*i)? = v;
            }
            I::LocalTee(i) => {
                let v = self.pop()?;
                *self.local(*i)? = v;
                self.push(v);
            }
            I::GlobalGet(i) => {
                let v = *self.global(*i)?;
                self.push(v);
            }
            I::GlobalSet(i) => {
                let v = self.pop()?;
                *self.global(*i)? = v;
            }
            I::Load => {
                let addr = self.pop()?.as_u32();
                match self.store.load(addr) {
                    Some(v) => self.push(v),
                    None => return self.halt(Outcome::Trap(TrapKind::OobMemory)),
                }
            }
            I::Store => {
                let v = self.pop()?;
                let addr = self.pop()?.as_u32();
                if self.store.store(addr, v).is_none() {
                    return self.halt(Outcome::Trap(TrapKind::OobMemory));
                }
            }
            I::MemorySize => {
                let pages = self.store.page_count();
                self.push(Value::from_u32(pages));
            }
            I::MemoryGrow => {
                let delta = self.pop()?.as_u32();
                let result = self.store.grow(delta).unwrap_or(u32::MAX);
                self.push(Value::from_u32(result));
            }
            I::Block { ty, body } => self.enter(EntryKind::Block, body, *ty),
            I::Loop { ty, body } => self.enter(EntryKind::Loop { body }, body, *ty),
            I::If {
                ty,
                then_body,
                else_body,
            } => {
                let c = self.pop()?;
                let arm = if c.0 != 0 { then_body } else { else_body };
                self.enter(EntryKind::IfArm, arm, *ty);
            }
            I::TryCatch { ty, body, catch_body } => self.enter(EntryKind::Try { catch_body }, body, *ty),
            I::Br(depth) => return self.branch(*depth),
            I::BrIf(depth) => {
                if self.pop()?.0 != 0 {
                    return self.branch(*depth);
                }
            }
            I::Return => {
                let arity = self.frames.last().unwrap().result_arity;
                let results = self.take_results(arity, false)?;
                return self.return_values(results);
            }
            I::Call(f) => return self.call(*f as usize),
            I::Nop => {}
            I::Unreachable => return self.halt(Outcome::Trap(TrapKind::Unreachable)),
            I::Throw => {
                let payload = ExceptionPayload { value: self.pop()? };
                return exceptions::unwind(self, payload);
            }
        }
        Ok(Step::Continue)
    }

    fn call(&mut self, f: usize) -> StepResult {
        let module: &'m ValidatedModule = self.module;
        let Some(callee) = module.ast().funcs.get(f) else {
            return Err(self.internal(format!("call to missing function {f}")));
        };
        if self.frames.len() >= self.call_depth_limit {
            return self.halt(Outcome::Trap(TrapKind::CallStackExhausted));
        }
        let n = callee.ty.params.len();
        let frame = self.frame();
        let floor = frame.ctrl.last().map_or(0, |e| e.entry_height);
        if frame.values.len() < floor + n {
            return Err(self.internal("value stack underflow at call"));
        }
        let args = frame.values.split_off(frame.values.len() - n);
        self.push_frame(f, args);
        Ok(Step::Continue)
    }

    fn local(&mut self, i: u32) -> Result<&mut Value, InternalError> {
        if (i as usize) < self.frames.last().unwrap().locals.len() {
            Ok(&mut self.frame().locals[i as usize])
        } else {
            Err(self.internal(format!("missing local {i}")))
        }
    }

    fn global(&mut self, i: u32) -> Result<&mut Value, InternalError> {
        if (i as usize) < self.store.globals.len() {
            Ok(&mut self.store.globals[i as usize])
        } else {
            Err(self.internal(format!("missing global {i}")))
        }
    }
}

pub(crate) fn binop(op: BinOp, a: i32, b: i32) -> Result<i32, TrapKind> {
    Ok(match op {
        BinOp::Add => a.wrapping_add(b),
        BinOp::Sub => a.wrapping_sub(b),
        BinOp::Mul => a.wrapping_mul(b),
        BinOp::DivS | BinOp::RemS if b == 0 => return Err(TrapKind::DivByZero),
        BinOp::DivS if a == i32::MIN && b == -1 => return Err(TrapKind::IntOverflow),
        BinOp::DivS => a / b,
        // INT_MIN rem -1 is 0 rather than an overflow.
        BinOp::RemS => a.wrapping_rem(b),
        BinOp::And => a & b,
        BinOp::Or => a | b,
        BinOp::Xor => a ^ b,
        BinOp::Shl => a.wrapping_shl(b as u32 & 31),
        BinOp::ShrU => ((a as u32) >> (b as u32 & 31)) as i32,
    })
}

pub(crate) fn relop(op: RelOp, a: i32, b: i32) -> bool {
    match op {
        RelOp::Eq => a == b,
        RelOp::Ne => a != b,
        RelOp::LtS => a < b,
        RelOp::LeS => a <= b,
        RelOp::LtU => (a as u32) < (b as u32),
    }
}
