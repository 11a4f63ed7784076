//! Small-step interpreter.
//!
//! [`Instance`] pairs a validated module with its store. [`Instance::invoke`]
//! iterates [`Config::step`] until the run ends; [`Instance::trace`] does the
//! same while recording every intermediate configuration.

mod config;
mod store;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub use config::{
    Config, ControlEntry, EntryKind, ExecOptions, Frame, InternalError, Outcome, Pending, Step, TrapKind,
    DEFAULT_CALL_DEPTH_LIMIT,
};
pub use store::{Store, Value, MAX_PAGES_LIMIT, PAGE_SIZE};

use crate::syntax::print_instr;
use crate::validator::ValidatedModule;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InstantiateError {
    /// The module declares more initial pages than `max_pages` allows.
    InitialPagesExceedMax { initial: u32, max_pages: u32 },
    MaxPagesTooLarge(u32),
}

impl fmt::Display for InstantiateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InstantiateError::InitialPagesExceedMax { initial, max_pages } => {
                write!(f, "module declares {initial} initial page(s) but max_pages is {max_pages}")
            }
            InstantiateError::MaxPagesTooLarge(n) => {
                write!(f, "max_pages {n} exceeds the limit of {MAX_PAGES_LIMIT}")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InvokeError {
    UnknownExport(String),
    ArityMismatch { expected: usize, given: usize },
    Internal(InternalError),
}

impl fmt::Display for InvokeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InvokeError::UnknownExport(name) => write!(f, "no exported function named `{name}`"),
            InvokeError::ArityMismatch { expected, given } => {
                write!(f, "function expects {expected} argument(s), {given} given")
            }
            InvokeError::Internal(e) => e.fmt(f),
        }
    }
}

impl From<InternalError> for InvokeError {
    fn from(e: InternalError) -> Self {
        InvokeError::Internal(e)
    }
}

/// A validated module with its own memory and globals. Store changes
/// persist across calls.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    module: ValidatedModule,
    store: Store,
}

/// Creates an instance with zero-filled memory and globals at their
/// initial values.
pub fn instantiate(module: ValidatedModule, max_pages: u32) -> Result<Instance, InstantiateError> {
    if max_pages > MAX_PAGES_LIMIT {
        return Err(InstantiateError::MaxPagesTooLarge(max_pages));
    }
    let initial = module.ast().memory.unwrap_or(0);
    if initial > max_pages {
        return Err(InstantiateError::InitialPagesExceedMax { initial, max_pages });
    }
    let globals = module.ast().globals.iter().map(|g| Value(g.init)).collect();
    Ok(Instance {
        store: Store::new(initial, max_pages, globals),
        module,
    })
}

/// One transition as seen by [`Instance::trace`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceRecord {
    /// 1-based.
    pub step_index: u64,
    /// Number of live frames when the step was taken.
    pub frame_depth: usize,
    /// The instruction dispatched, or `end` for a fall-through step.
    pub instr: String,
    /// Top of the value stack after the step, top last.
    pub value_stack_after: Vec<Value>,
    /// Set when `value_stack_after` omits deeper values.
    pub truncated: bool,
}

/// Number of stack values kept in a [`TraceRecord`].
pub const TRACE_STACK_WINDOW: usize = 8;

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:>6} [{}] {:<24} [", self.step_index, self.frame_depth, self.instr)?;
        if self.truncated {
            f.write_str("...")?;
            if !self.value_stack_after.is_empty() {
                f.write_str(" ")?;
            }
        }
        for (i, v) in self.value_stack_after.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str("]")
    }
}

impl Instance {
    pub fn module(&self) -> &ValidatedModule {
        &self.module
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    fn resolve(&self, name: &str, args: &[Value]) -> Result<usize, InvokeError> {
        let ast = self.module.ast();
        let index = ast
            .funcs
            .iter()
            .position(|f| f.exported && f.name == name)
            .ok_or_else(|| InvokeError::UnknownExport(String::from(name)))?;
        let expected = ast.funcs[index].ty.params.len();
        if args.len() != expected {
            return Err(InvokeError::ArityMismatch {
                expected,
                given: args.len(),
            });
        }
        Ok(index)
    }

    /// Runs the exported function `name` to completion.
    pub fn invoke(&mut self, name: &str, args: &[Value], options: ExecOptions) -> Result<Outcome, InvokeError> {
        self.invoke_counted(name, args, options).map(|(outcome, _)| outcome)
    }

    /// Like [`invoke`](Self::invoke), also returning the number of
    /// transitions taken.
    pub fn invoke_counted(
        &mut self,
        name: &str,
        args: &[Value],
        options: ExecOptions,
    ) -> Result<(Outcome, u64), InvokeError> {
        let func = self.resolve(name, args)?;
        let store = core::mem::take(&mut self.store);
        let mut config = Config::new(&self.module, store, func, args, options);
        let result = loop {
            match config.step() {
                Ok(Step::Continue) => {}
                Ok(Step::Done(outcome)) => break Ok(outcome),
                Err(e) => break Err(e),
            }
        };
        let steps = config.steps();
        self.store = config.into_store();
        Ok((result?, steps))
    }

    /// Runs `name` under a step budget of `fuel`, returning one record for
    /// every step that leaves a live configuration.
    pub fn trace(
        &mut self,
        name: &str,
        args: &[Value],
        fuel: u64,
        options: ExecOptions,
    ) -> Result<(Outcome, Vec<TraceRecord>), InvokeError> {
        let mut records = Vec::new();
        let outcome = self.trace_each(name, args, fuel, options, |r| records.push(r))?;
        Ok((outcome, records))
    }

    /// Streaming form of [`trace`](Self::trace).
    pub fn trace_each(
        &mut self,
        name: &str,
        args: &[Value],
        fuel: u64,
        options: ExecOptions,
        mut sink: impl FnMut(TraceRecord),
    ) -> Result<Outcome, InvokeError> {
        let func = self.resolve(name, args)?;
        let store = core::mem::take(&mut self.store);
        let ast = self.module.ast();
        let mut config = Config::new(&self.module, store, func, args, options.with_fuel(Some(fuel)));
        let mut step_index = 0u64;
        let result = loop {
            let pending = config.pending();
            let frame_depth = config.frames().len();
            match config.step() {
                Ok(Step::Continue) => {}
                Ok(Step::Done(outcome)) => break Ok(outcome),
                Err(e) => break Err(e),
            }
            step_index += 1;
            let instr = match pending {
                Pending::Instr(instr) => print_instr(Some(ast), &instr.kind),
                Pending::EndOf(_) | Pending::Halted => String::from("end"),
            };
            let (value_stack_after, truncated) = match config.frames().last() {
                Some(frame) => {
                    let skip = frame.values.len().saturating_sub(TRACE_STACK_WINDOW);
                    (frame.values[skip..].to_vec(), skip > 0)
                }
                None => (Vec::new(), false),
            };
            sink(TraceRecord {
                step_index,
                frame_depth,
                instr,
                value_stack_after,
                truncated,
            });
        };
        self.store = config.into_store();
        Ok(result?)
    }
}
