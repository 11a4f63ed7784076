//! wasmlite: a distilled WebAssembly.
//!
//! A typed stack machine with a single value type (`i32`), structured
//! control flow, locals, globals, one linear memory and an optional
//! exception mechanism. The crate provides
//!
//! * [`syntax`]: the AST plus a text-format parser and canonical printer,
//! * [`validator`]: the stack-typing discipline,
//! * [`interp`]: a small-step interpreter whose every failure is a defined
//!   trap,
//! * [`exceptions`]: `throw` / `try ... catch`,
//! * [`alloc_corpus`]: an implicit-free-list allocator written in wasmlite,
//!   with a shadow-heap checker,
//! * [`harness`]: a well-typed program generator and a soundness fuzzer.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]

extern crate alloc;

pub mod alloc_corpus;
pub mod exceptions;
pub mod harness;
pub mod interp;
pub mod syntax;
pub mod validator;

pub use interp::{instantiate, ExecOptions, Instance, Outcome, TrapKind, Value};
pub use syntax::{parse_module, print_module, ModuleAst};
pub use validator::{validate_module, Features, ValidatedModule};
