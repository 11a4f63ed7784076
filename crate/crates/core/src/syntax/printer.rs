//! Canonical text output.

use alloc::string::String;
use core::fmt::Write;

use super::ast::*;

/// Prints `module` in canonical form: one module field per line, one
/// instruction per line inside function bodies, two-space indentation.
/// Functions and globals are referenced by `$name` when the index resolves,
/// and numerically otherwise.
pub fn print_module(module: &ModuleAst) -> String {
    if module.globals.is_empty() && module.memory.is_none() && module.funcs.is_empty() {
        return String::from("(module)");
    }
    let mut out = String::from("(module\n");
    for g in &module.globals {
        let ty = if g.mutable { " (mut i32)" } else { "" };
        let _ = writeln!(out, "  (global ${}{} (i32.const {}))", g.name, ty, g.init);
    }
    if let Some(pages) = module.memory {
        let _ = writeln!(out, "  (memory {pages})");
    }
    for f in &module.funcs {
        let _ = write!(out, "  (func ${}", f.name);
        if f.exported {
            out.push_str(" (export)");
        }
        for _ in &f.ty.params {
            out.push_str(" (param i32)");
        }
        if !f.ty.results.is_empty() {
            out.push_str(" (result");
            for _ in &f.ty.results {
                out.push_str(" i32");
            }
            out.push(')');
        }
        for _ in &f.locals {
            out.push_str(" (local i32)");
        }
        out.push('\n');
        print_body(&mut out, module, &f.body, 2);
        out.push_str("  )\n");
    }
    out.push(')');
    out
}

/// Prints a single instruction on one line. Structured instructions print
/// only their header (`block (result i32)`).
pub fn print_instr(module: Option<&ModuleAst>, instr: &InstrKind) -> String {
    let mut out = String::new();
    write_head(&mut out, module, instr);
    out
}

fn write_head(out: &mut String, module: Option<&ModuleAst>, instr: &InstrKind) {
    out.push_str(instr.mnemonic());
    let func_ref = |i: u32| {
        module
            .and_then(|m| m.funcs.get(i as usize))
            .map(|f| f.name.as_str())
    };
    let global_ref = |i: u32| {
        module
            .and_then(|m| m.globals.get(i as usize))
            .map(|g| g.name.as_str())
    };
    let _ = match instr {
        InstrKind::Const(n) => write!(out, " {n}"),
        InstrKind::LocalGet(i)
        | InstrKind::LocalSet(i)
        | InstrKind::LocalTee(i)
        | InstrKind::Br(i)
        | InstrKind::BrIf(i) => write!(out, " {i}"),
        InstrKind::GlobalGet(i) | InstrKind::GlobalSet(i) => match global_ref(*i) {
            Some(name) => write!(out, " ${name}"),
            None => write!(out, " {i}"),
        },
        InstrKind::Call(i) => match func_ref(*i) {
            Some(name) => write!(out, " ${name}"),
            None => write!(out, " {i}"),
        },
        InstrKind::Block { ty, .. }
        | InstrKind::Loop { ty, .. }
        | InstrKind::If { ty, .. }
        | InstrKind::TryCatch { ty, .. } => {
            if ty.is_some() {
                out.push_str(" (result i32)");
            }
            Ok(())
        }
        _ => Ok(()),
    };
}

fn print_body(out: &mut String, module: &ModuleAst, body: &[Instr], depth: usize) {
    for instr in body {
        indent(out, depth);
        write_head(out, Some(module), &instr.kind);
        out.push('\n');
        match &instr.kind {
            InstrKind::Block { body, .. } | InstrKind::Loop { body, .. } => {
                print_body(out, module, body, depth + 1);
                close(out, depth, "end");
            }
            InstrKind::If {
                then_body,
                else_body,
                ..
            } => {
                print_body(out, module, then_body, depth + 1);
                if !else_body.is_empty() {
                    close(out, depth, "else");
                    print_body(out, module, else_body, depth + 1);
                }
                close(out, depth, "end");
            }
            InstrKind::TryCatch {
                body, catch_body, ..
            } => {
                print_body(out, module, body, depth + 1);
                close(out, depth, "catch");
                print_body(out, module, catch_body, depth + 1);
                close(out, depth, "end");
            }
            _ => {}
        }
    }
}

fn close(out: &mut String, depth: usize, word: &str) {
    indent(out, depth);
    out.push_str(word);
    out.push('\n');
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}
