//! Small syntactic mutations of well-typed modules.
//!
//! Generated modules are well typed by construction, so they never probe the
//! validator's rejection paths. A mutant usually is ill typed; whenever the
//! validator still accepts one, running it checks that the acceptance was
//! justified.

use alloc::vec::Vec;

use super::rng::Rng;
use crate::syntax::{BinOp, FuncDef, Instr, InstrKind, ModuleAst, RelOp, ValType};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MutationKind {
    /// Adds 1 or 2 to the depth of a `br` or `br_if`.
    BumpBranchDepth,
    DeleteInstr,
    InsertInstr,
    /// Toggles a block type between `[]` and `[i32]`.
    FlipBlockType,
    DuplicateInstr,
}

impl MutationKind {
    pub const ALL: [MutationKind; 5] = [
        MutationKind::BumpBranchDepth,
        MutationKind::DeleteInstr,
        MutationKind::InsertInstr,
        MutationKind::FlipBlockType,
        MutationKind::DuplicateInstr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MutationKind::BumpBranchDepth => "bump_branch_depth",
            MutationKind::DeleteInstr => "delete_instr",
            MutationKind::InsertInstr => "insert_instr",
            MutationKind::FlipBlockType => "flip_block_type",
            MutationKind::DuplicateInstr => "duplicate_instr",
        }
    }
}

fn count(body: &[Instr], pred: &impl Fn(&InstrKind) -> bool) -> usize {
    body.iter()
        .map(|i| {
            usize::from(pred(&i.kind))
                + match &i.kind {
                    InstrKind::Block { body, .. } | InstrKind::Loop { body, .. } => count(body, pred),
                    InstrKind::If {
                        then_body, else_body, ..
                    } => count(then_body, pred) + count(else_body, pred),
                    InstrKind::TryCatch { body, catch_body, .. } => count(body, pred) + count(catch_body, pred),
                    _ => 0,
                }
        })
        .sum()
}

/// Calls `f(seq, index)` on the `target`-th instruction (pre-order) that
/// satisfies `pred`. Returns true once found.
fn at_nth(
    body: &mut Vec<Instr>,
    target: &mut usize,
    pred: &impl Fn(&InstrKind) -> bool,
    f: &mut impl FnMut(&mut Vec<Instr>, usize),
) -> bool {
    for i in 0..body.len() {
        if pred(&body[i].kind) {
            if *target == 0 {
                f(body, i);
                return true;
            }
            *target -= 1;
        }
        let found = match &mut body[i].kind {
            InstrKind::Block { body, .. } | InstrKind::Loop { body, .. } => at_nth(body, target, pred, f),
            InstrKind::If {
                then_body, else_body, ..
            } => at_nth(then_body, target, pred, f) || at_nth(else_body, target, pred, f),
            InstrKind::TryCatch { body, catch_body, .. } => {
                at_nth(body, target, pred, f) || at_nth(catch_body, target, pred, f)
            }
            _ => false,
        };
        if found {
            return true;
        }
    }
    false
}

fn random_simple(rng: &mut Rng) -> InstrKind {
    match rng.below(10) {
        0 => InstrKind::Const(rng.below(8) as i32),
        1 => InstrKind::Binop(*rng.pick(&BinOp::ALL)),
        2 => InstrKind::Relop(*rng.pick(&RelOp::ALL)),
        3 => InstrKind::Eqz,
        4 => InstrKind::Drop,
        5 => InstrKind::Select,
        6 => InstrKind::LocalGet(rng.below(4) as u32),
        7 => InstrKind::Br(rng.below(4) as u32),
        8 => InstrKind::Return,
        _ => InstrKind::Load,
    }
}

fn is_branch(k: &InstrKind) -> bool {
    matches!(k, InstrKind::Br(_) | InstrKind::BrIf(_))
}

fn is_block(k: &InstrKind) -> bool {
    matches!(
        k,
        InstrKind::Block { .. } | InstrKind::Loop { .. } | InstrKind::If { .. } | InstrKind::TryCatch { .. }
    )
}

fn any(_: &InstrKind) -> bool {
    true
}

/// Applies one random mutation to one function of `module`. Returns `None`
/// when the chosen mutation has no site (for example, no branch to bump).
pub fn mutate(module: &ModuleAst, rng: &mut Rng) -> Option<(ModuleAst, MutationKind)> {
    let kind = *rng.pick(&MutationKind::ALL);
    let mut out = module.clone();
    let fi = rng.below(out.funcs.len() as u64) as usize;
    let func: &mut FuncDef = &mut out.funcs[fi];
    let applied = match kind {
        MutationKind::BumpBranchDepth => {
            let n = count(&func.body, &is_branch);
            let bump = 1 + rng.below(2) as u32;
            n > 0
                && at_nth(&mut func.body, &mut (rng.below(n as u64) as usize), &is_branch, &mut |seq, i| {
                    match &mut seq[i].kind {
                        InstrKind::Br(d) | InstrKind::BrIf(d) => *d += bump,
                        _ => unreachable!(),
                    }
                })
        }
        MutationKind::DeleteInstr => {
            let n = count(&func.body, &any);
            n > 0
                && at_nth(&mut func.body, &mut (rng.below(n as u64) as usize), &any, &mut |seq, i| {
                    seq.remove(i);
                })
        }
        MutationKind::InsertInstr => {
            let new = Instr::synth(random_simple(rng));
            let n = count(&func.body, &any);
            if n == 0 {
                func.body.push(new);
                true
            } else {
                let mut new = Some(new);
                at_nth(&mut func.body, &mut (rng.below(n as u64) as usize), &any, &mut |seq, i| {
                    seq.insert(i, new.take().unwrap());
                })
            }
        }
        MutationKind::FlipBlockType => {
            let n = count(&func.body, &is_block);
            n > 0
                && at_nth(&mut func.body, &mut (rng.below(n as u64) as usize), &is_block, &mut |seq, i| {
                    match &mut seq[i].kind {
                        InstrKind::Block { ty, .. }
                        | InstrKind::Loop { ty, .. }
                        | InstrKind::If { ty, .. }
                        | InstrKind::TryCatch { ty, .. } => {
                            *ty = if ty.is_some() { None } else { Some(ValType::I32) };
                        }
                        _ => unreachable!(),
                    }
                })
        }
        MutationKind::DuplicateInstr => {
            let n = count(&func.body, &any);
            n > 0
                && at_nth(&mut func.body, &mut (rng.below(n as u64) as usize), &any, &mut |seq, i| {
                    let copy = seq[i].clone();
                    seq.insert(i, copy);
                })
        }
    };
    applied.then_some((out, kind))
}
