//! Well-typed-by-construction module generator.
//!
//! Bodies grow one instruction at a time while tracking the operand-stack
//! height the validator would compute; only instructions whose operands are
//! available are offered. A block is closed by dropping surplus values or
//! synthesizing missing results with `i32.const`. After an instruction that
//! never falls through, the generator may keep emitting dead code, mirroring
//! the validator's stack-polymorphic rule.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use super::rng::Rng;
use crate::syntax::{
    walk_instrs, BinOp, BlockType, FuncDef, FuncType, GlobalDef, Instr, InstrKind, ModuleAst, RelOp, SourcePos,
    ValType,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenConfig {
    pub seed: u64,
    pub max_funcs: usize,
    pub max_body_len: usize,
    pub max_block_depth: usize,
    pub max_locals: usize,
    pub enable_exceptions: bool,
    pub enable_memory: bool,
    /// Step budget for each invocation made by the fuzzer.
    pub fuel: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            max_funcs: 3,
            max_body_len: 16,
            max_block_depth: 3,
            max_locals: 3,
            enable_exceptions: true,
            enable_memory: true,
            fuel: 5_000,
        }
    }
}

impl GenConfig {
    /// All maxima at least 1 and fuel at least 1.
    pub fn is_valid(&self) -> bool {
        self.max_funcs >= 1 && self.max_body_len >= 1 && self.max_block_depth >= 1 && self.max_locals >= 1 && self.fuel >= 1
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        GenConfig { seed, ..self.clone() }
    }
}

/// Name of the exported entry function of every generated module.
pub const ENTRY_NAME: &str = "f0";

#[derive(Clone, Copy, Debug)]
struct Sig {
    params: usize,
    results: usize,
}

/// Generates a module that validates under the features `cfg` enables.
///
/// Only function 0 (`f0`) is exported; the others are reached through
/// `call`. Deterministic in `cfg`.
pub fn gen_module(cfg: &GenConfig) -> ModuleAst {
    let mut rng = Rng::new(cfg.seed);
    let n_globals = rng.below(3) as usize;
    let globals: Vec<GlobalDef> = (0..n_globals)
        .map(|i| GlobalDef {
            name: format!("g{i}"),
            mutable: i == 0 || rng.chance(0.5),
            init: small_const(&mut rng),
        })
        .collect();
    let mutable_globals: Vec<u32> = globals
        .iter()
        .enumerate()
        .filter(|(_, g)| g.mutable)
        .map(|(i, _)| i as u32)
        .collect();

    let n_funcs = 1 + rng.below(cfg.max_funcs.max(1) as u64) as usize;
    let sigs: Vec<(Sig, usize)> = (0..n_funcs)
        .map(|_| {
            let sig = Sig {
                params: rng.below(3) as usize,
                results: rng.below(2) as usize,
            };
            let locals = rng.below(cfg.max_locals as u64 + 1) as usize;
            (sig, locals)
        })
        .collect();
    let only_sigs: Vec<Sig> = sigs.iter().map(|(s, _)| *s).collect();

    let mut funcs = Vec::with_capacity(n_funcs);
    for (i, (sig, locals)) in sigs.iter().enumerate() {
        let mut body_gen = BodyGen {
            rng: &mut rng,
            cfg,
            sigs: &only_sigs,
            n_globals,
            mutable_globals: &mutable_globals,
            num_locals: sig.params + locals,
            func_results: sig.results,
            labels: alloc::vec![sig.results],
            budget: cfg.max_body_len * 4,
        };
        let body = body_gen.seq(sig.results, 0, cfg.max_body_len);
        funcs.push(FuncDef {
            name: format!("f{i}"),
            ty: FuncType::new(sig.params, sig.results),
            locals: alloc::vec![ValType::I32; *locals],
            body,
            exported: i == 0,
            pos: SourcePos::default(),
        });
    }

    ModuleAst {
        globals,
        memory: cfg.enable_memory.then_some(1),
        funcs,
    }
}

fn small_const(rng: &mut Rng) -> i32 {
    match rng.below(10) {
        0 => i32::MIN,
        1 => -1,
        2 => i32::MAX,
        3 => rng.next_u64() as i32,
        _ => rng.below(17) as i32 - 4,
    }
}

fn address(rng: &mut Rng) -> i32 {
    match rng.below(12) {
        0 => 65_532,
        1 => 65_533,
        2 => rng.next_u64() as i32,
        _ => rng.below(16) as i32 * 4,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Choice {
    Const,
    LocalGet,
    LocalSet,
    LocalTee,
    GlobalGet,
    GlobalSet,
    Binop,
    Relop,
    Eqz,
    Drop,
    Select,
    Load,
    Store,
    MemorySize,
    MemoryGrow,
    Block,
    Loop,
    If,
    Try,
    Br,
    BrIf,
    Return,
    Call,
    Nop,
    Unreachable,
    Throw,
}

struct BodyGen<'a> {
    rng: &'a mut Rng,
    cfg: &'a GenConfig,
    sigs: &'a [Sig],
    n_globals: usize,
    mutable_globals: &'a [u32],
    num_locals: usize,
    func_results: usize,
    /// Branch arity of each enclosing label, innermost last.
    labels: Vec<usize>,
    /// Instructions left for the whole function.
    budget: usize,
}

/// Height bookkeeping for one instruction sequence.
struct SeqState {
    height: usize,
    dead: bool,
    out: Vec<Instr>,
}

impl SeqState {
    fn emit(&mut self, kind: InstrKind, pops: usize, pushes: usize) {
        self.height = self.height.saturating_sub(pops) + pushes;
        self.out.push(Instr::synth(kind));
    }
}

impl BodyGen<'_> {
    /// Generates a sequence that leaves exactly `end_arity` values above
    /// the frame entry, starting with `start_height` values already there.
    fn seq(&mut self, end_arity: usize, start_height: usize, max_len: usize) -> Vec<Instr> {
        let mut st = SeqState {
            height: start_height,
            dead: false,
            out: Vec::new(),
        };
        let len = self.rng.below(max_len as u64 + 1) as usize;
        for _ in 0..len {
            if self.budget == 0 {
                break;
            }
            self.budget -= 1;
            let was_dead = st.dead;
            self.step(&mut st, max_len);
            if st.dead && !was_dead && !self.rng.chance(0.3) {
                break;
            }
        }
        while st.height > end_arity {
            st.emit(InstrKind::Drop, 1, 0);
        }
        if !st.dead {
            while st.height < end_arity {
                let c = small_const(self.rng);
                st.emit(InstrKind::Const(c), 0, 1);
            }
        }
        st.out
    }

    fn branch_targets(&self, available: usize, dead: bool) -> Vec<u32> {
        let n = self.labels.len();
        (0..n)
            .filter(|&k| dead || self.labels[n - 1 - k] <= available)
            .map(|k| k as u32)
            .collect()
    }

    fn callable(&self, available: usize, dead: bool) -> Vec<u32> {
        (0..self.sigs.len())
            .filter(|&f| dead || self.sigs[f].params <= available)
            .map(|f| f as u32)
            .collect()
    }

    fn choices(&self, st: &SeqState, depth_left: bool) -> Vec<(Choice, u32)> {
        let h = if st.dead { usize::MAX } else { st.height };
        let locals = self.num_locals > 0;
        let mem = self.cfg.enable_memory;
        let exc = self.cfg.enable_exceptions;
        let nested = depth_left && self.labels.len() <= self.cfg.max_block_depth;
        let table = [
            (Choice::Const, 16, true),
            (Choice::LocalGet, 10, locals),
            (Choice::LocalSet, 4, locals && h >= 1),
            (Choice::LocalTee, 4, locals && h >= 1),
            (Choice::GlobalGet, 4, self.n_globals > 0),
            (Choice::GlobalSet, 4, !self.mutable_globals.is_empty() && h >= 1),
            (Choice::Binop, 14, h >= 2),
            (Choice::Relop, 6, h >= 2),
            (Choice::Eqz, 4, h >= 1),
            (Choice::Drop, 4, h >= 1),
            (Choice::Select, 4, h >= 3),
            (Choice::Load, 6, mem),
            (Choice::Store, 4, mem),
            (Choice::MemorySize, 2, mem),
            (Choice::MemoryGrow, 2, mem),
            (Choice::Block, 6, nested),
            (Choice::Loop, 4, nested),
            (Choice::If, 6, nested && h >= 1),
            (Choice::Try, 4, nested && exc),
            (Choice::Br, 3, !self.branch_targets(h, st.dead).is_empty()),
            (Choice::BrIf, 4, h >= 1 && !self.branch_targets(h.saturating_sub(1), st.dead).is_empty()),
            (Choice::Return, 1, h >= self.func_results),
            (Choice::Call, 4, !self.callable(h, st.dead).is_empty()),
            (Choice::Nop, 1, true),
            (Choice::Unreachable, 1, true),
            (Choice::Throw, 2, exc && h >= 1),
        ];
        table
            .iter()
            .filter(|(_, _, ok)| *ok)
            .map(|(c, w, _)| (*c, *w))
            .collect()
    }

    fn pick(&mut self, choices: &[(Choice, u32)]) -> Choice {
        let total: u32 = choices.iter().map(|(_, w)| w).sum();
        let mut r = self.rng.below(u64::from(total)) as u32;
        for (c, w) in choices {
            if r < *w {
                return *c;
            }
            r -= w;
        }
        unreachable!()
    }

    fn block_type(&mut self) -> BlockType {
        self.rng.chance(0.5).then_some(ValType::I32)
    }

    fn nested(&mut self, label: usize, end_arity: usize, start_height: usize, max_len: usize) -> Vec<Instr> {
        self.labels.push(label);
        let body = self.seq(end_arity, start_height, (max_len / 2).max(1));
        self.labels.pop();
        body
    }

    fn step(&mut self, st: &mut SeqState, max_len: usize) {
        use InstrKind as I;
        let choices = self.choices(st, max_len > 1);
        let h = if st.dead { usize::MAX } else { st.height };
        match self.pick(&choices) {
            Choice::Const => {
                let c = small_const(self.rng);
                st.emit(I::Const(c), 0, 1);
            }
            Choice::LocalGet => {
                let i = self.rng.below(self.num_locals as u64) as u32;
                st.emit(I::LocalGet(i), 0, 1);
            }
            Choice::LocalSet => {
                let i = self.rng.below(self.num_locals as u64) as u32;
                st.emit(I::LocalSet(i), 1, 0);
            }
            Choice::LocalTee => {
                let i = self.rng.below(self.num_locals as u64) as u32;
                st.emit(I::LocalTee(i), 1, 1);
            }
            Choice::GlobalGet => {
                let i = self.rng.below(self.n_globals as u64) as u32;
                st.emit(I::GlobalGet(i), 0, 1);
            }
            Choice::GlobalSet => {
                let i = *self.rng.pick(self.mutable_globals);
                st.emit(I::GlobalSet(i), 1, 0);
            }
            Choice::Binop => {
                let op = *self.rng.pick(&BinOp::ALL);
                st.emit(I::Binop(op), 2, 1);
            }
            Choice::Relop => {
                let op = *self.rng.pick(&RelOp::ALL);
                st.emit(I::Relop(op), 2, 1);
            }
            Choice::Eqz => st.emit(I::Eqz, 1, 1),
            Choice::Drop => st.emit(I::Drop, 1, 0),
            Choice::Select => st.emit(I::Select, 3, 1),
            Choice::Load => {
                if h == 0 || self.rng.chance(0.7) {
                    let a = address(self.rng);
                    st.emit(I::Const(a), 0, 1);
                }
                st.emit(I::Load, 1, 1);
            }
            Choice::Store => {
                if h < 2 || self.rng.chance(0.7) {
                    let a = address(self.rng);
                    st.emit(I::Const(a), 0, 1);
                    let v = small_const(self.rng);
                    st.emit(I::Const(v), 0, 1);
                }
                st.emit(I::Store, 2, 0);
            }
            Choice::MemorySize => st.emit(I::MemorySize, 0, 1),
            Choice::MemoryGrow => {
                if h == 0 || self.rng.chance(0.7) {
                    let d = self.rng.below(3) as i32;
                    st.emit(I::Const(d), 0, 1);
                }
                st.emit(I::MemoryGrow, 1, 1);
            }
            Choice::Block => {
                let ty = self.block_type();
                let n = ty.map_or(0, |_| 1);
                let body = self.nested(n, n, 0, max_len);
                st.emit(I::Block { ty, body }, 0, n);
            }
            Choice::Loop => {
                let ty = self.block_type();
                let n = ty.map_or(0, |_| 1);
                let body = self.nested(0, n, 0, max_len);
                st.emit(I::Loop { ty, body }, 0, n);
            }
            Choice::If => {
                let ty = self.block_type();
                let n = ty.map_or(0, |_| 1);
                let then_body = self.nested(n, n, 0, max_len);
                let else_body = if n > 0 || self.rng.chance(0.6) {
                    self.nested(n, n, 0, max_len)
                } else {
                    Vec::new()
                };
                st.emit(
                    I::If {
                        ty,
                        then_body,
                        else_body,
                    },
                    1,
                    n,
                );
            }
            Choice::Try => {
                let ty = self.block_type();
                let n = ty.map_or(0, |_| 1);
                let body = self.nested(n, n, 0, max_len);
                let catch_body = self.nested(n, n, 1, max_len);
                st.emit(I::TryCatch { ty, body, catch_body }, 0, n);
            }
            Choice::Br => {
                let k = *self.rng.pick(&self.branch_targets(h, st.dead));
                let arity = self.labels[self.labels.len() - 1 - k as usize];
                st.emit(I::Br(k), arity, 0);
                st.dead = true;
                st.height = 0;
            }
            Choice::BrIf => {
                let k = *self.rng.pick(&self.branch_targets(h.saturating_sub(1), st.dead));
                let arity = self.labels[self.labels.len() - 1 - k as usize];
                st.emit(I::BrIf(k), 1 + arity, arity);
            }
            Choice::Return => {
                st.emit(I::Return, self.func_results, 0);
                st.dead = true;
                st.height = 0;
            }
            Choice::Call => {
                let f = *self.rng.pick(&self.callable(h, st.dead));
                let sig = self.sigs[f as usize];
                st.emit(I::Call(f), sig.params, sig.results);
            }
            Choice::Nop => st.emit(I::Nop, 0, 0),
            Choice::Unreachable => {
                st.emit(I::Unreachable, 0, 0);
                st.dead = true;
                st.height = 0;
            }
            Choice::Throw => {
                st.emit(I::Throw, 1, 0);
                st.dead = true;
                st.height = 0;
            }
        }
    }
}

/// Instruction variant names, in declaration order.
pub const INSTR_VARIANTS: [&str; 26] = [
    "Const",
    "Binop",
    "Relop",
    "Eqz",
    "Drop",
    "Select",
    "LocalGet",
    "LocalSet",
    "LocalTee",
    "GlobalGet",
    "GlobalSet",
    "Load",
    "Store",
    "MemorySize",
    "MemoryGrow",
    "Block",
    "Loop",
    "If",
    "Br",
    "BrIf",
    "Return",
    "Call",
    "Nop",
    "Unreachable",
    "Throw",
    "TryCatch",
];

pub fn variant_name(kind: &InstrKind) -> &'static str {
    use InstrKind as I;
    match kind {
        I::Const(_) => "Const",
        I::Binop(_) => "Binop",
        I::Relop(_) => "Relop",
        I::Eqz => "Eqz",
        I::Drop => "Drop",
        I::Select => "Select",
        I::LocalGet(_) => "LocalGet",
        I::LocalSet(_) => "LocalSet",
        I::LocalTee(_) => "LocalTee",
        I::GlobalGet(_) => "GlobalGet",
        I::GlobalSet(_) => "GlobalSet",
        I::Load => "Load",
        I::Store => "Store",
        I::MemorySize => "MemorySize",
        I::MemoryGrow => "MemoryGrow",
        I::Block { .. } => "Block",
        I::Loop { .. } => "Loop",
        I::If { .. } => "If",
        I::Br(_) => "Br",
        I::BrIf(_) => "BrIf",
        I::Return => "Return",
        I::Call(_) => "Call",
        I::Nop => "Nop",
        I::Unreachable => "Unreachable",
        I::Throw => "Throw",
        I::TryCatch { .. } => "TryCatch",
    }
}

/// Counts instructions of each variant in `module`, adding to `counts`.
pub fn count_variants(module: &ModuleAst, counts: &mut BTreeMap<&'static str, u64>) {
    for f in &module.funcs {
        walk_instrs(&f.body, &mut |i| *counts.entry(variant_name(&i.kind)).or_insert(0) += 1);
    }
}
