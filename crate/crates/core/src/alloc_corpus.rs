//! The implicit-free-list allocator written in wasmlite, and a shadow-heap
//! harness that checks it.
//!
//! The allocator source ships as [`ALLOCATOR_SOURCE`]. Its contract:
//!
//! * the heap starts at byte 8; address 0 is null;
//! * each block is a 4-byte header plus payload, the header holding the
//!   block size (a multiple of 4, header included) with bit 0 as the
//!   allocated flag;
//! * `malloc(size)` rounds `size` up to a multiple of 4, takes the first
//!   free block that fits (splitting it when at least 8 bytes remain), and
//!   otherwise extends the heap break, growing memory a page at a time;
//!   it returns 0 for `size == 0` or when memory cannot grow;
//! * `free(addr)` clears the allocated flag and merges with the following
//!   block when that block is free.
//!
//! [`run_script`] drives an instance through an [`AllocScript`] and checks
//! every result against a [`ShadowHeap`] and against the headers found in
//! linear memory.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::RangeInclusive;

use crate::harness::Rng;
use crate::interp::{instantiate, ExecOptions, Instance, InstantiateError, Outcome, Store, Value};
use crate::syntax::{parse_module, ParseError};
use crate::validator::{validate_module, Features, ValidationError};

/// wasmlite source of the allocator (`corpus/alloc.wml`).
pub const ALLOCATOR_SOURCE: &str = include_str!("../../../corpus/alloc.wml");

/// First byte of the heap.
pub const HEAP_BASE: u32 = 8;
const HEADER_SIZE: u32 = 4;
const MIN_BLOCK: u32 = 8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LoadError {
    Parse(ParseError),
    Validate(Vec<ValidationError>),
    Instantiate(InstantiateError),
}

impl fmt::Display for LoadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoadError::Parse(e) => write!(f, "allocator does not parse: {e}"),
            LoadError::Validate(errors) => {
                write!(f, "allocator does not validate")?;
                for e in errors {
                    write!(f, "\n  {e}")?;
                }
                Ok(())
            }
            LoadError::Instantiate(e) => write!(f, "allocator does not instantiate: {e}"),
        }
    }
}

/// Parses, validates and instantiates an allocator module.
pub fn load_allocator_from(source: &str, max_pages: u32) -> Result<Instance, LoadError> {
    let ast = parse_module(source).map_err(LoadError::Parse)?;
    let module = validate_module(&ast, Features::default()).map_err(LoadError::Validate)?;
    instantiate(module, max_pages).map_err(LoadError::Instantiate)
}

/// The bundled allocator, instantiated.
pub fn load_allocator(max_pages: u32) -> Result<Instance, LoadError> {
    load_allocator_from(ALLOCATOR_SOURCE, max_pages)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AllocOp {
    Malloc { size: u32, id: String },
    Free { id: String },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AllocScript {
    pub ops: Vec<AllocOp>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ScriptError {
    DuplicateId { op: usize, id: String },
    FreeOfUnknownId { op: usize, id: String },
}

impl fmt::Display for ScriptError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScriptError::DuplicateId { op, id } => write!(f, "op {op}: id `{id}` is already in use"),
            ScriptError::FreeOfUnknownId { op, id } => {
                write!(f, "op {op}: `{id}` is not a live allocation")
            }
        }
    }
}

impl AllocScript {
    /// Checks that ids are unique and every free names a live allocation.
    pub fn check(&self) -> Result<(), ScriptError> {
        let mut seen = BTreeSet::new();
        let mut live = BTreeSet::new();
        for (op, entry) in self.ops.iter().enumerate() {
            match entry {
                AllocOp::Malloc { id, .. } => {
                    if !seen.insert(id.as_str()) {
                        return Err(ScriptError::DuplicateId { op, id: id.clone() });
                    }
                    live.insert(id.as_str());
                }
                AllocOp::Free { id } => {
                    if !live.remove(id.as_str()) {
                        return Err(ScriptError::FreeOfUnknownId { op, id: id.clone() });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Generates a valid script: each op frees a random live allocation with
/// probability `free_prob` (when one exists) and otherwise allocates a size
/// drawn uniformly from `sizes`. Ids are `b0`, `b1`, ...
pub fn gen_alloc_script(seed: u64, n_ops: usize, sizes: RangeInclusive<u32>, free_prob: f64) -> AllocScript {
    let mut rng = Rng::new(seed);
    let mut live: Vec<String> = Vec::new();
    let mut next_id = 0u32;
    let mut ops = Vec::with_capacity(n_ops);
    let (lo, hi) = (*sizes.start(), *sizes.end());
    for _ in 0..n_ops {
        if !live.is_empty() && rng.chance(free_prob) {
            let i = rng.below(live.len() as u64) as usize;
            ops.push(AllocOp::Free {
                id: live.swap_remove(i),
            });
        } else {
            let size = lo + rng.below(u64::from(hi - lo) + 1) as u32;
            let id = format!("b{next_id}");
            next_id += 1;
            live.push(id.clone());
            ops.push(AllocOp::Malloc { size, id });
        }
    }
    AllocScript { ops }
}

/// Independent model of the live allocations.
#[derive(Clone, Debug, Default)]
pub struct ShadowHeap {
    /// id -> (payload address, requested size).
    live: BTreeMap<String, (u32, u32)>,
    /// payload address -> end of payload.
    intervals: BTreeMap<u32, u32>,
    /// Current heap break.
    pub heap_limit: u32,
}

impl ShadowHeap {
    pub fn live(&self) -> impl Iterator<Item = (&str, u32, u32)> {
        self.live.iter().map(|(id, &(a, s))| (id.as_str(), a, s))
    }

    pub fn get(&self, id: &str) -> Option<(u32, u32)> {
        self.live.get(id).copied()
    }

    /// Whether `[addr, addr + size)` overlaps a live interval.
    pub fn overlaps(&self, addr: u32, size: u32) -> bool {
        let end = u64::from(addr) + u64::from(size);
        // The last interval starting below `end` is the only candidate.
        match self.intervals.range(..end.min(u64::from(u32::MAX)) as u32).next_back() {
            Some((_, &other_end)) => other_end > addr,
            None => false,
        }
    }

    pub fn insert(&mut self, id: String, addr: u32, size: u32) {
        self.intervals.insert(addr, addr + size);
        self.live.insert(id, (addr, size));
    }

    pub fn remove(&mut self, id: &str) -> Option<(u32, u32)> {
        let (addr, size) = self.live.remove(id)?;
        self.intervals.remove(&addr);
        Some((addr, size))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AllocReport {
    /// Per op: the address returned by malloc, or 0 for free.
    pub results: Vec<u32>,
    /// (op index, invariant name).
    pub violations: Vec<(usize, &'static str)>,
    /// Highest heap break observed.
    pub peak_heap: u32,
}

impl AllocReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Runs `script` against `inst`, checking the shadow-heap and header-walk
/// invariants after every op. The script is assumed valid (see
/// [`AllocScript::check`]).
pub fn run_script(inst: &mut Instance, script: &AllocScript) -> AllocReport {
    let mut report = AllocReport::default();
    let mut shadow = ShadowHeap::default();
    let options = ExecOptions::default();
    let Some(break_global) = inst.module().ast().globals.iter().position(|g| g.mutable) else {
        report.violations.push((0, "heap_break_global"));
        return report;
    };

    for (op, entry) in script.ops.iter().enumerate() {
        let mut found = Vec::new();
        let result = apply_op(inst, entry, &mut shadow, break_global, options, &mut found);
        report.results.push(result);
        report.peak_heap = report.peak_heap.max(shadow.heap_limit);
        found.extend(check_heap(inst.store(), &shadow));
        report.violations.extend(found.into_iter().map(|name| (op, name)));
    }
    report
}

/// Performs one op, updating `shadow` and collecting per-op violations.
/// Returns the address malloc produced (0 for free).
fn apply_op(
    inst: &mut Instance,
    entry: &AllocOp,
    shadow: &mut ShadowHeap,
    break_global: usize,
    options: ExecOptions,
    found: &mut Vec<&'static str>,
) -> u32 {
    match entry {
        AllocOp::Malloc { size, id } => {
            let addr = match inst.invoke("malloc", &[Value::from_u32(*size)], options) {
                Ok(Outcome::Returned(v)) if v.len() == 1 => v[0].as_u32(),
                _ => {
                    found.push("trap_free");
                    return 0;
                }
            };
            shadow.heap_limit = heap_break(inst.store(), break_global);
            if *size == 0 {
                if addr != 0 {
                    found.push("null_for_zero");
                }
                return addr;
            }
            if addr == 0 {
                // Out of memory; nothing becomes live.
                return 0;
            }
            if addr % 4 != 0 {
                found.push("alignment");
            }
            if addr < HEAP_BASE || u64::from(addr) + u64::from(*size) > u64::from(shadow.heap_limit) {
                found.push("bounds");
            }
            if shadow.overlaps(addr, *size) {
                found.push("disjointness");
            }
            shadow.insert(id.clone(), addr, *size);
            addr
        }
        AllocOp::Free { id } => {
            let addr = shadow.remove(id).map_or(0, |(a, _)| a);
            match inst.invoke("free", &[Value::from_u32(addr)], options) {
                Ok(Outcome::Returned(v)) if v.is_empty() => {}
                _ => found.push("trap_free"),
            }
            if addr != 0 {
                let header = inst.store().load(addr - HEADER_SIZE).map_or(1, |v| v.as_u32());
                if header & 1 != 0 {
                    found.push("free_clears_bit");
                }
            }
            shadow.heap_limit = heap_break(inst.store(), break_global);
            0
        }
    }
}

fn heap_break(store: &Store, global: usize) -> u32 {
    store.globals()[global].as_u32()
}

/// Walks the headers in `store` and compares them with `shadow`.
pub fn check_heap(store: &Store, shadow: &ShadowHeap) -> Vec<&'static str> {
    let mut violations = Vec::new();
    let limit = shadow.heap_limit;
    if limit < HEAP_BASE || limit as usize > store.memory().len() {
        violations.push("heap_within_memory");
        return violations;
    }
    let mut allocated = BTreeMap::new();
    let mut p = HEAP_BASE;
    while p < limit {
        let Some(header) = store.load(p) else {
            violations.push("header_walk");
            return violations;
        };
        let header = header.as_u32();
        let size = header & !1;
        if size < MIN_BLOCK || size % 4 != 0 {
            violations.push("header_walk");
            return violations;
        }
        if header & 1 != 0 {
            allocated.insert(p + HEADER_SIZE, size - HEADER_SIZE);
        }
        p = match p.checked_add(size) {
            Some(next) => next,
            None => {
                violations.push("header_walk");
                return violations;
            }
        };
    }
    if p != limit {
        violations.push("header_walk");
    }
    let mut matched = 0;
    for (_, addr, size) in shadow.live() {
        match allocated.get(&addr) {
            Some(&capacity) if capacity >= size => matched += 1,
            Some(_) => violations.push("block_capacity"),
            None => violations.push("allocated_bit"),
        }
    }
    if matched != allocated.len() && !violations.contains(&"allocated_bit") {
        violations.push("leaked_block");
    }
    violations
}
