#![allow(dead_code)]

pub mod oracle;

use std::collections::BTreeSet;

use oracle::Expected;
use wasmlite_core::interp::{ExecOptions, Instance, Outcome, TraceRecord, Value};
use wasmlite_core::syntax::{Instr, InstrKind};
use wasmlite_core::{instantiate, parse_module, validate_module, Features};

/// A hand-checked program and the outcome it must produce.
pub struct Case {
    pub name: &'static str,
    /// Full module text, or `sig|body` for a function `$main` in a module
    /// with globals `$c` (immutable, 10) and `$m` (mutable, 0) and one page.
    pub src: &'static str,
    pub args: &'static [i32],
    /// `Outcome` in its display form.
    pub expect: &'static str,
}

pub const MAX_PAGES: u32 = 4;
pub const CASE_FUEL: u64 = 10_000;

pub fn module_text(src: &str) -> String {
    if src.starts_with("(module") {
        return src.to_string();
    }
    let (sig, body) = src.split_once('|').expect("case source is `sig|body`");
    format!(
        "(module\n  (global $c (i32.const 10))\n  (global $m (mut i32) (i32.const 0))\n  (memory 1)\n  (func $main (export) {sig}\n{body}))"
    )
}

pub fn instance(text: &str) -> Instance {
    let ast = parse_module(text).unwrap_or_else(|e| panic!("{e}\n{text}"));
    let module = validate_module(&ast, Features::ALL).unwrap_or_else(|e| panic!("{}\n{text}", e[0]));
    instantiate(module, MAX_PAGES).unwrap()
}

pub fn run(text: &str, args: &[i32]) -> Outcome {
    let args: Vec<Value> = args.iter().map(|&a| Value(a)).collect();
    instance(text)
        .invoke("main", &args, ExecOptions::default().with_fuel(Some(CASE_FUEL)).checked())
        .unwrap()
}

/// Runs a case through the tracing driver, returning its outcome and the
/// mnemonics of every rule that fired.
pub fn run_case(case: &Case) -> (Outcome, Vec<TraceRecord>) {
    let text = module_text(case.src);
    let mut inst = instance(&text);
    let args: Vec<Value> = case.args.iter().map(|&a| Value(a)).collect();
    inst.trace("main", &args, CASE_FUEL, ExecOptions::default().checked()).unwrap()
}

/// First word of a trace record's instruction: the rule that fired.
pub fn rule_of(record: &TraceRecord) -> String {
    record.instr.split_whitespace().next().unwrap_or("").to_string()
}

/// Every rule of the step relation, named by instruction mnemonic (`end`
/// is block fall-through) plus the terminal outcomes.
pub const ALL_RULES: &[&str] = &[
    "i32.const", "i32.add", "i32.sub", "i32.mul", "i32.div_s", "i32.rem_s", "i32.and", "i32.or", "i32.xor",
    "i32.shl", "i32.shr_u", "i32.eq", "i32.ne", "i32.lt_s", "i32.le_s", "i32.lt_u", "i32.eqz", "drop", "select",
    "local.get", "local.set", "local.tee", "global.get", "global.set", "i32.load", "i32.store", "memory.size",
    "memory.grow", "block", "loop", "if", "br", "br_if", "return", "call", "nop", "unreachable", "throw", "try",
    "end", "result:", "trap:", "exception:", "fuel",
];

/// Rules exercised by running every case: each traced step plus the
/// terminal outcome of each case.
pub fn rules_exercised(cases: &[Case]) -> BTreeSet<String> {
    let mut seen = BTreeSet::new();
    for case in cases {
        let (outcome, records) = run_case(case);
        seen.extend(records.iter().map(rule_of));
        seen.insert(outcome.to_string().split_whitespace().next().unwrap().to_string());
        // The terminal step is not recorded, so credit the instruction that
        // ended the run.
        match outcome {
            Outcome::Trap(_) | Outcome::UncaughtException(_) => {
                let text = module_text(case.src);
                seen.extend(last_dispatched(&text, case.args));
            }
            _ => {}
        }
    }
    seen
}

fn last_dispatched(text: &str, args: &[i32]) -> Option<String> {
    use wasmlite_core::interp::{Config, Pending, Step};
    let inst = instance(text);
    let module = inst.module().clone();
    let func = module.ast().func_index("main").unwrap();
    let args: Vec<Value> = args.iter().map(|&a| Value(a)).collect();
    let mut config = Config::new(&module, inst.store().clone(), func, &args, ExecOptions::default());
    loop {
        let pending = config.pending();
        match config.step().unwrap() {
            Step::Continue => {}
            Step::Done(_) => {
                return match pending {
                    Pending::Instr(i) => Some(i.kind.mnemonic().to_string()),
                    _ => None,
                }
            }
        }
    }
}

pub fn to_expected(out: &Outcome) -> Expected {
    match out {
        Outcome::Returned(v) => Expected::Returned(v.iter().map(|v| v.0).collect()),
        Outcome::Trap(k) => Expected::Trap(k.as_str()),
        Outcome::UncaughtException(v) => Expected::Exception(v.0),
        Outcome::FuelExhausted => Expected::OutOfBudget,
    }
}

/// Rewrites every block into a try whose handler is never reached.
pub fn blocks_to_tries(body: &mut [Instr]) {
    for instr in body {
        match &mut instr.kind {
            InstrKind::Block { ty, body } => {
                blocks_to_tries(body);
                let catch_body = vec![Instr::synth(InstrKind::Unreachable)];
                instr.kind = InstrKind::TryCatch {
                    ty: *ty,
                    body: std::mem::take(body),
                    catch_body,
                };
            }
            InstrKind::Loop { body, .. } => blocks_to_tries(body),
            InstrKind::If {
                then_body, else_body, ..
            } => {
                blocks_to_tries(then_body);
                blocks_to_tries(else_body);
            }
            _ => {}
        }
    }
}

macro_rules! case {
    ($name:expr, $src:expr, [$($a:expr),*], $expect:expr) => {
        Case { name: $name, src: $src, args: &[$($a),*], expect: $expect }
    };
}

/// Expected values are worked out by hand from the step rules.
pub const CASES: &[Case] = &[
    // numeric
    case!("const", "(result i32)|i32.const 7", [], "result: 7"),
    case!("add", "(result i32)|i32.const 2 i32.const 3 i32.add", [], "result: 5"),
    case!("add wraps", "(result i32)|i32.const 0xFFFFFFFF i32.const 1 i32.add", [], "result: 0"),
    case!("sub", "(result i32)|i32.const 3 i32.const 5 i32.sub", [], "result: -2"),
    case!("sub wraps", "(result i32)|i32.const -2147483648 i32.const 1 i32.sub", [], "result: 2147483647"),
    case!("mul", "(result i32)|i32.const 6 i32.const 7 i32.mul", [], "result: 42"),
    case!("mul wraps", "(result i32)|i32.const 0x10000 i32.const 0x10000 i32.mul", [], "result: 0"),
    case!("div_s truncates", "(result i32)|i32.const -7 i32.const 2 i32.div_s", [], "result: -3"),
    case!("div_s negative divisor", "(result i32)|i32.const 7 i32.const -2 i32.div_s", [], "result: -3"),
    case!("div_s by zero", "(result i32)|i32.const 1 i32.const 0 i32.div_s", [], "trap: div_by_zero"),
    case!("div_s overflow", "(result i32)|i32.const -2147483648 i32.const -1 i32.div_s", [], "trap: int_overflow"),
    case!("rem_s sign follows dividend", "(result i32)|i32.const -7 i32.const 2 i32.rem_s", [], "result: -1"),
    case!("rem_s positive dividend", "(result i32)|i32.const 7 i32.const -2 i32.rem_s", [], "result: 1"),
    case!("rem_s min by -1", "(result i32)|i32.const -2147483648 i32.const -1 i32.rem_s", [], "result: 0"),
    case!("rem_s by zero", "(result i32)|i32.const 5 i32.const 0 i32.rem_s", [], "trap: div_by_zero"),
    case!("and", "(result i32)|i32.const 12 i32.const 10 i32.and", [], "result: 8"),
    case!("or", "(result i32)|i32.const 12 i32.const 10 i32.or", [], "result: 14"),
    case!("xor", "(result i32)|i32.const 12 i32.const 10 i32.xor", [], "result: 6"),
    case!("shl", "(result i32)|i32.const 1 i32.const 3 i32.shl", [], "result: 8"),
    case!("shl masks count", "(result i32)|i32.const 1 i32.const 33 i32.shl", [], "result: 2"),
    case!("shl into sign bit", "(result i32)|i32.const 1 i32.const 31 i32.shl", [], "result: -2147483648"),
    case!("shr_u is logical", "(result i32)|i32.const -1 i32.const 28 i32.shr_u", [], "result: 15"),
    case!("shr_u masks count", "(result i32)|i32.const 16 i32.const 36 i32.shr_u", [], "result: 1"),
    case!("eq true", "(result i32)|i32.const 3 i32.const 3 i32.eq", [], "result: 1"),
    case!("eq false", "(result i32)|i32.const 3 i32.const 4 i32.eq", [], "result: 0"),
    case!("ne", "(result i32)|i32.const 3 i32.const 4 i32.ne", [], "result: 1"),
    case!("lt_s signed", "(result i32)|i32.const -1 i32.const 0 i32.lt_s", [], "result: 1"),
    case!("le_s equal", "(result i32)|i32.const 5 i32.const 5 i32.le_s", [], "result: 1"),
    case!("le_s greater", "(result i32)|i32.const 6 i32.const 5 i32.le_s", [], "result: 0"),
    case!("lt_u unsigned", "(result i32)|i32.const -1 i32.const 0 i32.lt_u", [], "result: 0"),
    case!("lt_u small", "(result i32)|i32.const 0 i32.const -1 i32.lt_u", [], "result: 1"),
    case!("eqz zero", "(result i32)|i32.const 0 i32.eqz", [], "result: 1"),
    case!("eqz nonzero", "(result i32)|i32.const 5 i32.eqz", [], "result: 0"),
    // parametric
    case!("drop", "(result i32)|i32.const 1 i32.const 2 drop", [], "result: 1"),
    case!("select first", "(result i32)|i32.const 10 i32.const 20 i32.const 1 select", [], "result: 10"),
    case!("select second", "(result i32)|i32.const 10 i32.const 20 i32.const 0 select", [], "result: 20"),
    // variables
    case!("param", "(param i32) (result i32)|local.get 0", [9], "result: 9"),
    case!("locals start at zero", "(result i32) (local i32)|local.get 0", [], "result: 0"),
    case!("local.set", "(result i32) (local i32)|i32.const 5 local.set 0 local.get 0", [], "result: 5"),
    case!("local.tee", "(result i32) (local i32)|i32.const 5 local.tee 0 local.get 0 i32.add", [], "result: 10"),
    case!("global.get", "(result i32)|global.get $c", [], "result: 10"),
    case!("global.set", "(result i32)|i32.const 4 global.set $m global.get $m", [], "result: 4"),
    // memory
    case!("memory starts zeroed", "(result i32)|i32.const 0 i32.load", [], "result: 0"),
    case!(
        "store then load",
        "(result i32)|i32.const 8 i32.const 0x01020304 i32.store i32.const 8 i32.load",
        [],
        "result: 16909060"
    ),
    case!(
        "little-endian bytes",
        "(result i32)|i32.const 8 i32.const 0x01020304 i32.store i32.const 9 i32.load",
        [],
        "result: 66051"
    ),
    case!("last word in bounds", "(result i32)|i32.const 65532 i32.load", [], "result: 0"),
    case!("load straddling the end", "(result i32)|i32.const 65533 i32.load", [], "trap: oob_memory"),
    case!("load at max address", "(result i32)|i32.const -1 i32.load", [], "trap: oob_memory"),
    case!("store out of bounds", "|i32.const 65536 i32.const 1 i32.store", [], "trap: oob_memory"),
    case!("memory.size", "(result i32)|memory.size", [], "result: 1"),
    case!("memory.grow returns old size", "(result i32)|i32.const 2 memory.grow", [], "result: 1"),
    case!("memory.grow then size", "(result i32)|i32.const 3 memory.grow drop memory.size", [], "result: 4"),
    case!("memory.grow past max", "(result i32)|i32.const 4 memory.grow", [], "result: -1"),
    case!("memory.grow huge delta", "(result i32)|i32.const -1 memory.grow", [], "result: -1"),
    case!(
        "grown memory is addressable",
        "(result i32)|i32.const 1 memory.grow drop i32.const 131068 i32.const 6 i32.store i32.const 131068 i32.load",
        [],
        "result: 6"
    ),
    // control
    case!("nop", "(result i32)|nop i32.const 1 nop", [], "result: 1"),
    case!("block result", "(result i32)|block (result i32) i32.const 3 end", [], "result: 3"),
    case!("empty block", "|block end", [], "result:"),
    case!(
        "br keeps only the label values",
        "(result i32)|block (result i32) i32.const 1 i32.const 2 br 0 end",
        [],
        "result: 2"
    ),
    case!(
        "br to outer block",
        "(result i32)|block (result i32) block i32.const 5 br 1 end i32.const 6 end",
        [],
        "result: 5"
    ),
    case!(
        "br to function label",
        "(result i32)|block i32.const 9 br 1 end i32.const 1",
        [],
        "result: 9"
    ),
    case!(
        "loop sums 1..10",
        "(result i32) (local i32) (local i32)|
          i32.const 10 local.set 0
          loop
            local.get 1 local.get 0 i32.add local.set 1
            local.get 0 i32.const 1 i32.sub local.tee 0
            br_if 0
          end
          local.get 1",
        [],
        "result: 55"
    ),
    case!("loop falls through with its result", "(result i32)|loop (result i32) i32.const 4 end", [], "result: 4"),
    case!("if then", "(param i32) (result i32)|local.get 0 if (result i32) i32.const 11 else i32.const 22 end", [1], "result: 11"),
    case!("if else", "(param i32) (result i32)|local.get 0 if (result i32) i32.const 11 else i32.const 22 end", [0], "result: 22"),
    case!("if without else", "(param i32) (result i32)|i32.const 3 local.get 0 if i32.const 4 drop end", [0], "result: 3"),
    case!(
        "br_if taken",
        "(result i32)|block (result i32) i32.const 7 i32.const 1 br_if 0 drop i32.const 8 end",
        [],
        "result: 7"
    ),
    case!(
        "br_if not taken",
        "(result i32)|block (result i32) i32.const 7 i32.const 0 br_if 0 drop i32.const 8 end",
        [],
        "result: 8"
    ),
    case!(
        "return from nested blocks",
        "(result i32)|block loop i32.const 1 i32.const 2 return end end i32.const 3",
        [],
        "result: 2"
    ),
    case!(
        "return from a callee",
        "(module (func $f (result i32) block i32.const 4 return end i32.const 0)
                 (func $main (export) (result i32) call $f i32.const 1 i32.add))",
        [],
        "result: 5"
    ),
    case!("unreachable", "(result i32)|unreachable", [], "trap: unreachable"),
    case!("infinite loop", "|loop br 0 end", [], "fuel exhausted"),
    // calls
    case!(
        "call",
        "(module (func $double (param i32) (result i32) local.get 0 local.get 0 i32.add)
                 (func $main (export) (result i32) i32.const 21 call $double))",
        [],
        "result: 42"
    ),
    case!(
        "call argument order",
        "(module (func $sub (param i32) (param i32) (result i32) local.get 0 local.get 1 i32.sub)
                 (func $main (export) (result i32) i32.const 10 i32.const 3 call $sub))",
        [],
        "result: 7"
    ),
    case!(
        "recursive factorial",
        "(module
           (func $main (export) (param i32) (result i32)
             local.get 0
             i32.eqz
             if (result i32)
               i32.const 1
             else
               local.get 0
               local.get 0 i32.const 1 i32.sub call $main
               i32.mul
             end))",
        [5],
        "result: 120"
    ),
    case!(
        "callee locals are fresh",
        "(module (func $f (result i32) (local i32) local.get 0 i32.const 1 i32.add local.tee 0)
                 (func $main (export) (result i32) call $f call $f i32.add))",
        [],
        "result: 2"
    ),
    case!(
        "unbounded recursion",
        "(module (func $main (export) call $main))",
        [],
        "trap: call_stack_exhausted"
    ),
    // exceptions
    case!(
        "caught",
        "(result i32)|try (result i32) i32.const 7 throw catch i32.const 1 i32.add end",
        [],
        "result: 8"
    ),
    case!("uncaught", "|i32.const 9 throw", [], "exception: 9"),
    case!(
        "throw discards the try's stack",
        "(result i32)|i32.const 100 try (result i32) i32.const 1 i32.const 2 i32.const 3 throw catch end i32.add",
        [],
        "result: 103"
    ),
    case!("try without throw", "(result i32)|try (result i32) i32.const 4 catch drop i32.const 5 end", [], "result: 4"),
    case!(
        "caught across frames",
        "(module (func $thrower (result i32) block loop i32.const 5 throw end end i32.const 0)
                 (func $main (export) (result i32) try (result i32) call $thrower catch i32.const 100 i32.add end))",
        [],
        "result: 105"
    ),
    case!(
        "uncaught across frames",
        "(module (func $thrower i32.const 5 throw) (func $main (export) (result i32) call $thrower i32.const 1))",
        [],
        "exception: 5"
    ),
    case!(
        "inner handler rethrows to outer",
        "(result i32)|try (result i32)
           try i32.const 1 throw catch i32.const 10 i32.add throw end
           i32.const 0
         catch i32.const 100 i32.add end",
        [],
        "result: 111"
    ),
    case!(
        "handler is outside its own try",
        "|try nop catch drop end try i32.const 2 throw catch throw end",
        [],
        "exception: 2"
    ),
    case!("traps are not caught", "|try unreachable catch drop end", [], "trap: unreachable"),
    case!(
        "callee trap is not caught",
        "(module (func $bad (result i32) i32.const 1 i32.const 0 i32.div_s)
                 (func $main (export) (result i32) try (result i32) call $bad catch end))",
        [],
        "trap: div_by_zero"
    ),
    case!(
        "br out of try",
        "(result i32)|block (result i32) try i32.const 3 br 1 catch drop end i32.const 4 end",
        [],
        "result: 3"
    ),
    case!(
        "br out of catch",
        "(result i32)|block (result i32) try i32.const 3 throw catch br 1 end i32.const 4 end",
        [],
        "result: 3"
    ),
];
