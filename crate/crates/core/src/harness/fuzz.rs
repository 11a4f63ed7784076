//! Differential soundness fuzzing.
//!
//! Each case generates a module, validates it, and runs its entry function
//! twice: once through [`Instance::invoke`] with invariant checks on and once
//! through [`Instance::trace`]. Any internal error, any disagreement between
//! the two runs, or a generated module the validator rejects is an assertion
//! failure. Each case also derives one mutant; if the validator accepts it,
//! it runs with invariant checks as well.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use super::gen::{gen_module, GenConfig, ENTRY_NAME};
use super::mutate::mutate;
use super::rng::Rng;
use crate::interp::{instantiate, ExecOptions, Instance, InvokeError, Outcome, Value};
use crate::syntax::ModuleAst;
use crate::validator::{Features, Mutation, ValidatedModule, Validator};

/// Linear memory limit for fuzzed instances.
pub const FUZZ_MAX_PAGES: u32 = 2;
const MUTANT_SALT: u64 = 0x6d75_7461_6e74_2121;

/// Histogram key for an outcome.
pub fn outcome_key(outcome: &Outcome) -> String {
    match outcome {
        Outcome::Returned(_) => String::from("returned"),
        Outcome::Trap(kind) => format!("trap:{}", kind.as_str()),
        Outcome::UncaughtException(_) => String::from("uncaught_exception"),
        Outcome::FuelExhausted => String::from("fuel_exhausted"),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FuzzReport {
    pub cases_run: u64,
    /// Generated modules the validator accepted.
    pub validated: u64,
    /// Outcome key -> count; only keys that occurred.
    pub histogram: BTreeMap<String, u64>,
    pub mutants_accepted: u64,
    pub mutants_rejected: u64,
    /// (seed, diagnostic), sorted by seed.
    pub assertion_failures: Vec<(u64, String)>,
}

impl FuzzReport {
    pub fn passed(&self) -> bool {
        self.assertion_failures.is_empty()
    }

    /// Associative and commutative up to failure order, which is restored
    /// by sorting on seed.
    pub fn merge(mut self, other: FuzzReport) -> FuzzReport {
        self.cases_run += other.cases_run;
        self.validated += other.validated;
        for (k, v) in other.histogram {
            *self.histogram.entry(k).or_insert(0) += v;
        }
        self.mutants_accepted += other.mutants_accepted;
        self.mutants_rejected += other.mutants_rejected;
        self.assertion_failures.extend(other.assertion_failures);
        self.assertion_failures.sort_by_key(|(seed, _)| *seed);
        self
    }

    /// `key=value` lines, one per field; histogram entries become
    /// `outcome.<key>=<count>` and failures `failure.<i>=<seed> <diag>`.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: &dyn fmt::Display| out.push_str(&format!("{k}={v}\n"));
        line("cases_run", &self.cases_run);
        line("validated", &self.validated);
        for (k, v) in &self.histogram {
            line(&format!("outcome.{k}"), v);
        }
        line("mutants_accepted", &self.mutants_accepted);
        line("mutants_rejected", &self.mutants_rejected);
        line("assertion_failures", &self.assertion_failures.len());
        for (i, (seed, diag)) in self.assertion_failures.iter().enumerate() {
            line(&format!("failure.{i}"), &format_args!("{seed} {}", diag.replace('\n', " ")));
        }
        out
    }
}

impl fmt::Display for FuzzReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "cases run:          {}", self.cases_run)?;
        writeln!(f, "validated:          {}", self.validated)?;
        writeln!(f, "outcomes:")?;
        for (k, v) in &self.histogram {
            writeln!(f, "  {k:<26} {v}")?;
        }
        writeln!(
            f,
            "mutants:            {} accepted, {} rejected",
            self.mutants_accepted, self.mutants_rejected
        )?;
        writeln!(f, "assertion failures: {}", self.assertion_failures.len())?;
        for (seed, diag) in &self.assertion_failures {
            writeln!(f, "  seed {seed}: {diag}")?;
        }
        Ok(())
    }
}

/// Runs cases for seeds `cfg.seed .. cfg.seed + n`.
pub fn fuzz_soundness(n: u64, cfg: &GenConfig) -> FuzzReport {
    fuzz_seeds(cfg.seed..cfg.seed.wrapping_add(n), cfg, None)
}

/// Runs one case per seed in `seeds`, validating with `mutation` applied.
pub fn fuzz_seeds(seeds: Range<u64>, cfg: &GenConfig, mutation: Option<Mutation>) -> FuzzReport {
    let validator = Validator::new(features_for(cfg)).with_mutation(mutation);
    seeds.fold(FuzzReport::default(), |acc, seed| {
        acc.merge(fuzz_case(seed, cfg, &validator))
    })
}

pub fn features_for(cfg: &GenConfig) -> Features {
    Features {
        exceptions: cfg.enable_exceptions,
    }
}

/// One fuzz case for `seed`, reported as a single-case [`FuzzReport`].
pub fn fuzz_case(seed: u64, cfg: &GenConfig, validator: &Validator) -> FuzzReport {
    let mut report = FuzzReport {
        cases_run: 1,
        ..FuzzReport::default()
    };
    let case_cfg = cfg.with_seed(seed);
    let module = gen_module(&case_cfg);
    match validator.validate(&module) {
        Ok(validated) => {
            report.validated = 1;
            match differential_run(validated, cfg.fuel) {
                Ok(outcome) => {
                    report.histogram.insert(outcome_key(&outcome), 1);
                }
                Err(diag) => report.assertion_failures.push((seed, diag)),
            }
        }
        Err(errors) => {
            let first = errors.first().map(ToString::to_string).unwrap_or_default();
            report
                .assertion_failures
                .push((seed, format!("generated module rejected: {first}")));
        }
    }

    let mut rng = Rng::new(seed ^ MUTANT_SALT);
    if let Some((mutant, kind)) = mutate(&module, &mut rng) {
        match validator.validate(&mutant) {
            Ok(validated) => {
                report.mutants_accepted = 1;
                if let Err(diag) = checked_run(validated, cfg.fuel) {
                    report
                        .assertion_failures
                        .push((seed, format!("mutant ({}): {diag}", kind.as_str())));
                }
            }
            Err(_) => report.mutants_rejected = 1,
        }
    }
    report
}

fn entry_args(module: &ModuleAst) -> Vec<Value> {
    let params = module
        .funcs
        .iter()
        .find(|f| f.exported && f.name == ENTRY_NAME)
        .map_or(0, |f| f.ty.params.len());
    vec![Value::ZERO; params]
}

fn options(fuel: u64) -> ExecOptions {
    ExecOptions::default().with_fuel(Some(fuel)).checked()
}

fn instance(module: ValidatedModule) -> Result<Instance, String> {
    instantiate(module, FUZZ_MAX_PAGES).map_err(|e| format!("instantiate: {e}"))
}

fn describe(e: InvokeError) -> String {
    match e {
        InvokeError::Internal(e) => e.to_string(),
        other => format!("invoke: {other}"),
    }
}

/// Runs the entry function through both drivers and compares them.
fn differential_run(module: ValidatedModule, fuel: u64) -> Result<Outcome, String> {
    let args = entry_args(module.ast());
    let mut a = instance(module)?;
    let mut b = a.clone();
    let stepped = a.invoke(ENTRY_NAME, &args, options(fuel)).map_err(describe)?;
    let (traced, _) = b.trace(ENTRY_NAME, &args, fuel, options(fuel)).map_err(describe)?;
    if stepped != traced {
        return Err(format!("invoke gave `{stepped}` but trace gave `{traced}`"));
    }
    if a.store() != b.store() {
        return Err(String::from("invoke and trace left different stores"));
    }
    Ok(stepped)
}

fn checked_run(module: ValidatedModule, fuel: u64) -> Result<Outcome, String> {
    let args = entry_args(module.ast());
    let mut inst = instance(module)?;
    inst.invoke(ENTRY_NAME, &args, options(fuel)).map_err(describe)
}
