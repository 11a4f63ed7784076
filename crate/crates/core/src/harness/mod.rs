//! Well-typed program generation and soundness fuzzing.

mod fuzz;
mod gen;
mod mutate;
mod rng;

pub use fuzz::{features_for, fuzz_case, fuzz_seeds, fuzz_soundness, outcome_key, FuzzReport, FUZZ_MAX_PAGES};
pub use gen::{count_variants, gen_module, variant_name, GenConfig, ENTRY_NAME, INSTR_VARIANTS};
pub use mutate::{mutate, MutationKind};
pub use rng::Rng;
