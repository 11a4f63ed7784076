use proptest::prelude::*;
use wasmlite_core::alloc_corpus::*;
use wasmlite_core::interp::{ExecOptions, Outcome, Value};

fn malloc(inst: &mut wasmlite_core::Instance, size: u32) -> u32 {
    match inst.invoke("malloc", &[Value::from_u32(size)], ExecOptions::default()).unwrap() {
        Outcome::Returned(v) => v[0].as_u32(),
        other => panic!("malloc({size}): {other}"),
    }
}

fn free(inst: &mut wasmlite_core::Instance, addr: u32) {
    let out = inst.invoke("free", &[Value::from_u32(addr)], ExecOptions::default()).unwrap();
    assert_eq!(out, Outcome::Returned(vec![]));
}

/// Layout model: heap base 8, 4-byte headers, sizes rounded to 4, so the
/// first payload sits at 8 + 4 and the k-th fresh block follows the
/// previous one.
fn fresh_addresses(sizes: &[u32]) -> Vec<u32> {
    let mut brk = 8;
    sizes
        .iter()
        .map(|s| {
            let addr = brk + 4;
            brk += s.div_ceil(4) * 4 + 4;
            addr
        })
        .collect()
}

#[test]
fn first_malloc_of_16_returns_12() {
    let mut inst = load_allocator(16).unwrap();
    assert_eq!(malloc(&mut inst, 16), 12);
    // header: 16 bytes + 4, allocated bit set
    assert_eq!(inst.store().load(8), Some(Value(21)));
}

#[test]
fn consecutive_mallocs_follow_the_layout() {
    let sizes = [16, 1, 3, 4, 5, 100];
    let mut inst = load_allocator(16).unwrap();
    let got: Vec<u32> = sizes.iter().map(|&s| malloc(&mut inst, s)).collect();
    assert_eq!(got, fresh_addresses(&sizes));
}

#[test]
fn malloc_zero_is_null() {
    let mut inst = load_allocator(16).unwrap();
    assert_eq!(malloc(&mut inst, 0), 0);
    assert_eq!(malloc(&mut inst, 4), 12);
}

#[test]
fn huge_requests_fail_cleanly() {
    let mut inst = load_allocator(2).unwrap();
    assert_eq!(malloc(&mut inst, u32::MAX), 0);
    assert_eq!(malloc(&mut inst, 0x7FFF_FFF4), 0);
    assert_eq!(malloc(&mut inst, 200_000), 0);
    assert_eq!(malloc(&mut inst, 8), 12);
}

#[test]
fn freed_block_is_reused() {
    let mut inst = load_allocator(16).unwrap();
    let a = malloc(&mut inst, 16);
    let b = malloc(&mut inst, 16);
    free(&mut inst, a);
    assert_eq!(malloc(&mut inst, 8), a, "first fit takes the freed block");
    // 20-byte block, 12 needed: the 8-byte remainder is split off
    assert_eq!(inst.store().load(a - 4), Some(Value(13)));
    assert_eq!(inst.store().load(a + 8), Some(Value(8)));
    assert_eq!(malloc(&mut inst, 4), a + 12);
    assert!(b > a);
}

#[test]
fn small_remainder_is_not_split() {
    let mut inst = load_allocator(16).unwrap();
    let a = malloc(&mut inst, 16);
    let _guard = malloc(&mut inst, 4);
    free(&mut inst, a);
    assert_eq!(malloc(&mut inst, 12), a);
    // 20 - 16 = 4 < 8: the whole block is taken
    assert_eq!(inst.store().load(a - 4), Some(Value(21)));
}

#[test]
fn free_merges_with_the_next_free_block() {
    let mut inst = load_allocator(16).unwrap();
    let a = malloc(&mut inst, 8);
    let b = malloc(&mut inst, 8);
    let _c = malloc(&mut inst, 8);
    free(&mut inst, b);
    free(&mut inst, a);
    assert_eq!(inst.store().load(a - 4), Some(Value(24)));
    assert_eq!(malloc(&mut inst, 20), a);
}

#[test]
fn free_of_null_is_a_no_op() {
    let mut inst = load_allocator(16).unwrap();
    let before = inst.store().clone();
    free(&mut inst, 0);
    assert!(*inst.store() == before);
}

#[test]
fn heap_grows_memory_a_page_at_a_time() {
    let mut inst = load_allocator(4).unwrap();
    let a = malloc(&mut inst, 70_000);
    assert_eq!(a, 12);
    assert_eq!(inst.store().page_count(), 2);
    assert_eq!(malloc(&mut inst, 200_000), 0, "would need more than 4 pages");
    assert_eq!(inst.store().page_count(), 4, "pages grown before failing stay grown");
}

#[test]
fn script_checks() {
    let ok = AllocScript {
        ops: vec![
            AllocOp::Malloc { size: 4, id: "a".into() },
            AllocOp::Free { id: "a".into() },
        ],
    };
    assert_eq!(ok.check(), Ok(()));
    let dup = AllocScript {
        ops: vec![
            AllocOp::Malloc { size: 4, id: "a".into() },
            AllocOp::Malloc { size: 4, id: "a".into() },
        ],
    };
    assert!(matches!(dup.check(), Err(ScriptError::DuplicateId { op: 1, .. })));
    let double_free = AllocScript {
        ops: vec![
            AllocOp::Malloc { size: 4, id: "a".into() },
            AllocOp::Free { id: "a".into() },
            AllocOp::Free { id: "a".into() },
        ],
    };
    assert!(matches!(double_free.check(), Err(ScriptError::FreeOfUnknownId { op: 2, .. })));
}

#[test]
fn generated_scripts_are_valid_and_reproducible() {
    for seed in 0..50 {
        let s = gen_alloc_script(seed, 300, 1..=256, 0.4);
        assert_eq!(s.ops.len(), 300);
        assert_eq!(s.check(), Ok(()));
        assert_eq!(s, gen_alloc_script(seed, 300, 1..=256, 0.4));
        for op in &s.ops {
            if let AllocOp::Malloc { size, .. } = op {
                assert!((1..=256).contains(size));
            }
        }
    }
}

#[test]
fn shadow_heap_overlap() {
    let mut s = ShadowHeap::default();
    s.insert("a".into(), 12, 8);
    assert!(s.overlaps(12, 1));
    assert!(s.overlaps(16, 8));
    assert!(s.overlaps(4, 9));
    assert!(!s.overlaps(20, 4));
    assert!(!s.overlaps(4, 8));
    s.remove("a");
    assert!(!s.overlaps(12, 8));
}

#[test]
fn checker_catches_a_broken_allocator() {
    // free does nothing, so the header walk sees blocks the model
    // believes are gone
    let leaky = ALLOCATOR_SOURCE.replace(
        "  (func $free (export) (param i32) (local i32) (local i32) (local i32)\n    local.get 0\n    i32.eqz\n    if\n      return\n    end",
        "  (func $free (export) (param i32) (local i32) (local i32) (local i32)\n    return",
    );
    assert_ne!(leaky, ALLOCATOR_SOURCE);
    let mut inst = load_allocator_from(&leaky, 16).unwrap();
    let report = run_script(&mut inst, &gen_alloc_script(1, 50, 1..=64, 0.4));
    assert!(report.violations.iter().any(|(_, v)| *v == "free_clears_bit"), "{:?}", report.violations);

    // malloc hands out the same block twice
    let overlapping = ALLOCATOR_SOURCE.replace(
        "    global.get $brk\n    local.get 1\n    i32.add\n    global.set $brk\n",
        "",
    );
    assert_ne!(overlapping, ALLOCATOR_SOURCE);
    let mut inst = load_allocator_from(&overlapping, 16).unwrap();
    let report = run_script(&mut inst, &gen_alloc_script(2, 20, 1..=64, 0.0));
    assert!(report.violations.iter().any(|(_, v)| *v == "disjointness"), "{:?}", report.violations);
}

#[test]
fn stress_scripts_pass() {
    for seed in 0..20 {
        let mut inst = load_allocator(16).unwrap();
        let report = run_script(&mut inst, &gen_alloc_script(seed, 1_000, 1..=256, 0.4));
        assert!(report.passed(), "seed {seed}: {:?}", &report.violations[..report.violations.len().min(5)]);
        assert!(report.peak_heap > 8);
    }
}

#[test]
fn results_match_the_fresh_layout_without_frees() {
    let script = gen_alloc_script(3, 200, 1..=256, 0.0);
    let sizes: Vec<u32> = script
        .ops
        .iter()
        .map(|op| match op {
            AllocOp::Malloc { size, .. } => *size,
            AllocOp::Free { .. } => unreachable!(),
        })
        .collect();
    let mut inst = load_allocator(16).unwrap();
    let report = run_script(&mut inst, &script);
    assert!(report.passed());
    assert_eq!(report.results, fresh_addresses(&sizes));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_scripts_keep_every_invariant(seed: u64, n in 1usize..300, max in 1u32..2_000, p in 0.0f64..0.9) {
        let mut inst = load_allocator(8).unwrap();
        let report = run_script(&mut inst, &gen_alloc_script(seed, n, 1..=max, p));
        prop_assert!(report.passed(), "{:?}", report.violations);
    }
}

fn script(ops: &[(&str, u32, &str)]) -> AllocScript {
    AllocScript {
        ops: ops
            .iter()
            .map(|&(op, size, id)| match op {
                "malloc" => AllocOp::Malloc { size, id: id.into() },
                _ => AllocOp::Free { id: id.into() },
            })
            .collect(),
    }
}

#[test]
fn small_script_against_the_model() {
    let s = script(&[("malloc", 16, "a"), ("malloc", 32, "b"), ("free", 0, "a"), ("malloc", 8, "c")]);
    let mut inst = load_allocator(16).unwrap();
    let report = run_script(&mut inst, &s);
    assert!(report.passed(), "{:?}", report.violations);
    // a: [8, 28), b: [28, 64); c reuses a's block and splits it
    assert_eq!(report.results, vec![12, 32, 0, 12]);
    assert_eq!(report.peak_heap, 64);
}

#[test]
fn same_size_reuse() {
    let s = script(&[("malloc", 16, "a"), ("free", 0, "a"), ("malloc", 16, "b")]);
    let report = run_script(&mut load_allocator(16).unwrap(), &s);
    assert!(report.passed());
    assert_eq!(report.results[0], report.results[2]);
}

#[test]
fn zero_size_script() {
    let report = run_script(&mut load_allocator(16).unwrap(), &script(&[("malloc", 0, "a")]));
    assert!(report.passed());
    assert_eq!(report.results, vec![0]);
}

#[test]
fn seed_42_thousand_ops() {
    let report = run_script(&mut load_allocator(16).unwrap(), &gen_alloc_script(42, 1_000, 1..=256, 0.4));
    assert!(report.passed(), "{:?}", report.violations);
}

#[test]
fn no_frees_without_free_probability() {
    let s = gen_alloc_script(1, 5, 1..=256, 0.0);
    assert!(s.ops.iter().all(|op| matches!(op, AllocOp::Malloc { .. })));
    assert_eq!(s, gen_alloc_script(1, 5, 1..=256, 0.0));
}
