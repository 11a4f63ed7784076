use proptest::prelude::*;
use wasmlite::script::{parse_script, print_script, render_alloc_report};
use wasmlite::fuzz_parallel;
use wasmlite_core::alloc_corpus::{gen_alloc_script, AllocOp, AllocReport, AllocScript};
use wasmlite_core::harness::{fuzz_seeds, GenConfig};
use wasmlite_core::validator::Mutation;

#[test]
fn parses_ops_comments_and_hex() {
    let s = parse_script("; header\n\nmalloc 16 a ; trailing\n  free a\nmalloc 0x20 b\n").unwrap();
    assert_eq!(
        s.ops,
        vec![
            AllocOp::Malloc { size: 16, id: "a".into() },
            AllocOp::Free { id: "a".into() },
            AllocOp::Malloc { size: 32, id: "b".into() },
        ]
    );
}

#[test]
fn reports_the_failing_line() {
    for (text, line) in [
        ("malloc 4 a\nmalloc a\n", 2),
        ("free\n", 1),
        ("malloc -1 a\n", 1),
        ("malloc 4294967296 a\n", 1),
        ("\n\nfree a b\n", 3),
        ("grow 1\n", 1),
    ] {
        assert_eq!(parse_script(text).unwrap_err().line, line, "{text:?}");
    }
}

#[test]
fn report_rendering() {
    let script = parse_script("malloc 16 a\nfree a\n").unwrap();
    let report = AllocReport {
        results: vec![12, 0],
        violations: vec![],
        peak_heap: 28,
    };
    assert_eq!(
        render_alloc_report(&script, &report),
        "malloc 16 a -> 12\nfree a\nops=2 violations=0 peak_heap=28\n"
    );
}

#[test]
fn parallel_fuzz_matches_sequential() {
    let cfg = GenConfig::default().with_seed(1_000);
    // not a multiple of the chunk size, to exercise the ragged tail
    let n = 700;
    assert_eq!(fuzz_parallel(n, &cfg, None), fuzz_seeds(1_000..1_700, &cfg, None));
    let broken = Some(Mutation::SkipBrDepthCheck);
    let par = fuzz_parallel(2_000, &GenConfig::default(), broken);
    assert_eq!(par, fuzz_seeds(0..2_000, &GenConfig::default(), broken));
    assert!(!par.passed());
}

fn id() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9_.$-]{1,8}"
}

fn op() -> impl Strategy<Value = AllocOp> {
    prop_oneof![
        (any::<u32>(), id()).prop_map(|(size, id)| AllocOp::Malloc { size, id }),
        id().prop_map(|id| AllocOp::Free { id }),
    ]
}

proptest! {
    #[test]
    fn print_then_parse_is_identity(ops in prop::collection::vec(op(), 0..40)) {
        let script = AllocScript { ops };
        prop_assert_eq!(parse_script(&print_script(&script)).unwrap(), script);
    }

    #[test]
    fn generated_scripts_survive_the_file_format(seed: u64, n in 0usize..200) {
        let script = gen_alloc_script(seed, n, 1..=256, 0.4);
        prop_assert_eq!(parse_script(&print_script(&script)).unwrap(), script);
    }
}
