use lazycopy::runtime::{Config, Mode};
use lazycopy::trace::{format_trace, generate, run_model, run_plain, run_runtime, Pattern};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MODES: [Mode; 3] = [Mode::Eager, Mode::Lazy, Mode::LazySro];

fn check(seed: u64, pattern: Pattern) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ops = generate(&mut rng, pattern, 50, 20);
    let expected = run_plain(&ops);
    for mode in MODES {
        let run = run_runtime(&ops, Config::new(mode))
            .unwrap_or_else(|e| panic!("{mode:?} failed: {e}\n{}", format_trace(&ops)));
        assert_eq!(run.observations, expected, "{mode:?} seed {seed}\n{}", format_trace(&ops));
        // Cross references can close count cycles through label memos,
        // which counting cannot collect.
        if pattern == Pattern::Tree {
            assert!(run.balanced, "{mode:?} leaked, seed {seed}\n{}", format_trace(&ops));
        }
        assert_eq!(run.canary_violations, 0);
    }
    let model = run_model(&ops).unwrap_or_else(|e| panic!("model failed: {e}\n{}", format_trace(&ops)));
    assert_eq!(model, expected, "model seed {seed}\n{}", format_trace(&ops));
}

#[test]
fn tree_pattern_traces_agree() {
    for seed in 0..2000 {
        check(seed, Pattern::Tree);
    }
}

#[test]
fn mixed_traces_agree() {
    for seed in 0..2000 {
        check(10_000 + seed, Pattern::Mixed);
    }
}

#[test]
fn mixed_leaks_are_rare() {
    let mut leaks = 0;
    for seed in 0..1000 {
        let mut rng = ChaCha8Rng::seed_from_u64(20_000 + seed);
        let ops = generate(&mut rng, Pattern::Mixed, 50, 20);
        leaks += !run_runtime(&ops, Config::new(Mode::Lazy)).unwrap().balanced as usize;
    }
    eprintln!("mixed traces with uncollected memo cycles: {leaks}/1000");
    assert!(leaks < 250);
}

#[test]
fn sro_never_adds_memo_inserts_on_tree_traces() {
    let mut fewer = 0;
    for seed in 0..500 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ops = generate(&mut rng, Pattern::Tree, 50, 20);
        let lazy = run_runtime(&ops, Config::new(Mode::Lazy)).unwrap();
        let sro = run_runtime(&ops, Config::new(Mode::LazySro)).unwrap();
        assert!(sro.memo_inserts <= lazy.memo_inserts, "seed {seed}\n{}", format_trace(&ops));
        fewer += (sro.memo_inserts < lazy.memo_inserts) as usize;
    }
    assert!(fewer > 0);
}
