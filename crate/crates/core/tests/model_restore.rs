use lazycopy::model::{labels_from_h, restore_f, restore_f_with};
use lazycopy::trace::{format_trace, generate, plain_state, replay_model, Pattern};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check(seed: u64, pattern: Pattern) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ops = generate(&mut rng, pattern, 40, 12);
    let (h, _) = replay_model(&ops).unwrap();
    let expected = plain_state(&ops).to_graph().canonical_form(false);
    let g = labels_from_h(&h).unwrap_or_else(|e| panic!("seed {seed}: {e}\n{}", format_trace(&ops)));
    let f = restore_f(&g, 10_000).unwrap_or_else(|e| panic!("seed {seed}: {e}\n{}", format_trace(&ops)));
    assert_eq!(f.canonical_form(false), expected, "seed {seed}\n{}", format_trace(&ops));
    let mut pick = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
    let shuffled = restore_f_with(&g, 10_000, |es| es[pick.gen_range(0..es.len())]).unwrap();
    assert_eq!(shuffled.canonical_form(false), expected, "seed {seed} (random order)\n{}", format_trace(&ops));
}

#[test]
fn restored_tree_traces_match_eager_state() {
    for seed in 0..500 {
        check(seed, Pattern::Tree);
    }
}

#[test]
fn restored_mixed_traces_match_eager_state() {
    for seed in 0..500 {
        check(50_000 + seed, Pattern::Mixed);
    }
}
