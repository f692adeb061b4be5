use lazycopy::runtime::Mode;
use lazycopy::workloads::{run_filter, unique_ancestors, FilterConfig, Resampling, Workload};

const MODES: [Mode; 3] = [Mode::Eager, Mode::Lazy, Mode::LazySro];

#[test]
fn digests_match_across_configurations() {
    for workload in Workload::ALL {
        for seed in 1..=3 {
            let digests: Vec<u64> = MODES
                .iter()
                .map(|&m| {
                    let run = run_filter(&FilterConfig::new(workload, m, 4, 3, seed)).unwrap();
                    assert!(run.leak_free(), "{workload} {m} leaked:\n{}", run.ledger);
                    run.digest
                })
                .collect();
            assert!(digests.iter().all(|d| *d == digests[0]), "{workload} seed {seed}: {digests:?}");
        }
    }
}

#[test]
fn larger_runs_match_and_free_everything() {
    for workload in Workload::ALL {
        let runs: Vec<_> = MODES.iter().map(|&m| run_filter(&FilterConfig::new(workload, m, 32, 40, 7)).unwrap()).collect();
        for r in &runs {
            assert_eq!(r.digest, runs[0].digest, "{workload}");
            assert!(r.leak_free(), "{workload}:\n{}", r.ledger);
        }
    }
}

#[test]
fn single_particle_lazy_chain_copies_nothing() {
    let run = run_filter(&FilterConfig::new(Workload::Chain, Mode::Lazy, 1, 5, 3)).unwrap();
    assert_eq!(run.total_copies, 0);
    assert_eq!(run.generations.last().unwrap().unique_reachable, 5);
    let eager = run_filter(&FilterConfig::new(Workload::Chain, Mode::Eager, 1, 5, 3)).unwrap();
    assert_eq!(eager.total_copies, 1 + 2 + 3 + 4);
}

#[test]
fn lazy_chain_keeps_exactly_the_surviving_lineages() {
    let cfg = FilterConfig::new(Workload::Chain, Mode::Lazy, 16, 30, 11);
    let run = run_filter(&cfg).unwrap();
    // After generation t, the reachable nodes are those created on lineages
    // that the generation-t population descends from.
    for t in 1..=cfg.generations {
        let counts = unique_ancestors(&run.ancestry[..t - 1], cfg.particles);
        let expected: usize = counts.iter().sum();
        assert_eq!(run.generations[t - 1].unique_reachable, expected as u64, "t = {t}");
    }
}

#[test]
fn eager_chain_stores_every_node() {
    let run = run_filter(&FilterConfig::new(Workload::Chain, Mode::Eager, 8, 12, 2)).unwrap();
    for g in &run.generations {
        assert_eq!(g.unique_reachable, (8 * g.t) as u64);
    }
}

#[test]
fn ancestor_counts_only_shrink_backwards() {
    let run = run_filter(&FilterConfig::new(Workload::Tree, Mode::Lazy, 32, 50, 5)).unwrap();
    let counts = unique_ancestors(&run.ancestry, 32);
    assert_eq!(counts.len(), 50);
    assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{counts:?}");
    assert_eq!(*counts.last().unwrap(), 32);
}

#[test]
fn lazy_copies_fewer_payloads_than_eager() {
    for workload in Workload::ALL {
        let eager = run_filter(&FilterConfig::new(workload, Mode::Eager, 16, 20, 4)).unwrap();
        let lazy = run_filter(&FilterConfig::new(workload, Mode::Lazy, 16, 20, 4)).unwrap();
        assert!(lazy.total_copies < eager.total_copies, "{workload}: {} vs {}", lazy.total_copies, eager.total_copies);
    }
}

#[test]
fn systematic_resampling_also_matches() {
    let digests: Vec<u64> = MODES
        .iter()
        .map(|&m| {
            let mut cfg = FilterConfig::new(Workload::Chain, m, 16, 20, 9);
            cfg.resampling = Resampling::Systematic;
            run_filter(&cfg).unwrap().digest
        })
        .collect();
    assert!(digests.iter().all(|d| *d == digests[0]));
}

#[test]
fn reruns_are_deterministic() {
    let cfg = FilterConfig::new(Workload::ChainMutate, Mode::LazySro, 8, 10, 21);
    let a = run_filter(&cfg).unwrap();
    let b = run_filter(&cfg).unwrap();
    assert_eq!(a.digest, b.digest);
    let strip = |r: &lazycopy::workloads::FilterRun| r.generations.iter().map(|g| (g.copies, g.live_objects, g.unique_reachable)).collect::<Vec<_>>();
    assert_eq!(strip(&a), strip(&b));
}
