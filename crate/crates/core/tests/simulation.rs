//! Closed-loop simulation properties over several synthetic instances.

use flowdesign::harness::{
    load_network, load_trace, run_simulation_with, ExperimentConfig, MuMode, RunScheme, TopologySource, TraceSpec,
};
use flowdesign::network::{BudgetMode, SynthKind, SynthParams};

fn config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(TopologySource::Synth {
        params: SynthParams::new(SynthKind::Grid { rows: 3, cols: 3 }),
        seed,
    });
    cfg.trace = TraceSpec::RandomWalk { seed: 1000 + seed, floor: 1.0 };
    cfg.horizon = 100;
    cfg.block_size = 1;
    cfg.replications = 20;
    cfg.seed = seed;
    cfg.mu_mode = MuMode::Plugin;
    cfg
}

#[test]
fn time_varying_myopic_beats_naive_in_most_seeds() {
    let seeds = 0..7u64;
    let mut wins = 0;
    for seed in seeds.clone() {
        let mut cfg = config(seed);
        let mm = load_network(&cfg).unwrap();
        let trace = load_trace(&cfg, &mm).unwrap();
        cfg.scheme = RunScheme::Myopic;
        let myopic = run_simulation_with(&mm, &trace, &cfg).unwrap();
        cfg.scheme = RunScheme::Naive;
        let naive = run_simulation_with(&mm, &trace, &cfg).unwrap();
        if myopic.median_max_mse < naive.median_max_mse {
            wins += 1;
        }
    }
    assert!(2 * wins > seeds.count(), "myopic won {wins} seeds");
}

#[test]
fn emitted_rates_respect_budgets_and_blocks() {
    for mode in [BudgetMode::Inequality, BudgetMode::EqualityWithZeroing] {
        let mut cfg = config(3);
        cfg.scheme = RunScheme::SteadyState;
        cfg.block_size = 25;
        cfg.replications = 2;
        cfg.constraint_mode = mode;
        let mm = load_network(&cfg).unwrap();
        let trace = load_trace(&cfg, &mm).unwrap();
        let s = run_simulation_with(&mm, &trace, &cfg).unwrap();
        assert_eq!(s.rates.len(), 4);
        for r in &s.rates {
            assert_eq!((r.start - 1) % cfg.block_size, 0);
            for (j, row) in (0..mm.r.nrows()).map(|j| (j, mm.r.row(j))) {
                let used: f64 = row.iter().zip(&r.xi).map(|(a, x)| a * x).sum();
                let carries = mm.traversal[j].iter().any(|t| *t);
                match mode {
                    BudgetMode::EqualityWithZeroing if carries => assert!((used - mm.b[j]).abs() <= 1e-8),
                    _ => assert!(used <= mm.b[j] + 1e-8),
                }
            }
            if mode == BudgetMode::EqualityWithZeroing {
                for (k, used) in mm.op_is_traversed().iter().enumerate() {
                    if !used {
                        assert_eq!(r.xi[k], 0.0);
                    }
                }
            }
        }
        // Within a block, the rates in force never change.
        for t in 1..=cfg.horizon {
            let block_start = (t - 1) / cfg.block_size * cfg.block_size + 1;
            assert_eq!(s.rates_at(t), s.rates_at(block_start));
        }
    }
}
