use std::sync::Arc;

use proptest::prelude::*;

use rvlin::enforce::{inner_by_name, star_sim, WrapperConfig};
use rvlin::history::equivalent;
use rvlin::membership::is_linearizable;
use rvlin::sim::{Engine, Layer, RecordedExecution, Schedule};
use rvlin::spec::{by_name, CATALOG};
use rvlin::views::{
    build_history, build_history_with, check_returned_views, lambda_of, tighten, validate_views, visible_part, BlockOrder,
};
use rvlin::workload::RandomOps;

fn star_run(name: &str, inner: &str, seed: u64, procs: usize, engine: Engine, bounded: bool) -> RecordedExecution {
    let spec = by_name(name).unwrap();
    let inner = inner_by_name(inner, &spec, seed).unwrap();
    let config = WrapperConfig { engine, bounded };
    let mut sim = star_sim(procs, config, inner, Box::new(RandomOps::new(name, seed)));
    let weights = (0..procs).map(|i| 1 + ((seed >> i) % 4) as u32).collect();
    sim.run(&Schedule::bursty(seed, weights, 1 + (seed % 7) as u32), 200);
    sim.into_log()
}

fn engine() -> impl Strategy<Value = Engine> {
    prop_oneof![Just(Engine::Atomic), Just(Engine::Algorithmic)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn views_satisfy_their_properties(
        name in prop::sample::select(CATALOG.to_vec()),
        inner in prop::sample::select(vec!["correct", "flaky:0.3"]),
        seed: u64,
        procs in 1usize..5,
        engine in engine(),
        bounded: bool,
    ) {
        let log = star_run(name, inner, seed, procs, engine, bounded);
        prop_assert!(check_returned_views(&log).is_ok());
        let lambda = lambda_of(&log).unwrap();
        prop_assert!(validate_views(&lambda).is_ok());
    }

    #[test]
    fn rebuilt_history_matches_tight_history(
        name in prop::sample::select(CATALOG.to_vec()),
        seed: u64,
        procs in 1usize..5,
        engine in engine(),
    ) {
        let log = star_run(name, "flaky:0.2", seed, procs, engine, false);
        let lambda = lambda_of(&log).unwrap();
        let tight = visible_part(&tighten(&log).unwrap(), &lambda);
        let rebuilt = build_history(&lambda).unwrap();
        prop_assert!(equivalent(&rebuilt, &tight));
        prop_assert_eq!(rebuilt.prec_pairs(), tight.prec_pairs());
        let shuffled = build_history_with(&lambda, BlockOrder::Shuffled(seed)).unwrap();
        prop_assert!(equivalent(&rebuilt, &shuffled));
        prop_assert_eq!(rebuilt.prec_pairs(), shuffled.prec_pairs());
    }

    #[test]
    fn membership_chain(
        name in prop::sample::select(CATALOG.to_vec()),
        inner in prop::sample::select(vec!["correct", "flaky:0.3"]),
        seed: u64,
        procs in 1usize..4,
    ) {
        let spec = by_name(name).unwrap();
        let log = star_run(name, inner, seed, procs, Engine::Algorithmic, false);
        let member = |h: &rvlin::History| is_linearizable(h, spec.as_ref()).is_ok();
        let inner_ok = member(&log.history(Layer::Inner).unwrap());
        let tight_ok = member(&tighten(&log).unwrap());
        let star_ok = member(&log.history(Layer::Star).unwrap());
        prop_assert!(!inner_ok || tight_ok);
        prop_assert!(!tight_ok || star_ok);
    }

    #[test]
    fn bounded_lists_give_the_same_views(seed: u64, procs in 1usize..5, engine in engine()) {
        let unbounded = star_run("queue", "correct", seed, procs, engine, false);
        let bounded = star_run("queue", "correct", seed, procs, engine, true);
        prop_assert_eq!(lambda_of(&unbounded).unwrap(), lambda_of(&bounded).unwrap());
        prop_assert_eq!(unbounded.history(Layer::Star).unwrap(), bounded.history(Layer::Star).unwrap());
    }

    #[test]
    fn replay_is_deterministic(seed: u64, procs in 1usize..4) {
        let a = star_run("stack", "flaky:0.2", seed, procs, Engine::Algorithmic, true);
        let b = star_run("stack", "flaky:0.2", seed, procs, Engine::Algorithmic, true);
        prop_assert_eq!(a.records(), b.records());
    }
}

#[test]
fn correct_inner_gives_linearizable_wrapped_histories() {
    let spec = by_name("queue").unwrap();
    for seed in 0..50 {
        let log = star_run("queue", "correct", seed, 3, Engine::Algorithmic, seed % 2 == 0);
        let star = log.history(Layer::Star).unwrap();
        assert!(is_linearizable(&star, spec.as_ref()).is_ok(), "seed {seed}\n{star}");
        let detected = build_history(&lambda_of(&log).unwrap()).unwrap();
        assert!(is_linearizable(&detected, Arc::clone(&spec).as_ref()).is_ok(), "seed {seed}\n{detected}");
    }
}
