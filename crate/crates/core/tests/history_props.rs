use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rvlin::format::{parse_trace, write_trace};
use rvlin::gen::{linearizable_history, perturbed_history, similar_variant};
use rvlin::history::{equivalent, is_similar, History, HistoryBuilder, NotSimilar};
use rvlin::membership::{brute_force_linearizable, check_linearization, is_linearizable};
use rvlin::spec::{by_name, CATALOG};

fn catalog_name() -> impl Strategy<Value = &'static str> {
    prop::sample::select(CATALOG.to_vec())
}

fn history(name: &str, seed: u64, procs: usize, ops: usize, perturb: bool) -> History {
    let spec = by_name(name).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if perturb {
        perturbed_history(spec.as_ref(), procs, ops, &mut rng)
    } else {
        linearizable_history(spec.as_ref(), procs, ops, &mut rng)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn traces_round_trip(name in catalog_name(), seed: u64, procs in 1usize..5, ops in 0usize..12) {
        let h = history(name, seed, procs, ops, true);
        prop_assert_eq!(parse_trace(&write_trace(&h)).unwrap(), h);
    }

    #[test]
    fn complete_precedence_is_contained_in_precedence(name in catalog_name(), seed: u64, procs in 1usize..5, ops in 0usize..12) {
        let h = history(name, seed, procs, ops, true);
        let prec = h.prec_pairs();
        let lt = h.lt_pairs();
        prop_assert!(lt.is_subset(&prec));
        for (a, b) in &lt {
            prop_assert!(h.precedes_lt(*a, *b).unwrap());
        }
        for (a, b) in &prec {
            prop_assert!(h.precedes_prec(*a, *b).unwrap());
            prop_assert!(!prec.contains(&(*b, *a)));
        }
    }

    #[test]
    fn comp_and_prefixes_are_well_formed(name in catalog_name(), seed: u64, procs in 1usize..5, ops in 0usize..10) {
        let h = history(name, seed, procs, ops, true);
        let comp = h.comp();
        prop_assert!(comp.is_complete());
        prop_assert_eq!(comp.operations().len(), h.operations().iter().filter(|o| o.is_complete()).count());
        for k in 0..=h.len() {
            let p = h.prefix(k);
            prop_assert_eq!(p.events(), &h.events()[..k]);
        }
        prop_assert!(equivalent(&h, &h));
    }

    #[test]
    fn checker_matches_oracle(name in catalog_name(), seed: u64, procs in 1usize..4, ops in 0usize..8) {
        let spec = by_name(name).unwrap();
        let h = history(name, seed, procs, ops, true);
        let fast = is_linearizable(&h, spec.as_ref());
        prop_assert_eq!(fast.is_ok(), brute_force_linearizable(&h, spec.as_ref()).unwrap(), "{}", h);
        if let Ok(lin) = fast {
            prop_assert!(check_linearization(&h, spec.as_ref(), &lin));
        }
    }

    #[test]
    fn linearizable_histories_have_linearizable_prefixes(name in catalog_name(), seed: u64, procs in 1usize..4, ops in 0usize..10) {
        let spec = by_name(name).unwrap();
        let h = history(name, seed, procs, ops, false);
        for k in 0..=h.len() {
            prop_assert!(is_linearizable(&h.prefix(k), spec.as_ref()).is_ok());
        }
    }

    #[test]
    fn similar_variants_stay_linearizable(name in catalog_name(), seed: u64, procs in 1usize..4, ops in 0usize..10) {
        let spec = by_name(name).unwrap();
        let f = history(name, seed, procs, ops, false);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let e = similar_variant(&f, spec.as_ref(), &mut rng);
        prop_assert!(is_similar(&e, &f).is_ok());
        prop_assert!(is_linearizable(&e, spec.as_ref()).is_ok(), "{}\nsimilar to\n{}", e, f);
    }
}

#[test]
fn similarity_is_directional() {
    let mut seq = HistoryBuilder::new();
    let a = seq.invoke(1, "Enq", 1);
    seq.respond(1, true);
    let b = seq.invoke(2, "Deq", ());
    seq.respond(2, 1);
    let sequential = seq.build();

    let mut over = HistoryBuilder::new();
    over.invoke(1, "Enq", 1);
    over.invoke(2, "Deq", ());
    over.respond(1, true);
    over.respond(2, 1);
    let overlapping = over.build();

    assert!(is_similar(&overlapping, &sequential).is_ok());
    assert_eq!(is_similar(&sequential, &overlapping).unwrap_err(), NotSimilar::Precedence(a.uid, b.uid));
}

#[test]
fn pending_operations_may_be_completed_or_dropped() {
    let queue = by_name("queue").unwrap();
    let mut b = HistoryBuilder::new();
    b.invoke(1, "Enq", 5);
    b.invoke(2, "Deq", ());
    b.respond(2, 5);
    let needs_completion = b.build();
    let lin = is_linearizable(&needs_completion, queue.as_ref()).unwrap();
    assert_eq!(lin.completed_pending.len(), 1);

    let mut b = HistoryBuilder::new();
    b.invoke(1, "Enq", 5);
    b.invoke(2, "Deq", ());
    b.respond(2, rvlin::Value::Empty);
    let droppable = b.build();
    assert!(is_linearizable(&droppable, queue.as_ref()).is_ok());
}
