//! Runs the simulator's programs on real threads.
//!
//! Each thread owns one program and takes steps by locking the shared
//! world, so every step is still atomic, but the interleaving is chosen by
//! the operating system and runs are not reproducible.

use std::sync::{Arc, Mutex};
use std::thread;

use crate::history::ProcessId;
use crate::sim::{Program, RecordedExecution, Status, World};

/// Lets every program take up to `steps_per_process` steps concurrently and
/// returns the resulting log.
pub fn run_native(world: World, programs: Vec<Box<dyn Program>>, steps_per_process: u64) -> RecordedExecution {
    let world = Arc::new(Mutex::new(world));
    let handles: Vec<_> = programs
        .into_iter()
        .enumerate()
        .map(|(slot, mut program)| {
            let world = Arc::clone(&world);
            thread::spawn(move || {
                let p = ProcessId::from_slot(slot);
                for _ in 0..steps_per_process {
                    let mut guard = world.lock().expect("a stepping thread panicked");
                    let mut env = guard.env(p);
                    match program.step(&mut env) {
                        Status::Running => guard.step += 1,
                        Status::Finished => break,
                    }
                    drop(guard);
                    thread::yield_now();
                }
            })
        })
        .collect();
    for h in handles {
        h.join().expect("stepping thread panicked");
    }
    let world = Arc::try_unwrap(world).ok().expect("all threads joined");
    world.into_inner().expect("no thread panicked while stepping").log
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enforce::{AtomicInner, StarClient, WrapperConfig};
    use crate::sim::{Engine, Layer};
    use crate::views::{check_returned_views, lambda_of, validate_views};
    use crate::workload::RandomOps;

    #[test]
    fn native_star_runs_produce_valid_views() {
        let spec = crate::spec::by_name("queue").unwrap();
        let n = 3;
        let config = WrapperConfig {
            engine: Engine::Atomic,
            ..WrapperConfig::default()
        };
        let world = World::new(
            n,
            crate::enforce::wrapper_memory(n),
            Box::new(AtomicInner::new(spec.clone())),
            Box::new(RandomOps::new("queue", 5).with_limit(20)),
        );
        let programs = (0..n).map(|_| Box::new(StarClient::new(config)) as Box<dyn Program>).collect();
        let log = run_native(world, programs, 10_000);
        assert!(log.history(Layer::Star).unwrap().operations().len() == 60);
        check_returned_views(&log).unwrap();
        validate_views(&lambda_of(&log).unwrap()).unwrap();
        assert!(crate::is_linearizable(&log.history(Layer::Star).unwrap(), spec.as_ref()).is_ok());
    }
}
