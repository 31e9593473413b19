use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use crate::error::Result;

use super::runner::{run, RunOutput};
use super::scenario::Scenario;

/// Runs independent scenarios on up to `workers` threads. Results come back
/// in input order; each run is itself sequential and deterministic.
pub fn run_batch(scenarios: &[Scenario], workers: usize) -> Vec<Result<RunOutput>> {
    let workers = workers.clamp(1, scenarios.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<RunOutput>>>> =
        scenarios.iter().map(|_| Mutex::new(None)).collect();
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(scn) = scenarios.get(i) else { break };
                let out = run(scn);
                *slots[i].lock().expect("result slot") = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("result slot").expect("every slot filled"))
        .collect()
}
