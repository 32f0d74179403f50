#![allow(dead_code)]

use phaseswitch::{AllocationProblem, Exact, Phase};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random allocator instance: M ≤ `max_m` participants, at most `max_e`
/// switchable, commitments uniform in [−5, 5] kW.
pub fn random_problem(rng: &mut ChaCha8Rng, max_m: usize, max_e: usize) -> AllocationProblem<f64> {
    let m = rng.gen_range(1..=max_m);
    let p: Vec<f64> = (0..m).map(|_| rng.gen_range(-5.0..=5.0)).collect();
    let (current, switchable) = random_layout(rng, m, max_e);
    AllocationProblem::new(p, current, switchable).unwrap()
}

/// Same shape with commitments on a 1 W grid, as exact rationals.
pub fn random_exact_problem(rng: &mut ChaCha8Rng, max_m: usize, max_e: usize) -> AllocationProblem<Exact> {
    let m = rng.gen_range(1..=max_m);
    let p: Vec<Exact> = (0..m)
        .map(|_| Exact::new(rng.gen_range(-5000..=5000), 1000))
        .collect();
    let (current, switchable) = random_layout(rng, m, max_e);
    AllocationProblem::new(p, current, switchable).unwrap()
}

fn random_layout(rng: &mut ChaCha8Rng, m: usize, max_e: usize) -> (Vec<Phase>, Vec<bool>) {
    let current: Vec<Phase> = (0..m).map(|_| random_phase(rng)).collect();
    let e = rng.gen_range(0..=m.min(max_e));
    let mut switchable = vec![false; m];
    for j in rand::seq::index::sample(rng, m, e) {
        switchable[j] = true;
    }
    (current, switchable)
}

pub fn random_phase(rng: &mut ChaCha8Rng) -> Phase {
    Phase::from_index(rng.gen_range(0..3)).unwrap()
}

/// A feasible phase vector: fixed houses pinned, switchable ones random.
pub fn random_feasible<T: phaseswitch::Field>(rng: &mut ChaCha8Rng, problem: &AllocationProblem<T>) -> Vec<Phase> {
    problem
        .current()
        .iter()
        .zip(problem.switchable_mask())
        .map(|(&ph, &s)| if s { random_phase(rng) } else { ph })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
