//! Exact solvers: exhaustive enumeration and depth-first branch and bound.
//!
//! Both solvers rank candidates identically: lower objective first (values
//! within the scalar's tie tolerance are equal), then fewer switches from
//! the current allocation, then lexicographic phase order over participants
//! in commitment order.

use std::cmp::Ordering;

use super::{AllocError, AllocationProblem, AllocationSolution};
use crate::grid::Phase;
use crate::scalar::Field;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolverOptions {
    /// Largest switchable count the exhaustive solver accepts (3^E leaves).
    pub exhaustive_cap: usize,
    /// Phase preference used for lexicographic tie-breaking.
    pub phase_order: [Phase; 3],
    /// Optional cap on switch operations per slot.
    pub max_switches: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            exhaustive_cap: 12,
            phase_order: Phase::ALL,
            max_switches: None,
        }
    }
}

impl SolverOptions {
    fn rank(&self, ph: Phase) -> usize {
        self.phase_order
            .iter()
            .position(|&p| p == ph)
            .expect("phase order is a permutation")
    }
}

struct Candidate<T> {
    phases: Vec<Phase>,
    objective: T,
    switches: usize,
}

struct Ranking<'a, T> {
    tol: T,
    options: &'a SolverOptions,
}

impl<T: Field> Ranking<'_, T> {
    fn compare(&self, a: &Candidate<T>, b: &Candidate<T>) -> Ordering {
        if a.objective < b.objective - self.tol {
            return Ordering::Less;
        }
        if a.objective > b.objective + self.tol {
            return Ordering::Greater;
        }
        a.switches.cmp(&b.switches).then_with(|| {
            a.phases
                .iter()
                .zip(&b.phases)
                .map(|(&x, &y)| self.options.rank(x).cmp(&self.options.rank(y)))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
    }
}

fn switches(problem: &AllocationProblem<impl Field>, phases: &[Phase]) -> usize {
    phases
        .iter()
        .zip(problem.current())
        .filter(|(a, b)| a != b)
        .count()
}

fn candidate<T: Field>(problem: &AllocationProblem<T>, phases: Vec<Phase>) -> Candidate<T> {
    Candidate {
        objective: problem.objective_of(&phases),
        switches: switches(problem, &phases),
        phases,
    }
}

fn finish<T: Field>(best: Candidate<T>, nodes: u64) -> AllocationSolution<T> {
    AllocationSolution {
        phases: best.phases,
        objective: best.objective,
        switches_from_current: best.switches,
        optimal: true,
        nodes,
    }
}

fn within_switch_cap(options: &SolverOptions, switches: usize) -> bool {
    options.max_switches.is_none_or(|cap| switches <= cap)
}

/// Enumerates all 3^E assignments of the switchable participants.
pub fn solve_exhaustive<T: Field>(
    problem: &AllocationProblem<T>,
    options: &SolverOptions,
) -> Result<AllocationSolution<T>, AllocError> {
    let free: Vec<usize> = (0..problem.participants())
        .filter(|&j| problem.switchable_mask()[j])
        .collect();
    if free.len() > options.exhaustive_cap {
        return Err(AllocError::CapExceeded {
            switchable: free.len(),
            cap: options.exhaustive_cap,
        });
    }
    let ranking = Ranking {
        tol: T::tie_tolerance(problem.scale()),
        options,
    };

    let mut best = candidate(problem, problem.current().to_vec());
    let mut digits = vec![0usize; free.len()];
    let mut phases = problem.current().to_vec();
    let mut nodes = 0u64;
    loop {
        for (&j, &d) in free.iter().zip(&digits) {
            phases[j] = options.phase_order[d];
        }
        nodes += 1;
        let cand = candidate(problem, phases.clone());
        if within_switch_cap(options, cand.switches)
            && ranking.compare(&cand, &best) == Ordering::Less
        {
            best = cand;
        }
        // odometer increment; done when it wraps
        let mut k = digits.len();
        loop {
            if k == 0 {
                return Ok(finish(best, nodes));
            }
            k -= 1;
            digits[k] += 1;
            if digits[k] < 3 {
                break;
            }
            digits[k] = 0;
        }
    }
}

/// Lower bound on `Σ_φ (r_φ − Δ_φ)²` over real `Δ` with
/// `lo ≤ Δ_φ ≤ hi` and `Σ Δ_φ = total`.
///
/// Every completion of a partial assignment adds to phase φ a subset sum
/// `Δ_φ` of the remaining commitments, so `Δ_φ` lies between the sum of
/// the remaining negative and positive commitments and the three subset
/// sums add up to the remaining total. The minimiser of this box-and-sum
/// relaxation is `Δ_φ = clamp(r_φ − λ, lo, hi)` for the `λ` that meets the
/// sum, found by scanning the six breakpoints of the piecewise-linear sum.
fn relaxation_bound<T: Field>(residual: [T; 3], lo: T, hi: T, total: T) -> T {
    let clamp = |v: T| {
        if v < lo {
            lo
        } else if v > hi {
            hi
        } else {
            v
        }
    };
    let sum_at = |lambda: T| (0..3).fold(T::zero(), |acc, i| acc + clamp(residual[i] - lambda));
    let value_at = |lambda: T| {
        (0..3).fold(T::zero(), |acc, i| {
            let d = residual[i] - clamp(residual[i] - lambda);
            acc + d * d
        })
    };

    let mut breaks = [T::zero(); 6];
    for i in 0..3 {
        breaks[2 * i] = residual[i] - hi;
        breaks[2 * i + 1] = residual[i] - lo;
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));

    // sum_at is non-increasing in λ; bracket `total` between breakpoints.
    if sum_at(breaks[0]) <= total {
        return value_at(breaks[0]);
    }
    for w in breaks.windows(2) {
        let (l0, l1) = (w[0], w[1]);
        let (g0, g1) = (sum_at(l0), sum_at(l1));
        if g1 <= total && total <= g0 {
            if g0 == g1 {
                return value_at(l0);
            }
            // linear on [l0, l1]
            let lambda = l0 + (g0 - total) * (l1 - l0) / (g0 - g1);
            return value_at(lambda);
        }
    }
    value_at(breaks[5])
}

struct Search<'a, T> {
    problem: &'a AllocationProblem<T>,
    options: &'a SolverOptions,
    ranking: Ranking<'a, T>,
    /// Switchable participants in branching order.
    order: Vec<usize>,
    /// Suffix sums over `order`: (negative part, positive part, total).
    rest: Vec<(T, T, T)>,
    target: [T; 3],
    phases: Vec<Phase>,
    best: Candidate<T>,
    nodes: u64,
}

impl<T: Field> Search<'_, T> {
    fn visit(&mut self, depth: usize, sums: [T; 3], switched: usize) {
        self.nodes += 1;
        if !within_switch_cap(self.options, switched) {
            return;
        }
        if depth == self.order.len() {
            let cand = candidate(self.problem, self.phases.clone());
            if self.ranking.compare(&cand, &self.best) == Ordering::Less {
                self.best = cand;
            }
            return;
        }

        let (lo, hi, total) = self.rest[depth];
        let residual = [
            self.target[0] - sums[0],
            self.target[1] - sums[1],
            self.target[2] - sums[2],
        ];
        let bound = relaxation_bound(residual, lo, hi, total);
        let tol = self.ranking.tol;
        if bound > self.best.objective + tol {
            return;
        }
        // nothing below can beat the incumbent outright; ties need no more switches
        if bound >= self.best.objective - tol && switched > self.best.switches {
            return;
        }

        let j = self.order[depth];
        let p = self.problem.commitments()[j];
        let home = self.problem.current()[j];
        let mut children = [home; 3];
        let mut n = 1;
        for &ph in &self.options.phase_order {
            if ph != home {
                children[n] = ph;
                n += 1;
            }
        }
        for ph in children {
            let mut next = sums;
            next[ph.index()] = next[ph.index()] + p;
            self.phases[j] = ph;
            self.visit(depth + 1, next, switched + usize::from(ph != home));
        }
        self.phases[j] = home;
    }
}

/// Depth-first branch and bound over switchable participants ordered by
/// descending |commitment|, pruning with [`relaxation_bound`]. Returns the
/// same solution as [`solve_exhaustive`] under the same options.
pub fn solve_branch_and_bound<T: Field>(
    problem: &AllocationProblem<T>,
    options: &SolverOptions,
) -> AllocationSolution<T> {
    let p = problem.commitments();
    let mut order: Vec<usize> = (0..problem.participants())
        .filter(|&j| problem.switchable_mask()[j])
        .collect();
    order.sort_by(|&a, &b| {
        p[b].abs()
            .partial_cmp(&p[a].abs())
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut rest = vec![(T::zero(), T::zero(), T::zero()); order.len() + 1];
    for d in (0..order.len()).rev() {
        let v = p[order[d]];
        let (lo, hi, total) = rest[d + 1];
        rest[d] = if v < T::zero() {
            (lo + v, hi, total + v)
        } else {
            (lo, hi + v, total + v)
        };
    }

    let mut sums = [T::zero(); 3];
    for (j, &ph) in problem.current().iter().enumerate() {
        if !problem.switchable_mask()[j] {
            sums[ph.index()] = sums[ph.index()] + p[j];
        }
    }

    let mut search = Search {
        problem,
        options,
        ranking: Ranking {
            tol: T::tie_tolerance(problem.scale()),
            options,
        },
        order,
        rest,
        target: problem.target(),
        phases: problem.current().to_vec(),
        best: candidate(problem, problem.current().to_vec()),
        nodes: 0,
    };
    search.visit(0, sums, 0);
    let nodes = search.nodes;
    finish(search.best, nodes)
}
