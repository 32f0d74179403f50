//! Dynamic phase switching for low-voltage distribution grids.
//!
//! * [`grid`]: network, households and phase allocations.
//! * [`loadflow`]: backward/forward sweep load flow, VUF and losses.
//! * [`allocator`]: per-slot least-squares phase allocation, solved exactly.
//! * [`selection`]: which households get a dynamic switch.
//! * [`market`]: synthetic profiles, battery schedules and commitments.
//! * [`harness`]: scenario runs, strategy comparison and reports.
//!
//! Numeric code is generic over the scalar; the aliases below fix the
//! common choices.

pub mod allocator;
pub mod grid;
pub mod harness;
pub mod loadflow;
pub mod market;
pub mod scalar;
pub mod selection;

pub use allocator::{
    build_problem, solve_branch_and_bound, solve_exhaustive, AllocationProblem,
    AllocationSolution, CommitmentSet, SolverOptions,
};
pub use grid::{FeederId, Household, HouseholdId, Network, Phase, PhaseAllocation};
pub use harness::{run_scenario, MetricsReport, ScenarioConfig};
pub use scalar::{Field, Real};

/// Exact rational scalar for allocator checks.
pub type Exact = num_rational::Rational64;

pub type FeederModel64 = grid::FeederModel<f64>;
pub type Network64 = grid::Network<f64>;
pub type LoadflowResult64 = loadflow::LoadflowResult<f64>;
pub type AllocationProblem64 = allocator::AllocationProblem<f64>;
pub type ExactProblem = allocator::AllocationProblem<Exact>;
