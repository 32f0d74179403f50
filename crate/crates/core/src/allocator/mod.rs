//! Per-slot mixed-integer least-squares phase allocation.
//!
//! For `M` market participants with signed commitments `p_c`, the decision
//! vector `x = [xᵃ; xᵇ; xᶜ] ∈ 𝔹^{3M}` places each participant on one phase.
//! `P ∈ ℝ^{3M×3}` is block diagonal with `p_c` in each block, so `Pᵀx` is the
//! per-phase participant flow. The problem is
//!
//! ```text
//! min ‖ē − Pᵀx‖²   s.t.  xᵃ + xᵇ + xᶜ = 1,  fixed houses pinned,  x boolean
//! ```
//!
//! with `ē = (e/3, e/3, e/3)` and `e = Σ p_c`. Expanding gives the quadratic
//! form `xᵀQx + fᵀx + ēᵀē` with `Q = PPᵀ` (3M×3M) and `f = −2Pē`.

mod instance;
mod search;

pub use instance::ProblemInstance;
pub use search::{solve_branch_and_bound, solve_exhaustive, SolverOptions};

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::grid::{validate_allocation, GridError, Household, HouseholdId, Phase, PhaseAllocation};
use crate::scalar::Field;

#[derive(Debug, Error)]
pub enum AllocError {
    #[error("no commitments to allocate")]
    Empty,
    #[error("household {0} has a commitment but is not in the allocation")]
    UnknownHousehold(HouseholdId),
    #[error("household {0} committed twice")]
    DuplicateCommitment(HouseholdId),
    #[error("household {0} is not a market participant")]
    NotParticipant(HouseholdId),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("infeasible allocation vector: {0}")]
    Infeasible(String),
    #[error("{switchable} switchable houses exceed the exhaustive cap of {cap}")]
    CapExceeded { switchable: usize, cap: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Commitment<T> {
    pub household: HouseholdId,
    /// Signed kW; positive is consumption from the grid.
    pub power_kw: T,
}

/// Commitments of the market participants of one feeder for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct CommitmentSet<T> {
    pub slot_index: usize,
    pub entries: Vec<Commitment<T>>,
}

impl<T: Field> CommitmentSet<T> {
    /// Aggregate commitment `e`.
    pub fn total(&self) -> T {
        self.entries
            .iter()
            .fold(T::zero(), |acc, c| acc + c.power_kw)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationProblem<T> {
    ids: Vec<HouseholdId>,
    commitments: Vec<T>,
    current: Vec<Phase>,
    switchable: Vec<bool>,
    /// Per-phase flow of non-participants folded into the target; zero by default.
    background: [T; 3],
    e_m: T,
}

impl<T: Field> AllocationProblem<T> {
    /// Builds a problem over participants `0..M` (ids are positional).
    pub fn new(
        commitments: Vec<T>,
        current: Vec<Phase>,
        switchable: Vec<bool>,
    ) -> Result<Self, AllocError> {
        let ids = (0..commitments.len() as u32).map(HouseholdId).collect();
        Self::with_ids(ids, commitments, current, switchable)
    }

    pub fn with_ids(
        ids: Vec<HouseholdId>,
        commitments: Vec<T>,
        current: Vec<Phase>,
        switchable: Vec<bool>,
    ) -> Result<Self, AllocError> {
        if commitments.is_empty() {
            return Err(AllocError::Empty);
        }
        let m = commitments.len();
        if ids.len() != m || current.len() != m || switchable.len() != m {
            return Err(AllocError::Infeasible(format!(
                "{m} commitments but {} ids, {} phases, {} switch flags",
                ids.len(),
                current.len(),
                switchable.len()
            )));
        }
        let mut seen = BTreeSet::new();
        if let Some(&dup) = ids.iter().find(|id| !seen.insert(**id)) {
            return Err(AllocError::DuplicateCommitment(dup));
        }
        let e = commitments.iter().fold(T::zero(), |acc, &p| acc + p);
        Ok(Self {
            ids,
            commitments,
            current,
            switchable,
            background: [T::zero(); 3],
            e_m: e / T::three(),
        })
    }

    /// Folds a fixed per-phase background flow into the balance target:
    /// the objective becomes `Σ_φ (e_m − b_φ − (Pᵀx)_φ)²` with
    /// `e_m = (Σ p_c + Σ b)/3`.
    pub fn with_background(mut self, background: [T; 3]) -> Self {
        let e = self.commitments.iter().fold(T::zero(), |acc, &p| acc + p)
            + background[0]
            + background[1]
            + background[2];
        self.background = background;
        self.e_m = e / T::three();
        self
    }

    pub fn participants(&self) -> usize {
        self.commitments.len()
    }

    pub fn ids(&self) -> &[HouseholdId] {
        &self.ids
    }

    pub fn commitments(&self) -> &[T] {
        &self.commitments
    }

    pub fn current(&self) -> &[Phase] {
        &self.current
    }

    pub fn switchable_mask(&self) -> &[bool] {
        &self.switchable
    }

    pub fn switchable_count(&self) -> usize {
        self.switchable.iter().filter(|&&s| s).count()
    }

    pub fn e_m(&self) -> T {
        self.e_m
    }

    pub fn e_bar(&self) -> [T; 3] {
        [self.e_m; 3]
    }

    /// Per-phase target for the participant flows, `ē − b`.
    pub fn target(&self) -> [T; 3] {
        [
            self.e_m - self.background[0],
            self.e_m - self.background[1],
            self.e_m - self.background[2],
        ]
    }

    /// Index of `x` for participant `j` on `phase`.
    pub fn x_index(&self, phase: Phase, j: usize) -> usize {
        phase.index() * self.participants() + j
    }

    /// `P` as 3M rows of 3 columns.
    pub fn p_matrix(&self) -> Vec<[T; 3]> {
        let m = self.participants();
        let mut rows = vec![[T::zero(); 3]; 3 * m];
        for phase in Phase::ALL {
            for (j, &p) in self.commitments.iter().enumerate() {
                rows[phase.index() * m + j][phase.index()] = p;
            }
        }
        rows
    }

    /// `Q = PPᵀ`, dense row-major 3M×3M.
    pub fn q_matrix(&self) -> Vec<Vec<T>> {
        let p = self.p_matrix();
        p.iter()
            .map(|ri| {
                p.iter()
                    .map(|rk| (0..3).fold(T::zero(), |acc, c| acc + ri[c] * rk[c]))
                    .collect()
            })
            .collect()
    }

    /// `f = −2P·t` where `t` is [`target`](Self::target) (`ē` by default).
    pub fn f_vector(&self) -> Vec<T> {
        let t = self.target();
        let two = T::one() + T::one();
        self.p_matrix()
            .iter()
            .map(|r| -(two * (0..3).fold(T::zero(), |acc, c| acc + r[c] * t[c])))
            .collect()
    }

    /// Constant `tᵀt` dropped from the quadratic form.
    pub fn constant(&self) -> T {
        let t = self.target();
        t[0] * t[0] + t[1] * t[1] + t[2] * t[2]
    }

    /// `x⁰`: the current allocation restricted to fixed houses, zeros on
    /// switchable positions.
    pub fn x0(&self) -> Vec<bool> {
        let m = self.participants();
        let mut x = vec![false; 3 * m];
        for j in 0..m {
            if !self.switchable[j] {
                x[self.x_index(self.current[j], j)] = true;
            }
        }
        x
    }

    /// Encodes per-participant phases as the boolean vector `x`.
    pub fn encode(&self, phases: &[Phase]) -> Vec<bool> {
        let mut x = vec![false; 3 * self.participants()];
        for (j, &ph) in phases.iter().enumerate() {
            x[self.x_index(ph, j)] = true;
        }
        x
    }

    /// Decodes and checks `x` against the one-phase-per-house and pinning
    /// constraints.
    pub fn decode(&self, x: &[bool]) -> Result<Vec<Phase>, AllocError> {
        let m = self.participants();
        if x.len() != 3 * m {
            return Err(AllocError::Infeasible(format!(
                "x has length {}, expected {}",
                x.len(),
                3 * m
            )));
        }
        let mut phases = Vec::with_capacity(m);
        for j in 0..m {
            let on: Vec<Phase> = Phase::ALL
                .into_iter()
                .filter(|&ph| x[self.x_index(ph, j)])
                .collect();
            if on.len() != 1 {
                return Err(AllocError::Infeasible(format!(
                    "participant {} on {} phases",
                    self.ids[j],
                    on.len()
                )));
            }
            if !self.switchable[j] && on[0] != self.current[j] {
                return Err(AllocError::Infeasible(format!(
                    "fixed participant {} moved",
                    self.ids[j]
                )));
            }
            phases.push(on[0]);
        }
        Ok(phases)
    }

    /// Per-phase participant flows `Pᵀx`, accumulated in participant order.
    pub fn phase_sums(&self, phases: &[Phase]) -> [T; 3] {
        let mut s = [T::zero(); 3];
        for (&p, ph) in self.commitments.iter().zip(phases) {
            s[ph.index()] = s[ph.index()] + p;
        }
        s
    }

    /// `‖t − Pᵀx‖²` for per-participant phases, no feasibility check.
    pub fn objective_of(&self, phases: &[Phase]) -> T {
        let s = self.phase_sums(phases);
        let t = self.target();
        (0..3).fold(T::zero(), |acc, i| {
            let d = t[i] - s[i];
            acc + d * d
        })
    }

    /// Least-squares objective `‖ē − Pᵀx‖²` of a feasible `x`.
    pub fn objective_value(&self, x: &[bool]) -> Result<T, AllocError> {
        let phases = self.decode(x)?;
        Ok(self.objective_of(&phases))
    }

    /// `xᵀQx + fᵀx` evaluated through the dense matrices.
    pub fn quadratic_value(&self, x: &[bool]) -> T {
        let q = self.q_matrix();
        let f = self.f_vector();
        let mut acc = T::zero();
        for (i, row) in q.iter().enumerate() {
            if !x[i] {
                continue;
            }
            acc = acc + f[i];
            for (k, &qik) in row.iter().enumerate() {
                if x[k] {
                    acc = acc + qik;
                }
            }
        }
        acc
    }

    /// Magnitude used to scale the tie tolerance.
    pub(crate) fn scale(&self) -> T {
        let s = self
            .commitments
            .iter()
            .chain(self.background.iter())
            .fold(T::zero(), |acc, p| acc + p.abs());
        s * s
    }
}

/// Builds the allocation problem for one feeder and slot. `current` and
/// `households` cover the whole roster; `switchable` holds the ids of
/// houses that carry a dynamic switch.
pub fn build_problem<T: Field>(
    commitments: &CommitmentSet<T>,
    current: &PhaseAllocation,
    households: &[Household],
    switchable: &BTreeSet<HouseholdId>,
) -> Result<AllocationProblem<T>, AllocError> {
    if commitments.entries.is_empty() {
        return Err(AllocError::Empty);
    }
    validate_allocation(current, households)?;
    let index: HashMap<HouseholdId, usize> =
        households.iter().enumerate().map(|(j, h)| (h.id, j)).collect();
    let mut ids = Vec::with_capacity(commitments.entries.len());
    let mut p = Vec::with_capacity(commitments.entries.len());
    let mut phases = Vec::with_capacity(commitments.entries.len());
    let mut mask = Vec::with_capacity(commitments.entries.len());
    for c in &commitments.entries {
        let &j = index
            .get(&c.household)
            .ok_or(AllocError::UnknownHousehold(c.household))?;
        if !households[j].market_participant {
            return Err(AllocError::NotParticipant(c.household));
        }
        ids.push(c.household);
        p.push(c.power_kw);
        phases.push(current.phase_of(j).expect("validated"));
        mask.push(switchable.contains(&c.household));
    }
    AllocationProblem::with_ids(ids, p, phases, mask)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationSolution<T> {
    /// Phase per participant, commitment order.
    pub phases: Vec<Phase>,
    /// `‖ē − Pᵀx‖²` at the solution.
    pub objective: T,
    pub switches_from_current: usize,
    pub optimal: bool,
    /// Search nodes visited (leaves for the exhaustive solver).
    pub nodes: u64,
}

impl<T: Field> AllocationSolution<T> {
    pub fn x(&self, problem: &AllocationProblem<T>) -> Vec<bool> {
        problem.encode(&self.phases)
    }

    /// Target phase of every switchable participant.
    pub fn decisions(&self, problem: &AllocationProblem<T>) -> BTreeMap<HouseholdId, Phase> {
        problem
            .ids()
            .iter()
            .zip(&self.phases)
            .zip(problem.switchable_mask())
            .filter(|(_, &s)| s)
            .map(|((&id, &ph), _)| (id, ph))
            .collect()
    }
}
