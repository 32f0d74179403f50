//! Choice of households that receive dynamic phase switches.
//!
//! * Mean based (MB): the houses a static rebalancing on long-run averages
//!   would move, found by greedy spread reduction.
//! * Highest average flow (HAF): PV houses on the highest-voltage phase and
//!   non-PV houses elsewhere, largest average flow first.
//! * Hybrid: MB pre-selection filtered and ranked by HAF.
//!
//! Only market participants are ever returned.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::grid::{FeederId, Household, HouseholdId, Phase, PhaseAllocation};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionStrategy {
    #[serde(alias = "mean_based")]
    Mb,
    Haf,
    Hybrid,
}

#[derive(Debug, Clone)]
pub struct SelectionContext<'a, T> {
    pub households: &'a [Household],
    pub allocation: &'a PhaseAllocation,
    /// Horizon-average signed power per household (roster order), kW.
    pub long_run_avg_power: &'a [T],
    /// Horizon-average per-phase voltage of each feeder, volts.
    pub phase_voltage: BTreeMap<FeederId, [T; 3]>,
    pub budget: usize,
}

/// One greedy MB step: move `household` to `phase`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Move {
    pub household: HouseholdId,
    pub phase: Phase,
}

fn spread<T: Real>(s: &[T; 3]) -> T {
    let hi = s[0].max(s[1]).max(s[2]);
    let lo = s[0].min(s[1]).min(s[2]);
    hi - lo
}

/// Roster indices of market participants sorted by id.
fn participants_by_id(households: &[Household]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..households.len())
        .filter(|&j| households[j].market_participant)
        .collect();
    idx.sort_by_key(|&j| households[j].id);
    idx
}

/// Greedy MB moves, at most `budget`, each strictly shrinking the per-phase
/// spread of participant averages on its feeder. A house moves at most once.
pub fn mean_based_moves<T: Real>(ctx: &SelectionContext<'_, T>) -> Vec<Move> {
    let hs = ctx.households;
    let eligible = participants_by_id(hs);
    let mut phases: Vec<Phase> = (0..hs.len())
        .map(|j| ctx.allocation.phase_of(j).expect("valid allocation"))
        .collect();
    let mut sums: BTreeMap<FeederId, [T; 3]> = BTreeMap::new();
    let mut scale = T::zero();
    for &j in &eligible {
        let s = sums.entry(hs[j].feeder_id).or_insert([T::zero(); 3]);
        s[phases[j].index()] += ctx.long_run_avg_power[j];
        scale += ctx.long_run_avg_power[j].abs();
    }
    let tol = T::lit(1e-12) * scale.max(T::one());

    let mut moved = BTreeSet::new();
    let mut out = Vec::new();
    while out.len() < ctx.budget {
        let mut best: Option<(T, usize, Phase)> = None;
        for &j in &eligible {
            if moved.contains(&j) {
                continue;
            }
            let f = hs[j].feeder_id;
            let s = sums[&f];
            let before = spread(&s);
            let p = ctx.long_run_avg_power[j];
            for target in Phase::ALL {
                if target == phases[j] {
                    continue;
                }
                let mut after = s;
                after[phases[j].index()] -= p;
                after[target.index()] += p;
                let gain = before - spread(&after);
                if gain > tol && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, j, target));
                }
            }
        }
        let Some((_, j, target)) = best else { break };
        let s = sums.get_mut(&hs[j].feeder_id).expect("feeder summed");
        let p = ctx.long_run_avg_power[j];
        s[phases[j].index()] -= p;
        s[target.index()] += p;
        phases[j] = target;
        moved.insert(j);
        out.push(Move {
            household: hs[j].id,
            phase: target,
        });
    }
    out
}

pub fn select_mean_based<T: Real>(ctx: &SelectionContext<'_, T>) -> Vec<HouseholdId> {
    mean_based_moves(ctx).into_iter().map(|m| m.household).collect()
}

fn argmax<T: Real>(v: &[T; 3]) -> Phase {
    let mut best = 0;
    for i in 1..3 {
        if v[i] > v[best] {
            best = i;
        }
    }
    Phase::ALL[best]
}

fn argmin<T: Real>(v: &[T; 3]) -> Phase {
    let mut best = 0;
    for i in 1..3 {
        if v[i] < v[best] {
            best = i;
        }
    }
    Phase::ALL[best]
}

/// HAF candidates with their priority tier: PV houses on the
/// highest-voltage phase and non-PV houses on the lowest-voltage phase come
/// first, non-PV houses on the middle phase second. `None` when the house
/// is not a candidate.
fn haf_tier<T: Real>(ctx: &SelectionContext<'_, T>, j: usize) -> Option<u8> {
    let h = &ctx.households[j];
    if !h.market_participant {
        return None;
    }
    let v = ctx.phase_voltage.get(&h.feeder_id)?;
    let high = argmax(v);
    let low = argmin(v);
    let ph = ctx.allocation.phase_of(j)?;
    match (h.has_pv, ph == high) {
        (true, true) => Some(0),
        (true, false) => None,
        (false, true) => None,
        (false, false) if ph == low => Some(0),
        (false, false) => Some(1),
    }
}

fn haf_rank<T: Real>(ctx: &SelectionContext<'_, T>, pool: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut ranked: Vec<(u8, T, HouseholdId, usize)> = pool
        .filter_map(|j| {
            haf_tier(ctx, j).map(|t| {
                (
                    t,
                    ctx.long_run_avg_power[j].abs(),
                    ctx.households[j].id,
                    j,
                )
            })
        })
        .collect();
    ranked.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal))
            .then(a.2.cmp(&b.2))
    });
    ranked.into_iter().map(|r| r.3).collect()
}

pub fn select_haf<T: Real>(ctx: &SelectionContext<'_, T>) -> Vec<HouseholdId> {
    haf_rank(ctx, 0..ctx.households.len())
        .into_iter()
        .take(ctx.budget)
        .map(|j| ctx.households[j].id)
        .collect()
}

/// Size of the MB pre-selection for a hybrid budget `k`.
pub fn hybrid_pool_size(k: usize) -> usize {
    (2 * k).max(k + 2)
}

pub fn select_hybrid<T: Real>(ctx: &SelectionContext<'_, T>) -> Vec<HouseholdId> {
    if ctx.budget == 0 {
        return Vec::new();
    }
    let pre = SelectionContext {
        budget: hybrid_pool_size(ctx.budget),
        ..ctx.clone()
    };
    let pool: BTreeSet<HouseholdId> = select_mean_based(&pre).into_iter().collect();
    let members = (0..ctx.households.len()).filter(|&j| pool.contains(&ctx.households[j].id));
    haf_rank(ctx, members)
        .into_iter()
        .take(ctx.budget)
        .map(|j| ctx.households[j].id)
        .collect()
}

pub fn select<T: Real>(strategy: SelectionStrategy, ctx: &SelectionContext<'_, T>) -> Vec<HouseholdId> {
    match strategy {
        SelectionStrategy::Mb => select_mean_based(ctx),
        SelectionStrategy::Haf => select_haf(ctx),
        SelectionStrategy::Hybrid => select_hybrid(ctx),
    }
}
