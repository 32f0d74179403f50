//! Scenario orchestration.
//!
//! A run generates load and PV profiles, schedules the batteries, derives a
//! phase allocation per slot (fixed, one-shot static rebalancing, or
//! per-slot dynamic allocation on a selected switch set), solves every slot
//! with the load flow and aggregates QoS metrics.

mod presets;
mod report;

pub use presets::{
    builtin_network_json, preset_config, preset_mix, preset_network, preset_suite, PresetMix,
    PRESET_NAMES,
};
pub use report::{
    compare_reports, compare_strategies, economic_summary, emit_report, write_series_csv,
    write_surface_csv, Comparison, ComparisonRow, EconomicSummary, ReportFormat,
    DEFAULT_PRICE_EUR_PER_MWH, VUF_LIMIT_PCT,
};

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocator::{build_problem, solve_branch_and_bound, AllocError, SolverOptions};
use crate::grid::{
    aggregate_phase_flows, apply_phase_decisions, FeederId, GridError, HouseholdId, Network,
    PhaseAllocation, SlotFlows,
};
use crate::loadflow::{
    compute_vuf, diagnostic_rows, solve_feeder, voltage_extremes_over, DiagnosticRow,
    LoadflowOptions, LoadflowResult, SLOT_HOURS,
};
use crate::market::{
    commitments_for_slot, generate_profiles, schedule_battery, BatteryParams, BatteryState,
    MarketError, Profile, ProfileParams, TouTariff, SLOTS_PER_DAY,
};
use crate::selection::{mean_based_moves, select, SelectionContext, SelectionStrategy};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error("horizon mismatch: {0} vs {1} slots")]
    HorizonMismatch(usize, usize),
    #[error("runs are not comparable: {0}")]
    Incomparable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AllocationStrategy {
    None,
    Static,
    Dynamic,
}

fn default_selection() -> SelectionStrategy {
    SelectionStrategy::Mb
}

fn default_days() -> usize {
    6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub household_count: usize,
    pub pv_fraction: f64,
    pub battery_fraction: f64,
    /// Network file, relative to the config file, or `builtin:<preset>`.
    pub network: String,
    pub switch_budget: usize,
    #[serde(default = "default_selection")]
    pub selection: SelectionStrategy,
    pub allocation: AllocationStrategy,
    #[serde(default = "default_days")]
    pub horizon_days: usize,
    pub seed: u64,
    #[serde(default)]
    pub tariff: TouTariff,
    #[serde(default)]
    pub battery: BatteryParams,
    #[serde(default)]
    pub profiles: ProfileParams,
    /// Fold non-participant flows into the allocator target.
    #[serde(default)]
    pub include_background: bool,
    /// Re-draw PV/battery placement from the seed instead of using the
    /// flags in the network file.
    #[serde(default)]
    pub randomize_placement: bool,
    /// Keep per-bus diagnostic rows in the report.
    #[serde(default)]
    pub diagnostics: bool,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|source| HarnessError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn slots(&self) -> usize {
        self.horizon_days * SLOTS_PER_DAY
    }

    pub fn load_network(&self) -> Result<Network<f64>, HarnessError> {
        if let Some(name) = self.network.strip_prefix("builtin:") {
            let text = builtin_network_json(name).ok_or_else(|| {
                HarnessError::Config(format!("unknown builtin network {name:?}"))
            })?;
            return Ok(Network::from_json(text)?);
        }
        let mut path = PathBuf::from(&self.network);
        if path.is_relative() {
            if let Some(dir) = &self.base_dir {
                path = dir.join(path);
            }
        }
        Ok(Network::from_file(path)?)
    }

    fn validate(&self, network: &Network<f64>) -> Result<(), HarnessError> {
        for (label, f) in [("pv_fraction", self.pv_fraction), ("battery_fraction", self.battery_fraction)] {
            if !(0.0..=1.0).contains(&f) {
                return Err(HarnessError::Config(format!("{label} {f} outside [0, 1]")));
            }
        }
        let h = network.households.len();
        if self.household_count != h {
            return Err(HarnessError::Config(format!(
                "household_count {} but network has {h} households",
                self.household_count
            )));
        }
        if !self.randomize_placement {
            let pv = network.households.iter().filter(|x| x.has_pv).count();
            let bat = network.households.iter().filter(|x| x.has_battery).count();
            let (want_pv, want_bat) = self.placement_counts();
            if pv != want_pv || bat != want_bat {
                return Err(HarnessError::Config(format!(
                    "network has {pv} PV / {bat} battery houses, fractions ask for {want_pv} / {want_bat}"
                )));
            }
        }
        Ok(())
    }

    fn placement_counts(&self) -> (usize, usize) {
        let h = self.household_count as f64;
        (
            (self.pv_fraction * h).round() as usize,
            (self.battery_fraction * h).round() as usize,
        )
    }
}

/// Headline metrics of one run. This is what `summary.json` holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub name: String,
    pub allocation: AllocationStrategy,
    pub selection: SelectionStrategy,
    pub switch_budget: usize,
    pub seed: u64,
    pub horizon_days: usize,
    pub slots: usize,
    pub households: usize,
    pub participants: usize,
    /// Houses carrying a dynamic switch (dynamic) or moved once (static).
    pub switched_households: Vec<HouseholdId>,
    pub peak_vuf_pct: f64,
    pub peak_vuf_slot: Option<usize>,
    /// Mean over slots of the per-slot peak-bus VUF.
    pub mean_vuf_pct: f64,
    pub min_voltage_pu: f64,
    pub max_voltage_pu: f64,
    pub line_losses_kwh: f64,
    pub transformer_energy_kwh: f64,
    pub transformer_peak_kw: f64,
    pub switch_operations: usize,
    pub unconverged_slots: Vec<usize>,
    /// Sum over slots and feeders of the participant imbalance
    /// `‖ē − Pᵀx‖²` of the allocation in force, kW².
    pub participant_imbalance: f64,
    /// Same sum had each slot kept the previous slot's allocation.
    pub hold_imbalance: f64,
}

/// One row of the per-slot series (one per slot and feeder).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: usize,
    pub feeder: FeederId,
    pub peak_vuf_pct: f64,
    pub min_v_pu: f64,
    pub max_v_pu: f64,
    pub losses_kw: f64,
    pub switches: usize,
}

/// VUF at one bus of one slot, long format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub slot: usize,
    pub feeder: FeederId,
    pub bus: usize,
    pub vuf_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub summary: ScenarioSummary,
    pub series: Vec<SlotRecord>,
    pub surface: Vec<SurfacePoint>,
    pub diagnostics: Vec<DiagnosticRow>,
    pub warnings: Vec<String>,
}

impl MetricsReport {
    pub fn converged(&self) -> bool {
        self.summary.unconverged_slots.is_empty()
    }
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<MetricsReport, HarnessError> {
    let network = config.load_network()?;
    run_scenario_on(config, network)
}

/// As [`run_scenario`] with an already loaded network.
pub fn run_scenario_on(
    config: &ScenarioConfig,
    mut network: Network<f64>,
) -> Result<MetricsReport, HarnessError> {
    config.validate(&network)?;
    prepare_roster(config, &mut network);
    let slots = config.slots();
    let net = net_flows(config, &network)?;
    let flows: Vec<SlotFlows<f64>> = (0..slots)
        .map(|t| SlotFlows {
            slot_index: t,
            per_house_power: net.iter().map(|p| p.values[t]).collect(),
        })
        .collect();
    let averages: Vec<f64> = net.iter().map(Profile::mean).collect();
    let initial = network.initial_allocation.clone();

    let mut switched = Vec::new();
    let mut fixed = initial.clone();
    let mut switch_set = BTreeSet::new();
    match config.allocation {
        AllocationStrategy::None => {}
        AllocationStrategy::Static => {
            let ctx = selection_context(config, &network, &initial, &averages, &flows, false);
            for m in mean_based_moves(&ctx) {
                let j = network.household_index(m.household).expect("selected from roster");
                fixed.set_phase(j, m.phase);
                switched.push(m.household);
            }
        }
        AllocationStrategy::Dynamic => {
            let needs_voltage = config.selection != SelectionStrategy::Mb;
            let ctx = selection_context(config, &network, &initial, &averages, &flows, needs_voltage);
            switched = select(config.selection, &ctx);
            switch_set = switched.iter().copied().collect();
            for h in &mut network.households {
                h.switchable = switch_set.contains(&h.id);
            }
        }
    }
    switched.sort();

    let plan = plan_allocations(config, &network, &net, &flows, fixed, &switch_set)?;
    let outcomes = solve_slots(&network, &plan.allocations, &flows);
    Ok(assemble(config, &network, &initial, &plan, &outcomes, switched))
}

fn prepare_roster(config: &ScenarioConfig, network: &mut Network<f64>) {
    let hs = &mut network.households;
    if config.randomize_placement {
        let (n_pv, n_bat) = config.placement_counts();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(0x706c_6163);
        let mut order: Vec<usize> = (0..hs.len()).collect();
        order.shuffle(&mut rng);
        let pv: BTreeSet<usize> = order[..n_pv].iter().copied().collect();
        order.shuffle(&mut rng);
        let bat: BTreeSet<usize> = order[..n_bat].iter().copied().collect();
        for (j, h) in hs.iter_mut().enumerate() {
            h.has_pv = pv.contains(&j);
            h.has_battery = bat.contains(&j);
            h.market_participant = h.has_pv || h.has_battery;
        }
    }
    // Switches are decided by the run, not by the file.
    for h in hs.iter_mut() {
        h.switchable = false;
    }
}

/// Scheduled grid flow of every household, roster order.
fn net_flows(config: &ScenarioConfig, network: &Network<f64>) -> Result<Vec<Profile>, HarnessError> {
    let hs = &network.households;
    let profiles = generate_profiles(&config.profiles, hs.len(), config.horizon_days, config.seed);
    let idle = Profile::zeros(profiles.pv.len());
    hs.iter()
        .zip(&profiles.loads)
        .map(|(h, load)| {
            let pv = if h.has_pv { &profiles.pv } else { &idle };
            let battery = if h.has_battery {
                BatteryState::from_params(&config.battery)
            } else {
                BatteryState::none()
            };
            Ok(schedule_battery(load, pv, battery, &config.tariff, config.battery.grid_charging)?.net)
        })
        .collect()
}

fn selection_context<'a>(
    config: &ScenarioConfig,
    network: &'a Network<f64>,
    allocation: &'a PhaseAllocation,
    averages: &'a [f64],
    flows: &[SlotFlows<f64>],
    needs_voltage: bool,
) -> SelectionContext<'a, f64> {
    let phase_voltage = if needs_voltage {
        let fixed = vec![allocation.clone(); flows.len()];
        let baseline = solve_slots(network, &fixed, flows);
        average_phase_voltage(network, &baseline)
    } else {
        BTreeMap::new()
    };
    SelectionContext {
        households: &network.households,
        allocation,
        long_run_avg_power: averages,
        phase_voltage,
        budget: config.switch_budget,
    }
}

/// Electrically farthest bus of each feeder (largest summed |Z| from the
/// busbar).
fn farthest_bus(network: &Network<f64>, feeder: &crate::grid::FeederInfo) -> usize {
    let model = &network.model;
    let distance = |b: usize| -> f64 {
        model
            .path_to(b)
            .into_iter()
            .filter_map(|bus| model.incoming_segment(bus))
            .map(|s| model.segments()[s].impedance.norm())
            .sum()
    };
    feeder
        .buses
        .iter()
        .copied()
        .fold((network.busbar, -1.0), |acc, b| {
            let d = distance(b);
            if d > acc.1 {
                (b, d)
            } else {
                acc
            }
        })
        .0
}

/// Horizon-average |V| per phase at each feeder's farthest bus.
fn average_phase_voltage(
    network: &Network<f64>,
    outcomes: &[SlotOutcome],
) -> BTreeMap<FeederId, [f64; 3]> {
    let mut out = BTreeMap::new();
    for feeder in &network.feeders {
        let bus = farthest_bus(network, feeder);
        let mut sum = [0.0; 3];
        let mut n = 0usize;
        for r in outcomes.iter().flatten() {
            for (ph, s) in sum.iter_mut().enumerate() {
                *s += r.voltages[bus][ph].norm();
            }
            n += 1;
        }
        if n > 0 {
            sum.iter_mut().for_each(|s| *s /= n as f64);
        }
        out.insert(feeder.id, sum);
    }
    out
}

struct Plan {
    allocations: Vec<PhaseAllocation>,
    imbalance: f64,
    hold_imbalance: f64,
}

/// Allocation in force at every slot. Only the dynamic strategy changes it
/// between slots; every strategy is scored with the same participant
/// imbalance objective.
fn plan_allocations(
    config: &ScenarioConfig,
    network: &Network<f64>,
    net: &[Profile],
    flows: &[SlotFlows<f64>],
    start: PhaseAllocation,
    switch_set: &BTreeSet<HouseholdId>,
) -> Result<Plan, HarnessError> {
    let hs = &network.households;
    let participants: Vec<HouseholdId> =
        hs.iter().filter(|h| h.market_participant).map(|h| h.id).collect();
    let options = SolverOptions::default();
    let mut current = start;
    let mut plan = Plan {
        allocations: Vec::with_capacity(flows.len()),
        imbalance: 0.0,
        hold_imbalance: 0.0,
    };
    for (t, slot_flows) in flows.iter().enumerate() {
        for feeder in &network.feeders {
            let commitments = commitments_for_slot(net, hs, &participants, feeder.id, t)?;
            if commitments.entries.is_empty() {
                continue;
            }
            let mut problem = build_problem(&commitments, &current, hs, switch_set)?;
            if config.include_background {
                let bg = aggregate_phase_flows(&current, slot_flows, hs, |h| {
                    h.feeder_id == feeder.id && !h.market_participant
                })?;
                problem = problem.with_background(bg);
            }
            let hold = problem.objective_of(problem.current());
            plan.hold_imbalance += hold;
            if problem.switchable_count() == 0 {
                plan.imbalance += hold;
                continue;
            }
            let solution = solve_branch_and_bound(&problem, &options);
            plan.imbalance += solution.objective;
            if solution.switches_from_current > 0 {
                current = apply_phase_decisions(&current, &solution.decisions(&problem), switch_set, hs)?;
            }
        }
        plan.allocations.push(current.clone());
    }
    Ok(plan)
}

type SlotOutcome = Option<LoadflowResult<f64>>;

/// Solves every slot in parallel; `None` marks a failed or unconverged slot.
fn solve_slots(
    network: &Network<f64>,
    allocations: &[PhaseAllocation],
    flows: &[SlotFlows<f64>],
) -> Vec<SlotOutcome> {
    let options = LoadflowOptions::default();
    allocations
        .par_iter()
        .zip(flows.par_iter())
        .map(|(alloc, f)| {
            match solve_feeder(&network.model, &network.households, alloc, f, &options) {
                Ok(r) if r.converged => Some(r),
                Ok(_) => None,
                Err(e) => {
                    log::debug!("slot {}: {e}", f.slot_index);
                    None
                }
            }
        })
        .collect()
}

fn assemble(
    config: &ScenarioConfig,
    network: &Network<f64>,
    initial: &PhaseAllocation,
    plan: &Plan,
    outcomes: &[SlotOutcome],
    switched: Vec<HouseholdId>,
) -> MetricsReport {
    let hs = &network.households;
    let mut series = Vec::with_capacity(outcomes.len() * network.feeders.len());
    let mut surface = Vec::new();
    let mut diagnostics = Vec::new();
    let mut warnings = Vec::new();
    let mut unconverged = Vec::new();

    let mut peak: Option<(f64, usize)> = None;
    let mut vuf_sum = 0.0;
    let mut converged_slots = 0usize;
    let (mut v_lo, mut v_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut line_kwh, mut tx_kwh, mut tx_peak) = (0.0, 0.0, 0.0f64);
    let mut switch_ops = 0;

    for (t, outcome) in outcomes.iter().enumerate() {
        let prev = if t == 0 { initial } else { &plan.allocations[t - 1] };
        let now = &plan.allocations[t];
        let per_bus_vuf = outcome.as_ref().and_then(|r| {
            r.voltages
                .iter()
                .map(|v| compute_vuf(*v))
                .collect::<Result<Vec<f64>, _>>()
                .ok()
        });
        let result = match (outcome, &per_bus_vuf) {
            (Some(r), Some(_)) => Some(r),
            _ => {
                unconverged.push(t);
                warnings.push(format!("slot {t}: load flow did not converge"));
                log::warn!("{}: slot {t}: load flow did not converge", config.name);
                None
            }
        };

        let mut slot_peak = f64::NEG_INFINITY;
        for feeder in &network.feeders {
            let switches = feeder
                .households
                .iter()
                .filter(|&&j| prev.column(j) != now.column(j))
                .count();
            switch_ops += switches;
            let mut row = SlotRecord {
                slot: t,
                feeder: feeder.id,
                peak_vuf_pct: f64::NAN,
                min_v_pu: f64::NAN,
                max_v_pu: f64::NAN,
                losses_kw: f64::NAN,
                switches,
            };
            if let (Some(r), Some(vuf)) = (result, &per_bus_vuf) {
                let fpeak = feeder.buses.iter().map(|&b| vuf[b]).fold(f64::NEG_INFINITY, f64::max);
                let (lo, hi) = voltage_extremes_over(r, feeder.buses.iter().copied())
                    .expect("converged result");
                let losses: f64 = feeder.segments.iter().map(|&s| r.segment_losses_kw[s]).sum();
                row.peak_vuf_pct = fpeak;
                row.min_v_pu = lo;
                row.max_v_pu = hi;
                row.losses_kw = losses;
                slot_peak = slot_peak.max(fpeak);
                v_lo = v_lo.min(lo);
                v_hi = v_hi.max(hi);
                line_kwh += losses * SLOT_HOURS;
                for &b in &feeder.buses {
                    surface.push(SurfacePoint {
                        slot: t,
                        feeder: feeder.id,
                        bus: network.model.buses()[b].local_index.unwrap_or(0),
                        vuf_pct: vuf[b],
                    });
                }
            }
            series.push(row);
        }

        if let Some(r) = result {
            let p = r.transformer_kw().abs();
            tx_kwh += p * SLOT_HOURS;
            tx_peak = tx_peak.max(p);
            converged_slots += 1;
            if !network.feeders.is_empty() {
                vuf_sum += slot_peak;
                if peak.is_none_or(|(v, _)| slot_peak > v) {
                    peak = Some((slot_peak, t));
                }
            }
            if config.diagnostics {
                diagnostics.extend(diagnostic_rows(r, t));
            }
        }
    }

    let feeder_slots = if network.feeders.is_empty() { 0 } else { converged_slots };
    let summary = ScenarioSummary {
        name: config.name.clone(),
        allocation: config.allocation,
        selection: config.selection,
        switch_budget: config.switch_budget,
        seed: config.seed,
        horizon_days: config.horizon_days,
        slots: outcomes.len(),
        households: hs.len(),
        participants: hs.iter().filter(|h| h.market_participant).count(),
        switched_households: switched,
        peak_vuf_pct: peak.map_or(0.0, |p| p.0),
        peak_vuf_slot: peak.map(|p| p.1),
        mean_vuf_pct: if feeder_slots > 0 { vuf_sum / feeder_slots as f64 } else { 0.0 },
        min_voltage_pu: if v_lo.is_finite() { v_lo } else { 0.0 },
        max_voltage_pu: if v_hi.is_finite() { v_hi } else { 0.0 },
        line_losses_kwh: line_kwh,
        transformer_energy_kwh: tx_kwh,
        transformer_peak_kw: tx_peak,
        switch_operations: switch_ops,
        unconverged_slots: unconverged,
        participant_imbalance: plan.imbalance,
        hold_imbalance: plan.hold_imbalance,
    };
    MetricsReport {
        summary,
        series,
        surface,
        diagnostics,
        warnings,
    }
}
