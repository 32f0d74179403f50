//! Preset scenarios and the generator behind their network fixtures.
//!
//! Scenarios A–D share one 50-house, three-feeder network and differ only
//! in PV/battery placement, which is nested (every PV or battery house of a
//! scenario keeps it in later ones). Impact-33 uses a two-feeder, 33-house
//! network. The committed JSON fixtures are the generator output.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AllocationStrategy, ScenarioConfig};
use crate::grid::{FeederId, FeederSpec, HouseholdSpec, NetworkFile, Phase, SegmentSpec};
use crate::market::{BatteryParams, ProfileParams, TouTariff};
use crate::selection::SelectionStrategy;

pub const PRESET_NAMES: [&str; 5] = ["A", "B", "C", "D", "Impact-33"];

const PRESET_SEED: u64 = 2019;
const PLACEMENT_SEED: u64 = 0x5eed_0050;

/// Per-span impedance of a cable type, ohms.
#[derive(Clone, Copy)]
struct Cable {
    r: f64,
    x: f64,
    neutral_r: f64,
}

// 80 m span of 3x50 mm² aluminium overhead bundle, 54.6 mm² neutral.
const OVERHEAD: Cable = Cable {
    r: 0.0513,
    x: 0.0072,
    neutral_r: 0.0504,
};
// 40 m span of 3x150 mm² aluminium underground cable, 70 mm² neutral.
const UNDERGROUND: Cable = Cable {
    r: 0.0082,
    x: 0.0032,
    neutral_r: 0.0177,
};

static FIXTURE_A: &str = include_str!("../../fixtures/networks/a.json");
static FIXTURE_B: &str = include_str!("../../fixtures/networks/b.json");
static FIXTURE_C: &str = include_str!("../../fixtures/networks/c.json");
static FIXTURE_D: &str = include_str!("../../fixtures/networks/d.json");
static FIXTURE_IMPACT: &str = include_str!("../../fixtures/networks/impact-33.json");

/// Household mix of a preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PresetMix {
    pub households: usize,
    pub pv: usize,
    pub battery: usize,
    /// Houses with both; fixed only for Impact-33.
    pub pv_and_battery: Option<usize>,
}

fn canonical(name: &str) -> Option<&'static str> {
    PRESET_NAMES
        .iter()
        .copied()
        .find(|p| p.eq_ignore_ascii_case(name))
}

pub fn preset_mix(name: &str) -> Option<PresetMix> {
    let (households, pv, battery, both) = match canonical(name)? {
        "A" => (50, 15, 10, None),
        "B" => (50, 20, 20, None),
        "C" => (50, 25, 30, None),
        "D" => (50, 40, 30, None),
        _ => (33, 17, 25, Some(17)),
    };
    Some(PresetMix {
        households,
        pv,
        battery,
        pv_and_battery: both,
    })
}

/// Committed network fixture of a preset, by case-insensitive name.
pub fn builtin_network_json(name: &str) -> Option<&'static str> {
    Some(match canonical(name)? {
        "A" => FIXTURE_A,
        "B" => FIXTURE_B,
        "C" => FIXTURE_C,
        "D" => FIXTURE_D,
        _ => FIXTURE_IMPACT,
    })
}

/// Radial feeder layout: parent of each bus 1..n, house count and cable.
struct Layout {
    parents: &'static [usize],
    houses: usize,
    cable: Cable,
}

const FIFTY: [Layout; 3] = [
    Layout {
        parents: &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9],
        houses: 20,
        cable: OVERHEAD,
    },
    Layout {
        parents: &[0, 1, 2, 3, 4, 3, 6, 7],
        houses: 16,
        cable: UNDERGROUND,
    },
    Layout {
        parents: &[0, 1, 2, 3, 4, 5, 6],
        houses: 14,
        cable: UNDERGROUND,
    },
];

const THIRTY_THREE: [Layout; 2] = [
    Layout {
        parents: &[0, 1, 2, 3, 4, 5, 6, 7, 8],
        houses: 18,
        cable: OVERHEAD,
    },
    Layout {
        parents: &[0, 1, 2, 3, 2, 5, 6, 7],
        houses: 15,
        cable: UNDERGROUND,
    },
];

/// Roster with buses and phases; placement flags all false.
fn skeleton(layouts: &[Layout], rng: &mut ChaCha8Rng) -> NetworkFile {
    let mut feeders = Vec::new();
    let mut households = Vec::new();
    for (f, layout) in layouts.iter().enumerate() {
        let id = FeederId(f as u32 + 1);
        let segments = layout
            .parents
            .iter()
            .enumerate()
            .map(|(k, &from)| SegmentSpec {
                from,
                to: k + 1,
                r: layout.cable.r,
                x: layout.cable.x,
                neutral_r: layout.cable.neutral_r,
                neutral_x: layout.cable.x,
            })
            .collect();
        feeders.push(FeederSpec { id, segments });
        let buses = layout.parents.len();
        for i in 0..layout.houses {
            // Phase-a heavy, as found on feeders that grew without balancing.
            let draw = rng.gen_range(0..100);
            let phase = if draw < 50 {
                Phase::A
            } else if draw < 78 {
                Phase::B
            } else {
                Phase::C
            };
            households.push(HouseholdSpec {
                id: households.len() as u32 + 1,
                feeder: id.0,
                bus: (i * buses / layout.houses) + 1,
                phase,
                pv: false,
                battery: false,
                market: false,
                switchable: false,
                power_factor: 1.0,
            });
        }
    }
    NetworkFile {
        nominal_voltage: 230.0,
        slack_voltage: None,
        transformer: None,
        feeders,
        households,
    }
}

/// Generated network of a preset. Identical to the committed fixture.
pub fn preset_network(name: &str) -> Option<NetworkFile> {
    let mix = preset_mix(name)?;
    let mut rng = ChaCha8Rng::seed_from_u64(PLACEMENT_SEED);
    let layouts: &[Layout] = if mix.households == 50 { &FIFTY } else { &THIRTY_THREE };
    let mut net = skeleton(layouts, &mut rng);
    let h = net.households.len();
    // PV adopters lean towards phase a: phase-a houses draw half-width keys.
    let mut keyed: Vec<(f64, usize)> = (0..h)
        .map(|j| {
            let width = if net.households[j].phase == Phase::A { 0.5 } else { 1.0 };
            (rng.gen_range(0.0..width), j)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    let pv_order: Vec<usize> = keyed.into_iter().map(|(_, j)| j).collect();
    let mut bat_order: Vec<usize> = (0..h).collect();
    bat_order.shuffle(&mut rng);

    for &j in &pv_order[..mix.pv] {
        net.households[j].pv = true;
    }
    match mix.pv_and_battery {
        Some(_) => {
            // PV houses all carry a battery; the rest go to non-PV houses.
            for &j in &pv_order[..mix.pv] {
                net.households[j].battery = true;
            }
            let extra = mix.battery - mix.pv;
            for &j in bat_order.iter().filter(|&&j| !net.households[j].pv).take(extra).collect::<Vec<_>>() {
                net.households[j].battery = true;
            }
        }
        None => {
            for &j in &bat_order[..mix.battery] {
                net.households[j].battery = true;
            }
        }
    }
    for hh in &mut net.households {
        hh.market = hh.pv || hh.battery;
    }
    Some(net)
}

/// Dynamic MB run with budget 3 on the preset's committed network.
pub fn preset_config(name: &str) -> Option<ScenarioConfig> {
    let canon = canonical(name)?;
    let mix = preset_mix(canon)?;
    let h = mix.households as f64;
    Some(ScenarioConfig {
        name: canon.to_string(),
        household_count: mix.households,
        pv_fraction: mix.pv as f64 / h,
        battery_fraction: mix.battery as f64 / h,
        network: format!("builtin:{}", canon.to_ascii_lowercase()),
        switch_budget: 3,
        selection: SelectionStrategy::Mb,
        allocation: AllocationStrategy::Dynamic,
        horizon_days: 6,
        seed: PRESET_SEED,
        tariff: TouTariff::default(),
        battery: BatteryParams::default(),
        profiles: ProfileParams {
            pv_daily_kwh: 24.0,
            ..ProfileParams::default()
        },
        include_background: true,
        randomize_placement: false,
        diagnostics: false,
        base_dir: None,
    })
}

/// The runs compared for a preset: no switching, static rebalancing and
/// dynamic switching at the budgets of interest.
pub fn preset_suite(name: &str) -> Vec<ScenarioConfig> {
    let Some(base) = preset_config(name) else {
        return Vec::new();
    };
    let runs: &[(AllocationStrategy, usize)] = if base.household_count == 33 {
        &[
            (AllocationStrategy::None, 0),
            (AllocationStrategy::Static, 4),
            (AllocationStrategy::Dynamic, 4),
        ]
    } else {
        &[
            (AllocationStrategy::None, 0),
            (AllocationStrategy::Static, 12),
            (AllocationStrategy::Dynamic, 1),
            (AllocationStrategy::Dynamic, 3),
            (AllocationStrategy::Dynamic, 6),
        ]
    };
    runs.iter()
        .map(|&(allocation, k)| ScenarioConfig {
            name: format!("{}-{}-{}", base.name, label(allocation), k),
            allocation,
            switch_budget: k,
            ..base.clone()
        })
        .collect()
}

fn label(a: AllocationStrategy) -> &'static str {
    match a {
        AllocationStrategy::None => "none",
        AllocationStrategy::Static => "static",
        AllocationStrategy::Dynamic => "dynamic",
    }
}
