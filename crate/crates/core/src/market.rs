//! Per-slot market commitments.
//!
//! Synthetic residential load and PV profiles feed a greedy ideal-battery
//! scheduler (self-consumption plus discharge in high-price TOU slots). The
//! resulting net grid flow of each market participant is its commitment for
//! the slot, assumed perfectly enforced.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocator::{Commitment, CommitmentSet};
use crate::grid::{FeederId, Household, HouseholdId};
use crate::loadflow::SLOT_HOURS;

pub const SLOTS_PER_DAY: usize = 144;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("profile lengths differ: load {load}, pv {pv}")]
    LengthMismatch { load: usize, pv: usize },
    #[error("unknown market participant {0}")]
    UnknownParticipant(HouseholdId),
    #[error("slot {slot} outside horizon of {len} slots")]
    SlotOutOfRange { slot: usize, len: usize },
    #[error("profile csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("profile csv: {0}")]
    Format(String),
}

/// kW per 10-minute slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub values: Vec<f64>,
}

impl Profile {
    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn energy_kwh(&self) -> f64 {
        self.values.iter().sum::<f64>() * SLOT_HOURS
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.values.iter().sum::<f64>() / self.values.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileParams {
    /// Range of the per-house base load, kW.
    pub base_kw: [f64; 2],
    /// Range of the per-house morning/evening peak height, kW.
    pub peak_kw: [f64; 2],
    /// Daily energy of the shared PV profile, kWh.
    pub pv_daily_kwh: f64,
    /// Sunrise and sunset, hours of day.
    pub daylight: [f64; 2],
    /// Relative half-width of the per-slot multiplicative load noise.
    pub noise: f64,
}

impl Default for ProfileParams {
    fn default() -> Self {
        Self {
            base_kw: [0.2, 0.5],
            peak_kw: [1.0, 3.0],
            pv_daily_kwh: 20.0,
            daylight: [6.0, 21.5],
            noise: 0.1,
        }
    }
}

/// Load profile per household (roster order) plus the single PV production
/// profile shared by every PV house.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSet {
    pub loads: Vec<Profile>,
    pub pv: Profile,
}

fn bump(hour: f64, centre: f64, width: f64) -> f64 {
    let d = hour - centre;
    (-0.5 * d * d / (width * width)).exp()
}

fn slot_hour(slot: usize) -> f64 {
    (slot % SLOTS_PER_DAY) as f64 * 24.0 / SLOTS_PER_DAY as f64 + 12.0 / SLOTS_PER_DAY as f64
}

/// Half-sine PV curve between sunrise and sunset, scaled so that each day
/// produces exactly `pv_daily_kwh`.
pub fn pv_profile(params: &ProfileParams, days: usize) -> Profile {
    let [rise, set] = params.daylight;
    let shape: Vec<f64> = (0..SLOTS_PER_DAY)
        .map(|s| {
            let h = slot_hour(s);
            if h <= rise || h >= set {
                0.0
            } else {
                (PI * (h - rise) / (set - rise)).sin()
            }
        })
        .collect();
    let area = shape.iter().sum::<f64>() * SLOT_HOURS;
    let scale = if area > 0.0 { params.pv_daily_kwh / area } else { 0.0 };
    let day: Vec<f64> = shape.iter().map(|v| v * scale).collect();
    Profile {
        values: (0..days).flat_map(|_| day.iter().copied()).collect(),
    }
}

/// Residential load with a base level and morning/evening peaks. House `j`
/// draws from its own ChaCha stream so profiles do not depend on roster size.
pub fn load_profile(params: &ProfileParams, days: usize, seed: u64, house: usize) -> Profile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(house as u64 + 1);
    let base = rng.gen_range(params.base_kw[0]..=params.base_kw[1]);
    let morning = rng.gen_range(params.peak_kw[0]..=params.peak_kw[1]);
    let evening = rng.gen_range(params.peak_kw[0]..=params.peak_kw[1]);
    let morning_at = rng.gen_range(6.5..8.5);
    let evening_at = rng.gen_range(18.5..21.0);
    let mut values = Vec::with_capacity(days * SLOTS_PER_DAY);
    for _ in 0..days {
        let m_shift = rng.gen_range(-0.5..0.5);
        let e_shift = rng.gen_range(-0.5..0.5);
        let m_gain = rng.gen_range(0.8..1.0);
        let e_gain = rng.gen_range(0.8..1.0);
        for s in 0..SLOTS_PER_DAY {
            let h = slot_hour(s);
            let peaks = (morning - base) * m_gain * bump(h, morning_at + m_shift, 0.8)
                + (evening - base) * e_gain * bump(h, evening_at + e_shift, 1.3);
            let noise = if params.noise > 0.0 {
                rng.gen_range(1.0 - params.noise..1.0 + params.noise)
            } else {
                1.0
            };
            values.push((base + peaks.max(0.0)) * noise);
        }
    }
    Profile { values }
}

pub fn generate_profiles(params: &ProfileParams, houses: usize, days: usize, seed: u64) -> ProfileSet {
    let loads = (0..houses)
        .into_par_iter()
        .map(|j| load_profile(params, days, seed, j))
        .collect();
    ProfileSet {
        loads,
        pv: pv_profile(params, days),
    }
}

/// Two-level time-of-use tariff, c€/kWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TouTariff {
    pub low_price: f64,
    pub high_price: f64,
    /// [start, end) hours at the low price.
    pub low_window: [u8; 2],
    /// [start, end) hours at the high price.
    pub high_window: [u8; 2],
    /// Price level of hours outside both windows.
    pub gaps_high: bool,
}

impl Default for TouTariff {
    fn default() -> Self {
        Self {
            low_price: 15.0,
            high_price: 20.0,
            low_window: [0, 16],
            high_window: [17, 23],
            gaps_high: false,
        }
    }
}

impl TouTariff {
    pub fn is_high(&self, slot: usize) -> bool {
        let hour = ((slot % SLOTS_PER_DAY) * 24 / SLOTS_PER_DAY) as u8;
        let within = |w: [u8; 2]| hour >= w[0] && hour < w[1];
        if within(self.high_window) {
            true
        } else if within(self.low_window) {
            false
        } else {
            self.gaps_high
        }
    }

    pub fn price(&self, slot: usize) -> f64 {
        if self.is_high(slot) {
            self.high_price
        } else {
            self.low_price
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatteryParams {
    pub capacity_kwh: f64,
    pub power_limit_kw: f64,
    pub initial_soc_kwh: f64,
    /// Allow charging from the grid in low-price slots.
    pub grid_charging: bool,
}

impl Default for BatteryParams {
    fn default() -> Self {
        Self {
            capacity_kwh: 6.0,
            power_limit_kw: 3.0,
            initial_soc_kwh: 0.0,
            grid_charging: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryState {
    pub capacity_kwh: f64,
    pub soc_kwh: f64,
    pub power_limit_kw: f64,
}

impl BatteryState {
    pub fn from_params(p: &BatteryParams) -> Self {
        Self {
            capacity_kwh: p.capacity_kwh,
            soc_kwh: p.initial_soc_kwh.clamp(0.0, p.capacity_kwh),
            power_limit_kw: p.power_limit_kw,
        }
    }

    pub fn none() -> Self {
        Self {
            capacity_kwh: 0.0,
            soc_kwh: 0.0,
            power_limit_kw: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    /// Signed grid flow per slot, kW (positive = import).
    pub net: Profile,
    /// State of charge at each slot boundary, `len + 1` entries.
    pub soc_kwh: Vec<f64>,
    pub import_kwh: f64,
    pub export_kwh: f64,
}

/// Greedy per-slot dispatch: PV serves the load, surplus charges the
/// battery then exports, high-price slots discharge into the residual load,
/// and what remains is imported.
pub fn schedule_battery(
    load: &Profile,
    pv: &Profile,
    battery: BatteryState,
    tariff: &TouTariff,
    grid_charging: bool,
) -> Result<Schedule, MarketError> {
    if load.len() != pv.len() {
        return Err(MarketError::LengthMismatch {
            load: load.len(),
            pv: pv.len(),
        });
    }
    let dt = SLOT_HOURS;
    let cap = battery.capacity_kwh;
    let limit = battery.power_limit_kw;
    let mut soc = battery.soc_kwh;
    let mut net = Vec::with_capacity(load.len());
    let mut trajectory = Vec::with_capacity(load.len() + 1);
    trajectory.push(soc);
    let (mut imported, mut exported) = (0.0, 0.0);

    for (slot, (&l, &g)) in load.values.iter().zip(&pv.values).enumerate() {
        let direct = l.min(g);
        let surplus = g - direct;
        let residual = l - direct;

        let charge = surplus.min(limit).min((cap - soc) / dt).max(0.0);
        soc += charge * dt;
        let export = surplus - charge;

        let discharge = if tariff.is_high(slot) {
            residual.min(limit).min(soc / dt).max(0.0)
        } else {
            0.0
        };
        soc -= discharge * dt;
        let mut import = residual - discharge;

        if grid_charging && !tariff.is_high(slot) {
            let top_up = (limit - charge).min((cap - soc) / dt).max(0.0);
            soc += top_up * dt;
            import += top_up;
        }

        soc = soc.clamp(0.0, cap);
        trajectory.push(soc);
        imported += import * dt;
        exported += export * dt;
        net.push(import - export);
    }

    Ok(Schedule {
        net: Profile { values: net },
        soc_kwh: trajectory,
        import_kwh: imported,
        export_kwh: exported,
    })
}

/// Commitments of `participants` on `feeder` for `slot`, in roster order.
/// `net_flows` are the scheduled grid flows, roster order.
pub fn commitments_for_slot(
    net_flows: &[Profile],
    households: &[Household],
    participants: &[HouseholdId],
    feeder: FeederId,
    slot: usize,
) -> Result<CommitmentSet<f64>, MarketError> {
    for &id in participants {
        if !households.iter().any(|h| h.id == id && h.market_participant) {
            return Err(MarketError::UnknownParticipant(id));
        }
    }
    let mut entries = Vec::new();
    for (j, h) in households.iter().enumerate() {
        if h.feeder_id != feeder || !participants.contains(&h.id) {
            continue;
        }
        let flow = net_flows[j].values.get(slot).ok_or(MarketError::SlotOutOfRange {
            slot,
            len: net_flows[j].len(),
        })?;
        entries.push(Commitment {
            household: h.id,
            power_kw: *flow,
        });
    }
    Ok(CommitmentSet {
        slot_index: slot,
        entries,
    })
}

/// Writes one row per slot and one column per household (after a leading
/// `slot` column).
pub fn write_profiles_csv<W: Write>(
    out: W,
    ids: &[HouseholdId],
    profiles: &[Profile],
) -> Result<(), MarketError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["slot".to_string()];
    header.extend(ids.iter().map(|id| id.to_string()));
    w.write_record(&header)?;
    let len = profiles.iter().map(Profile::len).max().unwrap_or(0);
    for slot in 0..len {
        let mut row = vec![slot.to_string()];
        for p in profiles {
            row.push(p.values.get(slot).map(|v| v.to_string()).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn parse_id(s: &str) -> Option<HouseholdId> {
    s.trim().trim_start_matches('h').parse().ok().map(HouseholdId)
}

pub fn read_profiles_csv<R: Read>(input: R) -> Result<(Vec<HouseholdId>, Vec<Profile>), MarketError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let ids = header
        .iter()
        .skip(1)
        .map(|h| parse_id(h).ok_or_else(|| MarketError::Format(format!("bad household column {h:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let mut profiles = vec![Profile::zeros(0); ids.len()];
    for rec in r.records() {
        let rec = rec?;
        for (k, field) in rec.iter().skip(1).enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| MarketError::Format(format!("bad value {field:?}")))?;
            profiles[k].values.push(v);
        }
    }
    Ok((ids, profiles))
}

#[cfg(test)]
mod tests {
    use super::*;

    const DT: f64 = SLOT_HOURS;

    #[test]
    fn generation_is_deterministic() {
        let p = ProfileParams::default();
        assert_eq!(generate_profiles(&p, 5, 2, 7), generate_profiles(&p, 5, 2, 7));
        assert_ne!(generate_profiles(&p, 5, 2, 7), generate_profiles(&p, 5, 2, 8));
    }

    #[test]
    fn load_stays_in_residential_range() {
        let p = ProfileParams::default();
        let set = generate_profiles(&p, 10, 6, 3);
        for l in &set.loads {
            assert_eq!(l.len(), 6 * SLOTS_PER_DAY);
            assert!(l.values.iter().all(|&v| (0.0..3.5).contains(&v)));
            let night = l.values[12]; // 02:00
            assert!(night < 0.6);
        }
    }

    #[test]
    fn pv_is_dark_at_night_and_hits_daily_energy() {
        let p = ProfileParams::default();
        let pv = pv_profile(&p, 3);
        for day in 0..3 {
            let d = &pv.values[day * SLOTS_PER_DAY..(day + 1) * SLOTS_PER_DAY];
            assert_eq!(d[0], 0.0);
            assert_eq!(d[SLOTS_PER_DAY - 1], 0.0);
            let e: f64 = d.iter().sum::<f64>() * DT;
            assert!((e - p.pv_daily_kwh).abs() < 1e-6);
            let peak = d.iter().cloned().fold(0.0, f64::max);
            let at = d.iter().position(|&v| v == peak).unwrap();
            let noon = (p.daylight[0] + p.daylight[1]) / 2.0;
            assert!((slot_hour(at) - noon).abs() < 0.2);
        }
    }

    #[test]
    fn tariff_windows() {
        let t = TouTariff::default();
        let slot_at = |h: usize| h * 6;
        assert_eq!(t.price(slot_at(0)), 15.0);
        assert_eq!(t.price(slot_at(15)), 15.0);
        assert_eq!(t.price(slot_at(16)), 15.0); // gap
        assert_eq!(t.price(slot_at(17)), 20.0);
        assert_eq!(t.price(slot_at(22)), 20.0);
        assert_eq!(t.price(slot_at(23)), 15.0); // gap
        let high_gaps = TouTariff {
            gaps_high: true,
            ..t
        };
        assert_eq!(high_gaps.price(slot_at(16)), 20.0);
        assert_eq!(high_gaps.price(slot_at(3)), 15.0);
    }

    fn flat(v: f64, n: usize) -> Profile {
        Profile {
            values: vec![v; n],
        }
    }

    #[test]
    fn no_pv_no_battery_passes_load_through() {
        let load = Profile {
            values: vec![0.3, 1.2, 2.0],
        };
        let s = schedule_battery(&load, &flat(0.0, 3), BatteryState::none(), &TouTariff::default(), false)
            .unwrap();
        assert_eq!(s.net, load);
    }

    #[test]
    fn surplus_fills_empty_battery() {
        // 6 kW surplus for one slot = 1 kWh
        let load = flat(0.0, 1);
        let pv = flat(6.0, 1);
        let bat = BatteryState {
            capacity_kwh: 6.0,
            soc_kwh: 0.0,
            power_limit_kw: 6.0,
        };
        let s = schedule_battery(&load, &pv, bat, &TouTariff::default(), false).unwrap();
        assert_eq!(s.net.values, vec![0.0]);
        assert!((s.soc_kwh[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_battery_serves_high_price_load() {
        let high_slot = 17 * 6;
        let load = flat(1.0, high_slot + 1);
        let pv = flat(0.0, high_slot + 1);
        let bat = BatteryState {
            capacity_kwh: 6.0,
            soc_kwh: 6.0,
            power_limit_kw: 3.0,
        };
        let s = schedule_battery(&load, &pv, bat, &TouTariff::default(), false).unwrap();
        assert_eq!(s.net.values[high_slot], 0.0);
        // low-price slots before it import
        assert_eq!(s.net.values[0], 1.0);
        assert!((s.soc_kwh[high_slot + 1] - (6.0 - DT)).abs() < 1e-12);
    }

    #[test]
    fn energy_is_conserved() {
        let p = ProfileParams::default();
        let set = generate_profiles(&p, 4, 2, 11);
        for grid_charging in [false, true] {
            for load in &set.loads {
                let bat = BatteryState::from_params(&BatteryParams::default());
                let s = schedule_battery(load, &set.pv, bat, &TouTariff::default(), grid_charging)
                    .unwrap();
                let lhs = s.import_kwh - s.export_kwh;
                let rhs = load.energy_kwh() - set.pv.energy_kwh() + s.soc_kwh.last().unwrap()
                    - s.soc_kwh[0];
                assert!((lhs - rhs).abs() < 1e-9);
                assert!(s.soc_kwh.iter().all(|&x| (0.0..=6.0).contains(&x)));
            }
        }
    }

    #[test]
    fn no_grid_charging_by_default() {
        // battery charge increments never exceed concurrent PV surplus
        let p = ProfileParams::default();
        let set = generate_profiles(&p, 2, 1, 5);
        let s = schedule_battery(
            &set.loads[0],
            &set.pv,
            BatteryState::from_params(&BatteryParams::default()),
            &TouTariff::default(),
            false,
        )
        .unwrap();
        for t in 0..set.pv.len() {
            let d = s.soc_kwh[t + 1] - s.soc_kwh[t];
            let surplus = (set.pv.values[t] - set.loads[0].values[t]).max(0.0);
            assert!(d <= surplus * DT + 1e-12);
        }
    }

    fn hh(id: u32, feeder: u32, market: bool) -> Household {
        Household {
            id: HouseholdId(id),
            feeder_id: FeederId(feeder),
            bus_index: 1,
            has_pv: true,
            has_battery: false,
            market_participant: market,
            switchable: false,
            power_factor: 1.0,
        }
    }

    #[test]
    fn commitments_follow_sign_and_feeder() {
        let hs = vec![hh(1, 1, true), hh(2, 1, true), hh(3, 2, true), hh(4, 1, false)];
        let flows = vec![flat(0.0, 2), flat(-1.5, 2), flat(2.0, 2), flat(1.0, 2)];
        let ids = [HouseholdId(1), HouseholdId(2), HouseholdId(3)];
        let set = commitments_for_slot(&flows, &hs, &ids, FeederId(1), 1).unwrap();
        assert_eq!(set.entries.len(), 2);
        assert_eq!(set.entries[0].power_kw, 0.0);
        assert_eq!(set.entries[1].power_kw, -1.5);
        assert_eq!(set.total(), -1.5);
        assert!(matches!(
            commitments_for_slot(&flows, &hs, &[HouseholdId(4)], FeederId(1), 0),
            Err(MarketError::UnknownParticipant(HouseholdId(4)))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let ids = vec![HouseholdId(3), HouseholdId(10)];
        let profiles = vec![
            Profile {
                values: vec![0.1, 0.25],
            },
            Profile {
                values: vec![-1.0, 1.0 / 3.0],
            },
        ];
        let mut buf = Vec::new();
        write_profiles_csv(&mut buf, &ids, &profiles).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("slot,h3,h10\n"));
        let (rids, rprof) = read_profiles_csv(buf.as_slice()).unwrap();
        assert_eq!(rids, ids);
        assert_eq!(rprof, profiles);
    }
}
