//! Network, household roster and phase allocation types.
//!
//! A [`Network`] is one MV/LV transformer feeding one or more radial
//! feeders. Internally all feeders are merged into a single radial
//! [`FeederModel`] rooted at the slack bus (transformer secondary), so one
//! load flow covers the whole LV network while per-feeder views stay
//! available through [`Network::feeders`].

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid phase allocation for households {0:?}")]
    InvalidAllocation(Vec<HouseholdId>),
    #[error("allocation covers {found} households, roster has {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("household {0} is not switchable")]
    NotSwitchable(HouseholdId),
    #[error("unknown household {0}")]
    UnknownHousehold(HouseholdId),
    #[error("no flow entry for household {0}")]
    MissingFlow(HouseholdId),
    #[error("invalid topology: {0}")]
    Topology(String),
    #[error("invalid household {id}: {reason}")]
    InvalidHousehold { id: HouseholdId, reason: String },
    #[error("negative resistance on segment {from}->{to} of feeder {feeder}")]
    NegativeResistance { feeder: FeederId, from: usize, to: usize },
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing network: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Supply phase. Indices 0/1/2 map to a/b/c.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Phase> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Phase::A => "a",
            Phase::B => "b",
            Phase::C => "c",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HouseholdId(pub u32);

impl fmt::Display for HouseholdId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "h{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeederId(pub u32);

impl fmt::Display for FeederId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "f{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Household {
    pub id: HouseholdId,
    pub feeder_id: FeederId,
    /// Bus index local to the feeder; 0 is the LV busbar.
    pub bus_index: usize,
    pub has_pv: bool,
    pub has_battery: bool,
    pub market_participant: bool,
    /// Equipped with a dynamic phase switch before any selection runs.
    pub switchable: bool,
    pub power_factor: f64,
}

/// Boolean 3×H adjacency matrix, stored column-wise (one column per house).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PhaseAllocation {
    columns: Vec<[bool; 3]>,
}

impl PhaseAllocation {
    pub fn from_phases(phases: &[Phase]) -> Self {
        let columns = phases
            .iter()
            .map(|p| {
                let mut col = [false; 3];
                col[p.index()] = true;
                col
            })
            .collect();
        Self { columns }
    }

    /// Builds from raw columns without validation; see [`validate_allocation`].
    pub fn from_columns(columns: Vec<[bool; 3]>) -> Self {
        Self { columns }
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn column(&self, house: usize) -> [bool; 3] {
        self.columns[house]
    }

    pub fn columns(&self) -> &[[bool; 3]] {
        &self.columns
    }

    /// Entry `x[phase][house]` of the adjacency matrix.
    pub fn entry(&self, phase: Phase, house: usize) -> bool {
        self.columns[house][phase.index()]
    }

    /// Phase of `house`, or `None` when its column does not sum to one.
    pub fn phase_of(&self, house: usize) -> Option<Phase> {
        let col = self.columns[house];
        match col.iter().filter(|&&b| b).count() {
            1 => Phase::from_index(col.iter().position(|&b| b)?),
            _ => None,
        }
    }

    /// Per-house phase labels. Panics on an invalid column.
    pub fn phases(&self) -> Vec<Phase> {
        (0..self.len())
            .map(|h| self.phase_of(h).expect("validated allocation"))
            .collect()
    }

    pub fn set_phase(&mut self, house: usize, phase: Phase) {
        let mut col = [false; 3];
        col[phase.index()] = true;
        self.columns[house] = col;
    }

    /// Number of houses whose phase differs between `self` and `other`.
    pub fn hamming(&self, other: &PhaseAllocation) -> usize {
        self.columns
            .iter()
            .zip(&other.columns)
            .filter(|(a, b)| a != b)
            .count()
    }
}

/// Checks that every column of X sums to exactly one.
pub fn validate_allocation(
    alloc: &PhaseAllocation,
    households: &[Household],
) -> Result<(), GridError> {
    if alloc.len() != households.len() {
        return Err(GridError::DimensionMismatch {
            expected: households.len(),
            found: alloc.len(),
        });
    }
    let bad: Vec<HouseholdId> = households
        .iter()
        .enumerate()
        .filter(|(j, _)| alloc.phase_of(*j).is_none())
        .map(|(_, h)| h.id)
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(GridError::InvalidAllocation(bad))
    }
}

/// Applies per-house phase decisions, leaving every house outside
/// `switchable` on its current phase.
pub fn apply_phase_decisions(
    current: &PhaseAllocation,
    decisions: &BTreeMap<HouseholdId, Phase>,
    switchable: &BTreeSet<HouseholdId>,
    households: &[Household],
) -> Result<PhaseAllocation, GridError> {
    validate_allocation(current, households)?;
    let index: HashMap<HouseholdId, usize> =
        households.iter().enumerate().map(|(j, h)| (h.id, j)).collect();
    let mut next = current.clone();
    for (&id, &phase) in decisions {
        let &j = index.get(&id).ok_or(GridError::UnknownHousehold(id))?;
        if !switchable.contains(&id) {
            return Err(GridError::NotSwitchable(id));
        }
        next.set_phase(j, phase);
    }
    validate_allocation(&next, households)?;
    Ok(next)
}

/// Signed per-house power for one 10-minute slot, aligned with the roster.
/// Positive is net consumption, negative is net injection (kW).
#[derive(Debug, Clone, PartialEq)]
pub struct SlotFlows<T> {
    pub slot_index: usize,
    pub per_house_power: Vec<T>,
}

impl<T: Real> SlotFlows<T> {
    pub fn zeros(slot_index: usize, houses: usize) -> Self {
        Self {
            slot_index,
            per_house_power: vec![T::zero(); houses],
        }
    }
}

/// Per-phase sum of the powers of houses in `subset`.
pub fn aggregate_phase_flows<T: Real>(
    alloc: &PhaseAllocation,
    flows: &SlotFlows<T>,
    households: &[Household],
    subset: impl Fn(&Household) -> bool,
) -> Result<[T; 3], GridError> {
    validate_allocation(alloc, households)?;
    let mut out = [T::zero(); 3];
    for (j, h) in households.iter().enumerate() {
        if !subset(h) {
            continue;
        }
        let p = *flows
            .per_house_power
            .get(j)
            .ok_or(GridError::MissingFlow(h.id))?;
        let phase = alloc.phase_of(j).expect("validated");
        out[phase.index()] += p;
    }
    Ok(out)
}

/// Series and neutral-return impedance of one line segment, ohms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment<T> {
    pub from: usize,
    pub to: usize,
    pub impedance: Complex<T>,
    pub neutral_impedance: Complex<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub parent: Option<usize>,
    pub feeder: Option<FeederId>,
    /// Index local to `feeder`; `None` for the slack and the busbar.
    pub local_index: Option<usize>,
}

/// Radial three-phase network rooted at the slack bus (index 0).
#[derive(Debug, Clone, PartialEq)]
pub struct FeederModel<T> {
    buses: Vec<Bus>,
    /// `segments[k]` feeds `segments[k].to`; `incoming[bus]` indexes it.
    segments: Vec<Segment<T>>,
    incoming: Vec<Option<usize>>,
    /// Root-first breadth-first order.
    order: Vec<usize>,
    slack_voltage: [Complex<T>; 3],
    nominal_voltage: T,
    /// Bus of each household, roster order.
    attachments: Vec<usize>,
}

impl<T: Real> FeederModel<T> {
    /// Builds a radial model from segments over `bus_count` buses. Fails on
    /// a meshed or disconnected topology or a negative resistance.
    pub fn new(
        bus_count: usize,
        segments: Vec<Segment<T>>,
        slack_voltage: [Complex<T>; 3],
        nominal_voltage: T,
        attachments: Vec<usize>,
    ) -> Result<Self, GridError> {
        if bus_count == 0 {
            return Err(GridError::Topology("no buses".into()));
        }
        let mut incoming = vec![None; bus_count];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); bus_count];
        for (k, seg) in segments.iter().enumerate() {
            if seg.from >= bus_count || seg.to >= bus_count {
                return Err(GridError::Topology(format!(
                    "segment {}->{} references a missing bus",
                    seg.from, seg.to
                )));
            }
            if seg.to == 0 {
                return Err(GridError::Topology("segment feeds the slack bus".into()));
            }
            if incoming[seg.to].is_some() {
                return Err(GridError::Topology(format!(
                    "bus {} has more than one parent (meshed)",
                    seg.to
                )));
            }
            if seg.impedance.re < T::zero() || seg.neutral_impedance.re < T::zero() {
                return Err(GridError::Topology(format!(
                    "negative resistance on segment {}->{}",
                    seg.from, seg.to
                )));
            }
            incoming[seg.to] = Some(k);
            children[seg.from].push(seg.to);
        }
        let mut order = Vec::with_capacity(bus_count);
        let mut seen = vec![false; bus_count];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(b) = queue.pop_front() {
            order.push(b);
            for &c in &children[b] {
                if seen[c] {
                    return Err(GridError::Topology(format!("cycle through bus {c}")));
                }
                seen[c] = true;
                queue.push_back(c);
            }
        }
        if order.len() != bus_count {
            return Err(GridError::Topology(
                "buses unreachable from the slack (cycle or island)".into(),
            ));
        }
        if let Some(&b) = attachments.iter().find(|&&b| b >= bus_count) {
            return Err(GridError::Topology(format!("household attached to missing bus {b}")));
        }
        let buses = (0..bus_count)
            .map(|b| Bus {
                parent: incoming[b].map(|k| segments[k].from),
                feeder: None,
                local_index: None,
            })
            .collect();
        Ok(Self {
            buses,
            segments,
            incoming,
            order,
            slack_voltage,
            nominal_voltage,
            attachments,
        })
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn segments(&self) -> &[Segment<T>] {
        &self.segments
    }

    /// Segment feeding `bus`, if any.
    pub fn incoming_segment(&self, bus: usize) -> Option<usize> {
        self.incoming[bus]
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn slack_voltage(&self) -> [Complex<T>; 3] {
        self.slack_voltage
    }

    pub fn nominal_voltage(&self) -> T {
        self.nominal_voltage
    }

    pub fn attachments(&self) -> &[usize] {
        &self.attachments
    }

    /// Path of buses from the slack to `bus`, inclusive.
    pub fn path_to(&self, bus: usize) -> Vec<usize> {
        let mut path = vec![bus];
        let mut b = bus;
        while let Some(p) = self.buses[b].parent {
            path.push(p);
            b = p;
        }
        path.reverse();
        path
    }

    /// Returns a copy with every impedance scaled by `factor`.
    pub fn scale_impedances(&self, factor: T) -> Self {
        let mut out = self.clone();
        for s in &mut out.segments {
            s.impedance *= factor;
            s.neutral_impedance *= factor;
        }
        out
    }
}

/// Balanced direct-sequence phasors of magnitude `v`: a at 0°, b at −120°,
/// c at +120°.
pub fn balanced_phasors<T: Real>(v: T) -> [Complex<T>; 3] {
    let third = T::lit(2.0 * std::f64::consts::PI / 3.0);
    [
        Complex::from_polar(v, T::zero()),
        Complex::from_polar(v, -third),
        Complex::from_polar(v, third),
    ]
}

/// Per-feeder view over the merged model.
#[derive(Debug, Clone, PartialEq)]
pub struct FeederInfo {
    pub id: FeederId,
    /// Global bus indices belonging to the feeder, busbar excluded.
    pub buses: Vec<usize>,
    /// Global segment indices belonging to the feeder.
    pub segments: Vec<usize>,
    /// Roster indices of the feeder's households.
    pub households: Vec<usize>,
}

/// Loaded LV network: model, roster and initial allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub model: FeederModel<T>,
    pub households: Vec<Household>,
    pub initial_allocation: PhaseAllocation,
    pub feeders: Vec<FeederInfo>,
    /// Global index of the LV busbar (0 without a transformer impedance).
    pub busbar: usize,
}

impl<T: Real> Network<T> {
    pub fn household_index(&self, id: HouseholdId) -> Option<usize> {
        self.households.iter().position(|h| h.id == id)
    }

    pub fn feeder(&self, id: FeederId) -> Option<&FeederInfo> {
        self.feeders.iter().find(|f| f.id == id)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, GridError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| GridError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, GridError> {
        let file: NetworkFile = serde_json::from_str(text)?;
        Self::from_description(&file)
    }

    /// Validates a parsed network file and merges its feeders.
    pub fn from_description(file: &NetworkFile) -> Result<Self, GridError> {
        let nominal = T::lit(file.nominal_voltage);
        let slack = match file.slack_voltage {
            Some(v) => [
                Complex::new(T::lit(v[0][0]), T::lit(v[0][1])),
                Complex::new(T::lit(v[1][0]), T::lit(v[1][1])),
                Complex::new(T::lit(v[2][0]), T::lit(v[2][1])),
            ],
            None => balanced_phasors(nominal),
        };

        let mut buses = vec![Bus {
            parent: None,
            feeder: None,
            local_index: None,
        }];
        let mut segments = Vec::new();
        let busbar = match &file.transformer {
            Some(t) => {
                if t.r < 0.0 || t.neutral_r < 0.0 {
                    return Err(GridError::Topology("negative transformer resistance".into()));
                }
                buses.push(Bus {
                    parent: Some(0),
                    feeder: None,
                    local_index: None,
                });
                segments.push(Segment {
                    from: 0,
                    to: 1,
                    impedance: Complex::new(T::lit(t.r), T::lit(t.x)),
                    neutral_impedance: Complex::new(T::lit(t.neutral_r), T::lit(t.neutral_x)),
                });
                1
            }
            None => 0,
        };

        let mut feeders = Vec::new();
        let mut local_to_global: HashMap<FeederId, Vec<usize>> = HashMap::new();
        for f in &file.feeders {
            if local_to_global.contains_key(&f.id) {
                return Err(GridError::Topology(format!("duplicate feeder {}", f.id)));
            }
            let n_local = f.segments.len() + 1;
            let mut map = vec![busbar; n_local];
            for (local, slot) in map.iter_mut().enumerate().skip(1) {
                *slot = buses.len();
                buses.push(Bus {
                    parent: None,
                    feeder: Some(f.id),
                    local_index: Some(local),
                });
            }
            let mut seg_ids = Vec::new();
            for s in &f.segments {
                if s.from >= n_local || s.to >= n_local || s.to == 0 {
                    return Err(GridError::Topology(format!(
                        "feeder {}: segment {}->{} out of range (buses 0..{})",
                        f.id, s.from, s.to, n_local
                    )));
                }
                if s.r < 0.0 || s.neutral_r < 0.0 {
                    return Err(GridError::NegativeResistance {
                        feeder: f.id,
                        from: s.from,
                        to: s.to,
                    });
                }
                seg_ids.push(segments.len());
                segments.push(Segment {
                    from: map[s.from],
                    to: map[s.to],
                    impedance: Complex::new(T::lit(s.r), T::lit(s.x)),
                    neutral_impedance: Complex::new(T::lit(s.neutral_r), T::lit(s.neutral_x)),
                });
            }
            feeders.push(FeederInfo {
                id: f.id,
                buses: map[1..].to_vec(),
                segments: seg_ids,
                households: Vec::new(),
            });
            local_to_global.insert(f.id, map);
        }

        let mut households = Vec::with_capacity(file.households.len());
        let mut phases = Vec::with_capacity(file.households.len());
        let mut attachments = Vec::with_capacity(file.households.len());
        let mut ids = BTreeSet::new();
        for (j, h) in file.households.iter().enumerate() {
            let id = HouseholdId(h.id);
            if !ids.insert(id) {
                return Err(GridError::InvalidHousehold {
                    id,
                    reason: "duplicate id".into(),
                });
            }
            let feeder_id = FeederId(h.feeder);
            let map = local_to_global.get(&feeder_id).ok_or_else(|| {
                GridError::InvalidHousehold {
                    id,
                    reason: format!("unknown feeder {feeder_id}"),
                }
            })?;
            let &bus = map.get(h.bus).ok_or_else(|| GridError::InvalidHousehold {
                id,
                reason: format!("bus {} not on feeder {feeder_id}", h.bus),
            })?;
            if h.switchable && !h.market {
                return Err(GridError::InvalidHousehold {
                    id,
                    reason: "switchable household must be a market participant".into(),
                });
            }
            if !(h.power_factor > 0.0 && h.power_factor <= 1.0) {
                return Err(GridError::InvalidHousehold {
                    id,
                    reason: format!("power factor {} outside (0, 1]", h.power_factor),
                });
            }
            households.push(Household {
                id,
                feeder_id,
                bus_index: h.bus,
                has_pv: h.pv,
                has_battery: h.battery,
                market_participant: h.market,
                switchable: h.switchable,
                power_factor: h.power_factor,
            });
            phases.push(h.phase);
            attachments.push(bus);
            feeders
                .iter_mut()
                .find(|f| f.id == feeder_id)
                .expect("feeder exists")
                .households
                .push(j);
        }

        let mut model = FeederModel::new(buses.len(), segments, slack, nominal, attachments)?;
        for (b, bus) in buses.into_iter().enumerate() {
            model.buses[b].feeder = bus.feeder;
            model.buses[b].local_index = bus.local_index;
        }
        Ok(Self {
            model,
            households,
            initial_allocation: PhaseAllocation::from_phases(&phases),
            feeders,
            busbar,
        })
    }
}

fn default_nominal() -> f64 {
    230.0
}

fn default_pf() -> f64 {
    1.0
}

/// On-disk network description; the README documents the format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    #[serde(default = "default_nominal")]
    pub nominal_voltage: f64,
    /// Per-phase slack phasors as `[re, im]` volts; balanced when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slack_voltage: Option<[[f64; 2]; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transformer: Option<ImpedanceSpec>,
    pub feeders: Vec<FeederSpec>,
    pub households: Vec<HouseholdSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpedanceSpec {
    pub r: f64,
    pub x: f64,
    #[serde(default)]
    pub neutral_r: f64,
    #[serde(default)]
    pub neutral_x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeederSpec {
    pub id: FeederId,
    pub segments: Vec<SegmentSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    #[serde(default)]
    pub neutral_r: f64,
    #[serde(default)]
    pub neutral_x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HouseholdSpec {
    pub id: u32,
    pub feeder: u32,
    pub bus: usize,
    pub phase: Phase,
    #[serde(default)]
    pub pv: bool,
    #[serde(default)]
    pub battery: bool,
    #[serde(default)]
    pub market: bool,
    #[serde(default)]
    pub switchable: bool,
    #[serde(default = "default_pf")]
    pub power_factor: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn house(id: u32, switchable: bool) -> Household {
        Household {
            id: HouseholdId(id),
            feeder_id: FeederId(1),
            bus_index: 1,
            has_pv: false,
            has_battery: false,
            market_participant: switchable,
            switchable,
            power_factor: 1.0,
        }
    }

    #[test]
    fn one_phase_per_house_is_valid() {
        let hs = vec![house(1, false), house(2, false), house(3, false)];
        let alloc = PhaseAllocation::from_phases(&[Phase::A, Phase::B, Phase::C]);
        assert!(validate_allocation(&alloc, &hs).is_ok());
    }

    #[test]
    fn empty_and_double_columns_are_flagged() {
        let hs = vec![house(1, false), house(2, false), house(3, false)];
        let alloc = PhaseAllocation::from_columns(vec![
            [true, false, false],
            [false, false, false],
            [false, true, true],
        ]);
        match validate_allocation(&alloc, &hs) {
            Err(GridError::InvalidAllocation(ids)) => {
                assert_eq!(ids, vec![HouseholdId(2), HouseholdId(3)])
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch() {
        let hs = vec![house(1, false)];
        let alloc = PhaseAllocation::from_phases(&[Phase::A, Phase::B]);
        assert!(matches!(
            validate_allocation(&alloc, &hs),
            Err(GridError::DimensionMismatch { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn decisions_are_local() {
        let hs = vec![house(1, true), house(2, true), house(3, false)];
        let switchable: BTreeSet<_> = [HouseholdId(1), HouseholdId(2)].into();
        let cur = PhaseAllocation::from_phases(&[Phase::A, Phase::A, Phase::C]);

        let same = apply_phase_decisions(&cur, &BTreeMap::new(), &switchable, &hs).unwrap();
        assert_eq!(same, cur);

        let dec = BTreeMap::from([(HouseholdId(1), Phase::B)]);
        let next = apply_phase_decisions(&cur, &dec, &switchable, &hs).unwrap();
        assert_eq!(next.phases(), vec![Phase::B, Phase::A, Phase::C]);
        assert_eq!(next.hamming(&cur), 1);

        let again = apply_phase_decisions(&next, &dec, &switchable, &hs).unwrap();
        assert_eq!(again, next);
    }

    #[test]
    fn decision_on_fixed_house_rejected() {
        let hs = vec![house(1, true), house(2, false)];
        let switchable: BTreeSet<_> = [HouseholdId(1)].into();
        let cur = PhaseAllocation::from_phases(&[Phase::A, Phase::A]);
        let dec = BTreeMap::from([(HouseholdId(2), Phase::B)]);
        assert!(matches!(
            apply_phase_decisions(&cur, &dec, &switchable, &hs),
            Err(GridError::NotSwitchable(HouseholdId(2)))
        ));
    }

    #[test]
    fn aggregate_examples() {
        let hs = vec![house(1, true), house(2, true), house(3, true)];
        let alloc = PhaseAllocation::from_phases(&[Phase::A, Phase::B, Phase::C]);
        let zero = SlotFlows::<f64>::zeros(0, 3);
        assert_eq!(aggregate_phase_flows(&alloc, &zero, &hs, |_| true).unwrap(), [0.0; 3]);

        let flows = SlotFlows {
            slot_index: 0,
            per_house_power: vec![2.0, 1.0, 1.0],
        };
        assert_eq!(
            aggregate_phase_flows(&alloc, &flows, &hs, |_| true).unwrap(),
            [2.0, 1.0, 1.0]
        );

        let two = vec![house(1, true), house(2, true)];
        let alloc = PhaseAllocation::from_phases(&[Phase::A, Phase::A]);
        let flows = SlotFlows {
            slot_index: 0,
            per_house_power: vec![2.0, -3.0],
        };
        assert_eq!(
            aggregate_phase_flows(&alloc, &flows, &two, |_| true).unwrap(),
            [-1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn aggregate_missing_flow() {
        let hs = vec![house(1, true), house(2, true)];
        let alloc = PhaseAllocation::from_phases(&[Phase::A, Phase::B]);
        let flows = SlotFlows {
            slot_index: 0,
            per_house_power: vec![1.0],
        };
        assert!(matches!(
            aggregate_phase_flows(&alloc, &flows, &hs, |_| true),
            Err(GridError::MissingFlow(HouseholdId(2)))
        ));
        // members outside the subset need no entry
        assert!(aggregate_phase_flows(&alloc, &flows, &hs, |h| h.id.0 == 1).is_ok());
    }

    const SMALL: &str = r#"{
        "feeders": [{"id": 1, "segments": [
            {"from": 0, "to": 1, "r": 0.1, "x": 0.05},
            {"from": 1, "to": 2, "r": 0.1, "x": 0.05}
        ]}],
        "households": [
            {"id": 7, "feeder": 1, "bus": 2, "phase": "b", "pv": true, "market": true}
        ]
    }"#;

    #[test]
    fn loads_small_network() {
        let net = Network::<f64>::from_json(SMALL).unwrap();
        assert_eq!(net.model.bus_count(), 3);
        assert_eq!(net.households[0].id, HouseholdId(7));
        assert_eq!(net.initial_allocation.phases(), vec![Phase::B]);
        assert_eq!(net.model.attachments(), &[2]);
        assert_eq!(net.model.path_to(2), vec![0, 1, 2]);
        assert_eq!(net.feeders[0].households, vec![0]);
    }

    #[test]
    fn rejects_unknown_fields() {
        let bad = SMALL.replace("\"pv\": true", "\"pv\": true, \"colour\": 1");
        assert!(matches!(
            Network::<f64>::from_json(&bad),
            Err(GridError::Parse(_))
        ));
    }

    #[test]
    fn rejects_meshed_feeder() {
        let meshed = r#"{
            "feeders": [{"id": 1, "segments": [
                {"from": 0, "to": 1, "r": 0.1, "x": 0.0},
                {"from": 1, "to": 2, "r": 0.1, "x": 0.0},
                {"from": 0, "to": 2, "r": 0.1, "x": 0.0}
            ]}],
            "households": []
        }"#;
        assert!(matches!(
            Network::<f64>::from_json(meshed),
            Err(GridError::Topology(_))
        ));
    }

    #[test]
    fn rejects_switchable_non_participant() {
        let bad = SMALL.replace("\"market\": true", "\"switchable\": true");
        assert!(matches!(
            Network::<f64>::from_json(&bad),
            Err(GridError::InvalidHousehold { .. })
        ));
    }

    #[test]
    fn rejects_negative_resistance() {
        let bad = SMALL.replace(
            r#"{"from": 1, "to": 2, "r": 0.1"#,
            r#"{"from": 1, "to": 2, "r": -0.1"#,
        );
        assert!(matches!(
            Network::<f64>::from_json(&bad),
            Err(GridError::NegativeResistance { .. })
        ));
    }
}
