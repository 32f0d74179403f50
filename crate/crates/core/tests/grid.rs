use std::collections::{BTreeMap, BTreeSet};

use phaseswitch::grid::{apply_phase_decisions, validate_allocation, GridError};
use phaseswitch::{FeederId, Household, HouseholdId, Network64, Phase, PhaseAllocation};
use proptest::prelude::*;

fn roster(switchable: &[bool]) -> Vec<Household> {
    switchable
        .iter()
        .enumerate()
        .map(|(j, &s)| Household {
            id: HouseholdId(j as u32 + 1),
            feeder_id: FeederId(1),
            bus_index: 1,
            has_pv: false,
            has_battery: s,
            market_participant: s,
            switchable: s,
            power_factor: 1.0,
        })
        .collect()
}

fn phase() -> impl Strategy<Value = Phase> {
    (0usize..3).prop_map(|i| Phase::from_index(i).unwrap())
}

fn case() -> impl Strategy<Value = (Vec<Phase>, Vec<bool>, Vec<Option<Phase>>)> {
    (1usize..30).prop_flat_map(|h| {
        (
            prop::collection::vec(phase(), h),
            prop::collection::vec(any::<bool>(), h),
            prop::collection::vec(prop::option::of(phase()), h),
        )
    })
}

fn decisions(hs: &[Household], wanted: &[Option<Phase>]) -> BTreeMap<HouseholdId, Phase> {
    hs.iter()
        .zip(wanted)
        .filter(|(h, _)| h.switchable)
        .filter_map(|(h, w)| w.map(|p| (h.id, p)))
        .collect()
}

fn switch_set(hs: &[Household]) -> BTreeSet<HouseholdId> {
    hs.iter().filter(|h| h.switchable).map(|h| h.id).collect()
}

proptest! {
    #[test]
    fn every_house_on_exactly_one_phase((phases, sw, wanted) in case()) {
        let hs = roster(&sw);
        let cur = PhaseAllocation::from_phases(&phases);
        let next = apply_phase_decisions(&cur, &decisions(&hs, &wanted), &switch_set(&hs), &hs).unwrap();
        prop_assert!(validate_allocation(&next, &hs).is_ok());
        for col in next.columns() {
            prop_assert_eq!(col.iter().filter(|&&b| b).count(), 1);
        }
        for (j, h) in hs.iter().enumerate() {
            if !h.switchable {
                prop_assert_eq!(next.phase_of(j), Some(phases[j]));
            }
        }
    }

    #[test]
    fn applying_twice_is_idempotent((phases, sw, wanted) in case()) {
        let hs = roster(&sw);
        let d = decisions(&hs, &wanted);
        let s = switch_set(&hs);
        let once = apply_phase_decisions(&PhaseAllocation::from_phases(&phases), &d, &s, &hs).unwrap();
        let twice = apply_phase_decisions(&once, &d, &s, &hs).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn hamming_counts_changed_houses((phases, sw, wanted) in case()) {
        let hs = roster(&sw);
        let d = decisions(&hs, &wanted);
        let cur = PhaseAllocation::from_phases(&phases);
        let next = apply_phase_decisions(&cur, &d, &switch_set(&hs), &hs).unwrap();
        let changed = d.iter().filter(|(id, p)| phases[id.0 as usize - 1] != **p).count();
        prop_assert_eq!(cur.hamming(&next), changed);
    }
}

#[test]
fn decision_for_fixed_house_is_rejected() {
    let hs = roster(&[true, false]);
    let cur = PhaseAllocation::from_phases(&[Phase::A, Phase::A]);
    let d = BTreeMap::from([(HouseholdId(2), Phase::B)]);
    let err = apply_phase_decisions(&cur, &d, &switch_set(&hs), &hs).unwrap_err();
    assert!(matches!(err, GridError::NotSwitchable(HouseholdId(2))));
}

#[test]
fn malformed_columns_are_rejected() {
    let hs = roster(&[false, false]);
    let bad = PhaseAllocation::from_columns(vec![[true, true, false], [false, false, true]]);
    assert!(matches!(
        validate_allocation(&bad, &hs),
        Err(GridError::InvalidAllocation(ids)) if ids == vec![HouseholdId(1)]
    ));
    let short = PhaseAllocation::from_phases(&[Phase::A]);
    assert!(validate_allocation(&short, &hs).is_err());
}

#[test]
fn network_files_are_checked() {
    let ok = r#"{
        "feeders": [{"id": 1, "segments": [{"from": 0, "to": 1, "r": 0.1, "x": 0.0}]}],
        "households": [{"id": 7, "feeder": 1, "bus": 1, "phase": "b"}]
    }"#;
    let net = Network64::from_json(ok).unwrap();
    assert_eq!(net.households[0].id, HouseholdId(7));
    assert_eq!(net.initial_allocation.phases(), vec![Phase::B]);
    assert_eq!(net.model.bus_count(), 2);

    let meshed = ok.replace(r#"{"from": 0, "to": 1, "r": 0.1, "x": 0.0}"#,
        r#"{"from": 0, "to": 1, "r": 0.1, "x": 0.0}, {"from": 1, "to": 1, "r": 0.1, "x": 0.0}"#);
    assert!(Network64::from_json(&meshed).is_err());
    let stray = ok.replace(r#""bus": 1"#, r#""bus": 4"#);
    assert!(Network64::from_json(&stray).is_err());
    let unknown = ok.replace(r#""phase": "b""#, r#""phase": "b", "colour": "red""#);
    assert!(Network64::from_json(&unknown).is_err());
}

#[test]
fn preset_fixtures_load() {
    for name in phaseswitch::harness::PRESET_NAMES {
        let text = phaseswitch::harness::builtin_network_json(name).unwrap();
        let net = Network64::from_json(text).unwrap();
        assert!(validate_allocation(&net.initial_allocation, &net.households).is_ok());
    }
}
