//! Quality-of-supply metrics over load-flow results.

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::LoadflowResult;
use crate::scalar::Real;

/// Length of one market/switching slot in hours (10 minutes).
pub const SLOT_HOURS: f64 = 1.0 / 6.0;

#[derive(Debug, Error, PartialEq)]
pub enum VufError {
    #[error("positive-sequence voltage is zero")]
    ZeroPositiveSequence,
    #[error("load flow result is not converged")]
    NotConverged,
}

/// Voltage unbalance factor in percent, `100·|V₂|/|V₁|` from the
/// symmetrical components of the three phase-to-neutral phasors.
pub fn compute_vuf<T: Real>(v: [Complex<T>; 3]) -> Result<T, VufError> {
    let third = T::lit(2.0 * std::f64::consts::PI / 3.0);
    let alpha = Complex::from_polar(T::one(), third);
    let alpha2 = alpha * alpha;
    let three = T::lit(3.0);
    let pos = (v[0] + alpha * v[1] + alpha2 * v[2]) / three;
    let neg = (v[0] + alpha2 * v[1] + alpha * v[2]) / three;
    let scale = v[0].norm().max(v[1].norm()).max(v[2].norm());
    let p = pos.norm();
    if !(p > T::epsilon().sqrt() * scale) {
        return Err(VufError::ZeroPositiveSequence);
    }
    Ok(T::lit(100.0) * neg.norm() / p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VufProfile<T> {
    pub per_bus: Vec<T>,
    pub max: T,
    pub max_bus: usize,
}

/// VUF at every bus of a converged result.
pub fn feeder_vuf_profile<T: Real>(result: &LoadflowResult<T>) -> Result<VufProfile<T>, VufError> {
    if !result.converged {
        return Err(VufError::NotConverged);
    }
    let per_bus = result
        .voltages
        .iter()
        .map(|v| compute_vuf(*v))
        .collect::<Result<Vec<_>, _>>()?;
    let (max_bus, max) = per_bus
        .iter()
        .copied()
        .enumerate()
        .fold((0, T::neg_infinity()), |acc, (b, x)| if x > acc.1 { (b, x) } else { acc });
    Ok(VufProfile {
        per_bus,
        max,
        max_bus,
    })
}

/// (min, max) phase-to-neutral magnitude in pu over every bus and phase.
pub fn voltage_extremes<T: Real>(result: &LoadflowResult<T>) -> Result<(T, T), VufError> {
    voltage_extremes_over(result, 0..result.voltages.len())
}

/// As [`voltage_extremes`], restricted to `buses`.
pub fn voltage_extremes_over<T: Real>(
    result: &LoadflowResult<T>,
    buses: impl IntoIterator<Item = usize>,
) -> Result<(T, T), VufError> {
    if !result.converged {
        return Err(VufError::NotConverged);
    }
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for b in buses {
        for v in &result.voltages[b] {
            let m = v.norm() / result.nominal_voltage;
            lo = lo.min(m);
            hi = hi.max(m);
        }
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossesReport {
    pub line_losses_kwh: f64,
    pub transformer_energy_kwh: f64,
    pub peak_transformer_kw: f64,
    /// Slots left out because their load flow did not converge.
    pub excluded_slots: Vec<usize>,
}

/// Integrates per-slot results over the horizon. Transformer energy counts
/// the absolute net power of every slot.
pub fn losses_report<'a, T: Real>(
    results: impl IntoIterator<Item = &'a LoadflowResult<T>>,
) -> LossesReport {
    let mut report = LossesReport {
        line_losses_kwh: 0.0,
        transformer_energy_kwh: 0.0,
        peak_transformer_kw: 0.0,
        excluded_slots: Vec::new(),
    };
    for (slot, r) in results.into_iter().enumerate() {
        if !r.converged {
            log::warn!("slot {slot}: load flow unconverged, excluded from losses report");
            report.excluded_slots.push(slot);
            continue;
        }
        let p = r.transformer_kw().to_f64().unwrap_or(f64::NAN).abs();
        report.line_losses_kwh += r.line_losses_kw.to_f64().unwrap_or(f64::NAN) * SLOT_HOURS;
        report.transformer_energy_kwh += p * SLOT_HOURS;
        report.peak_transformer_kw = report.peak_transformer_kw.max(p);
    }
    report
}

/// One verbose diagnostics row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub slot: usize,
    pub bus: usize,
    pub phase: char,
    pub magnitude_v: f64,
    pub angle_deg: f64,
    pub vuf_pct: f64,
}

pub fn diagnostic_rows<T: Real>(result: &LoadflowResult<T>, slot: usize) -> Vec<DiagnosticRow> {
    let mut rows = Vec::with_capacity(result.voltages.len() * 3);
    for (bus, v) in result.voltages.iter().enumerate() {
        let vuf = compute_vuf(*v)
            .ok()
            .and_then(|x| x.to_f64())
            .unwrap_or(f64::NAN);
        for (ph, label) in ['a', 'b', 'c'].into_iter().enumerate() {
            rows.push(DiagnosticRow {
                slot,
                bus,
                phase: label,
                magnitude_v: v[ph].norm().to_f64().unwrap_or(f64::NAN),
                angle_deg: v[ph].arg().to_f64().unwrap_or(f64::NAN).to_degrees(),
                vuf_pct: vuf,
            });
        }
    }
    rows
}
