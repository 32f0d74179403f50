//! Strategy comparison, economic summary and report files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    run_scenario, AllocationStrategy, HarnessError, MetricsReport, ScenarioConfig,
    ScenarioSummary, SlotRecord, SurfacePoint,
};
use crate::selection::SelectionStrategy;

/// Regulatory VUF ceiling, percent.
pub const VUF_LIMIT_PCT: f64 = 2.0;

pub const DEFAULT_PRICE_EUR_PER_MWH: f64 = 40.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub allocation: AllocationStrategy,
    pub selection: SelectionStrategy,
    pub switch_budget: usize,
    pub switch_operations: usize,
    pub peak_vuf_pct: f64,
    pub mean_vuf_pct: f64,
    pub delta_peak_vuf_pct: f64,
    pub delta_mean_vuf_pct: f64,
    pub delta_line_losses_kwh: f64,
    pub delta_min_voltage_pu: f64,
    pub delta_max_voltage_pu: f64,
    /// Relative change of transformer energy against the baseline.
    pub transformer_energy_rel: f64,
    pub transformer_peak_rel: f64,
    /// Peak VUF above [`VUF_LIMIT_PCT`].
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: String,
    pub threshold_pct: f64,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn flagged(&self) -> impl Iterator<Item = &ComparisonRow> {
        self.rows.iter().filter(|r| r.flagged)
    }
}

fn relative(x: f64, base: f64) -> f64 {
    if base != 0.0 {
        (x - base) / base
    } else {
        0.0
    }
}

/// Deltas of every run against the baseline, which is the first run with
/// no switching (or the first run if there is none).
pub fn compare_reports(runs: &[ScenarioSummary]) -> Result<Comparison, HarnessError> {
    let Some(first) = runs.first() else {
        return Err(HarnessError::Incomparable("no runs".into()));
    };
    let base = runs
        .iter()
        .find(|r| r.allocation == AllocationStrategy::None)
        .unwrap_or(first);
    for r in runs {
        if r.slots != base.slots {
            return Err(HarnessError::HorizonMismatch(base.slots, r.slots));
        }
        if r.seed != base.seed || r.households != base.households {
            return Err(HarnessError::Incomparable(format!(
                "{} and {} differ in seed or roster",
                base.name, r.name
            )));
        }
    }
    let rows = runs
        .iter()
        .map(|r| ComparisonRow {
            name: r.name.clone(),
            allocation: r.allocation,
            selection: r.selection,
            switch_budget: r.switch_budget,
            switch_operations: r.switch_operations,
            peak_vuf_pct: r.peak_vuf_pct,
            mean_vuf_pct: r.mean_vuf_pct,
            delta_peak_vuf_pct: r.peak_vuf_pct - base.peak_vuf_pct,
            delta_mean_vuf_pct: r.mean_vuf_pct - base.mean_vuf_pct,
            delta_line_losses_kwh: r.line_losses_kwh - base.line_losses_kwh,
            delta_min_voltage_pu: r.min_voltage_pu - base.min_voltage_pu,
            delta_max_voltage_pu: r.max_voltage_pu - base.max_voltage_pu,
            transformer_energy_rel: relative(r.transformer_energy_kwh, base.transformer_energy_kwh),
            transformer_peak_rel: relative(r.transformer_peak_kw, base.transformer_peak_kw),
            flagged: r.peak_vuf_pct > VUF_LIMIT_PCT,
        })
        .collect();
    Ok(Comparison {
        baseline: base.name.clone(),
        threshold_pct: VUF_LIMIT_PCT,
        rows,
    })
}

/// Runs every config and compares the results. The configs must share
/// horizon, seed and network.
pub fn compare_strategies(
    configs: &[ScenarioConfig],
) -> Result<(Comparison, Vec<MetricsReport>), HarnessError> {
    if let Some(first) = configs.first() {
        for c in configs {
            if c.slots() != first.slots() {
                return Err(HarnessError::HorizonMismatch(first.slots(), c.slots()));
            }
            if c.seed != first.seed || c.network != first.network {
                return Err(HarnessError::Incomparable(format!(
                    "{} and {} differ in seed or network",
                    first.name, c.name
                )));
            }
        }
    }
    let reports = configs
        .iter()
        .map(run_scenario)
        .collect::<Result<Vec<_>, _>>()?;
    let summaries: Vec<ScenarioSummary> = reports.iter().map(|r| r.summary.clone()).collect();
    Ok((compare_reports(&summaries)?, reports))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EconomicSummary {
    pub losses_saved_mwh_per_year: f64,
    pub value_eur_per_year: f64,
}

impl EconomicSummary {
    pub fn from_annual(losses_saved_mwh_per_year: f64, price_eur_per_mwh: f64) -> Self {
        Self {
            losses_saved_mwh_per_year,
            value_eur_per_year: losses_saved_mwh_per_year * price_eur_per_mwh,
        }
    }
}

/// Line-loss savings of `treatment` over `baseline`, scaled linearly from
/// the horizon to a year and priced at `price_eur_per_mwh`.
pub fn economic_summary(
    baseline: &ScenarioSummary,
    treatment: &ScenarioSummary,
    price_eur_per_mwh: f64,
) -> Result<EconomicSummary, HarnessError> {
    if baseline.slots != treatment.slots {
        return Err(HarnessError::HorizonMismatch(baseline.slots, treatment.slots));
    }
    if baseline.horizon_days == 0 {
        return Ok(EconomicSummary::from_annual(0.0, price_eur_per_mwh));
    }
    let saved_kwh = baseline.line_losses_kwh - treatment.line_losses_kwh;
    let per_year = saved_kwh / 1000.0 * 365.0 / baseline.horizon_days as f64;
    Ok(EconomicSummary::from_annual(per_year, price_eur_per_mwh))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
    Both,
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> HarnessError + '_ {
    move |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn write_rows<W: Write, R: Serialize>(out: W, header: &[&str], rows: &[R]) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: slot, feeder, peak_vuf_pct, min_v_pu, max_v_pu, losses_kw, switches.
pub fn write_series_csv<W: Write>(out: W, rows: &[SlotRecord]) -> Result<(), csv::Error> {
    write_rows(
        out,
        &["slot", "feeder", "peak_vuf_pct", "min_v_pu", "max_v_pu", "losses_kw", "switches"],
        rows,
    )
}

/// Columns: slot, feeder, bus, vuf_pct.
pub fn write_surface_csv<W: Write>(out: W, rows: &[SurfacePoint]) -> Result<(), csv::Error> {
    write_rows(out, &["slot", "feeder", "bus", "vuf_pct"], rows)
}

/// Writes the report into `dir` and returns the files written:
/// `slots.csv`, `vuf_surface.csv` (and `diagnostics.csv` when present) for
/// CSV, `summary.json` for JSON.
pub fn emit_report(
    report: &MetricsReport,
    format: ReportFormat,
    dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>, HarnessError> {
    let dir = dir.as_ref();
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| HarnessError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut written = Vec::new();
    if matches!(format, ReportFormat::Csv | ReportFormat::Both) {
        let path = dir.join("slots.csv");
        let file = fs::File::create(&path).map_err(io(&path))?;
        write_series_csv(file, &report.series).map_err(csv_err(&path))?;
        written.push(path);

        let path = dir.join("vuf_surface.csv");
        let file = fs::File::create(&path).map_err(io(&path))?;
        write_surface_csv(file, &report.surface).map_err(csv_err(&path))?;
        written.push(path);

        if !report.diagnostics.is_empty() {
            let path = dir.join("diagnostics.csv");
            let file = fs::File::create(&path).map_err(io(&path))?;
            write_rows(
                file,
                &["slot", "bus", "phase", "magnitude_v", "angle_deg", "vuf_pct"],
                &report.diagnostics,
            )
            .map_err(csv_err(&path))?;
            written.push(path);
        }
    }
    if matches!(format, ReportFormat::Json | ReportFormat::Both) {
        let path = dir.join("summary.json");
        let mut text = serde_json::to_string_pretty(&report.summary).map_err(|source| {
            HarnessError::Json {
                path: path.clone(),
                source,
            }
        })?;
        text.push('\n');
        fs::write(&path, text).map_err(io(&path))?;
        written.push(path);
    }
    Ok(written)
}
