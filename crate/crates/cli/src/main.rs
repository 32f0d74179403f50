use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use phaseswitch::harness::{
    compare_reports, economic_summary, emit_report, preset_network, preset_suite, run_scenario,
    Comparison, MetricsReport, ReportFormat, ScenarioConfig, DEFAULT_PRICE_EUR_PER_MWH,
    PRESET_NAMES,
};
use phaseswitch::Network64;

#[derive(Parser)]
#[command(name = "phaseswitch", version, about = "Dynamic phase switching simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
    Both,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
            Format::Both => ReportFormat::Both,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its report.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        format: Format,
        #[arg(long)]
        allow_nonconverged: bool,
    },
    /// Run several configs and compare them against the unswitched one.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        configs: Vec<PathBuf>,
        /// Also write each run's report under this directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_PRICE_EUR_PER_MWH)]
        price: f64,
        #[arg(long)]
        json: bool,
        #[arg(long)]
        allow_nonconverged: bool,
    },
    /// List the preset scenarios, optionally writing their fixtures.
    Presets {
        #[arg(long)]
        write: Option<PathBuf>,
    },
    /// Load and check a network file.
    Validate {
        #[arg(long)]
        network: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Run {
            config,
            seed,
            out,
            format,
            allow_nonconverged,
        } => {
            let mut cfg = ScenarioConfig::from_file(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let report = run_scenario(&cfg).with_context(|| format!("running {}", config.display()))?;
            for path in emit_report(&report, format.into(), &out)? {
                log::info!("wrote {}", path.display());
            }
            print_summary(&report);
            Ok(exit_for(&[report], allow_nonconverged))
        }
        Command::Compare {
            configs,
            out,
            price,
            json,
            allow_nonconverged,
        } => {
            let cfgs = configs
                .iter()
                .map(ScenarioConfig::from_file)
                .collect::<Result<Vec<_>, _>>()?;
            let first = &cfgs[0];
            if let Some(c) = cfgs.iter().find(|c| c.slots() != first.slots()) {
                bail!("{} and {} have different horizons", first.name, c.name);
            }
            let mut reports = Vec::new();
            for (cfg, path) in cfgs.iter().zip(&configs) {
                let r = run_scenario(cfg).with_context(|| format!("running {}", path.display()))?;
                if let Some(dir) = &out {
                    emit_report(&r, ReportFormat::Both, dir.join(&cfg.name))?;
                }
                reports.push(r);
            }
            let summaries: Vec<_> = reports.iter().map(|r| r.summary.clone()).collect();
            let cmp = compare_reports(&summaries)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&cmp)?);
            } else {
                print_comparison(&cmp);
                let base = summaries
                    .iter()
                    .find(|s| s.name == cmp.baseline)
                    .expect("baseline is one of the runs");
                for s in summaries.iter().filter(|s| s.name != cmp.baseline) {
                    let e = economic_summary(base, s, price)?;
                    println!(
                        "{}: losses saved {:.3} MWh/yr, {:.2} EUR/yr",
                        s.name, e.losses_saved_mwh_per_year, e.value_eur_per_year
                    );
                }
            }
            Ok(exit_for(&reports, allow_nonconverged))
        }
        Command::Presets { write } => {
            for name in PRESET_NAMES {
                let suite = preset_suite(name);
                let base = &suite[0];
                println!(
                    "{name:10} {} households, {:.0}% PV, {:.0}% battery, runs: {}",
                    base.household_count,
                    base.pv_fraction * 100.0,
                    base.battery_fraction * 100.0,
                    suite.iter().map(|c| c.name.as_str()).collect::<Vec<_>>().join(" ")
                );
            }
            if let Some(dir) = write {
                write_presets(&dir)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { network } => {
            let net = Network64::from_file(&network)
                .with_context(|| format!("loading {}", network.display()))?;
            println!(
                "{}: {} feeders, {} buses, {} households ({} PV, {} battery, {} market)",
                network.display(),
                net.feeders.len(),
                net.model.bus_count(),
                net.households.len(),
                net.households.iter().filter(|h| h.has_pv).count(),
                net.households.iter().filter(|h| h.has_battery).count(),
                net.households.iter().filter(|h| h.market_participant).count(),
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// The error chain, skipping causes already spelled out by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg
}

fn exit_for(reports: &[MetricsReport], allow_nonconverged: bool) -> ExitCode {
    let failed: usize = reports.iter().map(|r| r.summary.unconverged_slots.len()).sum();
    if failed > 0 {
        eprintln!("{failed} slot(s) did not converge");
        if !allow_nonconverged {
            return ExitCode::FAILURE;
        }
    }
    ExitCode::SUCCESS
}

fn print_summary(r: &MetricsReport) {
    let s = &r.summary;
    println!(
        "{}: peak VUF {:.3}% mean {:.3}% | V {:.4}..{:.4} pu | line losses {:.2} kWh | \
         transformer {:.1} kWh peak {:.2} kW | {} switch ops on {:?}",
        s.name,
        s.peak_vuf_pct,
        s.mean_vuf_pct,
        s.min_voltage_pu,
        s.max_voltage_pu,
        s.line_losses_kwh,
        s.transformer_energy_kwh,
        s.transformer_peak_kw,
        s.switch_operations,
        s.switched_households.iter().map(|h| h.to_string()).collect::<Vec<_>>(),
    );
}

fn print_comparison(cmp: &Comparison) {
    println!(
        "{:22} {:>8} {:>9} {:>9} {:>9} {:>11} {:>9} {:>9}  flag",
        "run", "switches", "peak%", "mean%", "dpeak", "dlosses", "dVmin", "dVmax"
    );
    for r in &cmp.rows {
        println!(
            "{:22} {:>8} {:>9.4} {:>9.4} {:>+9.4} {:>+11.3} {:>+9.5} {:>+9.5}  {}",
            r.name,
            r.switch_operations,
            r.peak_vuf_pct,
            r.mean_vuf_pct,
            r.delta_peak_vuf_pct,
            r.delta_line_losses_kwh,
            r.delta_min_voltage_pu,
            r.delta_max_voltage_pu,
            if r.flagged { ">2%" } else { "" }
        );
    }
}

/// Writes `networks/<preset>.json` and one config per suite run under
/// `scenarios/`, pointing at the networks by relative path.
fn write_presets(dir: &Path) -> Result<()> {
    let nets = dir.join("networks");
    let scen = dir.join("scenarios");
    fs::create_dir_all(&nets)?;
    fs::create_dir_all(&scen)?;
    for name in PRESET_NAMES {
        let file = name.to_ascii_lowercase();
        let net = preset_network(name).expect("preset exists");
        fs::write(nets.join(format!("{file}.json")), serde_json::to_string_pretty(&net)? + "\n")?;
        for mut cfg in preset_suite(name) {
            cfg.network = format!("../networks/{file}.json");
            let path = scen.join(format!("{}.json", cfg.name.to_ascii_lowercase()));
            fs::write(&path, serde_json::to_string_pretty(&cfg)? + "\n")?;
        }
    }
    Ok(())
}
